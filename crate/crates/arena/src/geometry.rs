//! Ray and segment intersection tests against axis-aligned rectangles and discs.

use crate::spec::Rect;

/// A ray hit: parametric distance and whether the struck face is
/// perpendicular to the y axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub y_face: bool,
}

/// Slab intersection of the ray `o + t d` with `r`; returns the entry and
/// exit parameters and which axis produced each.
fn slabs(o: (f64, f64), d: (f64, f64), r: &Rect) -> Option<(Hit, Hit)> {
    let mut enter = Hit { t: f64::NEG_INFINITY, y_face: false };
    let mut exit = Hit { t: f64::INFINITY, y_face: false };
    for (axis_y, (oc, dc, lo, hi)) in [(false, (o.0, d.0, r.x, r.x1())), (true, (o.1, d.1, r.y, r.y1()))] {
        if dc == 0.0 {
            if oc < lo || oc > hi {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((lo - oc) / dc, (hi - oc) / dc);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > enter.t {
            enter = Hit { t: t0, y_face: axis_y };
        }
        if t1 < exit.t {
            exit = Hit { t: t1, y_face: axis_y };
        }
    }
    (enter.t <= exit.t).then_some((enter, exit))
}

/// First entry of a ray into `r` at `t > 0`. Rays starting inside report
/// nothing.
pub fn ray_rect_entry(o: (f64, f64), d: (f64, f64), r: &Rect) -> Option<Hit> {
    slabs(o, d, r).and_then(|(enter, _)| (enter.t > 0.0).then_some(enter))
}

/// Exit point of a ray that starts inside `r`.
pub fn ray_rect_exit(o: (f64, f64), d: (f64, f64), r: &Rect) -> Option<Hit> {
    slabs(o, d, r).and_then(|(_, exit)| (exit.t > 0.0).then_some(exit))
}

/// Nearest positive intersection of a ray with a disc. `d` must be a unit
/// vector.
pub fn ray_circle(o: (f64, f64), d: (f64, f64), c: (f64, f64), radius: f64) -> Option<f64> {
    let (fx, fy) = (o.0 - c.0, o.1 - c.1);
    let b = fx * d.0 + fy * d.1;
    let cc = fx * fx + fy * fy - radius * radius;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = -b - s;
    let t1 = -b + s;
    if t0 > 0.0 {
        Some(t0)
    } else if t1 > 0.0 {
        Some(t1)
    } else {
        None
    }
}

/// True if the closed segment `p0 → p1` meets the closed rectangle.
pub fn segment_intersects_rect(p0: (f64, f64), p1: (f64, f64), r: &Rect) -> bool {
    let d = (p1.0 - p0.0, p1.1 - p0.1);
    match slabs(p0, d, r) {
        Some((enter, exit)) => enter.t <= 1.0 && exit.t >= 0.0,
        None => false,
    }
}
