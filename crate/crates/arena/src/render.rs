//! Egocentric column raycaster.
//!
//! Each image column casts one ray. The nearest opaque surface (an opaque
//! wall or the arena boundary) fills its vertical span; goals and transparent
//! walls in front of it are then painted far to near, so a transparent wall
//! tints whatever lies behind it without hiding it.

use crate::geometry::{ray_circle, ray_rect_entry, ray_rect_exit};
use crate::physics::EpisodeState;
use crate::spec::{ArenaSpec, GoalColor, Rect, WallKind};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    pub fov_deg: f64,
    pub eye_height: f64,
    pub wall_height: f64,
    /// Brightness factor is `1 / (1 + attenuation * distance)`.
    pub attenuation: f64,
    /// Brightness factor for faces perpendicular to the y axis.
    pub y_face_shade: f64,
    pub sky: [f64; 3],
    pub floor: [f64; 3],
    pub boundary: [f64; 3],
    pub opaque_wall: [f64; 3],
    pub transparent_tint: [f64; 3],
    pub transparent_alpha: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self::with_resolution(32, 32)
    }
}

impl RenderConfig {
    /// Default look at the given resolution.
    ///
    /// # Panics
    /// If either side is below 8 pixels.
    pub fn with_resolution(height: usize, width: usize) -> Self {
        assert!(height >= 8 && width >= 8, "resolution must be at least 8x8, got {height}x{width}");
        Self {
            height,
            width,
            fov_deg: 60.0,
            eye_height: 0.5,
            wall_height: 1.5,
            attenuation: 0.04,
            y_face_shade: 0.8,
            sky: [0.55, 0.7, 0.9],
            floor: [0.4, 0.35, 0.3],
            boundary: [0.6, 0.6, 0.6],
            opaque_wall: [0.55, 0.35, 0.2],
            transparent_tint: [0.7, 0.85, 1.0],
            transparent_alpha: 0.35,
        }
    }
}

pub fn goal_rgb(color: GoalColor) -> [f64; 3] {
    match color {
        GoalColor::Green => [0.1, 0.9, 0.1],
        GoalColor::Gold => [1.0, 0.8, 0.1],
        GoalColor::Red => [0.9, 0.1, 0.1],
    }
}

/// `height x width x 3` image in row-major HWC order, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Observation {
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channel-major copy (`3 x height x width`).
    pub fn to_chw(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; 3 * hw];
        for (p, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c];
            }
        }
        out
    }
}

enum Layer {
    Goal { t: f64, rgb: [f64; 3], top: f64 },
    Glass { t: f64 },
}

impl Layer {
    fn t(&self) -> f64 {
        match self {
            Layer::Goal { t, .. } | Layer::Glass { t } => *t,
        }
    }
}

fn scale(c: [f64; 3], k: f64) -> [f64; 3] {
    [c[0] * k, c[1] * k, c[2] * k]
}

pub fn render(state: &EpisodeState, spec: &ArenaSpec, cfg: &RenderConfig) -> Observation {
    let (h, w) = (cfg.height, cfg.width);
    let half_w = w as f64 / 2.0;
    let half_h = h as f64 / 2.0;
    let focal = half_w / (cfg.fov_deg.to_radians() / 2.0).tan();
    let shade = |d: f64| 1.0 / (1.0 + cfg.attenuation * d);
    let bounds = Rect::new(0.0, 0.0, spec.width, spec.height);

    let mut pixels = vec![0.0; h * w * 3];
    let mut put = |row: usize, col: usize, rgb: [f64; 3], alpha: f64| {
        let i = (row * w + col) * 3;
        for c in 0..3 {
            pixels[i + c] = (alpha * rgb[c] + (1.0 - alpha) * pixels[i + c]).clamp(0.0, 1.0);
        }
    };
    // Screen-space rows covered by the world-height span [z0, z1] at perpendicular distance d.
    let rows = |z0: f64, z1: f64, d: f64| {
        let top = half_h - (z1 - cfg.eye_height) * focal / d;
        let bottom = half_h - (z0 - cfg.eye_height) * focal / d;
        (0..h).filter(move |&r| {
            let c = r as f64 + 0.5;
            c >= top && c < bottom
        })
    };

    for row in 0..h {
        let c = row as f64 + 0.5;
        let rgb = if c < half_h {
            cfg.sky
        } else {
            let d = cfg.eye_height * focal / (c - half_h);
            scale(cfg.floor, shade(d))
        };
        for col in 0..w {
            put(row, col, rgb, 1.0);
        }
    }

    let mut layers: Vec<Layer> = Vec::new();
    for col in 0..w {
        let offset = ((half_w - (col as f64 + 0.5)) / focal).atan();
        let angle = state.heading + offset;
        let dir = (angle.cos(), angle.sin());
        let cos_off = offset.cos();

        let mut hit = ray_rect_exit(state.pos, dir, &bounds);
        let mut rgb = cfg.boundary;
        for wall in spec.walls.iter().filter(|w| w.kind == WallKind::Opaque) {
            if let Some(e) = ray_rect_entry(state.pos, dir, &wall.rect) {
                if hit.is_none_or(|h| e.t < h.t) {
                    hit = Some(e);
                    rgb = wall.color.unwrap_or(cfg.opaque_wall);
                }
            }
        }
        let far = hit.map_or(f64::INFINITY, |h| h.t);
        if let Some(hit) = hit {
            let d = hit.t * cos_off;
            let face = if hit.y_face { cfg.y_face_shade } else { 1.0 };
            let c = scale(rgb, shade(d) * face);
            for row in rows(0.0, cfg.wall_height, d) {
                put(row, col, c, 1.0);
            }
        }

        layers.clear();
        for &g in &state.remaining_goals {
            let goal = &spec.goals[g];
            if let Some(t) = ray_circle(state.pos, dir, goal.center, goal.radius) {
                if t < far {
                    layers.push(Layer::Goal { t, rgb: goal_rgb(goal.color), top: 2.0 * goal.radius });
                }
            }
        }
        for wall in spec.walls.iter().filter(|w| w.kind == WallKind::Transparent) {
            if let Some(e) = ray_rect_entry(state.pos, dir, &wall.rect) {
                if e.t < far {
                    layers.push(Layer::Glass { t: e.t });
                }
            }
        }
        layers.sort_by(|a, b| b.t().total_cmp(&a.t()));
        for layer in &layers {
            let d = layer.t() * cos_off;
            match layer {
                Layer::Goal { rgb, top, .. } => {
                    let c = scale(*rgb, shade(d));
                    for row in rows(0.0, *top, d) {
                        put(row, col, c, 1.0);
                    }
                }
                Layer::Glass { .. } => {
                    for row in rows(0.0, cfg.wall_height, d) {
                        put(row, col, cfg.transparent_tint, cfg.transparent_alpha);
                    }
                }
            }
        }
    }

    Observation { height: h, width: w, pixels }
}

/// What one image column's ray sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScan {
    /// Nearest opaque surface is an interior wall rather than the boundary.
    pub interior_wall: bool,
    /// Distance to the nearest opaque surface along the ray.
    pub depth: f64,
    /// Number of visible goals in front of the opaque surface.
    pub goals: usize,
    /// Number of transparent walls in front of the opaque surface.
    pub glass: usize,
}

/// Per-column scene content under the same camera model as [`render`].
pub fn scan_columns(state: &EpisodeState, spec: &ArenaSpec, cfg: &RenderConfig) -> Vec<ColumnScan> {
    let half_w = cfg.width as f64 / 2.0;
    let focal = half_w / (cfg.fov_deg.to_radians() / 2.0).tan();
    let bounds = Rect::new(0.0, 0.0, spec.width, spec.height);
    (0..cfg.width)
        .map(|col| {
            let offset = ((half_w - (col as f64 + 0.5)) / focal).atan();
            let angle = state.heading + offset;
            let dir = (angle.cos(), angle.sin());
            let mut far = ray_rect_exit(state.pos, dir, &bounds).map_or(f64::INFINITY, |h| h.t);
            let mut interior_wall = false;
            for wall in spec.walls.iter().filter(|w| w.kind == WallKind::Opaque) {
                if let Some(e) = ray_rect_entry(state.pos, dir, &wall.rect) {
                    if e.t < far {
                        far = e.t;
                        interior_wall = true;
                    }
                }
            }
            let goals = state
                .remaining_goals
                .iter()
                .filter(|&&g| {
                    let goal = &spec.goals[g];
                    ray_circle(state.pos, dir, goal.center, goal.radius).is_some_and(|t| t < far)
                })
                .count();
            let glass = spec
                .walls
                .iter()
                .filter(|w| w.kind == WallKind::Transparent)
                .filter(|w| ray_rect_entry(state.pos, dir, &w.rect).is_some_and(|e| e.t < far))
                .count();
            ColumnScan { interior_wall, depth: far, goals, glass }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{GoalSpec, Spawn, WallSpec};

    #[test]
    fn scan_matches_scene() {
        let s = spec(vec![WallSpec::transparent(Rect::new(12.0, 7.0, 0.5, 6.0))], (15.0, 10.0));
        let cols = scan_columns(&state(vec![0]), &s, &RenderConfig::default());
        assert_eq!(cols.len(), 32);
        assert_eq!(cols[16].goals, 1);
        assert_eq!(cols[16].glass, 1);
        assert!(!cols[16].interior_wall);
        assert!((cols[16].depth - 10.0 / (0.5f64 / 27.712812921102035).atan().cos()).abs() < 1e-9);
    }

    fn spec(walls: Vec<WallSpec>, goal: (f64, f64)) -> ArenaSpec {
        ArenaSpec {
            width: 20.0,
            height: 20.0,
            time_limit: 100,
            walls,
            goals: vec![GoalSpec::new(GoalColor::Green, goal.0, goal.1, 1.0)],
            spawn: Spawn::Fixed { x: 10.0, y: 10.0, heading_deg: 0.0 },
        }
    }

    fn state(goals: Vec<usize>) -> EpisodeState {
        EpisodeState {
            pos: (10.0, 10.0),
            heading: 0.0,
            speed: 0.0,
            steps_elapsed: 0,
            remaining_goals: goals,
            terminal: false,
        }
    }

    fn is_green(p: [f64; 3]) -> bool {
        p[1] > p[0] + 0.3 && p[1] > p[2] + 0.3
    }

    #[test]
    fn values_in_unit_range_and_deterministic() {
        let s = spec(vec![WallSpec::opaque(Rect::new(14.0, 5.0, 1.0, 3.0))], (16.0, 12.0));
        let cfg = RenderConfig::default();
        let a = render(&state(vec![0]), &s, &cfg);
        let b = render(&state(vec![0]), &s, &cfg);
        assert_eq!(a.pixels.len(), 32 * 32 * 3);
        assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_arena_is_mirror_symmetric() {
        let s = spec(vec![], (1.5, 10.0));
        let cfg = RenderConfig::with_resolution(24, 40);
        let o = render(&state(vec![]), &s, &cfg);
        for r in 0..o.height {
            for c in 0..o.width {
                let (p, q) = (o.pixel(r, c), o.pixel(r, o.width - 1 - c));
                for k in 0..3 {
                    assert!((p[k] - q[k]).abs() < 1e-12, "row {r} col {c}");
                }
            }
        }
    }

    #[test]
    fn goal_ahead_is_visible() {
        let s = spec(vec![], (15.0, 10.0));
        let o = render(&state(vec![0]), &s, &RenderConfig::default());
        assert!(is_green(o.pixel(17, 16)));
        // Consumed goals disappear.
        let o = render(&state(vec![]), &s, &RenderConfig::default());
        assert!(!is_green(o.pixel(17, 16)));
    }

    #[test]
    fn opaque_wall_hides_goal_transparent_wall_tints_it() {
        let bare = render(&state(vec![0]), &spec(vec![], (15.0, 10.0)), &RenderConfig::default());
        let opaque = spec(vec![WallSpec::opaque(Rect::new(12.0, 7.0, 0.5, 6.0))], (15.0, 10.0));
        let o = render(&state(vec![0]), &opaque, &RenderConfig::default());
        assert!(!(0..32).any(|c| is_green(o.pixel(17, c))));

        let glass = spec(vec![WallSpec::transparent(Rect::new(12.0, 7.0, 0.5, 6.0))], (15.0, 10.0));
        let o = render(&state(vec![0]), &glass, &RenderConfig::default());
        let (p, q) = (o.pixel(17, 16), bare.pixel(17, 16));
        assert!(is_green(p));
        assert_ne!(p, q);
        let cfg = RenderConfig::default();
        for k in 0..3 {
            let expect = cfg.transparent_alpha * cfg.transparent_tint[k] + (1.0 - cfg.transparent_alpha) * q[k];
            assert!((p[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn nearer_walls_are_taller() {
        let near = spec(vec![WallSpec::opaque(Rect::new(12.0, 0.0, 1.0, 20.0))], (1.5, 1.5));
        let cfg = RenderConfig::default();
        let count = |o: &Observation| (0..o.height).filter(|&r| o.pixel(r, 16) != cfg.sky && r < 16).count();
        let a = render(&state(vec![]), &near, &cfg);
        let b = render(&state(vec![]), &spec(vec![], (1.5, 1.5)), &cfg);
        assert!(count(&a) > count(&b));
    }

    #[test]
    fn chw_layout() {
        let o = render(&state(vec![0]), &spec(vec![], (15.0, 10.0)), &RenderConfig::default());
        let chw = o.to_chw();
        let p = o.pixel(3, 5);
        for c in 0..3 {
            assert_eq!(chw[c * 1024 + 3 * 32 + 5], p[c]);
        }
    }
}
