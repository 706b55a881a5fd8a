//! Top-down SVG debug view of an arena.

use std::fmt::Write as _;

use crate::render::goal_rgb;
use crate::spec::{ArenaSpec, Spawn, WallKind};

fn hex(c: [f64; 3]) -> String {
    let b = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", b(c[0]), b(c[1]), b(c[2]))
}

/// Renders `spec` at `scale` pixels per world unit. World y points up, so
/// the image is flipped vertically.
pub fn arena_to_svg(spec: &ArenaSpec, scale: f64) -> String {
    let (w, h) = (spec.width * scale, spec.height * scale);
    let fy = |y: f64| h - y * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#d8d2c8" stroke="#999999" stroke-width="2"/>"##);
    if let Spawn::Random(r) = &spec.spawn {
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#4060ff" fill-opacity="0.1" stroke="#4060ff" stroke-dasharray="4 3"/>"##,
            r.x * scale,
            fy(r.y1()),
            r.w * scale,
            r.h * scale
        );
    }
    for wall in &spec.walls {
        let r = &wall.rect;
        let (fill, opacity) = match wall.kind {
            WallKind::Opaque => (hex(wall.color.unwrap_or([0.55, 0.35, 0.2])), 1.0),
            WallKind::Transparent => (hex([0.7, 0.85, 1.0]), 0.6),
        };
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" fill-opacity="{opacity}" stroke="#333333" stroke-width="0.5"/>"##,
            r.x * scale,
            fy(r.y1()),
            r.w * scale,
            r.h * scale
        );
    }
    for g in &spec.goals {
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            g.center.0 * scale,
            fy(g.center.1),
            g.radius * scale,
            hex(goal_rgb(g.color))
        );
    }
    if let Spawn::Fixed { x, y, heading_deg } = spec.spawn {
        let a = heading_deg.to_radians();
        let (cx, cy) = (x * scale, fy(y));
        let _ = writeln!(
            s,
            r##"<circle cx="{cx}" cy="{cy}" r="{}" fill="#2040ff"/>"##,
            crate::spec::AGENT_RADIUS * scale
        );
        let _ = writeln!(
            s,
            r##"<line x1="{cx}" y1="{cy}" x2="{}" y2="{}" stroke="#ffffff" stroke-width="1.5"/>"##,
            cx + a.cos() * scale,
            cy - a.sin() * scale
        );
    }
    s.push_str("</svg>\n");
    s
}
