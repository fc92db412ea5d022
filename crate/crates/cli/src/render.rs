//! SVG projections of skeletons.

use std::fmt::Write as _;

use rigkit::{Skeleton, Vec3};

use crate::View;

fn project(p: &Vec3, view: View) -> (f64, f64) {
    match view {
        View::Front => (p.x, p.y),
        View::Side => (p.z, p.y),
        View::Top => (p.x, p.z),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Joints as dots and bones as lines, for a skeleton in the unit box. The
/// vertical image axis points up.
pub fn svg(skeleton: &Skeleton, view: View, size: u32, labels: bool) -> String {
    let s = size.max(16) as f64;
    let margin = s * 0.05;
    let span = s - 2.0 * margin;
    let at = |p: &Vec3| {
        let (u, v) = project(p, view);
        (margin + u * span, s - margin - v * span)
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(out, r##"<g stroke="#3060a0" stroke-width="{:.2}" stroke-linecap="round">"##, s / 256.0);
    for (h, t) in skeleton.bone_segments() {
        let (x1, y1) = at(&h);
        let (x2, y2) = at(&t);
        let _ = writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
    }
    let _ = writeln!(out, "</g>");
    let r = s / 128.0;
    for (i, j) in skeleton.joints.iter().enumerate() {
        let (x, y) = at(&j.position);
        let fill = if i == skeleton.root { "#c03030" } else { "#202020" };
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#);
        if labels {
            let name = j.name.clone().unwrap_or_else(|| i.to_string());
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="{:.1}">{}</text>"#,
                x + r * 1.5,
                y - r * 1.5,
                s / 64.0,
                escape(&name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
