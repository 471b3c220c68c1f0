//! Bird's-eye SVG of a scene, optionally with a situation overlaid.

use std::fmt::Write;

use crate::geometry::{ccw_angle, DirectionBin};
use crate::scene::{footprint2d, scene_center, Scene, Vec2};
use crate::situated::Situation;

const PX_PER_M: f64 = 60.0;
const MARGIN_M: f64 = 0.75;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct View {
    min: Vec2,
    max: Vec2,
}

impl View {
    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p[0] - self.min[0]) * PX_PER_M, (self.max[1] - p[1]) * PX_PER_M)
    }
}

fn polar(center: Vec2, ccw_deg: f64, r: f64) -> Vec2 {
    let t = ccw_deg.to_radians();
    [center[0] + r * t.cos(), center[1] + r * t.sin()]
}

fn wedge_class(d: DirectionBin) -> &'static str {
    match d {
        DirectionBin::Front => "wedge wedge-front",
        DirectionBin::Right => "wedge wedge-right",
        DirectionBin::Back => "wedge wedge-back",
        DirectionBin::Left => "wedge wedge-left",
    }
}

/// Renders object footprints (rotated boxes) with labels and the scene
/// center. With a situation, also draws the standing point, one facing
/// arrow and the four direction-bin wedges.
pub fn render_svg(scene: &Scene, situation: Option<&Situation>) -> String {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    let mut grow = |p: Vec2| {
        for k in 0..2 {
            min[k] = min[k].min(p[k]);
            max[k] = max[k].max(p[k]);
        }
    };
    for o in &scene.objects {
        o.obb.corners2d().into_iter().for_each(&mut grow);
    }
    if let Some(s) = situation {
        grow(s.stand2d());
    }
    let view = View {
        min: [min[0] - MARGIN_M, min[1] - MARGIN_M],
        max: [max[0] + MARGIN_M, max[1] + MARGIN_M],
    };
    let (w, h) = (
        (view.max[0] - view.min[0]) * PX_PER_M,
        (view.max[1] - view.min[1]) * PX_PER_M,
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(&scene.id));
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    if let Some(s) = situation {
        let stand = s.stand2d();
        let facing = [stand[0] - s.yaw.to_radians().sin(), stand[1] + s.yaw.to_radians().cos()];
        let phi = ccw_angle(stand, facing).unwrap_or(90.0);
        let r = ((view.max[0] - view.min[0]).powi(2) + (view.max[1] - view.min[1]).powi(2)).sqrt() * 0.25;
        let (sx, sy) = view.px(stand);
        for (d, start) in [
            (DirectionBin::Front, phi - 45.0),
            (DirectionBin::Left, phi + 45.0),
            (DirectionBin::Back, phi + 135.0),
            (DirectionBin::Right, phi + 225.0),
        ] {
            let (ax, ay) = view.px(polar(stand, start, r));
            let (bx, by) = view.px(polar(stand, start + 90.0, r));
            let rp = r * PX_PER_M;
            // SVG y points down, so a ccw sweep in the scene is sweep-flag 0
            let _ = writeln!(
                svg,
                r#"<path class="{}" d="M {sx:.2} {sy:.2} L {ax:.2} {ay:.2} A {rp:.2} {rp:.2} 0 0 0 {bx:.2} {by:.2} Z"/>"#,
                wedge_class(d)
            );
        }
    }

    for o in &scene.objects {
        let pts: Vec<String> = o
            .obb
            .corners2d()
            .iter()
            .map(|c| {
                let (x, y) = view.px(*c);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<polygon class="object" data-id="{}" points="{}" fill="#cfd8dc" stroke="#37474f"/>"##,
            escape(&o.id),
            pts.join(" ")
        );
    }
    for o in &scene.objects {
        let fp = footprint2d(o);
        let (x, y) = view.px(fp.center());
        let _ = writeln!(
            svg,
            r#"<text class="label" x="{x:.2}" y="{y:.2}" text-anchor="middle">{}</text>"#,
            escape(&o.id)
        );
    }
    let (cx, cy) = view.px(scene_center(scene));
    let _ = writeln!(
        svg,
        r##"<circle class="scene-center" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="none" stroke="#e53935"/>"##
    );

    if let Some(s) = situation {
        let stand = s.stand2d();
        let (sx, sy) = view.px(stand);
        let dir = [-s.yaw.to_radians().sin(), s.yaw.to_radians().cos()];
        let tip = [stand[0] + 0.8 * dir[0], stand[1] + 0.8 * dir[1]];
        let (tx, ty) = view.px(tip);
        let back = ccw_angle([0.0, 0.0], dir).unwrap_or(90.0) + 180.0;
        let (lx, ly) = view.px(polar(tip, back - 25.0, 0.2));
        let (rx, ry) = view.px(polar(tip, back + 25.0, 0.2));
        let _ = writeln!(
            svg,
            r##"<path class="arrow" d="M {sx:.2} {sy:.2} L {tx:.2} {ty:.2} M {lx:.2} {ly:.2} L {tx:.2} {ty:.2} L {rx:.2} {ry:.2}" stroke="#1e88e5" stroke-width="2" fill="none"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<circle class="stand" cx="{sx:.2}" cy="{sy:.2}" r="5" fill="#1e88e5"/>"##
        );
        let _ = writeln!(svg, r#"<text class="situation" x="4" y="14">{}</text>"#, escape(&s.description));
    }
    svg.push_str("</svg>\n");
    svg
}
