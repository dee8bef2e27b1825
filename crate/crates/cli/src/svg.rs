//! Minimal SVG rendering of trajectory grids: each trajectory becomes a
//! chain of line segments projected onto a chosen axis pair, colored by a
//! blue-to-red frame ramp so time reads directly off the image.

use pcst_core::tensor::Tensor;

/// Canvas edge in SVG user units.
const CANVAS: f64 = 800.0;
/// Padding between data extent and canvas edge.
const MARGIN: f64 = 40.0;

/// A projection plane given as indices into (x, y, z) plus display names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projection {
    pub horizontal: usize,
    pub vertical: usize,
    pub names: (&'static str, &'static str),
}

pub const XY: Projection = Projection { horizontal: 0, vertical: 1, names: ("x", "y") };
pub const XZ: Projection = Projection { horizontal: 0, vertical: 2, names: ("x", "z") };
pub const YZ: Projection = Projection { horizontal: 1, vertical: 2, names: ("y", "z") };

/// Linear blue-to-red ramp over `[0, 1]`.
fn ramp(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let r = (40.0 + f * (215.0 - 40.0)).round() as u8;
    let g = (90.0 + f * (48.0 - 90.0)).round() as u8;
    let b = (200.0 + f * (39.0 - 200.0)).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Render `[T, N, 3]` trajectories (optionally only the first `limit`) onto
/// one SVG document. Returns the document and the number of trajectories
/// drawn.
pub fn render(traj: &Tensor<f32>, proj: Projection, limit: usize) -> (String, usize) {
    let shape = traj.shape();
    let (t, n) = (shape[0], shape[1]);
    let drawn = if limit == 0 { n } else { limit.min(n) };
    let at = |frame: usize, i: usize, axis: usize| traj.data()[(frame * n + i) * 3 + axis] as f64;

    // Data bounds over the drawn subset.
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for frame in 0..t {
        for i in 0..drawn {
            let h = at(frame, i, proj.horizontal);
            let v = at(frame, i, proj.vertical);
            lo[0] = lo[0].min(h);
            hi[0] = hi[0].max(h);
            lo[1] = lo[1].min(v);
            hi[1] = hi[1].max(v);
        }
    }
    // Degenerate extents (single point, single frame) still need a scale.
    for a in 0..2 {
        if !(hi[a] - lo[a]).is_finite() || hi[a] - lo[a] < 1e-9 {
            lo[a] -= 0.5;
            hi[a] += 0.5;
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = (CANVAS - 2.0 * MARGIN) / span;
    // Center the shorter extent; SVG's vertical axis grows downward.
    let off_h = MARGIN + 0.5 * ((CANVAS - 2.0 * MARGIN) - (hi[0] - lo[0]) * scale);
    let off_v = MARGIN + 0.5 * ((CANVAS - 2.0 * MARGIN) - (hi[1] - lo[1]) * scale);
    let map_h = |x: f64| off_h + (x - lo[0]) * scale;
    let map_v = |y: f64| CANVAS - off_v - (y - lo[1]) * scale;

    let mut out = String::with_capacity(1024 + drawn * t * 90);
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {CANVAS} {CANVAS}\" \
         width=\"{CANVAS}\" height=\"{CANVAS}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{CANVAS}\" height=\"{CANVAS}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" \
         fill=\"#333333\">{}-{} projection, {drawn} trajectories, {t} frames \
         (blue start, red end)</text>\n",
        proj.names.0, proj.names.1
    ));
    for i in 0..drawn {
        for frame in 0..t.saturating_sub(1) {
            let x1 = map_h(at(frame, i, proj.horizontal));
            let y1 = map_v(at(frame, i, proj.vertical));
            let x2 = map_h(at(frame + 1, i, proj.horizontal));
            let y2 = map_v(at(frame + 1, i, proj.vertical));
            let color = ramp(if t > 2 { frame as f64 / (t - 2) as f64 } else { 0.0 });
            out.push_str(&format!(
                "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
                 stroke=\"{color}\" stroke-width=\"1.2\" stroke-linecap=\"round\"/>\n"
            ));
        }
        // Mark the starting point so single-frame plots are still visible.
        let x = map_h(at(0, i, proj.horizontal));
        let y = map_v(at(0, i, proj.vertical));
        out.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"{}\"/>\n",
            ramp(0.0)
        ));
    }
    out.push_str("</svg>\n");
    (out, drawn)
}
