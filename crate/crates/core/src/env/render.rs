use super::chain::PoseState;
use crate::frame::Frame;

/// Half the side of the square world window drawn around the hip.
pub const VIEW_HALF_EXTENT: f32 = 0.6;
/// Stroke half-width in pixels.
const STROKE: f32 = 0.75;
const GROUND_INTENSITY: f32 = 0.4;

fn segment_distance(p: [f32; 2], a: [f32; 2], b: [f32; 2]) -> f32 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (p[0] - a[0] - t * dx, p[1] - a[1] - t * dy);
    crate::math::sqrt(ex * ex + ey * ey)
}

/// Renders `pose` into `frame`, overwriting it.
pub fn render_into(pose: &PoseState, frame: &mut Frame) {
    let (h, w) = (frame.height(), frame.width());
    let [head, hip, knee, foot] = pose.points();
    let segments = [(hip, head), (hip, knee), (knee, foot)];
    let px = 2.0 * VIEW_HALF_EXTENT / w.min(h) as f32;
    let out = frame.pixels_mut();
    for r in 0..h {
        let y = hip[1] + VIEW_HALF_EXTENT - (r as f32 + 0.5) * 2.0 * VIEW_HALF_EXTENT / h as f32;
        let g_cover = (STROKE + 0.5 - y.abs() / px).clamp(0.0, 1.0) * GROUND_INTENSITY;
        for c in 0..w {
            let x =
                hip[0] - VIEW_HALF_EXTENT + (c as f32 + 0.5) * 2.0 * VIEW_HALF_EXTENT / w as f32;
            let mut v = g_cover;
            for &(a, b) in &segments {
                let d = segment_distance([x, y], a, b) / px;
                v = v.max((STROKE + 0.5 - d).clamp(0.0, 1.0));
            }
            out[r * w + c] = v;
        }
    }
}

/// Anti-aliased stick figure centred on the hip, with the ground line.
pub fn render(pose: &PoseState, height: usize, width: usize) -> Frame {
    let mut f = Frame::zeros(height, width);
    render_into(pose, &mut f);
    f
}
