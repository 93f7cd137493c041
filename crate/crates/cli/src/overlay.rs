//! Side-by-side match visualisation.

use rdn_core::io::MatchRecord;
use rdn_core::Tensor;

const LINE: [f64; 3] = [0.1, 0.9, 0.2];

/// Both images next to each other with a line per match.
pub fn side_by_side(a: &Tensor, b: &Tensor, matches: &[MatchRecord]) -> Tensor {
    let (w, h) = (a.width() + b.width(), a.height().max(b.height()));
    let mut canvas = Tensor::from_fn(h, w, 3, |y, x, c| {
        if x < a.width() {
            if y < a.height() { a.get(y, x, c.min(a.channels() - 1)) } else { 0.0 }
        } else if y < b.height() {
            b.get(y, x - a.width(), c.min(b.channels() - 1))
        } else {
            0.0
        }
    });
    let offset = a.width() as f64;
    for m in matches {
        draw_line(&mut canvas, m.a, [m.b[0] + offset, m.b[1]]);
    }
    canvas
}

fn draw_line(canvas: &mut Tensor, p: [f64; 2], q: [f64; 2]) {
    let steps = (q[0] - p[0]).abs().max((q[1] - p[1]).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (p[0] + t * (q[0] - p[0])).round();
        let y = (p[1] + t * (q[1] - p[1])).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < canvas.width() && (y as usize) < canvas.height() {
            canvas.pixel_mut(y as usize, x as usize).copy_from_slice(&LINE);
        }
    }
}
