//! Synthetic seven-segment digit images, used when no IDX files are available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netcore::Matrix;

// Segment endpoints in a 10×18 glyph box: a, b, c, d, e, f, g.
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.0, 0.0), (10.0, 0.0)),
    ((10.0, 0.0), (10.0, 9.0)),
    ((10.0, 9.0), (10.0, 18.0)),
    ((0.0, 18.0), (10.0, 18.0)),
    ((0.0, 9.0), (0.0, 18.0)),
    ((0.0, 0.0), (0.0, 9.0)),
    ((0.0, 9.0), (10.0, 9.0)),
];

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],
    &[1, 2],
    &[0, 1, 6, 4, 3],
    &[0, 1, 6, 2, 3],
    &[5, 6, 1, 2],
    &[0, 5, 6, 2, 3],
    &[0, 5, 6, 4, 3, 2],
    &[0, 1, 2],
    &[0, 1, 2, 3, 4, 5, 6],
    &[0, 1, 2, 3, 5, 6],
];

/// `per_class` jittered 28×28 renderings of each digit, labels in class order.
pub fn synthetic_digits(per_class: usize, seed: u64) -> (Matrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(per_class * 10 * 784);
    let mut labels = Vec::with_capacity(per_class * 10);
    for digit in 0..10u8 {
        for _ in 0..per_class {
            let ox = 9.0 + rng.gen_range(-2.0..2.0);
            let oy = 5.0 + rng.gen_range(-2.0..2.0);
            let slant = rng.gen_range(-0.15..0.15);
            let width = rng.gen_range(1.0..1.8);
            let ink = rng.gen_range(0.7..1.0);
            let mut img = vec![0.0f64; 784];
            for &s in DIGIT_SEGMENTS[digit as usize] {
                let ((x0, y0), (x1, y1)) = SEGMENTS[s];
                let p0 = (ox + x0 - slant * y0, oy + y0);
                let p1 = (ox + x1 - slant * y1, oy + y1);
                for r in 0..28 {
                    for c in 0..28 {
                        let d = segment_distance((c as f64, r as f64), p0, p1);
                        if d < width + 1.0 {
                            let v = ink * (1.0 - (d - width).max(0.0));
                            let px = &mut img[r * 28 + c];
                            *px = px.max(v);
                        }
                    }
                }
            }
            for px in &mut img {
                *px = (*px + rng.gen_range(0.0..0.05)).min(1.0);
            }
            data.extend(img);
            labels.push(digit);
        }
    }
    (Matrix::from_vec(per_class * 10, 784, data).expect("sized above"), labels)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}
