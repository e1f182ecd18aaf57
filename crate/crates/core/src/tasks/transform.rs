//! Coupled rotation + shear of square images with bilinear resampling.

use crate::error::{Error, Result};
use crate::netcore::Matrix;

/// Shear angle cap; `tan` is evaluated at `min(θ, 60°)`.
pub const MAX_SHEAR_DEG: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpOptions {
    pub side: usize,
    pub shear: bool,
}

impl Default for WarpOptions {
    fn default() -> Self {
        Self { side: 28, shear: true }
    }
}

/// Rotates every `28×28` row-image by `theta_deg` about its centre, then
/// applies a horizontal shear driven by the same angle.
pub fn transform_rotate_shear(images: &Matrix, theta_deg: f64) -> Result<Matrix> {
    warp_images(images, theta_deg, WarpOptions::default())
}

pub fn warp_images(images: &Matrix, theta_deg: f64, opts: WarpOptions) -> Result<Matrix> {
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::InvalidConfig(format!("rotation angle {theta_deg} outside [0, 180]")));
    }
    let side = opts.side;
    if images.cols() != side * side {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels per image, expected {side}x{side}",
            images.cols()
        )));
    }
    let theta = theta_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let shear = if opts.shear {
        theta_deg.min(MAX_SHEAR_DEG).to_radians().tan()
    } else {
        0.0
    };
    let centre = (side as f64 - 1.0) / 2.0;

    // Inverse map of p = S·R·(q − c) + c, evaluated per output pixel.
    let mut sources = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let yo = r as f64 - centre;
            let xo = c as f64 - centre;
            let ys = yo;
            let xs = xo - shear * ys;
            let x = cos * xs + sin * ys;
            let y = -sin * xs + cos * ys;
            sources.push((y + centre, x + centre));
        }
    }

    let mut out = Matrix::zeros(images.rows(), images.cols());
    for n in 0..images.rows() {
        let src = images.row(n);
        let dst = out.row_mut(n);
        for (p, &(sr, sc)) in sources.iter().enumerate() {
            dst[p] = bilinear(src, side, sr, sc);
        }
        let before: f64 = src.iter().sum();
        let after: f64 = dst.iter().sum();
        // Interpolation weights can pile up on a source pixel; never create mass.
        if after > before && after > 0.0 {
            let s = before / after;
            dst.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(out)
}

fn bilinear(img: &[f64], side: usize, r: f64, c: f64) -> f64 {
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = r - r0;
    let fc = c - c0;
    let at = |rr: f64, cc: f64| -> f64 {
        if rr < 0.0 || cc < 0.0 || rr >= side as f64 || cc >= side as f64 {
            0.0
        } else {
            img[rr as usize * side + cc as usize]
        }
    };
    let mut v = 0.0;
    if fr == 0.0 && fc == 0.0 {
        return at(r0, c0);
    }
    v += (1.0 - fr) * (1.0 - fc) * at(r0, c0);
    v += (1.0 - fr) * fc * at(r0, c0 + 1.0);
    v += fr * (1.0 - fc) * at(r0 + 1.0, c0);
    v += fr * fc * at(r0 + 1.0, c0 + 1.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_images(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, 784, |_, _| if rng.gen_bool(0.3) { rng.gen() } else { 0.0 })
    }

    #[test]
    fn zero_angle_is_identity() {
        let imgs = random_images(3, 1);
        let out = transform_rotate_shear(&imgs, 0.0).unwrap();
        for (a, b) in out.data().iter().zip(imgs.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn half_turn_is_point_reflection() {
        let imgs = random_images(2, 2);
        let out = warp_images(&imgs, 180.0, WarpOptions { side: 28, shear: false }).unwrap();
        for n in 0..2 {
            for r in 0..28 {
                for c in 0..28 {
                    let want = imgs.get(n, (27 - r) * 28 + (27 - c));
                    assert!((out.get(n, r * 28 + c) - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mass_never_increases() {
        let imgs = random_images(4, 3);
        for theta in [5.0, 33.0, 45.0, 92.0, 137.0, 180.0] {
            let out = transform_rotate_shear(&imgs, theta).unwrap();
            for n in 0..4 {
                let before: f64 = imgs.row(n).iter().sum();
                let after: f64 = out.row(n).iter().sum();
                assert!(after <= before + 1e-9, "θ={theta}: {after} > {before}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_angle() {
        assert!(transform_rotate_shear(&Matrix::zeros(1, 784), 181.0).is_err());
        assert!(transform_rotate_shear(&Matrix::zeros(1, 783), 10.0).is_err());
    }
}
