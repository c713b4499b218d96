//! Reconstruction quality metrics on magnitude images: PSNR, SSIM, and
//! relative L2 norm error, all against a fully sampled reference.

use ndarray::Array2;

use crate::error::{Error, Result};

/// SSIM window: 11x11 Gaussian, sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic
/// range 1 after scaling both images by the reference peak.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub rlne: f64,
}

fn check_shapes(recon: &Array2<f64>, reference: &Array2<f64>) -> Result<()> {
    if recon.dim() != reference.dim() {
        return Err(Error::InvalidInput(format!(
            "image shapes differ: {:?} vs {:?}",
            recon.dim(),
            reference.dim()
        )));
    }
    Ok(())
}

/// Relative L2 norm error: ||recon - ref||_2 / ||ref||_2.
pub fn rlne(recon: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    check_shapes(recon, reference)?;
    let den: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::InvalidInput("reference image is identically zero".into()));
    }
    let num: f64 = recon
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// Peak signal-to-noise ratio in dB, with the reference peak as the signal
/// level. An exact match reports positive infinity.
pub fn psnr(recon: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    check_shapes(recon, reference)?;
    let peak = reference.iter().cloned().fold(f64::MIN, f64::max);
    let mse: f64 = recon
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / recon.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / mse.sqrt()).log10())
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|d| (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mean structural similarity over all fully interior windows, after
/// scaling both images to the reference peak.
pub fn ssim(recon: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    check_shapes(recon, reference)?;
    let (h, w) = recon.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let peak = reference.iter().cloned().fold(f64::MIN, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidInput("reference peak must be positive".into()));
    }
    let x = recon.mapv(|v| v / peak);
    let y = reference.mapv(|v| v / peak);

    // Separable Gaussian filtering of the five moment maps, valid region only.
    let k = gaussian_kernel();
    let conv = |img: &Array2<f64>| -> Array2<f64> {
        let (h, w) = img.dim();
        let wr = w - SSIM_WINDOW + 1;
        let hr = h - SSIM_WINDOW + 1;
        let mut rows = Array2::zeros((h, wr));
        for i in 0..h {
            for j in 0..wr {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    acc += kv * img[(i, j + t)];
                }
                rows[(i, j)] = acc;
            }
        }
        let mut out = Array2::zeros((hr, wr));
        for i in 0..hr {
            for j in 0..wr {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    acc += kv * rows[(i + t, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    };

    let mu_x = conv(&x);
    let mu_y = conv(&y);
    let xx = conv(&(&x * &x));
    let yy = conv(&(&y * &y));
    let xy = conv(&(&x * &y));

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for ((i, j), mx) in mu_x.indexed_iter() {
        let my = mu_y[(i, j)];
        let vx = xx[(i, j)] - mx * mx;
        let vy = yy[(i, j)] - my * my;
        let cov = xy[(i, j)] - mx * my;
        let val = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
        total += val;
        count += 1;
    }
    Ok(total / count as f64)
}

/// All three metrics in one report.
pub fn evaluate(recon: &Array2<f64>, reference: &Array2<f64>) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(recon, reference)?,
        ssim: ssim(recon, reference)?,
        rlne: rlne(recon, reference)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::rng::Xoshiro256;

    fn textured(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = Xoshiro256::seeded(seed);
        Array2::from_shape_fn((h, w), |(i, j)| {
            0.5 + 0.3 * ((i as f64 * 0.7).sin() * (j as f64 * 0.45).cos())
                + 0.1 * rng.next_f64()
        })
    }

    #[test]
    fn rlne_basics() {
        let r = textured(8, 8, 1);
        assert_eq!(rlne(&r, &r).unwrap(), 0.0);
        let zero = Array2::zeros((8, 8));
        assert_abs_diff_eq!(rlne(&zero, &r).unwrap(), 1.0, epsilon = 1e-12);
        let double = r.mapv(|v| 2.0 * v);
        assert_abs_diff_eq!(rlne(&double, &r).unwrap(), 1.0, epsilon = 1e-12);
        assert!(rlne(&r, &zero).is_err());
    }

    #[test]
    fn psnr_basics() {
        let r = textured(8, 8, 2);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);

        // Reference peak 1, error 1 at every pixel: RMSE 1, PSNR 0 dB.
        let mut reference = Array2::zeros((4, 4));
        reference[(0, 0)] = 1.0;
        let recon = reference.mapv(|v| v + 1.0);
        assert_abs_diff_eq!(psnr(&recon, &reference).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psnr_halving_rmse_adds_six_db() {
        let reference = textured(8, 8, 3);
        let noise = textured(8, 8, 4).mapv(|v| v - 0.5);
        let recon1 = &reference + &noise;
        let recon2 = &reference + &noise.mapv(|v| 0.5 * v);
        let gain = psnr(&recon2, &reference).unwrap() - psnr(&recon1, &reference).unwrap();
        assert_abs_diff_eq!(gain, 20.0 * 2f64.log10(), epsilon = 1e-9);
    }

    #[test]
    fn ssim_identity_is_one() {
        let r = textured(16, 16, 5);
        assert_abs_diff_eq!(ssim(&r, &r).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ssim_inverted_image_below_one() {
        let r = textured(16, 16, 6);
        let peak = r.iter().cloned().fold(f64::MIN, f64::max);
        let inv = r.mapv(|v| peak - v);
        assert!(ssim(&inv, &r).unwrap() < 0.9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let r = textured(8, 8, 7);
        assert!(ssim(&r, &r).is_err());
    }

    #[test]
    fn ssim_symmetric_after_common_scaling() {
        // Symmetry holds when both images share the scaling peak; use images
        // with equal peaks so the normalization is symmetric too.
        let mut a = textured(16, 16, 8);
        let mut b = textured(16, 16, 9);
        let pa = a.iter().cloned().fold(f64::MIN, f64::max);
        let pb = b.iter().cloned().fold(f64::MIN, f64::max);
        a.mapv_inplace(|v| v / pa);
        b.mapv_inplace(|v| v / pb);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
    }

    /// Independent windowed-SSIM oracle: direct per-window double loops with
    /// explicitly materialized 2D weights, no separable filtering.
    fn ssim_oracle(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let peak = y.iter().cloned().fold(f64::MIN, f64::max);
        let x = x.mapv(|v| v / peak);
        let y = y.mapv(|v| v / peak);
        let half = (SSIM_WINDOW / 2) as isize;
        let mut weights = vec![vec![0.0; SSIM_WINDOW]; SSIM_WINDOW];
        let mut sum = 0.0;
        for (r, row) in weights.iter_mut().enumerate() {
            for (c, wv) in row.iter_mut().enumerate() {
                let (dr, dc) = (r as isize - half, c as isize - half);
                *wv = (-((dr * dr + dc * dc) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
                sum += *wv;
            }
        }
        for row in weights.iter_mut() {
            for wv in row.iter_mut() {
                *wv /= sum;
            }
        }
        let (h, w) = x.dim();
        let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
        let mut total = 0.0;
        let mut count = 0usize;
        for i0 in 0..=(h - SSIM_WINDOW) {
            for j0 in 0..=(w - SSIM_WINDOW) {
                let (mut mx, mut my) = (0.0, 0.0);
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for r in 0..SSIM_WINDOW {
                    for c in 0..SSIM_WINDOW {
                        let wv = weights[r][c];
                        let xv = x[(i0 + r, j0 + c)];
                        let yv = y[(i0 + r, j0 + c)];
                        mx += wv * xv;
                        my += wv * yv;
                        sxx += wv * xv * xv;
                        syy += wv * yv * yv;
                        sxy += wv * xv * yv;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_independent_oracle() {
        let reference = textured(16, 16, 10);
        let recon = &reference + &textured(16, 16, 11).mapv(|v| 0.05 * (v - 0.5));
        let fast = ssim(&recon, &reference).unwrap();
        let slow = ssim_oracle(&recon, &reference);
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-6);
    }

    #[test]
    fn metrics_invariant_under_common_rescaling() {
        let reference = textured(16, 16, 12);
        let recon = &reference + &textured(16, 16, 13).mapv(|v| 0.1 * (v - 0.5));
        let m1 = evaluate(&recon, &reference).unwrap();
        let m2 = evaluate(&recon.mapv(|v| 3.7 * v), &reference.mapv(|v| 3.7 * v)).unwrap();
        assert_abs_diff_eq!(m1.psnr, m2.psnr, epsilon = 1e-9);
        assert_abs_diff_eq!(m1.ssim, m2.ssim, epsilon = 1e-9);
        assert_abs_diff_eq!(m1.rlne, m2.rlne, epsilon = 1e-12);
    }

    #[test]
    fn rlne_squared_identity() {
        let reference = textured(8, 8, 14);
        let recon = &reference + &textured(8, 8, 15).mapv(|v| 0.2 * (v - 0.5));
        let e = rlne(&recon, &reference).unwrap();
        let ref_sq: f64 = reference.iter().map(|v| v * v).sum();
        let err_sq: f64 = recon
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert_abs_diff_eq!(e * e * ref_sq, err_sq, epsilon = 1e-10);
    }
}
