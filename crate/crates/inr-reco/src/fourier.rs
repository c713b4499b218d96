//! Centered, orthonormal 2D Fourier operators.
//!
//! Conventions, fixed once for the whole engine:
//! * orthonormal scaling (1/sqrt(H*W) in each direction), so the inverse
//!   transform is also the adjoint;
//! * centered spectra with the DC coefficient at (H/2, W/2) (floor division),
//!   implemented as ifftshift -> FFT -> fftshift.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::image::ComplexImage;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Cyclic shift by (dr, dc): out[(i+dr) % h][(j+dc) % w] = in[i][j].
fn roll2(src: &Array2<Complex64>, dr: usize, dc: usize) -> Array2<Complex64> {
    let (h, w) = src.dim();
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        let ii = (i + dr) % h;
        for j in 0..w {
            out[(ii, (j + dc) % w)] = src[(i, j)];
        }
    }
    out
}

/// Move the DC bin from (0, 0) to the grid center (h/2, w/2).
pub fn fftshift(src: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = src.dim();
    roll2(src, h / 2, w / 2)
}

/// Inverse of [`fftshift`]; differs from it on odd-sized grids.
pub fn ifftshift(src: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = src.dim();
    roll2(src, h - h / 2, w - w / 2)
}

fn fft2_raw(data: &Array2<Complex64>, direction: FftDirection) -> Array2<Complex64> {
    let (h, w) = data.dim();
    let mut buf: Vec<Complex64> = data.iter().copied().collect();

    let row_fft = plan(w, direction);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(w) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    // Transpose, transform the columns as rows, transpose back.
    let mut tr = vec![Complex64::default(); buf.len()];
    for i in 0..h {
        for j in 0..w {
            tr[j * h + i] = buf[i * w + j];
        }
    }
    let col_fft = plan(h, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex64::default());
    for col in tr.chunks_exact_mut(h) {
        col_fft.process_with_scratch(col, &mut scratch);
    }
    let mut out = Array2::zeros((h, w));
    for j in 0..w {
        for i in 0..h {
            out[(i, j)] = tr[j * h + i];
        }
    }
    out
}

fn transform(img: &ComplexImage, direction: FftDirection) -> Result<ComplexImage> {
    if !img.data().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite entries in transform input".into()));
    }
    let (h, w) = img.data().dim();
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let shifted = ifftshift(img.data());
    let mut spec = fftshift(&fft2_raw(&shifted, direction));
    spec.mapv_inplace(|z| z * scale);
    ComplexImage::new(spec)
}

/// Centered orthonormal 2D DFT.
pub fn fft2_centered(img: &ComplexImage) -> Result<ComplexImage> {
    transform(img, FftDirection::Forward)
}

/// Centered orthonormal inverse 2D DFT; exact inverse and adjoint of
/// [`fft2_centered`].
pub fn ifft2_centered(k: &ComplexImage) -> Result<ComplexImage> {
    transform(k, FftDirection::Inverse)
}

/// Per-coil forward transform of a (coils, H, W) stack. Coils are processed
/// in parallel; each coil's result is identical to a sequential call.
pub fn fft2_stack(stack: &Array3<Complex64>) -> Result<Array3<Complex64>> {
    transform_stack(stack, FftDirection::Forward)
}

/// Per-coil inverse transform of a (coils, H, W) stack.
pub fn ifft2_stack(stack: &Array3<Complex64>) -> Result<Array3<Complex64>> {
    transform_stack(stack, FftDirection::Inverse)
}

fn transform_stack(stack: &Array3<Complex64>, direction: FftDirection) -> Result<Array3<Complex64>> {
    use ndarray::parallel::prelude::*;
    let (coils, h, w) = stack.dim();
    let mut out = Array3::zeros((coils, h, w));
    let results: Vec<Result<Array2<Complex64>>> = stack
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|coil| {
            let img = ComplexImage::new(coil.to_owned())?;
            Ok(transform(&img, direction)?.into_data())
        })
        .collect();
    for (j, res) in results.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), j).assign(&res?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::rng::Xoshiro256;

    /// Brute-force centered orthonormal DFT, as a slow independent oracle.
    fn dft2_oracle(x: &Array2<Complex64>, inverse: bool) -> Array2<Complex64> {
        let (h, w) = x.dim();
        let sign = if inverse { 1.0 } else { -1.0 };
        let (h0, w0) = ((h / 2) as isize, (w / 2) as isize);
        let mut out = Array2::zeros((h, w));
        for ki in 0..h {
            for kj in 0..w {
                let (fu, fv) = (ki as isize - h0, kj as isize - w0);
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let (si, sj) = (i as isize - h0, j as isize - w0);
                        let phase = sign
                            * 2.0
                            * std::f64::consts::PI
                            * ((fu * si) as f64 / h as f64 + (fv * sj) as f64 / w as f64);
                        acc += x[(i, j)] * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                out[(ki, kj)] = acc / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = Xoshiro256::seeded(seed);
        let data = Array2::from_shape_fn((h, w), |_| {
            let (a, b) = rng.next_normal_pair();
            Complex64::new(a, b)
        });
        ComplexImage::new(data).unwrap()
    }

    #[test]
    fn zero_image_has_zero_spectrum() {
        let img = ComplexImage::zeros(4, 4);
        let spec = fft2_centered(&img).unwrap();
        assert!(spec.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn constant_image_concentrates_at_dc() {
        let c = Complex64::new(0.7, -0.3);
        for &(h, w) in &[(4usize, 4usize), (5, 6), (3, 3)] {
            let img = ComplexImage::new(Array2::from_elem((h, w), c)).unwrap();
            let spec = fft2_centered(&img).unwrap();
            let dc = spec.data()[(h / 2, w / 2)];
            assert_abs_diff_eq!(dc.norm(), c.norm() * ((h * w) as f64).sqrt(), epsilon = 1e-10);
            let off_dc: f64 = spec
                .data()
                .indexed_iter()
                .filter(|((i, j), _)| (*i, *j) != (h / 2, w / 2))
                .map(|(_, z)| z.norm())
                .sum();
            assert!(off_dc < 1e-9, "energy off DC: {off_dc}");
        }
    }

    #[test]
    fn matches_bruteforce_dft() {
        for &(h, w, seed) in &[(4usize, 4usize, 1u64), (5, 7, 2), (8, 3, 3)] {
            let img = random_image(h, w, seed);
            let fast = fft2_centered(&img).unwrap();
            let slow = dft2_oracle(img.data(), false);
            for (a, b) in fast.data().iter().zip(slow.iter()) {
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
                assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-9);
            }
            let fast_inv = ifft2_centered(&img).unwrap();
            let slow_inv = dft2_oracle(img.data(), true);
            for (a, b) in fast_inv.data().iter().zip(slow_inv.iter()) {
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
                assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn dc_delta_inverts_to_constant() {
        let mut data = Array2::zeros((4, 4));
        data[(2, 2)] = Complex64::new(1.0, 0.0);
        let img = ifft2_centered(&ComplexImage::new(data).unwrap()).unwrap();
        for z in img.data() {
            assert_abs_diff_eq!(z.re, 0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn round_trip_identity() {
        let img = random_image(8, 8, 5);
        let back = ifft2_centered(&fft2_centered(&img).unwrap()).unwrap();
        let num: f64 = img
            .data()
            .iter()
            .zip(back.data().iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = img.data().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-6);
    }

    #[test]
    fn rejects_non_finite() {
        let mut raw = ComplexImage::zeros(2, 2).into_data();
        raw[(0, 0)] = Complex64::new(f64::INFINITY, 0.0);
        assert!(ComplexImage::new(raw).is_err());
    }

    #[test]
    fn shift_pair_is_identity() {
        let img = random_image(5, 7, 9);
        let round = ifftshift(&fftshift(img.data()));
        assert_eq!(img.data(), &round);
    }

    #[test]
    fn stack_transform_matches_per_coil() {
        let a = random_image(6, 5, 21);
        let b = random_image(6, 5, 22);
        let mut stack = Array3::zeros((2, 6, 5));
        stack.index_axis_mut(Axis(0), 0).assign(a.data());
        stack.index_axis_mut(Axis(0), 1).assign(b.data());
        let out = fft2_stack(&stack).unwrap();
        let fa = fft2_centered(&a).unwrap();
        let fb = fft2_centered(&b).unwrap();
        assert_eq!(out.index_axis(Axis(0), 0), fa.data().view());
        assert_eq!(out.index_axis(Axis(0), 1), fb.data().view());
    }
}
