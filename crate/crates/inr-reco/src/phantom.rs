//! Synthetic ground truth: a piecewise-smooth complex phantom, smooth
//! simulated coil sensitivities, and the corresponding multi-coil k-space.
//!
//! Sensitivities are ring-placed Gaussian profiles with per-coil linear
//! phase, normalized so their pointwise sum-of-squares is exactly one. With
//! that convention the SOS of the coil images equals the phantom magnitude
//! and the reference-sensitivity construction recovers the simulated maps
//! on the object support.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier;
use crate::image::{ComplexImage, CoilSensitivitySet, KspaceVolume};
use crate::rng::Xoshiro256;
use crate::sampling::SamplingMask;

/// One ellipse in normalized [0,1)^2 coordinates: (row, col) center,
/// semi-axes as FOV fractions, rotation in radians, additive intensity.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub angle: f64,
    pub intensity: f64,
}

/// Ring placement of the simulated coils: ring radius and Gaussian falloff
/// width, both as FOV fractions.
#[derive(Debug, Clone, Copy)]
pub struct CoilLayout {
    pub ring_radius: f64,
    pub width: f64,
}

impl Default for CoilLayout {
    fn default() -> Self {
        Self { ring_radius: 0.55, width: 0.4 }
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub h: usize,
    pub w: usize,
    pub coils: usize,
    pub ellipses: Vec<Ellipse>,
    pub coil_layout: CoilLayout,
    pub phase_strength: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// The shipped default: a head-like outline with interior structure,
    /// intensity sums kept within [0, 1].
    pub fn standard(h: usize, w: usize, coils: usize, seed: u64) -> Self {
        let ellipses = vec![
            Ellipse { center: (0.5, 0.5), axes: (0.42, 0.36), angle: 0.0, intensity: 0.5 },
            Ellipse { center: (0.38, 0.42), axes: (0.14, 0.10), angle: 0.5, intensity: 0.25 },
            Ellipse { center: (0.42, 0.62), axes: (0.10, 0.13), angle: -0.4, intensity: 0.3 },
            Ellipse { center: (0.66, 0.50), axes: (0.12, 0.16), angle: 0.0, intensity: 0.2 },
            Ellipse { center: (0.64, 0.36), axes: (0.045, 0.045), angle: 0.0, intensity: 0.45 },
            Ellipse { center: (0.30, 0.55), axes: (0.03, 0.05), angle: 0.9, intensity: 0.4 },
        ];
        Self {
            h,
            w,
            coils,
            ellipses,
            coil_layout: CoilLayout::default(),
            phase_strength: 0.4,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.h < 1 || self.w < 1 || self.coils < 1 {
            return Err(Error::InvalidParameter("phantom dimensions must be positive".into()));
        }
        if self.ellipses.iter().any(|e| !(0.0..=1.0).contains(&e.intensity)) {
            return Err(Error::InvalidParameter("ellipse intensities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Separable Gaussian blur with a truncated, renormalized kernel; keeps the
/// image nonnegative and leaves constant regions constant.
fn blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (h, w) = img.dim();
    let pass = |src: &Array2<f64>, rows: bool| -> Array2<f64> {
        let mut out = Array2::zeros((h, w));
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    let d = t as isize - radius;
                    let (ii, jj) = if rows { (i as isize + d, j as isize) } else { (i as isize, j as isize + d) };
                    if ii >= 0 && ii < h as isize && jj >= 0 && jj < w as isize {
                        acc += kv * src[(ii as usize, jj as usize)];
                        norm += kv;
                    }
                }
                out[(i, j)] = acc / norm;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Sum of blurred ellipse indicators times a smooth synthetic phase field.
pub fn make_phantom(spec: &PhantomSpec) -> Result<ComplexImage> {
    spec.validate()?;
    let (h, w) = (spec.h, spec.w);
    let mut mag = Array2::zeros((h, w));
    for e in &spec.ellipses {
        let (sin_a, cos_a) = e.angle.sin_cos();
        for i in 0..h {
            for j in 0..w {
                let u = i as f64 / h as f64 - e.center.0;
                let v = j as f64 / w as f64 - e.center.1;
                let ur = u * cos_a + v * sin_a;
                let vr = -u * sin_a + v * cos_a;
                if (ur / e.axes.0).powi(2) + (vr / e.axes.1).powi(2) <= 1.0 {
                    mag[(i, j)] += e.intensity;
                }
            }
        }
    }
    if !spec.ellipses.is_empty() {
        mag = blur(&mag, 1.0);
    }
    let data = Array2::from_shape_fn((h, w), |(i, j)| {
        let x = i as f64 / h as f64;
        let y = j as f64 / w as f64;
        let phase = spec.phase_strength
            * (std::f64::consts::PI * x).sin()
            * (std::f64::consts::PI * y).cos();
        Complex64::from_polar(mag[(i, j)], phase)
    });
    ComplexImage::new(data)
}

/// Ring-placed Gaussian coil profiles with per-coil linear phase, normalized
/// to unit pointwise sum-of-squares.
pub fn make_coils(spec: &PhantomSpec) -> Result<CoilSensitivitySet> {
    spec.validate()?;
    let (n, h, w) = (spec.coils, spec.h, spec.w);
    let mut rng = Xoshiro256::seeded(spec.seed);
    let mut mags = Array3::zeros((n, h, w));
    let mut phases = Array3::zeros((n, h, w));
    let two_sigma_sq = 2.0 * spec.coil_layout.width * spec.coil_layout.width;
    for k in 0..n {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let center = (
            0.5 + spec.coil_layout.ring_radius * angle.sin(),
            0.5 + spec.coil_layout.ring_radius * angle.cos(),
        );
        let slope_row = rng.next_range(-1.0, 1.0) * std::f64::consts::PI;
        let slope_col = rng.next_range(-1.0, 1.0) * std::f64::consts::PI;
        let phase0 = rng.next_range(-std::f64::consts::PI, std::f64::consts::PI);
        for i in 0..h {
            for j in 0..w {
                let x = i as f64 / h as f64;
                let y = j as f64 / w as f64;
                let d2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                mags[(k, i, j)] = (-d2 / two_sigma_sq).exp();
                phases[(k, i, j)] = slope_row * (x - 0.5) + slope_col * (y - 0.5) + phase0;
            }
        }
    }
    let mut maps = Array3::zeros((n, h, w));
    for i in 0..h {
        for j in 0..w {
            let sos: f64 = (0..n).map(|k| mags[(k, i, j)] * mags[(k, i, j)]).sum::<f64>().sqrt();
            for k in 0..n {
                maps[(k, i, j)] = Complex64::from_polar(mags[(k, i, j)] / sos, phases[(k, i, j)]);
            }
        }
    }
    CoilSensitivitySet::new(maps)
}

/// Forward-simulate the acquisition: per coil, the centered DFT of the
/// sensitivity-weighted phantom, plus i.i.d. complex Gaussian noise whose
/// per-component deviation is `noise_sigma` times the peak DC magnitude.
/// Returns the undersampled noisy volume and the fully sampled noiseless
/// reference.
pub fn simulate_acquisition(
    phantom: &ComplexImage,
    coils: &CoilSensitivitySet,
    mask: &SamplingMask,
    noise_sigma: f64,
    noise_seed: u64,
) -> Result<(KspaceVolume, KspaceVolume)> {
    if coils.h() != phantom.h() || coils.w() != phantom.w() {
        return Err(Error::InvalidInput("coil maps do not match phantom shape".into()));
    }
    if noise_sigma < 0.0 {
        return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
    }
    let (n, h, w) = coils.maps().dim();
    let mut weighted = Array3::zeros((n, h, w));
    for j in 0..n {
        let mut slice = weighted.index_axis_mut(Axis(0), j);
        slice.assign(&coils.map(j));
        slice.zip_mut_with(phantom.data(), |v, xv| *v *= xv);
    }
    let full = fourier::fft2_stack(&weighted)?;

    let dc_peak = (0..n)
        .map(|j| full[(j, h / 2, w / 2)].norm())
        .fold(0.0, f64::max);
    let sigma_abs = noise_sigma * dc_peak;

    let mut noisy = full.clone();
    if sigma_abs > 0.0 {
        let mut rng = Xoshiro256::seeded(noise_seed);
        for v in noisy.iter_mut() {
            let (re, im) = rng.next_normal_pair();
            *v += Complex64::new(sigma_abs * re, sigma_abs * im);
        }
    }
    let undersampled = mask.apply(&KspaceVolume::new(noisy)?)?;
    Ok((undersampled, KspaceVolume::new(full)?))
}
