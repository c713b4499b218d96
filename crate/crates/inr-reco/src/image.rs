//! Complex image and multi-coil k-space containers, coil combination, and
//! data normalization.
//!
//! Complex values are stored as (real, imag) double-precision pairs; the
//! containers validate finiteness on construction so downstream algebra can
//! assume clean data.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier;

/// Division guard for reference-sensitivity estimation: pixels whose SOS
/// magnitude falls below this are treated as background.
pub const EPS_DIV: f64 = 1e-8;

fn all_finite<'a, I: IntoIterator<Item = &'a Complex64>>(it: I) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// A complex scalar per pixel: the image being reconstructed, one coil
/// sensitivity slice, or one 2D spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    data: Array2<Complex64>,
}

impl ComplexImage {
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput("image must be at least 1x1".into()));
        }
        if !all_finite(&data) {
            return Err(Error::InvalidInput("non-finite entries in image".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { data: Array2::zeros((h, w)) }
    }

    pub fn h(&self) -> usize {
        self.data.nrows()
    }

    pub fn w(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    /// Pixel-wise modulus.
    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm())
    }
}

/// Multi-coil k-space: (coils, H, W) complex array plus the normalization
/// factor applied at load time (1.0 for raw data).
#[derive(Debug, Clone)]
pub struct KspaceVolume {
    data: Array3<Complex64>,
    scale: f64,
}

impl KspaceVolume {
    pub fn new(data: Array3<Complex64>) -> Result<Self> {
        Self::with_scale(data, 1.0)
    }

    pub fn with_scale(data: Array3<Complex64>, scale: f64) -> Result<Self> {
        let (coils, h, w) = data.dim();
        if coils == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidInput("k-space volume must be non-empty".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {scale}")));
        }
        if !all_finite(&data) {
            return Err(Error::InvalidInput("non-finite entries in k-space".into()));
        }
        Ok(Self { data, scale })
    }

    pub fn coils(&self) -> usize {
        self.data.dim().0
    }

    pub fn h(&self) -> usize {
        self.data.dim().1
    }

    pub fn w(&self) -> usize {
        self.data.dim().2
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn coil(&self, j: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), j)
    }

    /// Zero-filled reconstruction: per-coil inverse DFT of the (possibly
    /// undersampled) data.
    pub fn zero_filled(&self) -> Result<Array3<Complex64>> {
        fourier::ifft2_stack(&self.data)
    }
}

/// One complex sensitivity map per coil, all on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSensitivitySet {
    maps: Array3<Complex64>,
}

impl CoilSensitivitySet {
    pub fn new(maps: Array3<Complex64>) -> Result<Self> {
        let (coils, h, w) = maps.dim();
        if coils == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidInput("sensitivity set must be non-empty".into()));
        }
        if !all_finite(&maps) {
            return Err(Error::InvalidInput("non-finite entries in sensitivities".into()));
        }
        Ok(Self { maps })
    }

    pub fn coils(&self) -> usize {
        self.maps.dim().0
    }

    pub fn h(&self) -> usize {
        self.maps.dim().1
    }

    pub fn w(&self) -> usize {
        self.maps.dim().2
    }

    pub fn maps(&self) -> &Array3<Complex64> {
        &self.maps
    }

    pub fn map(&self, j: usize) -> ArrayView2<'_, Complex64> {
        self.maps.index_axis(Axis(0), j)
    }
}

/// Sum-of-squares coil combination: sqrt(sum_j |img_j|^2) per pixel.
pub fn sos_combine(coil_images: &Array3<Complex64>) -> Result<Array2<f64>> {
    let (coils, h, w) = coil_images.dim();
    if coils == 0 {
        return Err(Error::InvalidInput("empty coil stack".into()));
    }
    let mut out = Array2::zeros((h, w));
    for j in 0..coils {
        let coil = coil_images.index_axis(Axis(0), j);
        out.zip_mut_with(&coil, |acc, z| *acc += z.norm_sqr());
    }
    out.mapv_inplace(f64::sqrt);
    Ok(out)
}

/// Ground-truth sensitivities from a fully sampled volume: each coil image
/// divided by the SOS image, zeroed where the SOS is below [`EPS_DIV`].
pub fn reference_sensitivities(full_kspace: &KspaceVolume) -> Result<CoilSensitivitySet> {
    let coil_images = full_kspace.zero_filled()?;
    let sos = sos_combine(&coil_images)?;
    let (coils, h, w) = coil_images.dim();
    let mut maps = Array3::zeros((coils, h, w));
    for j in 0..coils {
        for i in 0..h {
            for k in 0..w {
                let denom = sos[(i, k)];
                maps[(j, i, k)] = if denom >= EPS_DIV {
                    coil_images[(j, i, k)] / denom
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        }
    }
    CoilSensitivitySet::new(maps)
}

/// Scale a volume so the zero-filled SOS image has peak magnitude 1, and
/// record the factor so results can be mapped back to acquisition units.
pub fn normalize_kspace(k: &KspaceVolume) -> Result<KspaceVolume> {
    let sos = sos_combine(&k.zero_filled()?)?;
    let peak = sos.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidInput("cannot normalize all-zero k-space".into()));
    }
    let data = k.data().mapv(|z| z / peak);
    KspaceVolume::with_scale(data, k.scale() * peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::rng::Xoshiro256;

    fn random_volume(coils: usize, h: usize, w: usize, seed: u64) -> KspaceVolume {
        let mut rng = Xoshiro256::seeded(seed);
        let data = Array3::from_shape_fn((coils, h, w), |_| {
            let (a, b) = rng.next_normal_pair();
            Complex64::new(a, b)
        });
        KspaceVolume::new(data).unwrap()
    }

    #[test]
    fn sos_single_coil_is_magnitude() {
        let mut data = Array3::zeros((1, 2, 2));
        data[(0, 0, 0)] = Complex64::new(3.0, 4.0);
        data[(0, 1, 1)] = Complex64::new(0.0, -2.0);
        let sos = sos_combine(&data).unwrap();
        assert_abs_diff_eq!(sos[(0, 0)], 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sos[(1, 1)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn sos_two_equal_coils() {
        let a = Complex64::new(0.6, 0.8);
        let data = Array3::from_elem((2, 3, 3), a);
        let sos = sos_combine(&data).unwrap();
        for v in &sos {
            assert_abs_diff_eq!(*v, 2f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn sos_three_four_five() {
        let mut data = Array3::zeros((2, 1, 1));
        data[(0, 0, 0)] = Complex64::new(3.0, 0.0);
        data[(1, 0, 0)] = Complex64::new(0.0, 4.0);
        let sos = sos_combine(&data).unwrap();
        assert_abs_diff_eq!(sos[(0, 0)], 5.0, epsilon = 1e-15);
    }

    #[test]
    fn sos_rejects_empty_stack() {
        let data = Array3::<Complex64>::zeros((0, 2, 2));
        assert!(sos_combine(&data).is_err());
    }

    #[test]
    fn sos_invariant_under_per_coil_phase() {
        let vol = random_volume(3, 4, 4, 77);
        let sos = sos_combine(vol.data()).unwrap();
        let phases = [0.3, -1.2, 2.5];
        let mut rotated = vol.data().clone();
        for (j, ph) in phases.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, *ph);
            rotated.index_axis_mut(Axis(0), j).mapv_inplace(|z| z * rot);
        }
        let sos_rot = sos_combine(&rotated).unwrap();
        for (a, b) in sos.iter().zip(sos_rot.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_sensitivities_single_coil_has_unit_magnitude() {
        let vol = random_volume(1, 4, 4, 5);
        let sens = reference_sensitivities(&vol).unwrap();
        let imgs = vol.zero_filled().unwrap();
        let sos = sos_combine(&imgs).unwrap();
        for ((_, i, k), s) in sens.maps().indexed_iter() {
            if sos[(i, k)] >= EPS_DIV {
                assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
                let img = imgs[(0, i, k)];
                assert_abs_diff_eq!((s.arg() - img.arg()).sin(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reference_sensitivities_two_identical_coils() {
        let one = random_volume(1, 4, 4, 6);
        let mut data = Array3::zeros((2, 4, 4));
        data.index_axis_mut(Axis(0), 0).assign(&one.coil(0));
        data.index_axis_mut(Axis(0), 1).assign(&one.coil(0));
        let sens = reference_sensitivities(&KspaceVolume::new(data).unwrap()).unwrap();
        for s in sens.maps() {
            assert_abs_diff_eq!(s.norm(), 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_sensitivities_guard_zeroes_background() {
        let vol = KspaceVolume::new(Array3::from_shape_fn((1, 4, 4), |(_, i, j)| {
            if i == 0 && j == 0 {
                Complex64::new(1e-20, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
        .unwrap();
        let sens = reference_sensitivities(&vol).unwrap();
        assert!(sens.maps().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn normalize_unit_peak_and_idempotent() {
        let vol = random_volume(2, 8, 8, 9);
        let normed = normalize_kspace(&vol).unwrap();
        let sos = sos_combine(&normed.zero_filled().unwrap()).unwrap();
        let peak = sos.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-12);

        let again = normalize_kspace(&normed).unwrap();
        assert_abs_diff_eq!(again.scale(), normed.scale(), epsilon = 1e-12 * normed.scale());
        for (a, b) in again.data().iter().zip(normed.data().iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_is_homogeneous() {
        let vol = random_volume(2, 4, 4, 10);
        let scaled = KspaceVolume::new(vol.data().mapv(|z| z * 7.0)).unwrap();
        let n1 = normalize_kspace(&vol).unwrap();
        let n2 = normalize_kspace(&scaled).unwrap();
        assert_abs_diff_eq!(n2.scale(), 7.0 * n1.scale(), epsilon = 1e-9);
        for (a, b) in n1.data().iter().zip(n2.data().iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_zero_volume() {
        let vol = KspaceVolume::new(Array3::zeros((1, 2, 2)));
        assert!(vol.is_ok());
        assert!(normalize_kspace(&vol.unwrap()).is_err());
    }

    #[test]
    fn constructors_reject_non_finite() {
        let mut data = Array2::from_elem((2, 2), Complex64::new(1.0, 0.0));
        data[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(ComplexImage::new(data).is_err());
        let mut vol = Array3::from_elem((1, 2, 2), Complex64::new(1.0, 0.0));
        vol[(0, 0, 0)] = Complex64::new(0.0, f64::INFINITY);
        assert!(KspaceVolume::new(vol).is_err());
    }
}
