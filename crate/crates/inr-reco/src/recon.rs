//! Inference: hard data-consistency combination of the trained model's
//! k-space prediction with the measured samples, and final image assembly.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier;
use crate::image::{self, CoilSensitivitySet, KspaceVolume};
use crate::sampling::SamplingMask;
use crate::train::TrainedModel;

/// Final reconstruction products. `kspace_final` stays in the (normalized)
/// units of the measured data so the sampled entries can match it exactly;
/// the image-domain outputs are scaled back to acquisition units by `scale`.
pub struct ReconResult {
    pub coil_images: Array3<Complex64>,
    pub combined: Array2<f64>,
    pub sensitivities: CoilSensitivitySet,
    pub kspace_final: KspaceVolume,
    pub scale: f64,
}

/// Evaluate the trained networks, replace predicted k-space with measured
/// values at every sampled location, and assemble per-coil images plus the
/// sum-of-squares combination.
pub fn reconstruct(model: &TrainedModel, y: &KspaceVolume, mask: &SamplingMask) -> Result<ReconResult> {
    let (coils, h, w) = y.data().dim();
    if model.grid.h() != h || model.grid.w() != w {
        return Err(Error::InvalidInput(format!(
            "model grid {}x{} does not match k-space {}x{}",
            model.grid.h(),
            model.grid.w(),
            h,
            w
        )));
    }
    if mask.h() != h || mask.w() != w {
        return Err(Error::InvalidInput("mask does not match k-space shape".into()));
    }
    if model.sens_net.dims().out_dim != 2 * coils {
        return Err(Error::InvalidInput(format!(
            "sensitivity network has {} output channels, expected {}",
            model.sens_net.dims().out_dim,
            2 * coils
        )));
    }

    let (x, s) = model.evaluate()?;
    let mut weighted = Array3::zeros((coils, h, w));
    for j in 0..coils {
        let mut slice = weighted.index_axis_mut(Axis(0), j);
        slice.assign(&s.map(j));
        slice.zip_mut_with(x.data(), |v, xv| *v *= xv);
    }
    let prediction = fourier::fft2_stack(&weighted)?;

    // Hard data consistency by selection: measured values verbatim on the
    // sampled set, model prediction elsewhere.
    let mut final_k = prediction;
    for ((c, i, j), v) in final_k.indexed_iter_mut() {
        if mask.is_sampled(i, j) {
            *v = y.data()[(c, i, j)];
        }
    }
    let kspace_final = KspaceVolume::with_scale(final_k, y.scale())?;

    let scale = y.scale();
    let mut coil_images = fourier::ifft2_stack(kspace_final.data())?;
    coil_images.mapv_inplace(|z| z * scale);
    let combined = image::sos_combine(&coil_images)?;

    Ok(ReconResult { coil_images, combined, sensitivities: s, kspace_final, scale })
}

/// Scaled absolute-difference map, clipped to the [0, 1] display range.
pub fn export_error_map(recon: &Array2<f64>, reference: &Array2<f64>, gain: f64) -> Result<Array2<f64>> {
    if recon.dim() != reference.dim() {
        return Err(Error::InvalidInput(format!(
            "error map shapes differ: {:?} vs {:?}",
            recon.dim(),
            reference.dim()
        )));
    }
    let mut out = recon.clone();
    out.zip_mut_with(reference, |r, f| *r = (gain * (*r - f).abs()).clamp(0.0, 1.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{CoordinateGrid, FourierFeatureMap};
    use crate::rng::Xoshiro256;
    use crate::siren::{SirenDims, SirenModel};
    use crate::train::TrainedModel;

    fn model_for(h: usize, w: usize, coils: usize, seed: u64) -> TrainedModel {
        let features = FourierFeatureMap::new(8, 4.0, seed);
        let dims = SirenDims { in_dim: 16, hidden: 8, hidden_layers: 1, out_dim: 2 };
        TrainedModel {
            image_net: SirenModel::init(seed + 1, dims, 30.0),
            sens_net: SirenModel::init(seed + 2, SirenDims { out_dim: 2 * coils, ..dims }, 30.0),
            features,
            features_sens: None,
            grid: CoordinateGrid::make(h, w),
        }
    }

    fn zeroed_model(h: usize, w: usize, coils: usize) -> TrainedModel {
        let mut m = model_for(h, w, coils, 5);
        for net in [&mut m.image_net, &mut m.sens_net] {
            let zw: Vec<_> = (0..net.n_layers())
                .map(|l| ndarray::Array2::zeros(net.layer(l).0.dim()))
                .collect();
            let zb: Vec<_> = (0..net.n_layers())
                .map(|l| ndarray::Array1::zeros(net.layer(l).1.len()))
                .collect();
            net.set_layers(zw, zb).unwrap();
        }
        m
    }

    fn random_volume(coils: usize, h: usize, w: usize, seed: u64) -> KspaceVolume {
        let mut rng = Xoshiro256::seeded(seed);
        KspaceVolume::new(ndarray::Array3::from_shape_fn((coils, h, w), |_| {
            let (a, b) = rng.next_normal_pair();
            Complex64::new(a, b)
        }))
        .unwrap()
    }

    #[test]
    fn full_mask_returns_measured_kspace() {
        let y = random_volume(2, 6, 6, 1);
        let mask = SamplingMask::full(6, 6);
        let out = reconstruct(&model_for(6, 6, 2, 2), &y, &mask).unwrap();
        assert_eq!(out.kspace_final.data(), y.data());
    }

    #[test]
    fn empty_measurement_returns_pure_model_spectrum() {
        let mut pattern = ndarray::Array2::from_elem((6, 6), false);
        pattern[(0, 0)] = true; // masks need one sampled point
        let mask = SamplingMask::from_pattern(pattern).unwrap();
        let y = {
            let mut d = ndarray::Array3::zeros((1, 6, 6));
            d[(0, 0, 0)] = Complex64::new(0.0, 0.0);
            KspaceVolume::new(d).unwrap()
        };
        let model = model_for(6, 6, 1, 3);
        let out = reconstruct(&model, &y, &mask).unwrap();

        let (x, s) = model.evaluate().unwrap();
        let mut weighted = ndarray::Array3::zeros((1, 6, 6));
        weighted.index_axis_mut(Axis(0), 0).assign(&s.map(0));
        weighted
            .index_axis_mut(Axis(0), 0)
            .zip_mut_with(x.data(), |v, xv| *v *= xv);
        let pred = fourier::fft2_stack(&weighted).unwrap();
        for ((c, i, j), v) in out.kspace_final.data().indexed_iter() {
            if (i, j) == (0, 0) {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            } else {
                assert_eq!(*v, pred[(c, i, j)]);
            }
        }
    }

    #[test]
    fn hard_dc_partition_is_exact() {
        let y0 = random_volume(2, 8, 8, 4);
        let mask = SamplingMask::gaussian_pointwise(8, 8, 0.4, 0.2, 5).unwrap();
        let y = mask.apply(&y0).unwrap();
        let model = model_for(8, 8, 2, 6);
        let out = reconstruct(&model, &y, &mask).unwrap();

        let (x, s) = model.evaluate().unwrap();
        let mut weighted = ndarray::Array3::zeros((2, 8, 8));
        for j in 0..2 {
            let mut slice = weighted.index_axis_mut(Axis(0), j);
            slice.assign(&s.map(j));
            slice.zip_mut_with(x.data(), |v, xv| *v *= xv);
        }
        let pred = fourier::fft2_stack(&weighted).unwrap();
        for ((c, i, j), v) in out.kspace_final.data().indexed_iter() {
            if mask.is_sampled(i, j) {
                assert_eq!(v.re.to_bits(), y.data()[(c, i, j)].re.to_bits());
                assert_eq!(v.im.to_bits(), y.data()[(c, i, j)].im.to_bits());
            } else {
                assert_eq!(v.re.to_bits(), pred[(c, i, j)].re.to_bits());
                assert_eq!(v.im.to_bits(), pred[(c, i, j)].im.to_bits());
            }
        }
        // combined really is the SOS of the coil images
        let sos = image::sos_combine(&out.coil_images).unwrap();
        assert_eq!(sos, out.combined);
    }

    #[test]
    fn zero_model_equals_zero_filled() {
        let y0 = random_volume(2, 8, 8, 7);
        let mask = SamplingMask::uniform_cartesian(8, 8, 3, 2, crate::sampling::LineAxis::Cols).unwrap();
        let y = mask.apply(&y0).unwrap();
        let out = reconstruct(&zeroed_model(8, 8, 2), &y, &mask).unwrap();
        let zf = y.zero_filled().unwrap();
        for (a, b) in out.coil_images.iter().zip(zf.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn denormalization_scales_images() {
        let y0 = random_volume(1, 6, 6, 8);
        let mask = SamplingMask::full(6, 6);
        let normalized = image::normalize_kspace(&y0).unwrap();
        let model = zeroed_model(6, 6, 1);
        let from_norm = reconstruct(&model, &normalized, &mask).unwrap();
        let from_raw = reconstruct(&model, &y0, &mask).unwrap();
        for (a, b) in from_norm.combined.iter().zip(from_raw.combined.iter()) {
            approx::assert_abs_diff_eq!(a, b, epsilon = 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn error_map_behaviour() {
        let a = Array2::from_elem((3, 3), 0.5);
        let same = export_error_map(&a, &a, 5.0).unwrap();
        assert!(same.iter().all(|&v| v == 0.0));

        let mut b = a.clone();
        b[(0, 0)] = 0.6; // |diff| 0.1, gain 5 -> 0.5
        b[(1, 1)] = 0.8; // |diff| 0.3, gain 5 -> clipped to 1.0
        let map = export_error_map(&b, &a, 5.0).unwrap();
        approx::assert_abs_diff_eq!(map[(0, 0)], 0.5, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(map[(1, 1)], 1.0, epsilon = 1e-12);

        let c = Array2::from_elem((2, 3), 0.5);
        assert!(export_error_map(&a, &c, 5.0).is_err());
    }
}
