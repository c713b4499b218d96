//! Joint optimization of the image and sensitivity networks.
//!
//! Each reconstruction runs a fixed budget of full-grid iterations; every
//! iteration evaluates both networks on all pixels, forms the total loss,
//! back-propagates, and applies one Adam step per network. The two
//! optimizers keep independent state.

use ndarray::{Array1, Array2};

use crate::embed::{CoordinateGrid, FourierFeatureMap};
use crate::error::{Error, Result};
use crate::image::{ComplexImage, CoilSensitivitySet, KspaceVolume};
use crate::loss::{self, LossReport, LossWeights};
use crate::rng::SeedStreams;
use crate::sampling::SamplingMask;
use crate::siren::{self, GradientBuffer, SirenDims, SirenModel};

/// First/second-moment buffers and step count for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_weights: Vec<Array2<f64>>,
    v_biases: Vec<Array1<f64>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(model: &SirenModel, lr: f64) -> Self {
        let zeros_w = || {
            (0..model.n_layers())
                .map(|l| Array2::zeros(model.layer(l).0.dim()))
                .collect::<Vec<_>>()
        };
        let zeros_b = || {
            (0..model.n_layers())
                .map(|l| Array1::zeros(model.layer(l).1.len()))
                .collect::<Vec<_>>()
        };
        Self {
            m_weights: zeros_w(),
            m_biases: zeros_b(),
            v_weights: zeros_w(),
            v_biases: zeros_b(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. `lr_scale` multiplies the base rate
    /// (1.0 for a constant schedule).
    pub fn step(&mut self, model: &mut SirenModel, grads: &GradientBuffer, lr_scale: f64) -> Result<()> {
        if grads.weights.len() != self.m_weights.len() {
            return Err(Error::InvalidInput("gradient buffer does not match optimizer state".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradients at optimizer step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let lr = self.lr * lr_scale;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for l in 0..grads.weights.len() {
            let (w, b) = model.layer_mut(l);
            azip_update(
                w.as_slice_mut().unwrap(),
                self.m_weights[l].as_slice_mut().unwrap(),
                self.v_weights[l].as_slice_mut().unwrap(),
                grads.weights[l].as_slice().unwrap(),
                self.beta1,
                self.beta2,
                bc1,
                bc2,
                lr,
                self.eps,
            );
            azip_update(
                b.as_slice_mut().unwrap(),
                self.m_biases[l].as_slice_mut().unwrap(),
                self.v_biases[l].as_slice_mut().unwrap(),
                grads.biases[l].as_slice().unwrap(),
                self.beta1,
                self.beta2,
                bc1,
                bc2,
                lr,
                self.eps,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    beta1: f64,
    beta2: f64,
    bc1: f64,
    bc2: f64,
    lr: f64,
    eps: f64,
) {
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Architecture and embedding choices shared by a reconstruction run.
#[derive(Debug, Clone, Copy)]
pub struct NetConfig {
    pub embed_size: usize,
    pub embed_sigma: f64,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub w0_image: f64,
    pub w0_sens: f64,
    /// One shared embedding matrix for both networks (default); when false,
    /// each network draws its own.
    pub shared_features: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            embed_size: 256,
            embed_sigma: 10.0,
            hidden: 256,
            hidden_layers: 6,
            w0_image: 30.0,
            w0_sens: 30.0,
            shared_features: true,
        }
    }
}

/// Full training configuration for one scan.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iters: usize,
    pub lr: f64,
    /// Separate learning rate for the sensitivity network; defaults to `lr`.
    pub lr_sens: Option<f64>,
    pub weights: LossWeights,
    pub seed: u64,
    pub log_every: usize,
    pub cosine_decay: bool,
    pub net: NetConfig,
}

impl TrainConfig {
    pub fn new(weights: LossWeights, seed: u64) -> Self {
        Self {
            iters: 1000,
            lr: 1e-4,
            lr_sens: None,
            weights,
            seed,
            log_every: 100,
            cosine_decay: false,
            net: NetConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iters < 1 {
            return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
        }
        if !(self.lr > 0.0) || self.lr_sens.is_some_and(|l| l <= 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if self.net.embed_size < 1 || self.net.hidden < 1 {
            return Err(Error::InvalidParameter("network sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to re-evaluate the trained networks.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub image_net: SirenModel,
    pub sens_net: SirenModel,
    pub features: FourierFeatureMap,
    /// Present when the networks use independent embedding matrices.
    pub features_sens: Option<FourierFeatureMap>,
    pub grid: CoordinateGrid,
}

impl TrainedModel {
    /// Evaluate both networks on the stored grid.
    pub fn evaluate(&self) -> Result<(ComplexImage, CoilSensitivitySet)> {
        let (h, w) = (self.grid.h(), self.grid.w());
        let coils = self.sens_net.dims().out_dim / 2;
        let gamma = self.features.embed(&self.grid);
        let y_img = self.image_net.forward(&gamma)?;
        let gamma_s;
        let sens_input = match &self.features_sens {
            Some(f) => {
                gamma_s = f.embed(&self.grid);
                &gamma_s
            }
            None => &gamma,
        };
        let y_sens = self.sens_net.forward(sens_input)?;
        let x = ComplexImage::new(siren::outputs_to_image(&y_img.view(), h, w))
            .map_err(|_| Error::Numerical("image network produced non-finite values".into()))?;
        let s = CoilSensitivitySet::new(siren::outputs_to_stack(&y_sens.view(), coils, h, w))
            .map_err(|_| Error::Numerical("sensitivity network produced non-finite values".into()))?;
        Ok((x, s))
    }
}

/// A finished fit: the trained networks plus the per-iteration loss trace.
pub struct FitResult {
    pub model: TrainedModel,
    pub trace: Vec<LossReport>,
}

/// Jointly fit both networks to the measured k-space.
pub fn fit(y: &KspaceVolume, mask: &SamplingMask, cfg: &TrainConfig) -> Result<FitResult> {
    fit_with_observer(y, mask, cfg, |_, _| {})
}

/// As [`fit`], invoking `observer(iteration, report)` every `log_every`
/// iterations (and on the final one) for progress reporting or periodic
/// snapshots.
pub fn fit_with_observer(
    y: &KspaceVolume,
    mask: &SamplingMask,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &LossReport),
) -> Result<FitResult> {
    cfg.validate()?;
    if mask.h() != y.h() || mask.w() != y.w() {
        return Err(Error::InvalidInput(format!(
            "mask {}x{} does not match k-space {}x{}",
            mask.h(),
            mask.w(),
            y.h(),
            y.w()
        )));
    }
    // The data must be zero wherever the mask says "not sampled".
    for ((_, i, j), v) in y.data().indexed_iter() {
        if !mask.is_sampled(i, j) && v.norm() != 0.0 {
            return Err(Error::InvalidInput(
                "k-space has nonzero entries outside the sampling mask".into(),
            ));
        }
    }

    let (coils, h, w) = y.data().dim();
    let seeds = SeedStreams::from_master(cfg.seed);
    let grid = CoordinateGrid::make(h, w);
    let features = FourierFeatureMap::new(cfg.net.embed_size, cfg.net.embed_sigma, seeds.features);
    let features_sens = (!cfg.net.shared_features)
        .then(|| FourierFeatureMap::new(cfg.net.embed_size, cfg.net.embed_sigma, seeds.features_sens));

    let in_dim = features.output_dim();
    let image_dims = SirenDims {
        in_dim,
        hidden: cfg.net.hidden,
        hidden_layers: cfg.net.hidden_layers,
        out_dim: 2,
    };
    let sens_dims = SirenDims { out_dim: 2 * coils, ..image_dims };
    let mut image_net = SirenModel::init(seeds.image_net, image_dims, cfg.net.w0_image);
    let mut sens_net = SirenModel::init(seeds.sens_net, sens_dims, cfg.net.w0_sens);

    let gamma = features.embed(&grid);
    let gamma_sens = features_sens.as_ref().map(|f| f.embed(&grid));
    let sens_input = gamma_sens.as_ref().unwrap_or(&gamma);

    let mut adam_image = AdamState::new(&image_net, cfg.lr);
    let mut adam_sens = AdamState::new(&sens_net, cfg.lr_sens.unwrap_or(cfg.lr));

    let mut trace = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let (y_img, cache_img) = image_net.forward_cached(&gamma)?;
        let (y_sens, cache_sens) = sens_net.forward_cached(sens_input)?;
        let x = ComplexImage::new(siren::outputs_to_image(&y_img.view(), h, w))
            .map_err(|_| Error::Numerical(format!("non-finite image output at iteration {it}")))?;
        let s = CoilSensitivitySet::new(siren::outputs_to_stack(&y_sens.view(), coils, h, w))
            .map_err(|_| Error::Numerical(format!("non-finite sensitivity output at iteration {it}")))?;

        let (report, grads) = loss::total_loss(&x, &s, y, mask, &cfg.weights)?;
        if !report.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at iteration {it}: dc={} tv={} reg={}",
                report.dc, report.image_tv, report.sens_reg
            )));
        }

        let up_img = siren::image_grad_to_upstream(&grads.image);
        let up_sens = siren::stack_grad_to_upstream(&grads.sens);
        let g_img = image_net.backward(&gamma, &cache_img, &up_img)?;
        let g_sens = sens_net.backward(sens_input, &cache_sens, &up_sens)?;

        let lr_scale = if cfg.cosine_decay {
            0.5 * (1.0 + (std::f64::consts::PI * it as f64 / cfg.iters as f64).cos())
        } else {
            1.0
        };
        adam_image.step(&mut image_net, &g_img, lr_scale)?;
        adam_sens.step(&mut sens_net, &g_sens, lr_scale)?;

        if cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iters) {
            observer(it, &report);
        }
        trace.push(report);
    }

    Ok(FitResult {
        model: TrainedModel { image_net, sens_net, features, features_sens, grid },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::loss::RegKind;

    fn tiny_model() -> SirenModel {
        SirenModel::init(
            1,
            SirenDims { in_dim: 2, hidden: 4, hidden_layers: 1, out_dim: 2 },
            30.0,
        )
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut model = tiny_model();
        let before = model.clone();
        let grads = GradientBuffer::zeros_like(&model);
        let mut state = AdamState::new(&model, 1e-3);
        state.step(&mut model, &grads, 1.0).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_hand_value() {
        // Scalar parameter, g = 1, lr = 1e-4, t = 1:
        //   m_hat = 1, v_hat = 1, delta = -lr / (1 + eps).
        let mut model = tiny_model();
        let p0 = model.layer(0).0[(0, 0)];
        let mut grads = GradientBuffer::zeros_like(&model);
        grads.weights[0][(0, 0)] = 1.0;
        let mut state = AdamState::new(&model, 1e-4);
        state.step(&mut model, &grads, 1.0).unwrap();
        let delta = model.layer(0).0[(0, 0)] - p0;
        let expected = -1e-4 / (1.0 + 1e-8);
        assert_abs_diff_eq!(delta, expected, epsilon = 1e-9);
    }

    #[test]
    fn adam_first_step_scales_with_lr() {
        let run = |lr: f64| -> f64 {
            let mut model = tiny_model();
            let p0 = model.layer(0).0[(0, 0)];
            let mut grads = GradientBuffer::zeros_like(&model);
            grads.weights[0][(0, 0)] = 0.37;
            let mut state = AdamState::new(&model, lr);
            state.step(&mut model, &grads, 1.0).unwrap();
            model.layer(0).0[(0, 0)] - p0
        };
        assert_abs_diff_eq!(run(2e-4), 2.0 * run(1e-4), epsilon = 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut model = tiny_model();
        let mut grads = GradientBuffer::zeros_like(&model);
        grads.weights[0][(0, 0)] = f64::NAN;
        let mut state = AdamState::new(&model, 1e-4);
        assert!(matches!(
            state.step(&mut model, &grads, 1.0),
            Err(Error::Numerical(_))
        ));
    }

    fn tiny_problem(seed: u64) -> (KspaceVolume, SamplingMask) {
        use super::phantom_fixtures::checker_volume;
        let y = checker_volume(8, 8, seed);
        let mask = SamplingMask::full(8, 8);
        (y, mask)
    }

    #[test]
    fn fit_rejects_zero_iterations() {
        let (y, mask) = tiny_problem(1);
        let mut cfg = TrainConfig::new(LossWeights::new(0.0, 0.0, RegKind::None).unwrap(), 7);
        cfg.iters = 0;
        assert!(fit(&y, &mask, &cfg).is_err());
    }

    #[test]
    fn fit_single_iteration_steps_once() {
        let (y, mask) = tiny_problem(2);
        let mut cfg = TrainConfig::new(LossWeights::new(0.0, 0.0, RegKind::None).unwrap(), 7);
        cfg.iters = 1;
        cfg.net = NetConfig {
            embed_size: 8,
            embed_sigma: 4.0,
            hidden: 8,
            hidden_layers: 1,
            w0_image: 30.0,
            w0_sens: 30.0,
            shared_features: true,
        };
        let out = fit(&y, &mask, &cfg).unwrap();
        assert_eq!(out.trace.len(), 1);
        // A step moved the parameters away from the fresh initialization.
        let fresh = SirenModel::init(
            crate::rng::SeedStreams::from_master(7).image_net,
            out.model.image_net.dims(),
            30.0,
        );
        assert_ne!(out.model.image_net, fresh);
    }

    #[test]
    fn fit_is_deterministic() {
        let (y, mask) = tiny_problem(3);
        let mut cfg = TrainConfig::new(LossWeights::new(1e-4, 1e-4, RegKind::Tv).unwrap(), 11);
        cfg.iters = 5;
        cfg.net = NetConfig {
            embed_size: 8,
            embed_sigma: 4.0,
            hidden: 8,
            hidden_layers: 1,
            w0_image: 30.0,
            w0_sens: 30.0,
            shared_features: true,
        };
        let a = fit(&y, &mask, &cfg).unwrap();
        let b = fit(&y, &mask, &cfg).unwrap();
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
        }
        assert_eq!(a.model.image_net, b.model.image_net);
        assert_eq!(a.model.sens_net, b.model.sens_net);
    }

    #[test]
    fn fit_rejects_mask_inconsistent_data() {
        let (y, _) = tiny_problem(4);
        let mask = SamplingMask::uniform_cartesian(8, 8, 2, 0, crate::sampling::LineAxis::Cols).unwrap();
        let cfg = TrainConfig::new(LossWeights::new(0.0, 0.0, RegKind::None).unwrap(), 7);
        // y is fully sampled; the strided mask contradicts its zero pattern.
        assert!(fit(&y, &mask, &cfg).is_err());
    }
}
