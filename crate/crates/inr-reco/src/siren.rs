//! Sine-activated coordinate MLP with hand-written reverse-mode gradients.
//!
//! The network maps embedded coordinates to real output channels; complex
//! quantities are carried as (real, imag) channel pairs so all parameters
//! and derivatives stay real. Hidden layers compute sin(w0 * (W x + b)); the
//! output layer is affine. Evaluation is batched over all pixels.
//!
//! All matrix products run over fixed-size pixel blocks with a fixed
//! reduction order, so results are bit-identical regardless of how many
//! threads the pool happens to use.

use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;

/// Pixel rows per GEMM block; fixed so the reduction topology never changes.
const GEMM_CHUNK: usize = 512;

/// out = a * b, parallel over row blocks of `a`.
fn mm(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    out.axis_chunks_iter_mut(Axis(0), GEMM_CHUNK)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), GEMM_CHUNK).into_par_iter())
        .for_each(|(mut oc, ac)| general_mat_mul(1.0, &ac, b, 0.0, &mut oc));
    out
}

/// out = a^T * b with partial products summed in fixed block order.
fn mm_t(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let parts: Vec<Array2<f64>> = a
        .axis_chunks_iter(Axis(0), GEMM_CHUNK)
        .into_par_iter()
        .zip(b.axis_chunks_iter(Axis(0), GEMM_CHUNK).into_par_iter())
        .map(|(ac, bc)| {
            let mut out = Array2::zeros((a.ncols(), b.ncols()));
            general_mat_mul(1.0, &ac.t(), &bc, 0.0, &mut out);
            out
        })
        .collect();
    let mut acc = Array2::zeros((a.ncols(), b.ncols()));
    for p in parts {
        acc += &p;
    }
    acc
}

/// Layer sizes: input width (2E), hidden width, number of hidden layers
/// (hidden -> hidden, sine-activated), and real output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SirenDims {
    pub in_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub out_dim: usize,
}

impl SirenDims {
    /// Total linear layers: input layer + hidden layers + output layer.
    pub fn n_layers(&self) -> usize {
        self.hidden_layers + 2
    }
}

/// One sine-activated coordinate network.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenModel {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    w0: f64,
    dims: SirenDims,
    seed: u64,
}

/// Per-layer pre-activations and activations kept from a forward pass.
pub struct ForwardCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

/// dL/d(parameter) for every weight matrix and bias vector of a model.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientBuffer {
    pub fn zeros_like(model: &SirenModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl SirenModel {
    /// Initialize per the SIREN scheme: the input layer uniform in
    /// (-1/fan_in, 1/fan_in), every later layer uniform in
    /// (-sqrt(6/fan_in)/w0, sqrt(6/fan_in)/w0), biases zero.
    pub fn init(seed: u64, dims: SirenDims, w0: f64) -> Self {
        assert!(dims.in_dim >= 1 && dims.hidden >= 1 && dims.out_dim >= 1);
        assert!(w0 > 0.0, "frequency scale must be positive");
        let mut rng = Xoshiro256::seeded(seed);
        let mut weights = Vec::with_capacity(dims.n_layers());
        let mut biases = Vec::with_capacity(dims.n_layers());
        for l in 0..dims.n_layers() {
            let (out, fan_in) = if l == 0 {
                (dims.hidden, dims.in_dim)
            } else if l < dims.n_layers() - 1 {
                (dims.hidden, dims.hidden)
            } else {
                (dims.out_dim, dims.hidden)
            };
            let limit = if l == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / w0
            };
            let mut w = Array2::zeros((out, fan_in));
            for v in w.iter_mut() {
                *v = rng.next_range(-limit, limit);
            }
            weights.push(w);
            biases.push(Array1::zeros(out));
        }
        Self { weights, biases, w0, dims, seed }
    }

    pub fn dims(&self) -> SirenDims {
        self.dims
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer(&self, l: usize) -> (&Array2<f64>, &Array1<f64>) {
        (&self.weights[l], &self.biases[l])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights[l], &mut self.biases[l])
    }

    /// Replace all parameters; shapes must match. Used by checkpoint loading.
    pub fn set_layers(&mut self, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<()> {
        if weights.len() != self.weights.len() || biases.len() != self.biases.len() {
            return Err(Error::InvalidInput("layer count mismatch".into()));
        }
        for (new, old) in weights.iter().zip(&self.weights) {
            if new.dim() != old.dim() {
                return Err(Error::InvalidInput("weight shape mismatch".into()));
            }
        }
        for (new, old) in biases.iter().zip(&self.biases) {
            if new.len() != old.len() {
                return Err(Error::InvalidInput("bias shape mismatch".into()));
            }
        }
        self.weights = weights;
        self.biases = biases;
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn affine(&self, l: usize, z: &ArrayView2<f64>) -> Array2<f64> {
        let mut a = mm(z, &self.weights[l].t());
        a += &self.biases[l];
        a
    }

    /// Batched forward pass over embedded coordinates (one row per pixel).
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Forward pass retaining the per-layer intermediates needed by
    /// [`SirenModel::backward`].
    pub fn forward_cached(&self, input: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if input.ncols() != self.dims.in_dim {
            return Err(Error::InvalidInput(format!(
                "input width {} does not match network input width {}",
                input.ncols(),
                self.dims.in_dim
            )));
        }
        if !self.params_finite() {
            return Err(Error::Numerical("non-finite network parameters".into()));
        }
        let n_sine = self.n_layers() - 1;
        let mut cache = ForwardCache { pre: Vec::with_capacity(n_sine), post: Vec::with_capacity(n_sine) };
        let mut z = input.view();
        for l in 0..n_sine {
            let a = self.affine(l, &z);
            let w0 = self.w0;
            let mut post = a.clone();
            post.par_mapv_inplace(|v| (w0 * v).sin());
            cache.pre.push(a);
            cache.post.push(post);
            z = cache.post[l].view();
        }
        let y = self.affine(n_sine, &z);
        Ok((y, cache))
    }

    /// Reverse-mode gradients of a real loss with respect to every
    /// parameter, given dL/d(output) row per pixel.
    pub fn backward(
        &self,
        input: &Array2<f64>,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
    ) -> Result<GradientBuffer> {
        let n_sine = self.n_layers() - 1;
        if upstream.ncols() != self.dims.out_dim || upstream.nrows() != input.nrows() {
            return Err(Error::InvalidInput(format!(
                "upstream gradient {}x{} does not match outputs {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                input.nrows(),
                self.dims.out_dim
            )));
        }
        if cache.pre.len() != n_sine {
            return Err(Error::InvalidInput("forward cache does not match network depth".into()));
        }
        let mut gw: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); self.n_layers()];
        let mut gb: Vec<Array1<f64>> = vec![Array1::zeros(0); self.n_layers()];

        let z_last = &cache.post[n_sine - 1];
        gw[n_sine] = mm_t(&upstream.view(), &z_last.view());
        gb[n_sine] = upstream.sum_axis(Axis(0));
        let mut dz = mm(&upstream.view(), &self.weights[n_sine].view());

        for l in (0..n_sine).rev() {
            // d/da sin(w0 a) = w0 cos(w0 a)
            let w0 = self.w0;
            let mut da = cache.pre[l].clone();
            da.par_mapv_inplace(|v| w0 * (w0 * v).cos());
            da *= &dz;
            let zin = if l == 0 { input.view() } else { cache.post[l - 1].view() };
            gw[l] = mm_t(&da.view(), &zin);
            gb[l] = da.sum_axis(Axis(0));
            if l > 0 {
                dz = mm(&da.view(), &self.weights[l].view());
            }
        }
        Ok(GradientBuffer { weights: gw, biases: gb })
    }
}

/// Assemble a (P, 2) real output batch into an H x W complex image.
pub fn outputs_to_image(y: &ArrayView2<f64>, h: usize, w: usize) -> Array2<Complex64> {
    assert_eq!(y.ncols(), 2);
    assert_eq!(y.nrows(), h * w);
    Array2::from_shape_fn((h, w), |(i, j)| {
        let p = i * w + j;
        Complex64::new(y[(p, 0)], y[(p, 1)])
    })
}

/// Assemble a (P, 2N) real output batch into an (N, H, W) complex stack;
/// channels 2j and 2j+1 are coil j's real and imaginary parts.
pub fn outputs_to_stack(y: &ArrayView2<f64>, coils: usize, h: usize, w: usize) -> Array3<Complex64> {
    assert_eq!(y.ncols(), 2 * coils);
    assert_eq!(y.nrows(), h * w);
    Array3::from_shape_fn((coils, h, w), |(c, i, j)| {
        let p = i * w + j;
        Complex64::new(y[(p, 2 * c)], y[(p, 2 * c + 1)])
    })
}

/// Flatten a complex image gradient back into per-pixel (re, im) channels.
pub fn image_grad_to_upstream(g: &Array2<Complex64>) -> Array2<f64> {
    let (h, w) = g.dim();
    Array2::from_shape_fn((h * w, 2), |(p, c)| {
        let z = g[(p / w, p % w)];
        if c == 0 {
            z.re
        } else {
            z.im
        }
    })
}

/// Flatten a coil-stack gradient back into per-pixel interleaved channels.
pub fn stack_grad_to_upstream(g: &Array3<Complex64>) -> Array2<f64> {
    let (coils, h, w) = g.dim();
    Array2::from_shape_fn((h * w, 2 * coils), |(p, c)| {
        let z = g[(c / 2, p / w, p % w)];
        if c % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}
