//! Normalized coordinate grid and Fourier feature embedding.
//!
//! Pixel (i, j) maps to the coordinate (i/H, j/W) in [0,1)^2, enumerated in
//! row-major order. Coordinates are lifted through
//! gamma(c) = [cos(2*pi*B*c), sin(2*pi*B*c)] with a fixed random Gaussian
//! matrix B; B is drawn once per reconstruction and never trained.

use ndarray::Array2;

use crate::rng::Xoshiro256;

/// Row-major grid of normalized pixel coordinates; row p holds (x_i, y_j).
#[derive(Debug, Clone)]
pub struct CoordinateGrid {
    h: usize,
    w: usize,
    coords: Array2<f64>,
}

impl CoordinateGrid {
    pub fn make(h: usize, w: usize) -> Self {
        assert!(h >= 1 && w >= 1, "grid must be at least 1x1");
        let mut coords = Array2::zeros((h * w, 2));
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                coords[(p, 0)] = i as f64 / h as f64;
                coords[(p, 1)] = j as f64 / w as f64;
            }
        }
        Self { h, w, coords }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }
}

/// The fixed embedding matrix B (E x 2) with entries ~ N(0, sigma^2), plus
/// the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatureMap {
    b: Array2<f64>,
    sigma: f64,
    seed: u64,
}

impl FourierFeatureMap {
    /// Draw B row by row with Box-Muller pairs from the portable generator;
    /// each row consumes exactly one pair.
    pub fn new(embed_size: usize, sigma: f64, seed: u64) -> Self {
        assert!(embed_size >= 1, "embedding size must be at least 1");
        let mut rng = Xoshiro256::seeded(seed);
        let mut b = Array2::zeros((embed_size, 2));
        for e in 0..embed_size {
            let (z0, z1) = rng.next_normal_pair();
            b[(e, 0)] = sigma * z0;
            b[(e, 1)] = sigma * z1;
        }
        Self { b, sigma, seed }
    }

    /// Wrap an explicit matrix; used by tests and checkpoint loading.
    pub fn from_matrix(b: Array2<f64>, sigma: f64, seed: u64) -> Self {
        assert_eq!(b.ncols(), 2, "B must have one column per coordinate");
        Self { b, sigma, seed }
    }

    pub fn embed_size(&self) -> usize {
        self.b.nrows()
    }

    /// Length of one embedded coordinate vector: 2E.
    pub fn output_dim(&self) -> usize {
        2 * self.b.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Embed every grid coordinate: output row p is
    /// [cos(2*pi*B*c_p); sin(2*pi*B*c_p)], length 2E, entries in [-1, 1].
    pub fn embed(&self, grid: &CoordinateGrid) -> Array2<f64> {
        let e = self.embed_size();
        let p = grid.pixels();
        let coords = grid.coords();
        let mut out = Array2::zeros((p, 2 * e));
        let two_pi = 2.0 * std::f64::consts::PI;
        for pix in 0..p {
            let (x, y) = (coords[(pix, 0)], coords[(pix, 1)]);
            for k in 0..e {
                let phase = two_pi * (self.b[(k, 0)] * x + self.b[(k, 1)] * y);
                out[(pix, k)] = phase.cos();
                out[(pix, e + k)] = phase.sin();
            }
        }
        out
    }
}
