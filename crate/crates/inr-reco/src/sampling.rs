//! Undersampling masks: which k-space locations are measured and which are
//! left for the model to fill in.
//!
//! Two families are provided: uniform Cartesian line masks with a centered
//! auto-calibration (ACS) block, and pointwise masks drawn without
//! replacement from a Gaussian density centered on k-space.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::KspaceVolume;
use crate::rng::Xoshiro256;

/// Which grid dimension indexes phase-encode lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineAxis {
    /// Lines are rows; a sampled line spans all columns.
    Rows,
    /// Lines are columns; a sampled line spans all rows.
    Cols,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskKind {
    CartesianLines { r: usize, acs: usize, offset: usize, axis: LineAxis },
    Pointwise { rate: f64, sigma_frac: f64 },
    /// Loaded from a file; provenance unknown.
    Explicit,
}

/// Binary sampling pattern over an H x W grid, together with how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    kind: MaskKind,
    sampled: Array2<bool>,
    seed: u64,
}

/// Line indices selected by the uniform Cartesian rule: every `r`-th line
/// starting at `offset`, unioned with a centered block of `acs` lines.
pub fn cartesian_line_set(n_lines: usize, r: usize, acs: usize, offset: usize) -> Vec<usize> {
    let mut picked = vec![false; n_lines];
    let mut line = offset;
    while line < n_lines {
        picked[line] = true;
        line += r;
    }
    let start = n_lines / 2 - acs / 2;
    for l in start..start + acs {
        picked[l] = true;
    }
    picked
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| p.then_some(i))
        .collect()
}

impl SamplingMask {
    /// Uniform Cartesian mask: every `r`-th phase-encode line from index 0
    /// plus a centered ACS block of `acs` lines.
    pub fn uniform_cartesian(h: usize, w: usize, r: usize, acs: usize, axis: LineAxis) -> Result<Self> {
        Self::uniform_cartesian_with_offset(h, w, r, acs, axis, 0)
    }

    /// Same as [`SamplingMask::uniform_cartesian`] with a configurable first
    /// sampled line.
    pub fn uniform_cartesian_with_offset(
        h: usize,
        w: usize,
        r: usize,
        acs: usize,
        axis: LineAxis,
        offset: usize,
    ) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidParameter("mask grid must be non-empty".into()));
        }
        let n_lines = match axis {
            LineAxis::Rows => h,
            LineAxis::Cols => w,
        };
        if r == 0 || r > n_lines {
            return Err(Error::InvalidParameter(format!(
                "acceleration factor {r} out of range 1..={n_lines}"
            )));
        }
        if acs > n_lines {
            return Err(Error::InvalidParameter(format!(
                "ACS width {acs} exceeds {n_lines} lines"
            )));
        }
        if offset >= n_lines {
            return Err(Error::InvalidParameter(format!(
                "line offset {offset} outside grid of {n_lines} lines"
            )));
        }
        let lines = cartesian_line_set(n_lines, r, acs, offset);
        let mut sampled = Array2::from_elem((h, w), false);
        for &l in &lines {
            match axis {
                LineAxis::Rows => sampled.row_mut(l).fill(true),
                LineAxis::Cols => sampled.column_mut(l).fill(true),
            }
        }
        Ok(Self {
            kind: MaskKind::CartesianLines { r, acs, offset, axis },
            sampled,
            seed: 0,
        })
    }

    /// Pointwise mask of round(rate*H*W) distinct locations, selection
    /// probability proportional to a Gaussian centered on k-space with
    /// standard deviation `sigma_frac * (H, W)`. Deterministic per seed;
    /// selection uses the weighted-reservoir keys of Efraimidis-Spirakis so
    /// the result depends only on the seeded generator's draw order.
    pub fn gaussian_pointwise(h: usize, w: usize, rate: f64, sigma_frac: f64, seed: u64) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidParameter("mask grid must be non-empty".into()));
        }
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidParameter(format!("sampling rate {rate} outside (0, 1]")));
        }
        if !(sigma_frac > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma fraction {sigma_frac} must be positive"
            )));
        }
        let n = (rate * (h * w) as f64).round() as usize;
        let n = n.clamp(1, h * w);
        let (ci, cj) = ((h / 2) as f64, (w / 2) as f64);
        let (si, sj) = (sigma_frac * h as f64, sigma_frac * w as f64);

        let mut rng = Xoshiro256::seeded(seed);
        // key = ln(u) / weight, u in (0, 1]; the n largest keys win.
        let mut keys: Vec<(f64, usize)> = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let di = (i as f64 - ci) / si;
                let dj = (j as f64 - cj) / sj;
                let weight = (-0.5 * (di * di + dj * dj)).exp();
                let u = 1.0 - rng.next_f64();
                keys.push((u.ln() / weight, i * w + j));
            }
        }
        keys.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut sampled = Array2::from_elem((h, w), false);
        for &(_, idx) in keys.iter().take(n) {
            sampled[(idx / w, idx % w)] = true;
        }
        Ok(Self {
            kind: MaskKind::Pointwise { rate, sigma_frac },
            sampled,
            seed,
        })
    }

    /// Fully sampled mask.
    pub fn full(h: usize, w: usize) -> Self {
        Self {
            kind: MaskKind::Explicit,
            sampled: Array2::from_elem((h, w), true),
            seed: 0,
        }
    }

    /// Wrap an explicit sampling pattern (e.g. loaded from a file).
    pub fn from_pattern(sampled: Array2<bool>) -> Result<Self> {
        if sampled.iter().all(|&s| !s) {
            return Err(Error::InvalidInput("mask has no sampled locations".into()));
        }
        Ok(Self { kind: MaskKind::Explicit, sampled, seed: 0 })
    }

    pub fn kind(&self) -> &MaskKind {
        &self.kind
    }

    pub fn h(&self) -> usize {
        self.sampled.nrows()
    }

    pub fn w(&self) -> usize {
        self.sampled.ncols()
    }

    pub fn sampled(&self) -> &Array2<bool> {
        &self.sampled
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled.iter().filter(|&&s| s).count()
    }

    pub fn is_sampled(&self, i: usize, j: usize) -> bool {
        self.sampled[(i, j)]
    }

    /// Mask as a 0/1 real array, the serialized form.
    pub fn to_real(&self) -> Array2<f64> {
        self.sampled.mapv(|s| if s { 1.0 } else { 0.0 })
    }

    /// Interpret a 0/1 real array as a mask. Anything not exactly 0 or 1 is
    /// rejected.
    pub fn from_real(values: &Array2<f64>) -> Result<Self> {
        let mut sampled = Array2::from_elem(values.dim(), false);
        for (idx, &v) in values.indexed_iter() {
            sampled[idx] = if v == 1.0 {
                true
            } else if v == 0.0 {
                false
            } else {
                return Err(Error::InvalidInput(format!("mask entry {v} is not 0 or 1")));
            };
        }
        Self::from_pattern(sampled)
    }

    fn check_shape(&self, k: &KspaceVolume) -> Result<()> {
        if k.h() != self.h() || k.w() != self.w() {
            return Err(Error::InvalidInput(format!(
                "mask {}x{} does not match k-space {}x{}",
                self.h(),
                self.w(),
                k.h(),
                k.w()
            )));
        }
        Ok(())
    }

    /// Keep sampled entries, zero the rest.
    pub fn apply(&self, k: &KspaceVolume) -> Result<KspaceVolume> {
        self.check_shape(k)?;
        let mut data = k.data().clone();
        self.select_in_place(&mut data, true);
        KspaceVolume::with_scale(data, k.scale())
    }

    /// Keep unsampled entries, zero the sampled ones.
    pub fn apply_complement(&self, k: &KspaceVolume) -> Result<KspaceVolume> {
        self.check_shape(k)?;
        let mut data = k.data().clone();
        self.select_in_place(&mut data, false);
        KspaceVolume::with_scale(data, k.scale())
    }

    /// Zero entries of a raw coil stack outside the kept set.
    pub fn select_in_place(&self, data: &mut Array3<Complex64>, keep_sampled: bool) {
        for ((_, i, j), v) in data.indexed_iter_mut() {
            if self.sampled[(i, j)] != keep_sampled {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
}
