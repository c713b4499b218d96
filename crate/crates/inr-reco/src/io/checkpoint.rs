//! Binary model checkpoints: both networks' layer tensors, the frequency
//! scales, the seeds, and the embedding matrix B, so a reconstruction can
//! be re-evaluated or resumed exactly. Everything is little-endian f64;
//! this is our own persistence format, not the single-precision
//! interchange format.

use ndarray::{Array1, Array2};
use std::fs;
use std::path::Path;

use crate::embed::{CoordinateGrid, FourierFeatureMap};
use crate::error::{Error, Result};
use crate::siren::{SirenDims, SirenModel};
use crate::train::TrainedModel;

const MAGIC: &[u8; 4] = b"INRK";
const VERSION: u32 = 1;
const MAX_TENSOR: u64 = 1 << 24;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: u64) -> Result<Vec<f64>> {
        if n > MAX_TENSOR {
            return Err(Error::Format(format!("tensor of {n} elements exceeds checkpoint limit")));
        }
        let bytes = self.take(n as usize * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_features(out: &mut Vec<u8>, f: &FourierFeatureMap) {
    put_u64(out, f.embed_size() as u64);
    put_f64(out, f.sigma());
    put_u64(out, f.seed());
    for v in f.matrix().iter() {
        put_f64(out, *v);
    }
}

fn read_features(r: &mut Reader) -> Result<FourierFeatureMap> {
    let e = r.u64()?;
    let sigma = r.f64()?;
    let seed = r.u64()?;
    let data = r.f64_vec(e.checked_mul(2).ok_or_else(|| Error::Format("overflow".into()))?)?;
    let b = Array2::from_shape_vec((e as usize, 2), data)
        .map_err(|err| Error::Format(format!("embedding matrix shape: {err}")))?;
    Ok(FourierFeatureMap::from_matrix(b, sigma, seed))
}

fn write_net(out: &mut Vec<u8>, net: &SirenModel) {
    let d = net.dims();
    put_f64(out, net.w0());
    put_u64(out, net.seed());
    for v in [d.in_dim, d.hidden, d.hidden_layers, d.out_dim] {
        put_u64(out, v as u64);
    }
    put_u64(out, net.n_layers() as u64);
    for l in 0..net.n_layers() {
        let (w, b) = net.layer(l);
        put_u64(out, w.nrows() as u64);
        put_u64(out, w.ncols() as u64);
        for v in w.iter() {
            put_f64(out, *v);
        }
        for v in b.iter() {
            put_f64(out, *v);
        }
    }
}

fn read_net(r: &mut Reader) -> Result<SirenModel> {
    let w0 = r.f64()?;
    let seed = r.u64()?;
    let dims = SirenDims {
        in_dim: r.u64()? as usize,
        hidden: r.u64()? as usize,
        hidden_layers: r.u64()? as usize,
        out_dim: r.u64()? as usize,
    };
    if !(w0 > 0.0) || dims.in_dim == 0 || dims.hidden == 0 || dims.out_dim == 0 {
        return Err(Error::Format("invalid network header in checkpoint".into()));
    }
    if dims.in_dim as u64 > MAX_TENSOR || dims.hidden as u64 > MAX_TENSOR {
        return Err(Error::Format("network dimensions exceed checkpoint limit".into()));
    }
    let n_layers = r.u64()? as usize;
    let mut model = SirenModel::init(seed, dims, w0);
    if n_layers != model.n_layers() {
        return Err(Error::Format("layer count does not match dimensions".into()));
    }
    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = r.u64()?;
        let cols = r.u64()?;
        let count = rows.checked_mul(cols).ok_or_else(|| Error::Format("overflow".into()))?;
        let w = Array2::from_shape_vec((rows as usize, cols as usize), r.f64_vec(count)?)
            .map_err(|e| Error::Format(format!("weight shape: {e}")))?;
        let b = Array1::from_vec(r.f64_vec(rows)?);
        weights.push(w);
        biases.push(b);
    }
    model.set_layers(weights, biases).map_err(|_| Error::Format("layer shapes inconsistent".into()))?;
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, model.grid.h() as u64);
    put_u64(&mut out, model.grid.w() as u64);
    write_features(&mut out, &model.features);
    match &model.features_sens {
        Some(f) => {
            out.push(1);
            write_features(&mut out, f);
        }
        None => out.push(0),
    }
    write_net(&mut out, &model.image_net);
    write_net(&mut out, &model.sens_net);
    fs::write(path, out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut r = Reader::new(&bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    if r.u32()? != VERSION {
        return Err(Error::Format("unsupported checkpoint version".into()));
    }
    let h = r.u64()? as usize;
    let w = r.u64()? as usize;
    if h == 0 || w == 0 || (h as u64) * (w as u64) > MAX_TENSOR {
        return Err(Error::Format("invalid grid size in checkpoint".into()));
    }
    let features = read_features(&mut r)?;
    let features_sens = match r.u8()? {
        0 => None,
        1 => Some(read_features(&mut r)?),
        _ => return Err(Error::Format("bad feature flag".into())),
    };
    let image_net = read_net(&mut r)?;
    let sens_net = read_net(&mut r)?;
    Ok(TrainedModel {
        image_net,
        sens_net,
        features,
        features_sens,
        grid: CoordinateGrid::make(h, w),
    })
}
