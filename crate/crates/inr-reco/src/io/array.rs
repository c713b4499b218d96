//! Portable complex-array files, interoperable with the cfl/hdr convention
//! of common MRI toolchains.
//!
//! A dataset is a pair of files sharing a base name: `<base>.hdr`, a text
//! header whose first non-comment line lists up to four dimensions in
//! decimal, and `<base>.cfl`, the raw samples as little-endian
//! single-precision (real, imag) pairs in column-major order over the
//! header dimensions. This engine writes dimensions as (W, H, coils, 1);
//! with the first dimension fastest, the raw order coincides with the
//! natural (coil, row, col) iteration of the in-memory arrays.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{ComplexImage, CoilSensitivitySet, KspaceVolume};
use crate::sampling::SamplingMask;

/// Element-count guard against absurd headers.
const MAX_ELEMENTS: u64 = 1 << 28;

fn hdr_path(base: &Path) -> PathBuf {
    base.with_extension("hdr")
}

fn cfl_path(base: &Path) -> PathBuf {
    base.with_extension("cfl")
}

/// Parse a header: comment lines start with '#'; the first remaining line
/// holds 1..=4 decimal dimensions. Missing trailing dimensions default to 1.
pub fn parse_header(text: &str) -> Result<[usize; 4]> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::Format("header has no dimension line".into()))?;
    let mut dims = [1usize; 4];
    let mut count = 0usize;
    for tok in line.split_whitespace() {
        if count == 4 {
            return Err(Error::Format("header lists more than 4 dimensions".into()));
        }
        let d: u64 = tok
            .parse()
            .map_err(|_| Error::Format(format!("bad dimension token {tok:?}")))?;
        if d == 0 {
            return Err(Error::Format("zero dimension in header".into()));
        }
        dims[count] = usize::try_from(d).map_err(|_| Error::Format("dimension overflow".into()))?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Format("header has no dimensions".into()));
    }
    let product = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .filter(|&p| p <= MAX_ELEMENTS)
        .ok_or_else(|| Error::Format("header dimensions too large".into()))?;
    let _ = product;
    Ok(dims)
}

/// Decode the raw payload for the given dimensions. The byte count must
/// match the header exactly: 8 bytes per element (two little-endian f32).
pub fn decode_raw(dims: &[usize; 4], bytes: &[u8]) -> Result<Vec<Complex64>> {
    let count = dims.iter().product::<usize>();
    let expected = count
        .checked_mul(8)
        .ok_or_else(|| Error::Format("element count overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "raw file holds {} bytes, header implies {}",
            bytes.len(),
            expected
        )));
    }
    let mut out = Vec::with_capacity(count);
    for pair in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]) as f64;
        let im = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]) as f64;
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

fn encode_raw(data: &[Complex64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for z in data {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    bytes
}

/// Write a header/raw pair for `dims` = (W, H, coils, 1)-style layouts,
/// taking the elements in column-major (first dimension fastest) order.
pub fn write_complex_array(base: &Path, dims: [usize; 4], data: &[Complex64]) -> Result<()> {
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::InvalidInput(format!(
            "dims {:?} do not cover {} elements",
            dims,
            data.len()
        )));
    }
    let header = format!("# Dimensions\n{} {} {} {}\n", dims[0], dims[1], dims[2], dims[3]);
    fs::write(hdr_path(base), header)?;
    fs::write(cfl_path(base), encode_raw(data))?;
    Ok(())
}

/// Read a header/raw pair back; returns the dimensions and the elements in
/// file order.
pub fn read_complex_array(base: &Path) -> Result<([usize; 4], Vec<Complex64>)> {
    let header = fs::read_to_string(hdr_path(base))
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", hdr_path(base).display())))?;
    let dims = parse_header(&header)?;
    let bytes = fs::read(cfl_path(base))
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", cfl_path(base).display())))?;
    let data = decode_raw(&dims, &bytes)?;
    Ok((dims, data))
}

/// (coils, H, W) volume with dims recorded as (W, H, coils, 1).
pub fn write_volume(base: &Path, volume: &KspaceVolume) -> Result<()> {
    let (c, h, w) = volume.data().dim();
    let flat: Vec<Complex64> = volume.data().iter().copied().collect();
    write_complex_array(base, [w, h, c, 1], &flat)
}

pub fn read_volume(base: &Path) -> Result<KspaceVolume> {
    let (dims, data) = read_complex_array(base)?;
    let (w, h, c) = (dims[0], dims[1], dims[2]);
    if dims[3] != 1 {
        return Err(Error::Format("expected a single-frame volume".into()));
    }
    let arr = Array3::from_shape_vec((c, h, w), data)
        .map_err(|e| Error::Format(format!("volume shape error: {e}")))?;
    KspaceVolume::new(arr)
}

pub fn write_sensitivities(base: &Path, sens: &CoilSensitivitySet) -> Result<()> {
    let (c, h, w) = sens.maps().dim();
    let flat: Vec<Complex64> = sens.maps().iter().copied().collect();
    write_complex_array(base, [w, h, c, 1], &flat)
}

pub fn read_sensitivities(base: &Path) -> Result<CoilSensitivitySet> {
    let vol = read_volume(base)?;
    CoilSensitivitySet::new(vol.into_data())
}

/// Single H x W complex image with dims (W, H, 1, 1).
pub fn write_image(base: &Path, image: &ComplexImage) -> Result<()> {
    let (h, w) = image.data().dim();
    let flat: Vec<Complex64> = image.data().iter().copied().collect();
    write_complex_array(base, [w, h, 1, 1], &flat)
}

pub fn read_image(base: &Path) -> Result<ComplexImage> {
    let vol = read_volume(base)?;
    if vol.coils() != 1 {
        return Err(Error::Format(format!("expected one channel, found {}", vol.coils())));
    }
    let (_, h, w) = vol.data().dim();
    let data = vol.into_data().into_shape_with_order((h, w)).unwrap();
    ComplexImage::new(data)
}

/// Real image stored with zero imaginary parts.
pub fn write_real_image(base: &Path, image: &Array2<f64>) -> Result<()> {
    let complex = image.mapv(|v| Complex64::new(v, 0.0));
    write_image(base, &ComplexImage::new(complex)?)
}

pub fn read_real_image(base: &Path) -> Result<Array2<f64>> {
    Ok(read_image(base)?.magnitude())
}

/// Mask serialized as a 0/1 real array.
pub fn write_mask(base: &Path, mask: &SamplingMask) -> Result<()> {
    write_real_image(base, &mask.to_real())
}

pub fn read_mask(base: &Path) -> Result<SamplingMask> {
    let img = read_image(base)?;
    let mut values = Array2::zeros(img.data().dim());
    for (idx, z) in img.data().indexed_iter() {
        if z.im != 0.0 {
            return Err(Error::Format("mask file has nonzero imaginary parts".into()));
        }
        values[idx] = z.re;
    }
    SamplingMask::from_real(&values)
}
