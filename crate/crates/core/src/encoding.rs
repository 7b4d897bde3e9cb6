//! Numerics of the point-map input branch: per-coordinate sinusoidal encoding, 14x14
//! patch projection and fusion with RGB patch features.
//!
//! Encoded maps and patch grids are stored channel-last (`[row][col][channel]`) as `f32`;
//! projections accumulate in `f64`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::formats::{PointMap, COORD_LIMIT};

/// Sine/cosine pairs per coordinate.
pub const FREQUENCIES: usize = 32;
/// Channels per coordinate.
pub const COORD_CHANNELS: usize = 2 * FREQUENCIES;
/// Three encoded coordinates plus validity.
pub const CHANNELS: usize = 3 * COORD_CHANNELS + 1;
pub const PATCH: usize = 14;
/// Longest period, meters. Covers the whole coordinate range without wrapping.
pub const MAX_PERIOD: f64 = 1000.0;
/// Shortest period, meters.
pub const MIN_PERIOD: f64 = 0.03;
/// Vision-encoder feature width, per branch.
pub const FEATURE_DIM: usize = 1152;
/// RGB and point-map features side by side.
pub const FUSED_CHANNELS: usize = 2 * FEATURE_DIM;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("coordinate {value} outside [-{limit}, {limit}]", limit = COORD_LIMIT)]
    OutOfRange { value: f32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tensor file {path}: {detail}")]
    Tensor { path: String, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Periods of the sinusoid pairs, geometric from `MAX_PERIOD` down to `MIN_PERIOD`.
pub fn periods() -> [f64; FREQUENCIES] {
    let ratio = MIN_PERIOD / MAX_PERIOD;
    std::array::from_fn(|k| MAX_PERIOD * ratio.powf(k as f64 / (FREQUENCIES - 1) as f64))
}

fn angular_frequencies() -> [f64; FREQUENCIES] {
    periods().map(|p| std::f64::consts::TAU / p)
}

fn write_coordinate(c: f64, omegas: &[f64; FREQUENCIES], out: &mut [f32]) {
    for (k, w) in omegas.iter().enumerate() {
        let (s, co) = (w * c).sin_cos();
        out[2 * k] = s as f32;
        out[2 * k + 1] = co as f32;
    }
}

/// `(sin, cos)` pairs of one coordinate, lowest frequency first.
pub fn encode_coordinate(c: f32) -> Result<[f32; COORD_CHANNELS], EncodingError> {
    if !(c.is_finite() && c.abs() <= COORD_LIMIT) {
        return Err(EncodingError::OutOfRange { value: c });
    }
    let mut out = [0.0; COORD_CHANNELS];
    write_coordinate(c as f64, &angular_frequencies(), &mut out);
    Ok(out)
}

/// Channels of an invalid pixel: coordinates read as zero, validity zero.
pub fn invalid_pixel() -> [f32; CHANNELS] {
    let mut out = [0.0; CHANNELS];
    for k in 0..3 * FREQUENCIES {
        out[2 * k + 1] = 1.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPointMap {
    pub width: usize,
    pub height: usize,
    /// `height * width * CHANNELS` values.
    pub data: Vec<f32>,
}

impl EncodedPointMap {
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let i = (v * self.width + u) * CHANNELS;
        &self.data[i..i + CHANNELS]
    }

    /// Pads right and bottom to multiples of `patch` with invalid pixels.
    pub fn padded(&self, patch: usize) -> EncodedPointMap {
        let w = self.width.div_ceil(patch) * patch;
        let h = self.height.div_ceil(patch) * patch;
        if (w, h) == (self.width, self.height) {
            return self.clone();
        }
        let fill = invalid_pixel();
        let mut data = Vec::with_capacity(w * h * CHANNELS);
        for v in 0..h {
            for u in 0..w {
                if u < self.width && v < self.height {
                    data.extend_from_slice(self.pixel(u, v));
                } else {
                    data.extend_from_slice(&fill);
                }
            }
        }
        EncodedPointMap { width: w, height: h, data }
    }
}

/// Encodes every pixel: x, y, z sinusoid pairs followed by validity.
pub fn sinusoidal_encode(pm: &PointMap) -> EncodedPointMap {
    let (w, h) = (pm.width() as usize, pm.height() as usize);
    let omegas = angular_frequencies();
    let mut data = vec![0.0f32; w * h * CHANNELS];
    data.par_chunks_mut(CHANNELS)
        .zip(pm.points().par_iter().zip(pm.validity().par_iter()))
        .for_each(|(out, (p, &valid))| {
            let p = if valid { *p } else { [0.0; 3] };
            for (k, c) in p.iter().enumerate() {
                write_coordinate(*c as f64, &omegas, &mut out[k * COORD_CHANNELS..(k + 1) * COORD_CHANNELS]);
            }
            out[CHANNELS - 1] = if valid { 1.0 } else { 0.0 };
        });
    EncodedPointMap { width: w, height: h, data }
}

/// Dense linear map `y = W x + b` with `W` stored row-major (`out_dim x in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self, EncodingError> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(EncodingError::Shape(format!(
                "{out_dim}x{in_dim} map with {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Linear { in_dim, out_dim, weight, bias })
    }

    /// Input width of a patch projection over encoded point maps.
    pub fn patch_input_dim(patch: usize) -> usize {
        patch * patch * CHANNELS
    }

    fn apply_into(&self, x: &[f32], out: &mut [f32]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias)) {
            let acc: f64 = row.iter().zip(x).map(|(w, v)| *w as f64 * *v as f64).sum();
            *o = (acc + *b as f64) as f32;
        }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        assert_eq!(x.len(), self.in_dim, "input width");
        let mut out = vec![0.0; self.out_dim];
        self.apply_into(x, &mut out);
        out
    }
}

/// Features on a grid of patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    /// `rows * cols * dim` values.
    pub data: Vec<f32>,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self, EncodingError> {
        if data.len() != rows * cols * dim {
            return Err(EncodingError::Shape(format!("{rows}x{cols}x{dim} grid with {} values", data.len())));
        }
        Ok(PatchGrid { rows, cols, dim, data })
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.cols + col) * self.dim;
        &self.data[i..i + self.dim]
    }
}

/// Flattens each non-overlapping `patch x patch` window (row, column, channel order) and
/// maps it through `weights`. Sizes that are not multiples of `patch` are padded with
/// invalid pixels first.
pub fn patchify(epm: &EncodedPointMap, weights: &Linear, patch: usize) -> Result<PatchGrid, EncodingError> {
    if patch == 0 || weights.in_dim != Linear::patch_input_dim(patch) {
        return Err(EncodingError::Shape(format!(
            "patch {patch} needs input width {}, weights take {}",
            Linear::patch_input_dim(patch),
            weights.in_dim
        )));
    }
    let epm = epm.padded(patch);
    let (rows, cols) = (epm.height / patch, epm.width / patch);
    let row_len = patch * CHANNELS;
    let mut data = vec![0.0f32; rows * cols * weights.out_dim];
    data.par_chunks_mut(weights.out_dim).enumerate().for_each(|(i, out)| {
        let (r, c) = (i / cols, i % cols);
        let mut flat = Vec::with_capacity(weights.in_dim);
        for dy in 0..patch {
            let start = ((r * patch + dy) * epm.width + c * patch) * CHANNELS;
            flat.extend_from_slice(&epm.data[start..start + row_len]);
        }
        weights.apply_into(&flat, out);
    });
    Ok(PatchGrid { rows, cols, dim: weights.out_dim, data })
}

/// Channel-wise concatenation of two grids over the same patches.
pub fn concat(a: &PatchGrid, b: &PatchGrid) -> Result<PatchGrid, EncodingError> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(EncodingError::Shape(format!(
            "patch grids {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let dim = a.dim + b.dim;
    let mut data = Vec::with_capacity(a.rows * a.cols * dim);
    for (x, y) in a.data.chunks_exact(a.dim).zip(b.data.chunks_exact(b.dim)) {
        data.extend_from_slice(x);
        data.extend_from_slice(y);
    }
    Ok(PatchGrid { rows: a.rows, cols: a.cols, dim, data })
}

/// Linear projector over concatenated features, kept as its RGB and point-map blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub rgb: Linear,
    /// Bias-free; the RGB block carries the bias.
    pub point: Linear,
}

impl Projector {
    pub fn new(rgb: Linear, point: Linear) -> Result<Self, EncodingError> {
        if rgb.out_dim != point.out_dim || point.bias.iter().any(|b| *b != 0.0) {
            return Err(EncodingError::Shape(format!(
                "blocks map to {} and {} channels; the point block must be bias-free",
                rgb.out_dim, point.out_dim
            )));
        }
        Ok(Projector { rgb, point })
    }

    /// Extends an RGB-only projector with a zeroed point-map block.
    pub fn zero_point_block(rgb: Linear, point_dim: usize) -> Self {
        let point = Linear::zeros(point_dim, rgb.out_dim);
        Projector { rgb, point }
    }
}

/// `W_r rgb + W_p pm` per patch.
pub fn fuse(rgb: &PatchGrid, pm: &PatchGrid, proj: &Projector) -> Result<PatchGrid, EncodingError> {
    if (rgb.rows, rgb.cols) != (pm.rows, pm.cols) || rgb.dim != proj.rgb.in_dim || pm.dim != proj.point.in_dim {
        return Err(EncodingError::Shape(format!(
            "rgb {}x{}x{} and point {}x{}x{} against blocks {} and {}",
            rgb.rows, rgb.cols, rgb.dim, pm.rows, pm.cols, pm.dim, proj.rgb.in_dim, proj.point.in_dim
        )));
    }
    let out_dim = proj.rgb.out_dim;
    let mut data = vec![0.0f32; rgb.rows * rgb.cols * out_dim];
    data.par_chunks_mut(out_dim).enumerate().for_each(|(i, out)| {
        let x = &rgb.data[i * rgb.dim..(i + 1) * rgb.dim];
        let p = &pm.data[i * pm.dim..(i + 1) * pm.dim];
        let wr = proj.rgb.weight.chunks_exact(proj.rgb.in_dim);
        let wp = proj.point.weight.chunks_exact(proj.point.in_dim);
        for (o, ((r, q), b)) in out.iter_mut().zip(wr.zip(wp).zip(&proj.rgb.bias)) {
            let a: f64 = r.iter().zip(x).map(|(w, v)| *w as f64 * *v as f64).sum();
            let c: f64 = q.iter().zip(p).map(|(w, v)| *w as f64 * *v as f64).sum();
            *o = (a + c + *b as f64) as f32;
        }
    });
    Ok(PatchGrid { rows: rgb.rows, cols: rgb.cols, dim: out_dim, data })
}

const TENSOR_MAGIC: &[u8; 4] = b"TNSR";

/// Writes a tensor: `TNSR`, rank (u32 LE), each dimension (u64 LE), then the values
/// as row-major f32 LE.
pub fn write_tensor(path: impl AsRef<Path>, dims: &[usize], data: &[f32]) -> Result<(), EncodingError> {
    let path = path.as_ref();
    let io = |source| EncodingError::Io { path: path.display().to_string(), source };
    if dims.iter().product::<usize>() != data.len() {
        return Err(EncodingError::Shape(format!("dims {dims:?} for {} values", data.len())));
    }
    let mut buf = Vec::with_capacity(8 + 8 * dims.len() + 4 * data.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f32>), EncodingError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| EncodingError::Io { path: name.clone(), source })?;
    let bad = |detail: String| EncodingError::Tensor { path: name.clone(), detail };
    if bytes.len() < 8 || &bytes[..4] != TENSOR_MAGIC {
        return Err(bad("missing TNSR header".into()));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let data_start = 8 + 8 * rank;
    if bytes.len() < data_start {
        return Err(bad(format!("truncated header for rank {rank}")));
    }
    let dims: Vec<usize> = bytes[8..data_start]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n = dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d)).ok_or_else(|| bad("dims overflow".into()))?;
    if bytes.len() - data_start != 4 * n {
        return Err(bad(format!("dims {dims:?} need {} data bytes, found {}", 4 * n, bytes.len() - data_start)));
    }
    let data = bytes[data_start..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dims, data))
}
