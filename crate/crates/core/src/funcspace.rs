//! Grid functions on a box, Gaussian mollification and a Fourier-weighted
//! surrogate of the H^{−m} norm.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, VolumeGrid};

const MAGIC: &[u8; 4] = b"GRDF";
const VERSION: u32 = 1;
/// Kernel support in units of √ε.
const TRUNCATION: f64 = 6.0;

#[derive(Debug, Error)]
pub enum FuncSpaceError {
    #[error("every axis needs at least 4 cells, got {0:?}")]
    InvalidShape([usize; 3]),
    #[error("box must have positive finite extent")]
    InvalidBox,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mollifier width must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("malformed grid function file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Samples at the cell centres of a uniform box grid, row-major `(i·ny + j)·nz + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFile", into = "GridFile")]
pub struct GridFunction {
    lo: Point3,
    hi: Point3,
    shape: [usize; 3],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(rename = "box")]
    bounds: [Point3; 2],
    shape: [usize; 3],
    values: Vec<f64>,
}

impl TryFrom<GridFile> for GridFunction {
    type Error = FuncSpaceError;
    fn try_from(f: GridFile) -> Result<Self, FuncSpaceError> {
        GridFunction::new(f.bounds[0], f.bounds[1], f.shape, f.values)
    }
}

impl From<GridFunction> for GridFile {
    fn from(g: GridFunction) -> Self {
        GridFile { bounds: [g.lo, g.hi], shape: g.shape, values: g.values }
    }
}

impl GridFunction {
    pub fn new(lo: Point3, hi: Point3, shape: [usize; 3], values: Vec<f64>) -> Result<Self, FuncSpaceError> {
        if shape.iter().any(|&s| s < 4) {
            return Err(FuncSpaceError::InvalidShape(shape));
        }
        let ext = hi - lo;
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) || !ext.is_finite() || !lo.is_finite() {
            return Err(FuncSpaceError::InvalidBox);
        }
        let n = shape[0] * shape[1] * shape[2];
        if values.len() != n {
            return Err(FuncSpaceError::LengthMismatch { expected: n, got: values.len() });
        }
        Ok(Self { lo, hi, shape, values })
    }

    pub fn zeros(lo: Point3, hi: Point3, shape: [usize; 3]) -> Result<Self, FuncSpaceError> {
        Self::new(lo, hi, shape, vec![0.0; shape.iter().product()])
    }

    pub fn from_fn(lo: Point3, hi: Point3, shape: [usize; 3], f: impl Fn(Point3) -> f64) -> Result<Self, FuncSpaceError> {
        let mut g = Self::zeros(lo, hi, shape)?;
        for flat in 0..g.len() {
            g.values[flat] = f(g.center_flat(flat));
        }
        Ok(g)
    }

    /// Box function carrying `values` on the active cells of `grid` and zero elsewhere.
    pub fn from_grid(grid: &VolumeGrid, values: &[f64]) -> Result<Self, FuncSpaceError> {
        if values.len() != grid.len() {
            return Err(FuncSpaceError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        let (lo, hi) = grid.bounds();
        let mut g = Self::zeros(lo, hi, grid.shape())?;
        for (c, v) in values.iter().enumerate() {
            g.values[grid.flat_index(c)] = *v;
        }
        Ok(g)
    }

    /// Values at the active cells of `grid`, which must share this box and shape.
    pub fn gather(&self, grid: &VolumeGrid) -> Result<Vec<f64>, FuncSpaceError> {
        if grid.shape() != self.shape || grid.bounds() != (self.lo, self.hi) {
            return Err(FuncSpaceError::Format("grid function and volume grid differ".into()));
        }
        Ok((0..grid.len()).map(|c| self.values[grid.flat_index(c)]).collect())
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        (self.lo, self.hi)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> Point3 {
        let e = self.hi - self.lo;
        Point3::new(e.x / self.shape[0] as f64, e.y / self.shape[1] as f64, e.z / self.shape[2] as f64)
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h.x * h.y * h.z
    }

    pub fn box_volume(&self) -> f64 {
        let e = self.hi - self.lo;
        e.x * e.y * e.z
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3 {
        let h = self.spacing();
        self.lo + Point3::new((i as f64 + 0.5) * h.x, (j as f64 + 0.5) * h.y, (k as f64 + 0.5) * h.z)
    }

    pub fn center_flat(&self, flat: usize) -> Point3 {
        let k = flat % self.shape[2];
        let j = (flat / self.shape[2]) % self.shape[1];
        let i = flat / (self.shape[1] * self.shape[2]);
        self.center(i, j, k)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    fn same_layout(&self, o: &GridFunction) {
        assert!(self.shape == o.shape && self.lo == o.lo && self.hi == o.hi, "grid functions on different grids");
    }

    pub fn zip_with(&self, o: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        self.same_layout(o);
        let values = self.values.iter().zip(&o.values).map(|(a, b)| f(*a, *b)).collect();
        GridFunction { values, ..self.clone() }
    }

    pub fn sub(&self, o: &GridFunction) -> GridFunction {
        self.zip_with(o, |a, b| a - b)
    }

    pub fn add(&self, o: &GridFunction) -> GridFunction {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// ε measured in units of the largest squared spacing, converted to length².
    pub fn epsilon_from_grid_units(&self, units: f64) -> f64 {
        let h = self.spacing();
        units * h.x.max(h.y).max(h.z).powi(2)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 + 24 + 48 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for s in self.shape {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for v in self.lo.to_array().into_iter().chain(self.hi.to_array()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FuncSpaceError> {
        let bad = |m: &str| FuncSpaceError::Format(m.to_string());
        if bytes.len() < 80 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != VERSION {
            return Err(bad("unsupported version"));
        }
        let mut shape = [0usize; 3];
        for (a, s) in shape.iter_mut().enumerate() {
            *s = usize::try_from(u64_at(8 + 8 * a)).map_err(|_| bad("shape overflow"))?;
        }
        let lo = Point3::new(f64_at(32), f64_at(40), f64_at(48));
        let hi = Point3::new(f64_at(56), f64_at(64), f64_at(72));
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| bad("shape overflow"))?;
        if bytes.len() != 80 + 8 * n {
            return Err(bad("payload length does not match shape"));
        }
        let values = (0..n).map(|i| f64_at(80 + 8 * i)).collect();
        Self::new(lo, hi, shape, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FuncSpaceError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FuncSpaceError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_json_string(&self) -> Result<String, FuncSpaceError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, FuncSpaceError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// δ_ε(X) = (πε)^{−3/2} e^{−|X|²/ε}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    epsilon: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Self, FuncSpaceError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(FuncSpaceError::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn density(&self, x: Point3) -> f64 {
        (PI * self.epsilon).powf(-1.5) * (-x.norm_squared() / self.epsilon).exp()
    }

    pub fn fourier(&self, xi: Point3) -> f64 {
        mollifier_fourier(self.epsilon, xi)
    }

    /// ∫ δ_ε(X) e^{−iX·ξ} dX by composite Gauss–Legendre quadrature, one axis at a time.
    pub fn fourier_by_quadrature(&self, xi: Point3) -> f64 {
        let eps = self.epsilon;
        let half = (TRUNCATION + 2.0) * eps.sqrt();
        xi.to_array()
            .iter()
            .map(|&w| {
                let panels = 64 + (w.abs() * half).ceil() as usize * 4;
                let step = 2.0 * half / panels as f64;
                let (gx, gw) = gauss_legendre_8();
                let mut acc = 0.0;
                for p in 0..panels {
                    let mid = -half + (p as f64 + 0.5) * step;
                    for (x, wt) in gx.iter().zip(&gw) {
                        let t = mid + 0.5 * step * x;
                        acc += wt * 0.5 * step * (-t * t / eps).exp() * (w * t).cos();
                    }
                }
                acc / (PI * eps).sqrt()
            })
            .product()
    }
}

/// e^{−ε|ξ|²/4}, the Fourier transform of δ_ε.
pub fn mollifier_fourier(eps: f64, xi: Point3) -> f64 {
    (-eps * xi.norm_squared() / 4.0).exp()
}

fn kernel_1d(eps: f64, h: f64) -> Vec<f64> {
    let reach = (TRUNCATION * eps.sqrt() / h).floor() as isize;
    let mut w: Vec<f64> = (-reach..=reach).map(|k| (-((k as f64) * h).powi(2) / eps).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// δ_ε * f by separable discrete convolution; the kernel is truncated at 6√ε,
/// renormalised to unit mass, and f is extended by zero outside the box.
pub fn mollify(f: &GridFunction, eps: f64) -> Result<GridFunction, FuncSpaceError> {
    Mollifier::new(eps)?;
    let h = f.spacing().to_array();
    let shape = f.shape;
    let mut cur = f.values.clone();
    for axis in 0..3 {
        let w = kernel_1d(eps, h[axis]);
        let reach = (w.len() / 2) as isize;
        let n = shape[axis] as isize;
        let stride = [shape[1] * shape[2], shape[2], 1][axis];
        let src = cur.clone();
        cur.par_iter_mut().enumerate().for_each(|(flat, out)| {
            let pos = ((flat / stride) % shape[axis]) as isize;
            let base = flat as isize - pos * stride as isize;
            let mut acc = 0.0;
            for (t, wt) in w.iter().enumerate() {
                let q = pos + t as isize - reach;
                if q >= 0 && q < n {
                    acc += wt * src[(base + q * stride as isize) as usize];
                }
            }
            *out = acc;
        });
    }
    Ok(GridFunction { values: cur, ..f.clone() })
}

/// (Σ_ξ |f̂(ξ)|² (1+|ξ|²)^{−m₁} Δξ/(2π)³)^{1/2} over the discrete frequencies of the box,
/// with f̂ the cell-volume-scaled DFT. For m₁ = 0 this is the L² norm.
pub fn negative_norm(f: &GridFunction, m1: u32) -> f64 {
    let spec = spectrum(f);
    let freqs = frequencies(f);
    let [nx, ny, nz] = f.shape;
    let vol = f.cell_volume();
    let dxi = (2.0 * PI).powi(3) / f.box_volume();
    let mut acc = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let xi2 = freqs[0][i].powi(2) + freqs[1][j].powi(2) + freqs[2][k].powi(2);
                let fhat = spec[f.index(i, j, k)] * vol;
                acc += fhat.norm_sqr() * (1.0 + xi2).powi(-(m1 as i32));
            }
        }
    }
    (acc * dxi / (2.0 * PI).powi(3)).sqrt()
}

/// C with negative_norm(f, m) ≤ C·‖f‖∞ for every f on this grid and every m ≥ 0.
pub fn negative_norm_bound_constant(f: &GridFunction) -> f64 {
    f.box_volume().sqrt()
}

fn frequencies(f: &GridFunction) -> [Vec<f64>; 3] {
    let e = (f.hi - f.lo).to_array();
    [0, 1, 2].map(|a| {
        let n = f.shape[a];
        (0..n)
            .map(|k| {
                let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                2.0 * PI * kk / e[a]
            })
            .collect()
    })
}

fn spectrum(f: &GridFunction) -> Vec<Complex64> {
    let shape = f.shape;
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    for axis in 0..3 {
        let n = shape[axis];
        let fft = planner.plan_fft_forward(n);
        let stride = [shape[1] * shape[2], shape[2], 1][axis];
        let lines = data.len() / n;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for l in 0..lines {
            // Enumerate line starts: all flat indices whose coordinate along `axis` is zero.
            let outer = l / stride;
            let inner = l % stride;
            let base = outer * stride * n + inner;
            for (t, slot) in line.iter_mut().enumerate() {
                *slot = data[base + t * stride];
            }
            fft.process(&mut line);
            for (t, v) in line.iter().enumerate() {
                data[base + t * stride] = *v;
            }
        }
    }
    data
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    let w = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    (x, w)
}
