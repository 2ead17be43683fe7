//! Uniform midpoint grids in one and two dimensions, wavefunctions, dense
//! kernel matrices, the centred ħ-Fourier transform and Gaussian fitting.
//!
//! Nodes are `x_k = −L + (k+½)Δx` with `Δx = 2L/N`. Frequencies use the same
//! midpoint layout `ξ_j = (j − (N−1)/2)Δξ` with `Δξ = πħ/L`, so the dual grid is
//! again a [`GridSpec`] and `F²` is the exact sample reversal.

use crate::gauss::Gauss1;
use crate::symplectic_core::{PhasePoint, WidthParameter};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    pub half_width: f64,
    pub points: usize,
    pub hbar: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, points: usize, hbar: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{1, 2}}")));
        }
        if points < 16 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N = {points} must be a power of two ≥ 16")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("L = {half_width} must be positive")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidGrid(format!("ħ = {hbar} must be positive")));
        }
        Ok(Self {
            n,
            half_width,
            points,
            hbar,
        })
    }

    pub fn one_d(points: usize, half_width: f64, hbar: f64) -> Result<Self> {
        Self::new(1, half_width, points, hbar)
    }

    /// `N = 2048, L = 20, ħ = 0.5`.
    pub fn default_1d() -> Self {
        Self::new(1, 20.0, 2048, 0.5).unwrap()
    }

    /// `N = 64, L = 8, ħ = 1` per axis.
    pub fn default_2d() -> Self {
        Self::new(2, 8.0, 64, 1.0).unwrap()
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn dxi(&self) -> f64 {
        PI * self.hbar / self.half_width
    }

    /// Quadrature weight `Δx^n`.
    pub fn cell(&self) -> f64 {
        self.dx().powi(self.n as i32)
    }

    pub fn node(&self, k: usize) -> f64 {
        -self.half_width + (k as f64 + 0.5) * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.node(k)).collect()
    }

    pub fn freq(&self, j: usize) -> f64 {
        (j as f64 - (self.points as f64 - 1.0) / 2.0) * self.dxi()
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.freq(j)).collect()
    }

    /// Total sample count `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid whose nodes are this grid's frequencies.
    pub fn dual(&self) -> Self {
        Self {
            half_width: self.points as f64 * PI * self.hbar / (2.0 * self.half_width),
            ..*self
        }
    }

    /// Coordinates of flat index `idx` (row-major, axis 0 slowest).
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        match self.n {
            1 => vec![self.node(idx)],
            _ => vec![self.node(idx / self.points), self.node(idx % self.points)],
        }
    }

    fn same_as(&self, other: &Self) -> bool {
        self.n == other.n
            && self.points == other.points
            && (self.half_width - other.half_width).abs() <= 1e-12 * self.half_width
            && (self.hbar - other.hbar).abs() <= 1e-12 * self.hbar
    }

    pub fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Flat indices of nodes with every coordinate inside `|x| ≤ L − margin`.
    pub fn interior(&self, margin: f64) -> Vec<usize> {
        let lim = self.half_width - margin;
        (0..self.len())
            .filter(|&i| self.coords(i).iter().all(|x| x.abs() <= lim))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    pub grid: GridSpec,
    pub samples: Array1<C64>,
}

impl WaveFunction {
    pub fn new(grid: GridSpec, samples: Array1<C64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            samples: Array1::zeros(grid.len()),
        }
    }

    /// Samples `f(x)` at every node; `x` has `n` coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> C64 + Sync) -> Self {
        let v: Vec<C64> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.coords(i)))
            .collect();
        Self {
            grid,
            samples: Array1::from(v),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell()).sqrt()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.mapv(|z| z * c),
        }
    }

    pub fn pointwise(&self, f: impl Fn(&[f64]) -> C64) -> Self {
        let mut out = self.clone();
        for (i, z) in out.samples.iter_mut().enumerate() {
            *z *= f(&self.grid.coords(i));
        }
        out
    }

    /// `‖self − other‖ / ‖other‖`.
    pub fn rel_distance(&self, other: &Self) -> f64 {
        let d: f64 = self
            .samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let n: f64 = other.samples.iter().map(|z| z.norm_sqr()).sum();
        (d / n).sqrt()
    }

    /// Largest absolute sample difference.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(other.samples.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).norm()))
    }

    /// CSV with header `x,re,im` (or `x,y,re,im`), 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        if self.grid.n == 1 {
            writeln!(w, "x,re,im")?;
        } else {
            writeln!(w, "x,y,re,im")?;
        }
        for (i, z) in self.samples.iter().enumerate() {
            for x in self.grid.coords(i) {
                write!(w, "{x:.16e},")?;
            }
            writeln!(w, "{:.16e},{:.16e}", z.re, z.im)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV format of [`Self::write_csv`]; `ħ` is not stored in the file.
    pub fn read_csv(path: impl AsRef<Path>, hbar: f64) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty file".into()))??;
        let n = match header.trim() {
            "x,re,im" => 1,
            "x,y,re,im" => 2,
            h => return Err(Error::Format(format!("unexpected header {h:?}"))),
        };
        let mut xs = Vec::new();
        let mut vals = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(e.to_string()))?;
            if f.len() != n + 2 {
                return Err(Error::Format(format!("row has {} fields", f.len())));
            }
            xs.push(f[n - 1]);
            vals.push(C64::new(f[n], f[n + 1]));
        }
        let total = vals.len();
        let points = if n == 1 { total } else { (total as f64).sqrt().round() as usize };
        if points < 2 || points.pow(n as u32) != total {
            return Err(Error::Format("sample count does not form a grid".into()));
        }
        let dx = xs[1] - xs[0];
        let grid = GridSpec::new(n, dx * points as f64 / 2.0, points, hbar)?;
        Self::new(grid, Array1::from(vals))
    }
}

pub fn inner_product(bra: &WaveFunction, ket: &WaveFunction) -> Result<C64> {
    bra.grid.check_same(&ket.grid)?;
    let mut acc = C64::new(0.0, 0.0);
    for (a, b) in bra.samples.iter().zip(ket.samples.iter()) {
        acc += a.conj() * b;
    }
    Ok(acc * bra.grid.cell())
}

/// `Iψ(x) = ψ(−x)`: an exact index reversal on the midpoint grid.
pub fn parity_apply(psi: &WaveFunction) -> WaveFunction {
    let mut s = psi.samples.to_vec();
    s.reverse();
    WaveFunction {
        grid: psi.grid,
        samples: Array1::from(s),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Planned length-`N` FFT evaluating `Σ_k g_k e^{s·2πi(k−c_in)(j−c_out)/N}`.
pub struct CenteredDft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CenteredDft {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n,
            fwd: p.plan_fft_forward(n),
            inv: p.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In place; `sign = −1` is the forward exponent.
    pub fn apply(&self, buf: &mut [C64], c_in: f64, c_out: f64, sign: f64) {
        let n = self.n as f64;
        let w = 2.0 * PI / n;
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= C64::from_polar(1.0, -sign * w * k as f64 * c_out);
        }
        if sign < 0.0 {
            self.fwd.process(buf);
        } else {
            self.inv.process(buf);
        }
        for (j, v) in buf.iter_mut().enumerate() {
            *v *= C64::from_polar(1.0, sign * w * c_in * (c_out - j as f64));
        }
    }

    /// The unitary ħ-transform of one axis of samples on a midpoint grid.
    pub fn transform(&self, buf: &mut [C64], grid: &GridSpec, dir: Direction) {
        let c = (self.n as f64 - 1.0) / 2.0;
        let sign = if dir == Direction::Forward { -1.0 } else { 1.0 };
        self.apply(buf, c, c, sign);
        let s = grid.dx() / (2.0 * PI * grid.hbar).sqrt();
        for v in buf.iter_mut() {
            *v *= s;
        }
    }
}

/// Unitary ħ-Fourier transform with kernel `e^{∓ix·ξ/ħ}/(2πħ)^{n/2}`. The
/// result lives on [`GridSpec::dual`].
pub fn fourier_transform(psi: &WaveFunction, dir: Direction) -> WaveFunction {
    let g = psi.grid;
    let dft = CenteredDft::new(g.points);
    let mut s = psi.samples.to_vec();
    let n = g.points;
    if g.n == 1 {
        dft.transform(&mut s, &g, dir);
    } else {
        s.par_chunks_mut(n).for_each(|row| dft.transform(row, &g, dir));
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = s[i * n + j];
            }
            dft.transform(&mut col, &g, dir);
            for i in 0..n {
                s[i * n + j] = col[i];
            }
        }
    }
    WaveFunction {
        grid: g.dual(),
        samples: Array1::from(s),
    }
}

/// Applies `m(ξ)` in the Fourier domain (1-D).
pub fn fourier_multiplier(psi: &WaveFunction, m: impl Fn(f64) -> C64) -> WaveFunction {
    let mut f = fourier_transform(psi, Direction::Forward);
    for (j, v) in f.samples.iter_mut().enumerate() {
        *v *= m(psi.grid.freq(j));
    }
    let mut out = fourier_transform(&f, Direction::Inverse);
    out.grid = psi.grid;
    out
}

/// `Xψ = xψ` (1-D).
pub fn position_apply(psi: &WaveFunction) -> WaveFunction {
    psi.pointwise(|x| C64::from(x[0]))
}

/// `Pψ = −iħψ′`, spectrally (1-D).
pub fn momentum_apply(psi: &WaveFunction) -> WaveFunction {
    fourier_multiplier(psi, C64::from)
}

/// Dense kernel values `K(x_i, x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub grid: GridSpec,
    pub entries: Array2<C64>,
}

impl OperatorMatrix {
    pub fn new(grid: GridSpec, entries: Array2<C64>) -> Result<Self> {
        let d = grid.len();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::GridMismatch);
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite kernel entry".into()));
        }
        Ok(Self { grid, entries })
    }

    /// Kernel `Δx^{-n}` on the diagonal.
    pub fn identity(grid: GridSpec) -> Self {
        let mut e = Array2::zeros((grid.len(), grid.len()));
        let v = C64::from(1.0 / grid.cell());
        e.diag_mut().fill(v);
        Self { grid, entries: e }
    }

    /// Multiplication by `f`.
    pub fn multiplication(grid: GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let mut e = Array2::zeros((grid.len(), grid.len()));
        for i in 0..grid.len() {
            e[(i, i)] = f(&grid.coords(i)) / grid.cell();
        }
        Self { grid, entries: e }
    }

    /// Evaluates `K(x_i, x_j)` row by row in parallel.
    pub fn from_kernel(grid: GridSpec, k: impl Fn(&[f64], &[f64]) -> C64 + Sync) -> Self {
        let d = grid.len();
        let coords: Vec<Vec<f64>> = (0..d).map(|i| grid.coords(i)).collect();
        let mut e = Array2::zeros((d, d));
        e.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                for j in 0..d {
                    row[j] = k(&coords[i], &coords[j]);
                }
            });
        Self { grid, entries: e }
    }

    /// Kernel `e^{−iξ_i x_j/ħ}/√(2πħ)` of the forward transform (1-D), output
    /// indexed by frequency.
    pub fn fourier_kernel(grid: GridSpec) -> Self {
        let h = grid.hbar;
        let s = 1.0 / (2.0 * PI * h).sqrt();
        let mut e = Array2::zeros((grid.points, grid.points));
        for i in 0..grid.points {
            for j in 0..grid.points {
                e[(i, j)] = C64::from_polar(s, -grid.freq(i) * grid.node(j) / h);
            }
        }
        Self { grid, entries: e }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid,
            entries: self.entries.t().mapv(|z| z.conj()),
        }
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum() * self.grid.cell()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            grid: self.grid,
            entries: &self.entries * c,
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
    }

    /// Largest `|self − other|` over index pairs in `idx × idx`, relative to the
    /// largest `|other|` there.
    pub fn rel_distance_on(&self, other: &Self, idx: &[usize]) -> f64 {
        let mut d = 0.0_f64;
        let mut m = 0.0_f64;
        for &i in idx {
            for &j in idx {
                d = d.max((self.entries[(i, j)] - other.entries[(i, j)]).norm());
                m = m.max(other.entries[(i, j)].norm());
            }
        }
        d / m
    }

    /// `‖self − other‖_F / ‖other‖_F` restricted to `idx × idx`.
    pub fn rel_frobenius_on(&self, other: &Self, idx: &[usize]) -> f64 {
        let mut d = 0.0_f64;
        let mut m = 0.0_f64;
        for &i in idx {
            for &j in idx {
                d += (self.entries[(i, j)] - other.entries[(i, j)]).norm_sqr();
                m += other.entries[(i, j)].norm_sqr();
            }
        }
        (d / m).sqrt()
    }

    /// MKOP binary: magic, u32 n, u32 N, f64 L, f64 ħ, row-major (re, im) pairs,
    /// little-endian.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"MKOP")?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points as u32).to_le_bytes())?;
        w.write_all(&self.grid.half_width.to_le_bytes())?;
        w.write_all(&self.grid.hbar.to_le_bytes())?;
        for z in self.entries.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"MKOP" {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let points = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let l = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let hbar = f64::from_le_bytes(b8);
        let grid = GridSpec::new(n, l, points, hbar)?;
        let d = grid.len();
        let mut data = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            data.push(C64::new(re, f64::from_le_bytes(b8)));
        }
        let entries =
            Array2::from_shape_vec((d, d), data).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(grid, entries)
    }
}

/// `(Mψ)(x_i) = Σ_j K(x_i, x_j) ψ(x_j) Δx^n`.
pub fn operator_apply(m: &OperatorMatrix, psi: &WaveFunction) -> Result<WaveFunction> {
    m.grid.check_same(&psi.grid)?;
    Ok(WaveFunction {
        grid: psi.grid,
        samples: m.entries.dot(&psi.samples) * C64::from(m.grid.cell()),
    })
}

/// Kernel of the composition `a ∘ b`.
pub fn operator_compose(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.grid.check_same(&b.grid)?;
    Ok(OperatorMatrix {
        grid: a.grid,
        entries: a.entries.dot(&b.entries) * C64::from(a.grid.cell()),
    })
}

/// Result of [`gaussian_fit`]: `ψ ≈ λ ψ^β_z`.
#[derive(Clone, Debug)]
pub struct GaussianFit {
    pub beta: WidthParameter,
    pub z: PhasePoint,
    pub lambda: C64,
    pub residual: f64,
}

impl GaussianFit {
    pub fn beta_scalar(&self) -> C64 {
        self.beta.scalar_value()
    }
}

/// Fits `λψ^β_z` to `psi`: weighted log-quadratic regression on the support,
/// then Gauss–Newton on the full grid.
pub fn gaussian_fit(psi: &WaveFunction) -> Result<GaussianFit> {
    let g = psi.grid;
    let nn = psi.samples.len();
    let amax = psi.samples.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if !(amax > 0.0) {
        return Err(Error::InsufficientSupport(0));
    }
    let thresh = 1e-6 * amax;
    let phase = unwrap_phase(psi, thresh);
    let support: Vec<usize> = (0..nn).filter(|&i| phase[i].is_some()).collect();
    if support.len() < 32 {
        return Err(Error::InsufficientSupport(support.len()));
    }
    // Monomials in scaled coordinates u = x / L.
    let l = g.half_width;
    let mono = |c: &[f64]| -> Vec<f64> {
        let u: Vec<f64> = c.iter().map(|x| x / l).collect();
        if g.n == 1 {
            vec![1.0, u[0], u[0] * u[0]]
        } else {
            vec![1.0, u[0], u[1], u[0] * u[0], u[0] * u[1], u[1] * u[1]]
        }
    };
    let m = if g.n == 1 { 3 } else { 6 };
    let mut a = DMatrix::<f64>::zeros(support.len(), m);
    let mut rhs = DMatrix::<f64>::zeros(support.len(), 2);
    for (r, &i) in support.iter().enumerate() {
        let w = psi.samples[i].norm() / amax;
        let row = mono(&g.coords(i));
        for k in 0..m {
            a[(r, k)] = w * row[k];
        }
        rhs[(r, 0)] = w * psi.samples[i].norm().ln();
        rhs[(r, 1)] = w * phase[i].unwrap();
    }
    let sol = a
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    let mut coef: Vec<C64> = (0..m).map(|k| C64::new(sol[(k, 0)], sol[(k, 1)])).collect();

    let model = |coef: &[C64]| -> Vec<C64> {
        (0..nn)
            .map(|i| {
                let row = mono(&g.coords(i));
                row.iter().zip(coef).map(|(r, c)| c * r).sum::<C64>().exp()
            })
            .collect()
    };
    let resid = |mv: &[C64]| -> f64 {
        let d: f64 = mv.iter().zip(psi.samples.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let n: f64 = psi.samples.iter().map(|z| z.norm_sqr()).sum();
        (d / n).sqrt()
    };
    let mut mv = model(&coef);
    let mut res = resid(&mv);
    for _ in 0..4 {
        if !res.is_finite() {
            break;
        }
        let mut jac = DMatrix::<C64>::zeros(nn, m);
        let mut r = DVector::<C64>::zeros(nn);
        for i in 0..nn {
            let row = mono(&g.coords(i));
            for k in 0..m {
                jac[(i, k)] = mv[i] * row[k];
            }
            r[i] = psi.samples[i] - mv[i];
        }
        let jh = jac.adjoint();
        let Some(delta) = (&jh * &jac).lu().solve(&(&jh * r)) else {
            break;
        };
        let trial: Vec<C64> = coef.iter().zip(delta.iter()).map(|(c, d)| c + d).collect();
        let tv = model(&trial);
        let tr = resid(&tv);
        if tr.is_finite() && tr < res {
            coef = trial;
            mv = tv;
            res = tr;
        } else {
            break;
        }
    }
    if !res.is_finite() {
        return Err(Error::FitFailed("non-finite residual".into()));
    }
    labels_from_coefficients(&g, &coef, res)
}

/// Converts `exp(c · monomials(x/L))` to `λψ^β_z`.
fn labels_from_coefficients(g: &GridSpec, coef: &[C64], residual: f64) -> Result<GaussianFit> {
    let l = g.half_width;
    let h = g.hbar;
    if g.n == 1 {
        let gs = Gauss1::new(coef[2] / (l * l), coef[1] / l, coef[0]);
        let (beta, q, p, lambda) = gauss1_labels(&gs, h)?;
        return Ok(GaussianFit {
            beta: WidthParameter::raw(nalgebra::DMatrix::from_element(1, 1, beta)),
            z: PhasePoint::one(q, p),
            lambda,
            residual,
        });
    }
    // exponent = xᵀQx + v·x + c0
    let q = DMatrix::from_row_slice(
        2,
        2,
        &[
            coef[3] / (l * l),
            coef[4] / (2.0 * l * l),
            coef[4] / (2.0 * l * l),
            coef[5] / (l * l),
        ],
    );
    let v = DVector::from_vec(vec![coef[1] / l, coef[2] / l]);
    let re_q = q.map(|z| z.re);
    let re_q_inv = (re_q * 2.0)
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("singular quadratic part".into()))?;
    let qc = -(re_q_inv * v.map(|z| z.re));
    let qcc = qc.map(C64::from);
    let p = (&v + (&q * &qcc) * C64::from(2.0)).map(|z| z.im * h);
    let binv = &q * C64::new(0.0, 2.0 * h);
    let beta = binv
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("singular width".into()))?;
    let beta = (&beta + beta.transpose()) * C64::from(0.5);
    let z = PhasePoint::new(qc.iter().copied().collect(), p.iter().copied().collect())?;
    let bw = WidthParameter::raw(beta);
    let model0 = crate::coherent::log_coherent_constant_nd(&bw, &z, h)?;
    let lambda = (coef[0] - model0).exp();
    Ok(GaussianFit {
        beta: bw,
        z,
        lambda,
        residual,
    })
}

/// `(β, q, p, λ)` with `g = λψ^β_{(q,p)}` as functions of `x`.
pub fn gauss1_labels(gs: &Gauss1, hbar: f64) -> Result<(C64, f64, f64, C64)> {
    if !(gs.q2.re < 0.0) {
        return Err(Error::FitFailed(format!("quadratic coefficient {} not decaying", gs.q2)));
    }
    let beta = C64::new(0.0, -1.0) / (2.0 * hbar * gs.q2);
    let q = -gs.q1.re / (2.0 * gs.q2.re);
    let p = hbar * (gs.q1 + 2.0 * q * gs.q2).im;
    let reference = crate::coherent::gauss1_of(beta, q, p, hbar);
    let lambda = (gs.q0 - reference.q0).exp();
    Ok((beta, q, p, lambda))
}

/// Phase of every sample above `thresh`, unwrapped outward from the
/// largest sample along grid lines; `None` for unreached nodes.
fn unwrap_phase(psi: &WaveFunction, thresh: f64) -> Vec<Option<f64>> {
    let g = psi.grid;
    let n = g.points;
    let s = &psi.samples;
    let mut out = vec![None; s.len()];
    let imax = (0..s.len())
        .max_by(|&a, &b| s[a].norm().total_cmp(&s[b].norm()))
        .unwrap();
    let step = |prev: f64, z: C64| -> f64 {
        let mut d = z.arg() - prev;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        prev + d
    };
    let walk = |out: &mut Vec<Option<f64>>, idx: &dyn Fn(usize) -> usize, pos: usize| {
        let mut prev = out[idx(pos)].unwrap();
        for k in (pos + 1)..n {
            let i = idx(k);
            if s[i].norm() <= thresh {
                break;
            }
            prev = step(prev, s[i]);
            out[i] = Some(prev);
        }
        let mut prev = out[idx(pos)].unwrap();
        for k in (0..pos).rev() {
            let i = idx(k);
            if s[i].norm() <= thresh {
                break;
            }
            prev = step(prev, s[i]);
            out[i] = Some(prev);
        }
    };
    out[imax] = Some(s[imax].arg());
    if g.n == 1 {
        walk(&mut out, &|k| k, imax);
    } else {
        let (i0, j0) = (imax / n, imax % n);
        walk(&mut out, &|k| k * n + j0, i0);
        for i in 0..n {
            if out[i * n + j0].is_some() {
                walk(&mut out, &|k| i * n + k, j0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_symmetric() {
        let g = GridSpec::default_1d();
        for k in 0..g.points {
            assert!((g.node(k) + g.node(g.points - 1 - k)).abs() < 1e-12);
        }
        let d = g.dual();
        assert!((d.node(3) - g.freq(3)).abs() < 1e-12);
        assert!((d.dual().half_width - g.half_width).abs() < 1e-12);
    }

    #[test]
    fn fourier_of_gaussian() {
        let g = GridSpec::one_d(256, 10.0, 0.5).unwrap();
        let h = g.hbar;
        let psi = WaveFunction::from_fn(g, |x| C64::from((-x[0] * x[0] / (2.0 * h)).exp()));
        let f = fourier_transform(&psi, Direction::Forward);
        let expect = WaveFunction::from_fn(f.grid, |k| C64::from((-k[0] * k[0] / (2.0 * h)).exp()));
        assert!(f.max_distance(&expect) < 1e-12);
        let back = fourier_transform(&f, Direction::Inverse);
        assert!(back.max_distance(&psi) < 1e-12);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::one_d(16, 4.0, 1.0).unwrap();
        let psi = WaveFunction::from_fn(g, |x| C64::new(x[0], 1.0 / (1.0 + x[0] * x[0])));
        let p = dir.path().join("w.csv");
        psi.write_csv(&p).unwrap();
        let back = WaveFunction::read_csv(&p, 1.0).unwrap();
        assert_eq!(back.samples, psi.samples);
        assert!((back.grid.half_width - 4.0).abs() < 1e-12);
        let m = OperatorMatrix::from_kernel(g, |x, y| C64::new(x[0], y[0]));
        let p = dir.path().join("m.bin");
        m.write_binary(&p).unwrap();
        assert_eq!(OperatorMatrix::read_binary(&p).unwrap(), m);
    }
}
