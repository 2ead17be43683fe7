//! Integral kernels of `U(S)` for complex `S`, closed-form predictions for
//! propagated coherent states, and the convention auditor.
//!
//! One-dimensional kernel, `b ≠ 0`:
//! `U(x,y) = (2πħb)^{-1/2} exp(−i(dx² − 2xy + ay²)/(2bħ))`.
//! For `b = 0` the limit `Uf(x) = √d f(dx) e^{−icdx²/2ħ}` is used, and when the
//! `b`-kernel grows without bound the operator is evaluated through the
//! Fourier side ("a-chart"):
//! `Uf(x) = ∫ (2πiħa)^{-1/2} e^{i(2xξ − cx² + bξ²)/(2aħ)} f̂(ξ) dξ`.
//! Multipliers larger than a cap are dropped in the spectral charts; this is
//! what keeps unbounded operators such as `e^{tP²/2ħ}` usable on decaying
//! inputs.

use crate::coherent::{coherent_state, gauss1_of, CoherentLabel};
use crate::gauss::Gauss1;
use crate::hilbert_grid::{
    fourier_transform, gaussian_fit, inner_product, momentum_apply, position_apply, CenteredDft,
    Direction, GaussianFit, GridSpec, OperatorMatrix, WaveFunction,
};
use crate::report::AuditReport;
use crate::symplectic_core::{
    moebius, transport_with, CMat, ComplexSymplectic, PhasePoint, TransportMatrix,
    WidthParameter,
};
use crate::{Error, Result, C64};
use nalgebra::DVector;
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    #[serde(rename = "b-chart")]
    BChart,
    #[serde(rename = "a-chart")]
    AChart,
    #[serde(rename = "delta-limit")]
    DeltaLimit,
}

impl Chart {
    pub fn name(self) -> &'static str {
        match self {
            Chart::BChart => "b-chart",
            Chart::AChart => "a-chart",
            Chart::DeltaLimit => "delta-limit",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KernelOptions {
    /// Spectral multipliers with modulus above this are set to zero.
    pub cap: f64,
    /// Force a chart instead of the automatic choice.
    pub chart: Option<Chart>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            cap: 1e6,
            chart: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetaplecticKernel {
    pub s: ComplexSymplectic,
    pub grid: GridSpec,
    pub matrix: OperatorMatrix,
    pub chart: Chart,
    /// Number of spectral multipliers removed by the cap.
    pub capped: usize,
}

const B_ZERO: f64 = 1e-8;

/// Real part of the `b`-chart exponent as a quadratic form on `(x, y)`; the
/// kernel is bounded iff it is negative semidefinite.
fn b_chart_bounded(s: &ComplexSymplectic, hbar: f64) -> bool {
    if s.n() == 1 {
        let k = -I / (2.0 * s.b() * hbar);
        let q = nalgebra::Matrix2::new((k * s.d()).re, -k.re, -k.re, (k * s.a()).re);
        return q.symmetric_eigenvalues().max() <= 1e-12 * q.abs().max();
    }
    match b_form_nd(s, hbar) {
        Some(q) => {
            let re = q.map(|z| z.re);
            let scale = re.abs().max().max(f64::MIN_POSITIVE);
            re.symmetric_eigenvalues().max() <= 1e-12 * scale
        }
        None => false,
    }
}

/// `E` with exponent `½ wᵀ E w`, `w = (x, y)`, of the `n`-dimensional b-chart.
fn b_form_nd(s: &ComplexSymplectic, hbar: f64) -> Option<CMat> {
    let n = s.n();
    let binv = invertible(&s.block_b())?;
    let k = -I / hbar;
    let xx = s.block_d() * &binv * k;
    let xy = binv.transpose() * (-k);
    let yy = &binv * s.block_a() * k;
    let mut e = CMat::zeros(2 * n, 2 * n);
    e.view_mut((0, 0), (n, n)).copy_from(&xx);
    e.view_mut((0, n), (n, n)).copy_from(&xy);
    e.view_mut((n, 0), (n, n)).copy_from(&xy.transpose());
    e.view_mut((n, n), (n, n)).copy_from(&yy);
    Some(e)
}

fn invertible(m: &CMat) -> Option<CMat> {
    let scale = m.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if scale == 0.0 {
        return None;
    }
    let det = m.clone().determinant();
    if det.norm() <= B_ZERO * scale.powi(m.nrows() as i32) {
        return None;
    }
    m.clone().try_inverse()
}

/// What a sampled kernel is used for. A dense matrix must represent the kernel
/// as a function of both variables (phase step below π per node); a one-off
/// matrix-vector product only needs the quadrature in the integration
/// variable to be alias-free (phase step below 2π).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelUse {
    Matrix,
    Vector,
}

/// Nyquist and decay-width checks for a sampled quadratic exponent
/// `½ wᵀ E w`, `w = (x, y)`, over the box `|w_k| ≤ L`.
fn quadratic_resolved(e: &CMat, grid: &GridSpec, usage: KernelUse) -> std::result::Result<(), String> {
    let dx = grid.dx();
    let l = grid.half_width;
    let dim = e.nrows();
    for k in 0..dim {
        let output = k < dim / 2;
        let limit = match (output, usage) {
            (true, KernelUse::Vector) => continue,
            (true, KernelUse::Matrix) => PI,
            (false, _) => 2.0 * PI,
        };
        let grad: f64 = (0..dim).map(|j| e[(k, j)].im.abs()).sum::<f64>() * l;
        if grad * dx >= limit {
            return Err(format!(
                "phase gradient {grad:.3e} times Δx = {dx:.3e} exceeds {limit:.3}"
            ));
        }
    }
    let re = e.map(|z| z.re);
    let sym = (&re + re.transpose()) * 0.5;
    let lmin = sym.symmetric_eigenvalues().min();
    if lmin < 0.0 {
        let width = 1.0 / (-lmin).sqrt();
        if width < 1.2 * dx {
            return Err(format!("decay width {width:.3e} below 1.2 Δx = {:.3e}", 1.2 * dx));
        }
    }
    Ok(())
}

fn b_chart_resolved(s: &ComplexSymplectic, grid: &GridSpec, usage: KernelUse) -> std::result::Result<(), String> {
    let e = if s.n() == 1 {
        let k = -I / (s.b() * grid.hbar);
        CMat::from_row_slice(2, 2, &[k * s.d(), -k, -k, k * s.a()])
    } else {
        b_form_nd(s, grid.hbar).ok_or("B singular")?
    };
    quadratic_resolved(&e, grid, usage)
}

/// Chirp resolution for the spectral charts: the `x²` phase over the spatial
/// box (output variable) and the `ξ²` phase over the dual box (integration).
fn spectral_resolved(
    xchirp: C64,
    xichirp: C64,
    grid: &GridSpec,
    usage: KernelUse,
) -> std::result::Result<(), String> {
    let xi_max = grid.dual().half_width;
    let gx = 2.0 * xchirp.im.abs() * grid.half_width * grid.dx();
    let gk = 2.0 * xichirp.im.abs() * xi_max * grid.dxi();
    if (usage == KernelUse::Matrix && gx >= PI) || gk >= 2.0 * PI {
        return Err(format!("chirp phase steps {gx:.3e}, {gk:.3e} too large"));
    }
    Ok(())
}

fn a_chart_resolved(s: &ComplexSymplectic, grid: &GridSpec, usage: KernelUse) -> std::result::Result<(), String> {
    if s.n() != 1 {
        return Ok(());
    }
    let h = grid.hbar;
    let k = I / (2.0 * s.a() * h);
    spectral_resolved(-k * s.c(), k * s.b(), grid, usage)
}

fn delta_resolved(s: &ComplexSymplectic, grid: &GridSpec, usage: KernelUse) -> std::result::Result<(), String> {
    // e^{idxξ/ħ} is band-limited interpolation at dx; only the chirp can alias
    let chirp = -I * s.c() * s.d() / (2.0 * grid.hbar);
    spectral_resolved(chirp, C64::new(0.0, 0.0), grid, usage)
}

/// Automatic chart choice for a dense kernel of `S` on `grid`.
pub fn select_chart(s: &ComplexSymplectic, grid: &GridSpec) -> Result<Chart> {
    select_chart_for(s, grid, KernelUse::Matrix)
}

/// Chart choice: the delta limit when `b = 0`, otherwise the `b`-chart when its
/// kernel is bounded and resolved, otherwise the spectral `a`-chart.
pub fn select_chart_for(s: &ComplexSymplectic, grid: &GridSpec, usage: KernelUse) -> Result<Chart> {
    if s.n() != grid.n {
        return Err(Error::DimensionMismatch("kernel and grid dimensions".into()));
    }
    let h = grid.hbar;
    if s.n() == 1 {
        if s.b().norm() <= B_ZERO {
            return delta_resolved(s, grid, usage)
                .map(|_| Chart::DeltaLimit)
                .map_err(Error::Underresolved);
        }
        let b_ok = b_chart_resolved(s, grid, usage);
        if b_chart_bounded(s, h) && b_ok.is_ok() {
            return Ok(Chart::BChart);
        }
        if s.a().norm() > B_ZERO {
            if let Ok(()) = a_chart_resolved(s, grid, usage) {
                return Ok(Chart::AChart);
            }
        }
        return b_ok.map(|_| Chart::BChart).map_err(Error::Underresolved);
    }
    let has_b = invertible(&s.block_b()).is_some();
    let has_a = invertible(&s.block_a()).is_some();
    if has_b && b_chart_bounded(s, h) {
        return b_chart_resolved(s, grid, usage)
            .map(|_| Chart::BChart)
            .map_err(Error::Underresolved);
    }
    if has_a {
        return Ok(Chart::AChart);
    }
    if has_b {
        return b_chart_resolved(s, grid, usage)
            .map(|_| Chart::BChart)
            .map_err(Error::Underresolved);
    }
    Err(Error::SingularCharts)
}

/// Kernel in one spatial dimension on the `(x, y)` side.
fn b_kernel_1d(s: &ComplexSymplectic, h: f64) -> impl Fn(f64, f64) -> C64 + Sync {
    let (a, b, d) = (s.a(), s.b(), s.d());
    let pref = (2.0 * PI * h * b).sqrt().inv();
    let k = -I / (2.0 * b * h);
    move |x, y| pref * (k * (d * x * x - 2.0 * x * y + a * y * y)).exp()
}

/// `(x, ξ)` kernel acting on `f̂` for the spectral charts.
fn spectral_kernel_1d(s: &ComplexSymplectic, h: f64, chart: Chart) -> Box<dyn Fn(f64, f64) -> C64 + Sync> {
    let (a, b, c, d) = (s.a(), s.b(), s.c(), s.d());
    match chart {
        Chart::AChart => {
            let pref = (2.0 * PI * I * h * a).sqrt().inv();
            let k = I / (2.0 * a * h);
            Box::new(move |x, xi| pref * (k * (2.0 * x * xi - c * x * x + b * xi * xi)).exp())
        }
        _ => {
            let pref = d.sqrt() / (2.0 * PI * h).sqrt();
            Box::new(move |x, xi| {
                pref * (-I * c * d * x * x / (2.0 * h) + I * d * x * xi / h).exp()
            })
        }
    }
}

fn exact_delta(s: &ComplexSymplectic) -> Option<bool> {
    let d = s.d();
    if (d - 1.0).norm() <= 1e-14 {
        Some(false)
    } else if (d + 1.0).norm() <= 1e-14 {
        Some(true)
    } else {
        None
    }
}

fn capped(v: C64, cap: f64) -> (C64, bool) {
    if v.norm() > cap || !v.re.is_finite() || !v.im.is_finite() {
        (C64::new(0.0, 0.0), true)
    } else {
        (v, false)
    }
}

/// Builds the dense kernel matrix of `U(S)` on `grid`.
pub fn kernel_build(s: &ComplexSymplectic, grid: &GridSpec) -> Result<MetaplecticKernel> {
    kernel_build_with(s, grid, KernelOptions::default())
}

pub fn kernel_build_with(
    s: &ComplexSymplectic,
    grid: &GridSpec,
    opts: KernelOptions,
) -> Result<MetaplecticKernel> {
    if s.det_class() != 1 {
        return Err(Error::Unsupported("kernel requires det S = 1".into()));
    }
    let chart = match opts.chart {
        Some(c) => c,
        None => select_chart(s, grid)?,
    };
    let h = grid.hbar;
    let (entries, ncap) = if grid.n == 1 {
        match chart {
            Chart::BChart => {
                let k = b_kernel_1d(s, h);
                (OperatorMatrix::from_kernel(*grid, |x, y| k(x[0], y[0])).entries, 0)
            }
            Chart::DeltaLimit if exact_delta(s).is_some() => {
                let rev = exact_delta(s).unwrap();
                let npts = grid.points;
                let sd = s.d().sqrt();
                let mut e = Array2::zeros((npts, npts));
                for i in 0..npts {
                    let x = grid.node(i);
                    let j = if rev { npts - 1 - i } else { i };
                    e[(i, j)] = sd * (-I * s.c() * s.d() * x * x / (2.0 * h)).exp() / grid.dx();
                }
                (e, 0)
            }
            _ => {
                let k = spectral_kernel_1d(s, h, chart);
                spectral_matrix_1d(grid, &*k, opts.cap)
            }
        }
    } else {
        match chart {
            Chart::BChart => {
                let k = b_kernel_nd(s, h)?;
                (OperatorMatrix::from_kernel(*grid, |x, y| k(x, y)).entries, 0)
            }
            Chart::AChart => {
                let k = a_kernel_nd(s, h)?;
                spectral_matrix_2d(grid, &k, opts.cap)
            }
            Chart::DeltaLimit => return Err(Error::Unsupported("delta chart for n = 2".into())),
        }
    };
    Ok(MetaplecticKernel {
        s: s.clone(),
        grid: *grid,
        matrix: OperatorMatrix::new(*grid, entries)?,
        chart,
        capped: ncap,
    })
}

/// `M_ij = Δξ/√(2πħ) Σ_k K(x_i, ξ_k) e^{−iξ_k x_j/ħ}`, one FFT per row.
fn spectral_matrix_1d(
    grid: &GridSpec,
    k: &(dyn Fn(f64, f64) -> C64 + Sync),
    cap: f64,
) -> (Array2<C64>, usize) {
    let n = grid.points;
    let dft = CenteredDft::new(n);
    let c = (n as f64 - 1.0) / 2.0;
    let scale = grid.dxi() / (2.0 * PI * grid.hbar).sqrt();
    let mut e = Array2::zeros((n, n));
    let counts: Vec<usize> = e
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let x = grid.node(i);
            let mut cnt = 0;
            let mut buf: Vec<C64> = (0..n)
                .map(|j| {
                    let (v, hit) = capped(k(x, grid.freq(j)), cap);
                    cnt += hit as usize;
                    v
                })
                .collect();
            dft.apply(&mut buf, c, c, -1.0);
            for (r, v) in row.iter_mut().zip(buf) {
                *r = v * scale;
            }
            cnt
        })
        .collect();
    (e, counts.iter().sum())
}

fn spectral_matrix_2d(
    grid: &GridSpec,
    k: &(dyn Fn(&[f64], &[f64]) -> C64 + Sync),
    cap: f64,
) -> (Array2<C64>, usize) {
    let n = grid.points;
    let d = grid.len();
    let dual = grid.dual();
    let dft = CenteredDft::new(n);
    let c = (n as f64 - 1.0) / 2.0;
    let scale = grid.dxi().powi(2) / (2.0 * PI * grid.hbar);
    let mut e = Array2::zeros((d, d));
    let counts: Vec<usize> = e
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let x = grid.coords(i);
            let mut cnt = 0;
            let mut buf: Vec<C64> = (0..d)
                .map(|j| {
                    let (v, hit) = capped(k(&x, &dual.coords(j)), cap);
                    cnt += hit as usize;
                    v
                })
                .collect();
            dft_2d(&dft, &mut buf, n, c, -1.0);
            for (r, v) in row.iter_mut().zip(buf) {
                *r = v * scale;
            }
            cnt
        })
        .collect();
    (e, counts.iter().sum())
}

fn dft_2d(dft: &CenteredDft, buf: &mut [C64], n: usize, c: f64, sign: f64) {
    for row in buf.chunks_mut(n) {
        dft.apply(row, c, c, sign);
    }
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        dft.apply(&mut col, c, c, sign);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
}

/// `n`-dimensional b-chart:
/// `(2πħ)^{-n/2} det B^{-1/2} exp(−(i/2ħ)(xᵀDB⁻¹x − 2xᵀB^{-T}y + yᵀB⁻¹Ay))`.
fn b_kernel_nd(s: &ComplexSymplectic, h: f64) -> Result<impl Fn(&[f64], &[f64]) -> C64 + Sync> {
    let e = b_form_nd(s, h).ok_or(Error::SingularCharts)?;
    let n = s.n();
    let pref = (2.0 * PI * h).powf(-(n as f64) / 2.0) * s.block_b().determinant().sqrt().inv();
    Ok(move |x: &[f64], y: &[f64]| {
        let w: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..2 * n {
            for j in 0..2 * n {
                acc += e[(i, j)] * w[i] * w[j];
            }
        }
        pref * (0.5 * acc).exp()
    })
}

/// `n`-dimensional a-chart on `(x, ξ)`:
/// `(2πiħ)^{-n/2} det A^{-1/2} exp((i/2ħ)(2xᵀA^{-T}ξ − xᵀCA⁻¹x + ξᵀA⁻¹Bξ))`.
fn a_kernel_nd(s: &ComplexSymplectic, h: f64) -> Result<Box<dyn Fn(&[f64], &[f64]) -> C64 + Sync>> {
    let n = s.n();
    let ainv = invertible(&s.block_a()).ok_or(Error::SingularCharts)?;
    let k = I / (2.0 * h);
    let xx = -(s.block_c() * &ainv) * k;
    let xk = ainv.transpose() * (2.0 * k);
    let kk = &ainv * s.block_b() * k;
    let pref = (2.0 * PI * I * h).powf(-(n as f64) / 2.0) * s.block_a().determinant().sqrt().inv();
    Ok(Box::new(move |x: &[f64], xi: &[f64]| {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += xx[(i, j)] * x[i] * x[j] + xk[(i, j)] * x[i] * xi[j] + kk[(i, j)] * xi[i] * xi[j];
            }
        }
        pref * acc.exp()
    }))
}

/// `U(S)ψ` without storing the kernel matrix.
pub fn propagate(s: &ComplexSymplectic, psi: &WaveFunction) -> Result<WaveFunction> {
    propagate_with(s, psi, KernelOptions::default())
}

pub fn propagate_with(
    s: &ComplexSymplectic,
    psi: &WaveFunction,
    opts: KernelOptions,
) -> Result<WaveFunction> {
    let grid = psi.grid;
    if s.det_class() != 1 {
        return Err(Error::Unsupported("kernel requires det S = 1".into()));
    }
    let chart = match opts.chart {
        Some(c) => c,
        None => select_chart_for(s, &grid, KernelUse::Vector)?,
    };
    let h = grid.hbar;
    let d = grid.len();
    let coords: Vec<Vec<f64>> = (0..d).map(|i| grid.coords(i)).collect();
    let samples: Vec<C64> = if grid.n == 1 {
        match chart {
            Chart::BChart => {
                let k = b_kernel_1d(s, h);
                let dx = grid.dx();
                (0..d)
                    .into_par_iter()
                    .map(|i| {
                        let x = coords[i][0];
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..d {
                            acc += k(x, coords[j][0]) * psi.samples[j];
                        }
                        acc * dx
                    })
                    .collect()
            }
            Chart::DeltaLimit if exact_delta(s).is_some() => {
                let rev = exact_delta(s).unwrap();
                let sd = s.d().sqrt();
                (0..d)
                    .map(|i| {
                        let x = coords[i][0];
                        let j = if rev { d - 1 - i } else { i };
                        sd * (-I * s.c() * s.d() * x * x / (2.0 * h)).exp() * psi.samples[j]
                    })
                    .collect()
            }
            _ => {
                let k = spectral_kernel_1d(s, h, chart);
                let f = fourier_transform(psi, Direction::Forward);
                let dxi = grid.dxi();
                (0..d)
                    .into_par_iter()
                    .map(|i| {
                        let x = coords[i][0];
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..d {
                            let (kv, _) = capped(k(x, f.grid.node(j)), opts.cap);
                            acc += kv * f.samples[j];
                        }
                        acc * dxi
                    })
                    .collect()
            }
        }
    } else {
        match chart {
            Chart::BChart => {
                let k = b_kernel_nd(s, h)?;
                let cell = grid.cell();
                (0..d)
                    .into_par_iter()
                    .map(|i| {
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..d {
                            acc += k(&coords[i], &coords[j]) * psi.samples[j];
                        }
                        acc * cell
                    })
                    .collect()
            }
            Chart::AChart => {
                let k = a_kernel_nd(s, h)?;
                let f = fourier_transform(psi, Direction::Forward);
                let fc: Vec<Vec<f64>> = (0..d).map(|j| f.grid.coords(j)).collect();
                let cell = grid.dxi().powi(2);
                (0..d)
                    .into_par_iter()
                    .map(|i| {
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..d {
                            let (kv, _) = capped(k(&coords[i], &fc[j]), opts.cap);
                            acc += kv * f.samples[j];
                        }
                        acc * cell
                    })
                    .collect()
            }
            Chart::DeltaLimit => return Err(Error::Unsupported("delta chart for n = 2".into())),
        }
    };
    WaveFunction::new(grid, Array1::from(samples))
}

/// Applies a built kernel.
pub fn apply_kernel(k: &MetaplecticKernel, psi: &WaveFunction) -> Result<WaveFunction> {
    crate::hilbert_grid::operator_apply(&k.matrix, psi)
}

/// `U(S)g` for a one-dimensional Gaussian `g`, in closed form, in the chart
/// the grid evaluator would use.
pub fn propagate_gauss(s: &ComplexSymplectic, g: &Gauss1, hbar: f64, chart: Chart) -> Result<Gauss1> {
    let (a, b, c, d) = (s.a(), s.b(), s.c(), s.d());
    match chart {
        Chart::DeltaLimit => Ok(Gauss1::new(
            g.q2 * d * d - I * c * d / (2.0 * hbar),
            g.q1 * d,
            g.q0 + 0.5 * d.ln(),
        )),
        Chart::BChart => {
            let k = -I / (2.0 * b * hbar);
            let a2 = g.q2 + k * a;
            if !(a2.re < 0.0) {
                return Err(Error::DegenerateWidth(format!("divergent integral, a₂ = {a2}")));
            }
            // ∫ exp(a2 y² + (q1 − 2kx) y + q0 + k d x²) dy
            let l = -2.0 * k;
            Ok(Gauss1::new(
                k * d - l * l / (4.0 * a2),
                -2.0 * g.q1 * l / (4.0 * a2),
                g.q0 - g.q1 * g.q1 / (4.0 * a2) + 0.5 * (C64::from(PI) / (-a2)).ln()
                    - 0.5 * (2.0 * PI * hbar * b).ln(),
            ))
        }
        Chart::AChart => {
            let f = g.fourier(hbar);
            let k = I / (2.0 * a * hbar);
            let a2 = f.q2 + k * b;
            if !(a2.re < 0.0) {
                return Err(Error::DegenerateWidth(format!("divergent integral, a₂ = {a2}")));
            }
            let l = 2.0 * k;
            Ok(Gauss1::new(
                -k * c - l * l / (4.0 * a2),
                -2.0 * f.q1 * l / (4.0 * a2),
                f.q0 - f.q1 * f.q1 / (4.0 * a2) + 0.5 * (C64::from(PI) / (-a2)).ln()
                    - 0.5 * (2.0 * PI * I * hbar * a).ln(),
            ))
        }
    }
}

/// The printed prediction for `U(S)ψ^α_z`: label `(S·α, _αT_S z)` and scalar
/// `_αg̃_S e^{i z^S∧z′/2ħ}` with `_αg̃_S = (a + bα⁻¹)^{-1/2}(Im (S·α)⁻¹ / Im α⁻¹)^{1/4}`.
pub fn closed_form_propagate(
    s: &ComplexSymplectic,
    label: &CoherentLabel,
    hbar: f64,
) -> Result<(CoherentLabel, C64)> {
    let beta = moebius(s, &label.alpha)?;
    if !beta.is_admissible() {
        return Err(Error::InadmissibleWidth(format!("S·α = {}", beta.value())));
    }
    let t = transport_with(s.matrix(), &beta)?;
    let zt = t.apply(&label.z);
    let zs = crate::symplectic_core::apply_complex(s, &label.z);
    let zt_c: Vec<C64> = zt.to_vec().into_iter().map(C64::from).collect();
    let wedge = crate::symplectic_core::symplectic_form_c(&zs, &zt_c);
    let alpha_inv = label
        .alpha
        .value()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateWidth("α".into()))?;
    let beta_inv = beta
        .value()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateWidth("S·α".into()))?;
    let g1 = (s.block_a() + s.block_b() * &alpha_inv).determinant().sqrt().inv();
    let ratio = beta_inv.map(|z| z.im).determinant() / alpha_inv.map(|z| z.im).determinant();
    let g2 = C64::from(ratio).powf(0.25);
    let scalar = g1 * g2 * (I * wedge / (2.0 * hbar)).exp();
    Ok((CoherentLabel::new(zt, beta)?, scalar))
}

/// One candidate reading of the propagation law: width `W·α` and center
/// transport through map `M` at that width.
#[derive(Clone, Debug)]
pub struct Family {
    pub name: String,
    pub width: ComplexSymplectic,
    pub transport: ComplexSymplectic,
    pub transport_width: ComplexSymplectic,
}

impl Family {
    pub fn predict(&self, alpha: &WidthParameter, z: &PhasePoint) -> Result<(WidthParameter, PhasePoint)> {
        let beta = moebius(&self.width, alpha)?;
        let tw = moebius(&self.transport_width, alpha)?;
        let t = transport_with(self.transport.matrix(), &tw)?;
        Ok((beta, t.apply(z)))
    }
}

/// The hypothesis families: `{S·α, S⁻¹·α} × {_αT_S, _αT_{S⁻¹}}` as printed,
/// plus the two sign-reflected transports `J′SJ′`, `J′S⁻¹J′` at their own
/// widths.
pub fn hypothesis_families(s: &ComplexSymplectic) -> Result<Vec<Family>> {
    let si = s.inverse()?;
    let mk = |name: &str, w: &ComplexSymplectic, t: &ComplexSymplectic, tw: &ComplexSymplectic| Family {
        name: name.to_string(),
        width: w.clone(),
        transport: t.clone(),
        transport_width: tw.clone(),
    };
    Ok(vec![
        mk("β = S·α, w = _αT_S z", s, s, s),
        mk("β = S·α, w = _αT_{S⁻¹} z", s, &si, &si),
        mk("β = S⁻¹·α, w = _αT_S z", &si, s, s),
        mk("β = S⁻¹·α, w = _αT_{S⁻¹} z", &si, &si, &si),
        mk("β = S·α, w = reflected _αT_S z", s, &s.reflected(), s),
        mk("β = S⁻¹·α, w = reflected _αT_{S⁻¹} z", &si, &si.reflected(), &si),
    ])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitRecord {
    pub beta: Vec<[f64; 2]>,
    pub w: Vec<f64>,
    pub lambda: [f64; 2],
    pub residual: f64,
}

impl FitRecord {
    fn from_fit(f: &GaussianFit) -> Self {
        Self {
            beta: f.beta.to_flat(),
            w: f.z.to_vec(),
            lambda: [f.lambda.re, f.lambda.im],
            residual: f.residual,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseRecord {
    #[serde(rename = "S")]
    pub s: serde_json::Value,
    pub alpha: Vec<[f64; 2]>,
    pub z: Vec<f64>,
    pub chart: Option<Chart>,
    pub fitted: Option<FitRecord>,
    pub error: Option<String>,
    pub best_family: Option<String>,
    pub family_residuals: Vec<(String, f64)>,
    /// Fitted amplitude divided by the printed scalar prediction.
    pub scalar_ratio: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConventionReport {
    pub tolerance: f64,
    pub cases: Vec<CaseRecord>,
    /// Largest residual of each family over all cases.
    pub families: Vec<(String, f64)>,
    /// The unique family matching every case, if there is exactly one.
    pub best_family: Option<String>,
    pub matching_families: Vec<String>,
    pub meta: AuditReport,
}

/// Propagates coherent states through the kernel, fits the output and scores
/// each hypothesis family. Also runs [`meta_audit`] on the same matrices.
pub fn convention_audit(
    s_set: &[ComplexSymplectic],
    alpha_set: &[WidthParameter],
    z_set: &[PhasePoint],
    grid: &GridSpec,
) -> Result<ConventionReport> {
    let tol = 1e-6;
    let mut cases = Vec::new();
    let mut fam_worst: Vec<(String, f64)> = Vec::new();
    for s in s_set {
        let fams = hypothesis_families(s)?;
        if fam_worst.is_empty() {
            fam_worst = fams.iter().map(|f| (f.name.clone(), 0.0)).collect();
        }
        let chart = select_chart_for(s, grid, KernelUse::Vector).ok();
        for alpha in alpha_set {
            for z in z_set {
                let mut rec = CaseRecord {
                    s: serde_json::from_str(&s.to_json())?,
                    alpha: alpha.to_flat(),
                    z: z.to_vec(),
                    chart,
                    fitted: None,
                    error: None,
                    best_family: None,
                    family_residuals: Vec::new(),
                    scalar_ratio: None,
                };
                let outcome = CoherentLabel::new(z.clone(), alpha.clone())
                    .and_then(|l| coherent_state(&l, grid))
                    .and_then(|psi| propagate(s, &psi))
                    .and_then(|out| gaussian_fit(&out));
                match outcome {
                    Err(e) => {
                        rec.error = Some(e.to_string());
                        for fw in fam_worst.iter_mut() {
                            fw.1 = f64::INFINITY;
                        }
                    }
                    Ok(fit) => {
                        rec.fitted = Some(FitRecord::from_fit(&fit));
                        let mut best = (String::new(), f64::INFINITY);
                        for (fam, fw) in fams.iter().zip(fam_worst.iter_mut()) {
                            let r = match fam.predict(alpha, z) {
                                Ok((b, w)) => b.distance(&fit.beta) + w.distance(&fit.z),
                                Err(_) => f64::INFINITY,
                            };
                            let r = r + if fit.residual > tol { fit.residual } else { 0.0 };
                            if r < best.1 {
                                best = (fam.name.clone(), r);
                            }
                            fw.1 = if r.is_nan() { f64::NAN } else { fw.1.max(r) };
                            rec.family_residuals.push((fam.name.clone(), r));
                        }
                        if best.1 <= tol {
                            rec.best_family = Some(best.0);
                        }
                        if let Ok(l) = CoherentLabel::new(z.clone(), alpha.clone()) {
                            if let Ok((_, sc)) = closed_form_propagate(s, &l, grid.hbar) {
                                let r = fit.lambda / sc;
                                rec.scalar_ratio = Some([r.re, r.im]);
                            }
                        }
                    }
                }
                cases.push(rec);
            }
        }
    }
    let matching: Vec<String> = fam_worst
        .iter()
        .filter(|(_, r)| *r <= tol)
        .map(|(n, _)| n.clone())
        .collect();
    let best_family = if matching.len() == 1 {
        Some(matching[0].clone())
    } else {
        None
    };
    let probes: Vec<CoherentLabel> = alpha_set
        .iter()
        .filter(|a| a.n() == 1)
        .take(1)
        .filter_map(|a| CoherentLabel::new(PhasePoint::one(0.3, -0.2), a.clone()).ok())
        .collect();
    let meta = if grid.n == 1 && !probes.is_empty() {
        meta_audit(s_set, grid, &probes)?
    } else {
        AuditReport::new("conjugation arrangement", 1e-5)
    };
    Ok(ConventionReport {
        tolerance: tol,
        cases,
        families: fam_worst,
        best_family,
        matching_families: matching,
        meta,
    })
}

/// `U(S)⁻¹` on a vector: `U(S⁻¹)` rescaled so that `U(S⁻¹)U(S)ψ = ψ` on the
/// first probe.
fn inverse_scalar(s: &ComplexSymplectic, probe: &WaveFunction) -> Result<C64> {
    let si = s.inverse()?;
    let back = propagate(&si, &propagate(s, probe)?)?;
    let c = inner_product(probe, &back)? / inner_product(probe, probe)?;
    Ok(c)
}

/// Candidate arrangements of the defining relation: for each matrix
/// `M ∈ {S, S⁻¹, J′SJ′, J′S⁻¹J′}`, the residual of
/// `U⁻¹(X, P)U = M(X, P)` and of `U(X, P)U⁻¹ = M(X, P)` on probe states.
pub fn meta_audit(
    s_set: &[ComplexSymplectic],
    grid: &GridSpec,
    probes: &[CoherentLabel],
) -> Result<AuditReport> {
    let tol = 1e-5;
    let mut report = AuditReport::new("conjugation arrangement", tol);
    let names = ["S", "S⁻¹", "J′SJ′", "J′S⁻¹J′"];
    let mut worst = [[0.0_f64; 4]; 2];
    for s in s_set {
        let si = s.inverse()?;
        let cands = [s.clone(), si.clone(), s.reflected(), si.reflected()];
        for label in probes {
            let psi = coherent_state(label, grid)?;
            let c = inverse_scalar(s, &psi)?;
            let round = propagate(&si, &propagate(s, &psi)?)?.scale(c.inv());
            let rt = round.rel_distance(&psi);
            if !(rt <= 1e-6) {
                report.notes.push(format!(
                    "{}: U(S⁻¹)U(S) is not a multiple of the identity on the probe ({rt:.2e}); skipped",
                    s.to_json()
                ));
                continue;
            }
            let uinv = |f: &WaveFunction| -> Result<WaveFunction> {
                Ok(propagate(&si, f)?.scale(c.inv()))
            };
            let u = |f: &WaveFunction| propagate(s, f);
            let norm = psi.norm();
            let xpsi = position_apply(&psi);
            let ppsi = momentum_apply(&psi);
            // U⁻¹ X U ψ, U⁻¹ P U ψ
            let up = u(&psi)?;
            let l1 = [uinv(&position_apply(&up))?, uinv(&momentum_apply(&up))?];
            // U X U⁻¹ ψ, U P U⁻¹ ψ
            let uip = uinv(&psi)?;
            let l2 = [u(&position_apply(&uip))?, u(&momentum_apply(&uip))?];
            for (arr, lhs) in [l1, l2].iter().enumerate() {
                for (k, m) in cands.iter().enumerate() {
                    let mut r = 0.0_f64;
                    for row in 0..2 {
                        let (m0, m1) = if row == 0 { (m.a(), m.b()) } else { (m.c(), m.d()) };
                        let mut rhs = xpsi.scale(m0);
                        rhs.samples += &ppsi.scale(m1).samples;
                        let mut d = lhs[row].clone();
                        d.samples -= &rhs.samples;
                        r = r.max(d.norm() / norm);
                    }
                    worst[arr][k] = worst[arr][k].max(r);
                }
            }
        }
    }
    for (arr, label) in ["U⁻¹(X, P)U", "U(X, P)U⁻¹"].iter().enumerate() {
        for k in 0..4 {
            report.push(format!("{label} = {}(X, P)", names[k]), worst[arr][k]);
        }
    }
    Ok(report)
}

/// `‖U(S)U(S2)ψ − cU(SS2)ψ‖` after the optimal scalar `c`, per probe,
/// normalised by the larger of `‖ψ‖` and `‖U(S)U(S2)ψ‖`.
pub fn kernel_compose_check(
    s: &ComplexSymplectic,
    s2: &ComplexSymplectic,
    grid: &GridSpec,
    probes: &[CoherentLabel],
) -> Result<AuditReport> {
    let ss2 = s.mul(s2)?;
    let mut report = AuditReport::new("kernel composition", 1e-6);
    for (k, label) in probes.iter().enumerate() {
        let psi = coherent_state(label, grid)?;
        let lhs = propagate(s, &propagate(s2, &psi)?)?;
        let rhs = propagate(&ss2, &psi)?;
        let c = inner_product(&rhs, &lhs)? / inner_product(&rhs, &rhs)?;
        let mut d = lhs.clone();
        d.samples -= &rhs.scale(c).samples;
        let r = d.norm() / psi.norm().max(lhs.norm());
        report.push(format!("probe {k}"), r);
        report.notes.push(format!("probe {k}: c = {c}"));
    }
    Ok(report)
}

/// Reference Gaussian for `U(S)ψ^α_z` computed in closed form, in the chart
/// selected for `grid`.
pub fn exact_propagated(s: &ComplexSymplectic, label: &CoherentLabel, grid: &GridSpec) -> Result<Gauss1> {
    let chart = select_chart_for(s, grid, KernelUse::Vector)?;
    let g = gauss1_of(label.alpha.scalar_value(), label.z.q[0], label.z.p[0], grid.hbar);
    propagate_gauss(s, &g, grid.hbar, chart)
}

/// Transport realised by the kernel, for reference in reports.
pub fn kernel_transport(s: &ComplexSymplectic, alpha: &WidthParameter) -> Result<TransportMatrix> {
    crate::symplectic_core::reflected_transport(s, alpha)
}

/// `(Mz)` helper used by tests: apply a complex matrix to a real vector.
pub fn apply_matrix(m: &CMat, v: &[f64]) -> DVector<C64> {
    m * DVector::from_iterator(v.len(), v.iter().map(|x| C64::from(*x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert_grid::operator_apply;

    fn small() -> GridSpec {
        GridSpec::one_d(256, 10.0, 0.5).unwrap()
    }

    #[test]
    fn identity_is_delta_chart() {
        let g = small();
        let k = kernel_build(&ComplexSymplectic::identity(1), &g).unwrap();
        assert_eq!(k.chart, Chart::DeltaLimit);
        let id = OperatorMatrix::identity(g);
        let d = (&k.matrix.entries - &id.entries).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        assert!(d * g.dx() < 1e-12);
    }

    #[test]
    fn quarter_rotation_is_fourier() {
        // self-dual grid: N π ħ / (2L) = L
        let g = GridSpec::one_d(256, (64.0 * PI).sqrt(), 0.5).unwrap();
        let s = ComplexSymplectic::rotation(std::f64::consts::FRAC_PI_2);
        let k = kernel_build(&s, &g).unwrap();
        assert_eq!(k.chart, Chart::BChart);
        let l = CoherentLabel::one(0.7, -0.4, C64::new(0.3, 0.8)).unwrap();
        let psi = coherent_state(&l, &g).unwrap();
        let out = operator_apply(&k.matrix, &psi).unwrap();
        // x ξ/ħ kernel: U(x,y) ∝ e^{ixy/ħ}, the inverse transform
        let fi = fourier_transform(&psi, Direction::Inverse);
        let c = inner_product(&WaveFunction { grid: g, samples: fi.samples.clone() }, &out).unwrap();
        let mut d = out.clone();
        d.samples -= &fi.samples.mapv(|v| v * c);
        assert!(d.norm() < 1e-8, "{}", d.norm());
        assert!((c.norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exact_gauss_matches_grid() {
        let g = small();
        let l = CoherentLabel::one(0.4, 0.3, C64::new(0.2, 1.1)).unwrap();
        let psi = coherent_state(&l, &g).unwrap();
        for s in [
            ComplexSymplectic::free_evolution(0.25),
            ComplexSymplectic::free_evolution(-0.25),
            ComplexSymplectic::gaussian_multiplier(0.1),
            ComplexSymplectic::complex_oscillator(0.2),
            ComplexSymplectic::rotation(0.4),
        ] {
            let out = propagate(&s, &psi).unwrap();
            let gs = exact_propagated(&s, &l, &g).unwrap();
            let expect = WaveFunction::from_fn(g, |x| gs.eval(x[0]));
            assert!(out.rel_distance(&expect) < 1e-8, "{:?}: {}", s, out.rel_distance(&expect));
            let k = kernel_build(&s, &g).unwrap();
            let out2 = apply_kernel(&k, &psi).unwrap();
            assert!(out2.rel_distance(&expect) < 1e-8);
        }
    }
}
