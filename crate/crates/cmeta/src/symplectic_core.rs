//! Exact arithmetic on complex symplectic matrices: Möbius action on widths,
//! transport matrices, the extended phase-space flow and admissibility.
//!
//! Column convention: `S` acts on `(q, p)^T`.

use crate::report::AuditReport;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// A `2n×2n` complex matrix with determinant `±1`, stored with its blocks
/// `A, B; C, D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSymplectic {
    n: usize,
    m: CMat,
    det_class: i8,
}

#[derive(Serialize, Deserialize)]
struct SymplecticJson {
    n: usize,
    rows: Vec<Vec<[f64; 2]>>,
}

impl ComplexSymplectic {
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 || m.nrows() % 2 != 0 {
            return Err(Error::InvalidMatrix(format!(
                "expected a square 2n×2n matrix, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let n = m.nrows() / 2;
        let scale = max_abs(&m).max(1.0);
        let tol = 1e-12 * scale.powi(2 * n as i32);
        let det = m.clone().determinant();
        let det_class = if (det - 1.0).norm() <= tol {
            1
        } else if (det + 1.0).norm() <= tol {
            -1
        } else {
            return Err(Error::InvalidMatrix(format!("determinant {det} is not ±1")));
        };
        if det_class == 1 && n > 1 {
            let j = symplectic_unit(n);
            let r = m.transpose() * &j * &m - &j;
            if max_abs(&r) > 1e-12 * scale * scale {
                return Err(Error::InvalidMatrix(format!(
                    "S^T J S − J has magnitude {:e}",
                    max_abs(&r)
                )));
            }
        }
        Ok(Self { n, m, det_class })
    }

    pub fn from_2x2(a: C64, b: C64, c: C64, d: C64) -> Result<Self> {
        Self::new(CMat::from_row_slice(2, 2, &[a, b, c, d]))
    }

    pub fn from_real_2x2(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::from_2x2(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            m: CMat::identity(2 * n, 2 * n),
            det_class: 1,
        }
    }

    /// `[[cos θ, sin θ], [−sin θ, cos θ]]`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_real_2x2(c, s, -s, c).expect("rotation is symplectic")
    }

    /// `[[1, s], [0, 1]]`.
    pub fn shear(s: f64) -> Self {
        Self::from_real_2x2(1.0, s, 0.0, 1.0).expect("shear is symplectic")
    }

    /// Complex free evolution `[[1, −it], [0, 1]]`.
    pub fn free_evolution(t: f64) -> Self {
        Self::from_2x2(1.0.into(), C64::new(0.0, -t), 0.0.into(), 1.0.into()).unwrap()
    }

    /// Multiplication by a Gaussian, `[[1, 0], [−it, 1]]`.
    pub fn gaussian_multiplier(t: f64) -> Self {
        Self::from_2x2(1.0.into(), 0.0.into(), C64::new(0.0, -t), 1.0.into()).unwrap()
    }

    /// Complex dilation `diag(e^{it}, e^{−it})`.
    pub fn dilation(t: f64) -> Self {
        let e = C64::new(0.0, t).exp();
        Self::from_2x2(e, 0.0.into(), 0.0.into(), e.inv()).unwrap()
    }

    /// Complexified oscillator `[[cosh t, i sinh t], [−i sinh t, cosh t]]`.
    pub fn complex_oscillator(t: f64) -> Self {
        let (ch, sh) = (t.cosh(), t.sinh());
        Self::from_2x2(ch.into(), C64::new(0.0, sh), C64::new(0.0, -sh), ch.into()).unwrap()
    }

    /// Direct sum of one-dimensional matrices, arranged in `(q₁..qₙ, p₁..pₙ)`
    /// block order.
    pub fn block_diagonal(parts: &[ComplexSymplectic]) -> Result<Self> {
        let n = parts.len();
        if parts.iter().any(|s| s.n != 1) {
            return Err(Error::DimensionMismatch("block_diagonal expects n = 1 parts".into()));
        }
        let mut m = CMat::zeros(2 * n, 2 * n);
        for (k, s) in parts.iter().enumerate() {
            m[(k, k)] = s.a();
            m[(k, n + k)] = s.b();
            m[(n + k, k)] = s.c();
            m[(n + k, n + k)] = s.d();
        }
        Self::new(m)
    }

    /// Point transformation `diag(R, R^{-T})` lifted from an invertible real
    /// `n×n` matrix `R`.
    pub fn point_transformation(r: &RMat) -> Result<Self> {
        let n = r.nrows();
        let rinv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMap("point transformation".into()))?;
        let mut m = CMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = r[(i, j)].into();
                m[(n + i, n + j)] = rinv[(j, i)].into();
            }
        }
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn det_class(&self) -> i8 {
        self.det_class
    }

    pub fn a(&self) -> C64 {
        self.m[(0, 0)]
    }
    pub fn b(&self) -> C64 {
        self.m[(0, self.n)]
    }
    pub fn c(&self) -> C64 {
        self.m[(self.n, 0)]
    }
    pub fn d(&self) -> C64 {
        self.m[(self.n, self.n)]
    }

    fn block(&self, r: usize, c: usize) -> CMat {
        self.m.view((r * self.n, c * self.n), (self.n, self.n)).into_owned()
    }
    pub fn block_a(&self) -> CMat {
        self.block(0, 0)
    }
    pub fn block_b(&self) -> CMat {
        self.block(0, 1)
    }
    pub fn block_c(&self) -> CMat {
        self.block(1, 0)
    }
    pub fn block_d(&self) -> CMat {
        self.block(1, 1)
    }

    /// Entrywise complex conjugate `S̄`.
    pub fn conj(&self) -> Self {
        Self {
            n: self.n,
            m: self.m.map(|z| z.conj()),
            det_class: self.det_class,
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMatrix("singular".into()))?;
        Self::new(inv)
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch("matrix product".into()));
        }
        Self::new(&self.m * &other.m)
    }

    /// `J′ S J′` with `J′ = diag(I, −I)`: the sign-reflected matrix
    /// `[[A, −B], [−C, D]]`.
    pub fn reflected(&self) -> Self {
        let mut m = self.m.clone();
        let n = self.n;
        for i in 0..2 * n {
            for j in 0..2 * n {
                if (i < n) != (j < n) {
                    m[(i, j)] = -m[(i, j)];
                }
            }
        }
        Self {
            n,
            m,
            det_class: self.det_class,
        }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.m.iter().all(|z| z.im.abs() <= tol)
    }

    pub fn to_json(&self) -> String {
        let rows = (0..2 * self.n)
            .map(|i| (0..2 * self.n).map(|j| [self.m[(i, j)].re, self.m[(i, j)].im]).collect())
            .collect();
        serde_json::to_string(&SymplecticJson { n: self.n, rows }).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: SymplecticJson = serde_json::from_str(s)?;
        let dim = 2 * j.n;
        if j.rows.len() != dim || j.rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Format(format!("expected {dim}×{dim} rows")));
        }
        let m = CMat::from_fn(dim, dim, |i, k| C64::new(j.rows[i][k][0], j.rows[i][k][1]));
        Self::new(m)
    }
}

/// Standard symplectic unit `J = [[0, I], [−I, 0]]`.
pub fn symplectic_unit(n: usize) -> CMat {
    let mut j = CMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = 1.0.into();
        j[(n + k, k)] = (-1.0).into();
    }
    j
}

/// Width label `α`: a scalar with `Im α > 0` or a complex symmetric matrix with
/// positive-definite imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthParameter {
    n: usize,
    value: CMat,
}

impl WidthParameter {
    pub fn scalar(alpha: C64) -> Result<Self> {
        let w = Self::raw(CMat::from_element(1, 1, alpha));
        if !w.is_admissible() {
            return Err(Error::InadmissibleWidth(format!("Im α must be > 0, got {alpha}")));
        }
        Ok(w)
    }

    pub fn matrix(value: CMat) -> Result<Self> {
        if !value.is_square() {
            return Err(Error::InadmissibleWidth("non-square width".into()));
        }
        let w = Self::raw(value);
        if !w.is_admissible() {
            return Err(Error::InadmissibleWidth(
                "width must be symmetric with positive-definite imaginary part".into(),
            ));
        }
        Ok(w)
    }

    /// Unchecked constructor; Möbius images need not be admissible.
    pub fn raw(value: CMat) -> Self {
        Self {
            n: value.nrows(),
            value,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self) -> &CMat {
        &self.value
    }

    /// The scalar value (`n = 1`), or the `(0,0)` entry.
    pub fn scalar_value(&self) -> C64 {
        self.value[(0, 0)]
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_admissible(&self) -> bool {
        if !self.is_finite() {
            return false;
        }
        if self.n == 1 {
            return self.value[(0, 0)].im > 0.0;
        }
        let scale = max_abs(&self.value).max(1.0);
        if max_abs(&(&self.value - self.value.transpose())) > 1e-12 * scale {
            return false;
        }
        let im = self.value.map(|z| z.im);
        let sym = (&im + im.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min() > 0.0
    }

    pub fn imag(&self) -> RMat {
        self.value.map(|z| z.im)
    }

    pub fn real(&self) -> RMat {
        self.value.map(|z| z.re)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        if self.n != other.n {
            return f64::INFINITY;
        }
        max_abs(&(&self.value - &other.value))
    }

    pub fn to_flat(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let z = self.value[(i, j)];
                out.push([z.re, z.im]);
            }
        }
        out
    }

    pub fn from_flat(v: &[[f64; 2]]) -> Result<Self> {
        let n = (v.len() as f64).sqrt().round() as usize;
        if n * n != v.len() || n == 0 {
            return Err(Error::Format("alpha must have n² entries".into()));
        }
        let m = CMat::from_fn(n, n, |i, j| C64::new(v[i * n + j][0], v[i * n + j][1]));
        if n == 1 {
            Self::scalar(m[(0, 0)])
        } else {
            Self::matrix(m)
        }
    }
}

/// Real phase-space point `z = (q, p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() {
            return Err(Error::DimensionMismatch("q and p lengths differ".into()));
        }
        if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite phase point".into()));
        }
        Ok(Self { q, p })
    }

    pub fn one(q: f64, p: f64) -> Self {
        Self { q: vec![q], p: vec![p] }
    }

    pub fn origin(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            p: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `(q₁..qₙ, p₁..pₙ)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(self.p.iter()).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self {
            q: v[..n].to_vec(),
            p: v[n..].to_vec(),
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            q: self.q.iter().map(|v| -v).collect(),
            p: self.p.iter().map(|v| -v).collect(),
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// A point of the extended phase space: a center and a width.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedPoint {
    pub z: PhasePoint,
    pub alpha: WidthParameter,
}

impl ExtendedPoint {
    pub fn new(z: PhasePoint, alpha: WidthParameter) -> Result<Self> {
        if z.n() != alpha.n() {
            return Err(Error::DimensionMismatch("point and width dimensions differ".into()));
        }
        Ok(Self { z, alpha })
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.z.distance(&other.z) + self.alpha.distance(&other.alpha)
    }
}

/// Real-linear map `z ↦ z′` between coherent-state centers.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportMatrix {
    n: usize,
    matrix: RMat,
}

impl TransportMatrix {
    pub fn new(matrix: RMat) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() % 2 != 0 || matrix.nrows() == 0 {
            return Err(Error::InvalidMatrix("transport must be 2n×2n".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite transport".into()));
        }
        Ok(Self {
            n: matrix.nrows() / 2,
            matrix,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            matrix: RMat::identity(2 * n, 2 * n),
        }
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self {
            n,
            matrix: RMat::identity(2 * n, 2 * n) * s,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &RMat {
        &self.matrix
    }

    pub fn apply(&self, z: &PhasePoint) -> PhasePoint {
        let v = nalgebra::DVector::from_vec(z.to_vec());
        PhasePoint::from_slice((&self.matrix * v).as_slice())
    }

    pub fn apply2(&self, q: f64, p: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[(0, 0)] * q + m[(0, 1)] * p, m[(1, 0)] * q + m[(1, 1)] * p)
    }

    pub fn det(&self) -> f64 {
        self.matrix.clone().determinant()
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMap("transport matrix".into()))?;
        Self::new(inv)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (&self.matrix - &other.matrix).iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..2 * self.n)
            .map(|i| (0..2 * self.n).map(|j| self.matrix[(i, j)]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Format("transport rows must be square".into()));
        }
        Self::new(RMat::from_fn(d, d, |i, j| rows[i][j]))
    }
}

/// `S·α = (aα+b)/(cα+d)`; for `n > 1` the symmetrized `(Aα+B)(Cα+D)^{-1}`.
/// The result is not required to be admissible.
pub fn moebius(s: &ComplexSymplectic, alpha: &WidthParameter) -> Result<WidthParameter> {
    if s.n() != alpha.n() {
        return Err(Error::DimensionMismatch("moebius".into()));
    }
    if s.n() == 1 {
        let a = alpha.scalar_value();
        let den = s.c() * a + s.d();
        let scale = (s.c().norm() * a.norm() + s.d().norm()).max(f64::MIN_POSITIVE);
        if den.norm() <= 1e-14 * scale {
            return Err(Error::Pole {
                alpha: a.to_string(),
            });
        }
        return Ok(WidthParameter::raw(CMat::from_element(
            1,
            1,
            (s.a() * a + s.b()) / den,
        )));
    }
    let x = s.block_a() * alpha.value() + s.block_b();
    let y = s.block_c() * alpha.value() + s.block_d();
    let yinv = invert_checked(&y).ok_or_else(|| Error::Pole {
        alpha: format!("{}", alpha.value()),
    })?;
    let r = x * yinv;
    Ok(WidthParameter::raw((&r + r.transpose()) * C64::from(0.5)))
}

/// The left-quotient form `(Cα+D)^{-1}(Aα+B)`, not symmetrized.
pub fn moebius_left(s: &ComplexSymplectic, alpha: &WidthParameter) -> Result<WidthParameter> {
    let x = s.block_a() * alpha.value() + s.block_b();
    let y = s.block_c() * alpha.value() + s.block_d();
    let yinv = invert_checked(&y).ok_or_else(|| Error::Pole {
        alpha: format!("{}", alpha.value()),
    })?;
    Ok(WidthParameter::raw(yinv * x))
}

fn invert_checked(y: &CMat) -> Option<CMat> {
    let scale = max_abs(y).max(f64::MIN_POSITIVE);
    let det = y.clone().determinant();
    if det.norm() <= 1e-14 * scale.powi(y.nrows() as i32) {
        return None;
    }
    y.clone().try_inverse()
}

/// Solves `q′ + βp′ = (Mz)_q + β(Mz)_p` for real `(q′, p′)`: the real-linear map
/// attached to the complex matrix `map` at width `beta`.
pub fn transport_with(map: &CMat, beta: &WidthParameter) -> Result<TransportMatrix> {
    let n = beta.n();
    if map.nrows() != 2 * n || map.ncols() != 2 * n {
        return Err(Error::DimensionMismatch("transport".into()));
    }
    let top = map.view((0, 0), (n, 2 * n)).into_owned();
    let bot = map.view((n, 0), (n, 2 * n)).into_owned();
    let k = top + beta.value() * bot;
    let imb = beta.imag();
    let scale = imb.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let det = imb.clone().determinant();
    if !(det.abs() > 1e-14 * scale.powi(n as i32)) {
        return Err(Error::DegenerateWidth(format!("Im β singular for β = {}", beta.value())));
    }
    let imb_inv = imb.try_inverse().ok_or_else(|| Error::DegenerateWidth("Im β".into()))?;
    let tp = &imb_inv * k.map(|z| z.im);
    let tq = k.map(|z| z.re) - beta.real() * &tp;
    let mut t = RMat::zeros(2 * n, 2 * n);
    t.view_mut((0, 0), (n, 2 * n)).copy_from(&tq);
    t.view_mut((n, 0), (n, 2 * n)).copy_from(&tp);
    TransportMatrix::new(t)
}

/// Largest `|q′ + βp′ − (Mz)_q − β(Mz)_p|` over the unit vectors.
pub fn transport_residual(map: &CMat, beta: &WidthParameter, t: &TransportMatrix) -> f64 {
    let n = beta.n();
    let top = map.view((0, 0), (n, 2 * n)).into_owned();
    let bot = map.view((n, 0), (n, 2 * n)).into_owned();
    let k = top + beta.value() * bot;
    let tc = t.matrix().map(C64::from);
    let lhs = tc.view((0, 0), (n, 2 * n)).into_owned() + beta.value() * tc.view((n, 0), (n, 2 * n));
    max_abs(&(lhs - k))
}

/// Transport matrix `_αT_S` as printed: map `S`, width `S·α`.
pub fn transport_matrix(s: &ComplexSymplectic, alpha: &WidthParameter) -> Result<TransportMatrix> {
    let beta = moebius(s, alpha)?;
    transport_with(s.matrix(), &beta)
}

/// Transport realised by the integral kernel: map `J′SJ′`, width `S·α`.
pub fn reflected_transport(
    s: &ComplexSymplectic,
    alpha: &WidthParameter,
) -> Result<TransportMatrix> {
    let beta = moebius(s, alpha)?;
    transport_with(s.reflected().matrix(), &beta)
}

/// Which real-linear map is paired with the Möbius image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportConvention {
    /// Map `S` itself.
    Printed,
    /// Map `J′SJ′`, the convention realised by the kernel.
    Reflected,
}

impl TransportConvention {
    pub fn transport(
        self,
        s: &ComplexSymplectic,
        alpha: &WidthParameter,
    ) -> Result<TransportMatrix> {
        match self {
            Self::Printed => transport_matrix(s, alpha),
            Self::Reflected => reflected_transport(s, alpha),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Printed => "printed",
            Self::Reflected => "reflected",
        }
    }
}

/// `Φ_S(z, α) = (_αT_S z, S·α)`.
pub fn flow_map(s: &ComplexSymplectic, point: &ExtendedPoint) -> Result<ExtendedPoint> {
    flow_map_with(s, point, TransportConvention::Printed)
}

pub fn flow_map_with(
    s: &ComplexSymplectic,
    point: &ExtendedPoint,
    conv: TransportConvention,
) -> Result<ExtendedPoint> {
    let beta = moebius(s, &point.alpha)?;
    if !beta.is_admissible() {
        return Err(Error::InadmissibleWidth(format!("S·α = {}", beta.value())));
    }
    let t = conv.transport(s, &point.alpha)?;
    Ok(ExtendedPoint {
        z: t.apply(&point.z),
        alpha: beta,
    })
}

/// Compares `Φ_{S S2}` with the four candidate composition conventions under
/// both transport conventions.
pub fn flow_composition_audit(
    s: &ComplexSymplectic,
    s2: &ComplexSymplectic,
    samples: &[ExtendedPoint],
) -> Result<AuditReport> {
    let tol = 1e-9;
    let mut report = AuditReport::new("flow composition", tol);
    let ss2 = s.mul(s2)?;
    let si = s.inverse()?;
    let s2i = s2.inverse()?;
    let ss2i = ss2.inverse()?;
    for conv in [TransportConvention::Printed, TransportConvention::Reflected] {
        let f = |m: &ComplexSymplectic, x: &ExtendedPoint| flow_map_with(m, x, conv);
        type Case<'a> = (&'a str, Box<dyn Fn(&ExtendedPoint) -> Result<f64> + 'a>);
        let cases: Vec<Case> = vec![
            (
                "Φ_S∘Φ_S2 = Φ_SS2",
                Box::new(|x| Ok(f(s, &f(s2, x)?)?.distance(&f(&ss2, x)?))),
            ),
            (
                "Φ_S2∘Φ_S = Φ_SS2",
                Box::new(|x| Ok(f(s2, &f(s, x)?)?.distance(&f(&ss2, x)?))),
            ),
            (
                "Φ_S⁻¹∘Φ_S2⁻¹ = Φ_(SS2)⁻¹",
                Box::new(|x| Ok(f(&si, &f(&s2i, x)?)?.distance(&f(&ss2i, x)?))),
            ),
            (
                "Φ_S2⁻¹∘Φ_S⁻¹ = Φ_(SS2)⁻¹",
                Box::new(|x| Ok(f(&s2i, &f(&si, x)?)?.distance(&f(&ss2i, x)?))),
            ),
        ];
        for (label, eval) in cases {
            let name = format!("{} [{} transport]", label, conv.name());
            let mut worst = 0.0_f64;
            for (k, x) in samples.iter().enumerate() {
                let r = match eval(x) {
                    Ok(v) => v,
                    Err(e) => {
                        report.notes.push(format!("{name}: sample {k}: {e}"));
                        f64::INFINITY
                    }
                };
                if !(r <= tol) {
                    report.counterexamples.push((name.clone(), k, r));
                }
                worst = if r.is_nan() { f64::NAN } else { worst.max(r) };
            }
            report.push(name, worst);
        }
    }
    Ok(report)
}

/// Scans the upper half-plane for a width admissible for `S^{-1}`, `S̄^{-1}`
/// and `S^{-1}S̄`. Candidates are ordered by `|ln|α||`, then `|Re α|`, then
/// `Im α`, so `α = i` comes first whenever it qualifies.
pub fn admissible_alpha_search(s: &ComplexSymplectic, grid_density: usize) -> Result<WidthParameter> {
    if s.n() != 1 {
        return Err(Error::Unsupported("admissible_alpha_search needs n = 1".into()));
    }
    let m = grid_density.max(2);
    let logs: Vec<f64> = (0..m)
        .map(|k| 10f64.powf(-3.0 + 4.0 * k as f64 / (m - 1) as f64))
        .collect();
    let mut reals = vec![0.0];
    for &v in &logs {
        reals.push(v);
        reals.push(-v);
    }
    let mut imags = logs.clone();
    imags.push(1.0);
    let mut cands: Vec<C64> = Vec::new();
    for &re in &reals {
        for &im in &imags {
            if re.abs() <= 10.0 && im > 0.0 && im <= 10.0 {
                cands.push(C64::new(re, im));
            }
        }
    }
    cands.sort_by(|a, b| {
        let ka = (a.norm().ln().abs(), a.re.abs(), a.im);
        let kb = (b.norm().ln().abs(), b.re.abs(), b.im);
        ka.partial_cmp(&kb).unwrap()
    });
    let si = s.inverse()?;
    let sbi = s.conj().inverse()?;
    let v = si.mul(&s.conj())?;
    for a in cands {
        let alpha = WidthParameter::scalar(a)?;
        let ok = [&si, &sbi, &v].iter().all(|m| match moebius(m, &alpha) {
            Ok(b) => b.is_finite() && b.scalar_value().im > 1e-12,
            Err(_) => false,
        });
        if ok {
            return Ok(alpha);
        }
    }
    Err(Error::NoAdmissibleAlpha)
}

/// `z₁∧z₂ = p₁·q₂ − q₁·p₂`.
pub fn symplectic_form(z1: &PhasePoint, z2: &PhasePoint) -> Result<f64> {
    if z1.n() != z2.n() {
        return Err(Error::DimensionMismatch("symplectic_form".into()));
    }
    Ok((0..z1.n()).map(|k| z1.p[k] * z2.q[k] - z1.q[k] * z2.p[k]).sum())
}

/// Complex-bilinear extension of [`symplectic_form`] on `(q, p)` vectors.
pub fn symplectic_form_c(z1: &[C64], z2: &[C64]) -> C64 {
    let n = z1.len() / 2;
    (0..n).map(|k| z1[n + k] * z2[k] - z1[k] * z2[n + k]).sum()
}

/// `S(z)` as a complex vector.
pub fn apply_complex(s: &ComplexSymplectic, z: &PhasePoint) -> Vec<C64> {
    let v = nalgebra::DVector::from_iterator(2 * s.n(), z.to_vec().into_iter().map(C64::from));
    (s.matrix() * v).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(a: C64) -> WidthParameter {
        WidthParameter::scalar(a).unwrap()
    }

    #[test]
    fn moebius_examples() {
        let i = C64::new(0.0, 1.0);
        assert!((moebius(&ComplexSymplectic::identity(1), &w(i)).unwrap().scalar_value() - i).norm() < 1e-15);
        let s = ComplexSymplectic::from_2x2(1.0.into(), C64::new(0.0, 0.5), 0.0.into(), 1.0.into()).unwrap();
        assert!((moebius(&s, &w(i)).unwrap().scalar_value() - 1.5 * i).norm() < 1e-15);
        let t = 0.3;
        let dil = ComplexSymplectic::from_2x2(
            C64::new(0.0, -2.0 * t).exp(),
            0.0.into(),
            0.0.into(),
            C64::new(0.0, 2.0 * t).exp(),
        )
        .unwrap();
        let expect = C64::new(0.0, -4.0 * t).exp() * i;
        assert!((moebius(&dil, &w(i)).unwrap().scalar_value() - expect).norm() < 1e-14);
    }

    #[test]
    fn pole_is_reported() {
        let s = ComplexSymplectic::from_2x2(0.0.into(), 1.0.into(), (-1.0).into(), C64::new(0.0, 1.0)).unwrap();
        assert!(matches!(moebius(&s, &w(C64::new(0.0, 1.0))), Err(Error::Pole { .. })));
    }

    #[test]
    fn transport_examples() {
        let i = w(C64::new(0.0, 1.0));
        let t = transport_matrix(&ComplexSymplectic::identity(1), &i).unwrap();
        assert!(t.distance(&TransportMatrix::identity(1)) < 1e-15);
        for (coef, expect) in [(0.5, 4.0 / 3.0), (0.25, 1.2)] {
            let s = ComplexSymplectic::from_2x2(1.0.into(), C64::new(0.0, coef), 0.0.into(), 1.0.into()).unwrap();
            let t = transport_matrix(&s, &i).unwrap();
            let e = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, expect]);
            assert!((t.matrix() - e).abs().max() < 1e-14);
        }
    }

    #[test]
    fn determinant_checked() {
        assert!(ComplexSymplectic::from_real_2x2(2.0, 0.0, 0.0, 1.0).is_err());
        let anti = ComplexSymplectic::from_2x2(0.0.into(), C64::new(0.0, 1.0), C64::new(0.0, -1.0), 0.0.into()).unwrap();
        assert_eq!(anti.det_class(), -1);
    }

    #[test]
    fn flow_rotation_period_four() {
        let r = ComplexSymplectic::rotation(std::f64::consts::FRAC_PI_2);
        let start = ExtendedPoint::new(PhasePoint::one(1.0, 0.0), w(C64::new(0.0, 1.0))).unwrap();
        let mut x = start.clone();
        for _ in 0..4 {
            x = flow_map(&r, &x).unwrap();
        }
        assert!(x.distance(&start) < 1e-12);
    }

    #[test]
    fn flow_free_evolution_example() {
        let s = ComplexSymplectic::from_2x2(1.0.into(), C64::new(0.0, 0.5), 0.0.into(), 1.0.into()).unwrap();
        let x = ExtendedPoint::new(PhasePoint::one(1.0, 1.0), w(C64::new(0.0, 1.0))).unwrap();
        let y = flow_map(&s, &x).unwrap();
        assert!(y.z.distance(&PhasePoint::one(1.0, 4.0 / 3.0)) < 1e-14);
        assert!((y.alpha.scalar_value() - C64::new(0.0, 1.5)).norm() < 1e-14);
    }

    #[test]
    fn admissible_search_examples() {
        let i = C64::new(0.0, 1.0);
        let a = admissible_alpha_search(&ComplexSymplectic::identity(1), 20).unwrap();
        assert_eq!(a.scalar_value(), i);
        let a = admissible_alpha_search(&ComplexSymplectic::free_evolution(0.25), 20).unwrap();
        assert_eq!(a.scalar_value(), i);
        let s = ComplexSymplectic::from_2x2(0.0.into(), i, -i, 0.0.into()).unwrap();
        assert_eq!(admissible_alpha_search(&s, 20).unwrap().scalar_value(), i);
    }

    #[test]
    fn symplectic_form_examples() {
        let a = PhasePoint::one(1.0, 0.0);
        let b = PhasePoint::one(0.0, 1.0);
        assert_eq!(symplectic_form(&a, &a).unwrap(), 0.0);
        assert_eq!(symplectic_form(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn json_round_trip() {
        let s = ComplexSymplectic::complex_oscillator(0.3);
        let back = ComplexSymplectic::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn n2_symplectic_relation_checked() {
        let s = ComplexSymplectic::block_diagonal(&[
            ComplexSymplectic::complex_oscillator(0.3),
            ComplexSymplectic::free_evolution(0.2),
        ])
        .unwrap();
        assert_eq!(s.n(), 2);
        let mut bad = s.matrix().clone();
        bad[(0, 1)] = C64::new(0.3, 0.0);
        assert!(ComplexSymplectic::new(bad).is_err());
    }
}
