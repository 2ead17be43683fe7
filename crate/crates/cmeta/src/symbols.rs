//! Phase-space symbols: polynomials, sampled grids and Gaussian sums, with
//! reparametrization between coherent-state widths, Weyl symbols of coherent
//! dyads, the numeric Wigner transform, push-forwards and the twisted
//! product of Weyl symbols.
//!
//! Weyl convention: `σ(x,ξ) = ∫ K(x+y/2, x−y/2) e^{−iyξ/ħ} dy`, so that
//! `tr K = (2πħ)^{-1} ∫ σ`.

use crate::coherent::{label_gauss, CoherentLabel};
use crate::hilbert_grid::{CenteredDft, GridSpec, OperatorMatrix};
use crate::report::AuditReport;
use crate::symplectic_core::{ComplexSymplectic, TransportMatrix, WidthParameter};
use crate::{Error, Result, C64};
use nalgebra::{Matrix2, Vector2};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const I: C64 = C64::new(0.0, 1.0);
pub const MAX_DEGREE: u32 = 8;

/// Rectangular midpoint lattice in `(q, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseGrid {
    pub q_min: f64,
    pub q_step: f64,
    pub mq: usize,
    pub p_min: f64,
    pub p_step: f64,
    pub mp: usize,
}

impl PhaseGrid {
    /// `M × M` midpoint nodes on `[−R, R]²`.
    pub fn square(radius: f64, m: usize) -> Self {
        let step = 2.0 * radius / m as f64;
        Self {
            q_min: -radius + 0.5 * step,
            q_step: step,
            mq: m,
            p_min: -radius + 0.5 * step,
            p_step: step,
            mp: m,
        }
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.q_step
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.p_step
    }

    pub fn cell(&self) -> f64 {
        self.q_step * self.p_step
    }

    pub fn len(&self) -> usize {
        self.mq * self.mp
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_as(&self, o: &Self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        self.mq == o.mq
            && self.mp == o.mp
            && close(self.q_min, o.q_min)
            && close(self.p_min, o.p_min)
            && close(self.q_step, o.q_step)
            && close(self.p_step, o.p_step)
    }

    /// Node indices with `|q| ≤ qmax` and `|p| ≤ pmax`.
    pub fn interior(&self, qmax: f64, pmax: f64) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for i in 0..self.mq {
            for j in 0..self.mp {
                if self.q(i).abs() <= qmax && self.p(j).abs() <= pmax {
                    v.push((i, j));
                }
            }
        }
        v
    }
}

/// Dense polynomial in `(q, p)` of total degree at most [`MAX_DEGREE`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    /// `(a, b) ↦ coefficient of q^a p^b`.
    pub coeffs: BTreeMap<(u32, u32), C64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        Self::monomial(0, 0, c)
    }

    pub fn monomial(a: u32, b: u32, c: C64) -> Self {
        let mut coeffs = BTreeMap::new();
        if c != C64::new(0.0, 0.0) {
            coeffs.insert((a, b), c);
        }
        Self { coeffs }
    }

    pub fn from_terms(terms: &[(u32, u32, C64)]) -> Result<Self> {
        let mut p = Self::zero();
        for &(a, b, c) in terms {
            p = p.add(&Self::monomial(a, b, c));
        }
        if p.degree() > MAX_DEGREE {
            return Err(Error::Unsupported(format!("degree {} > {MAX_DEGREE}", p.degree())));
        }
        Ok(p)
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|(a, b)| a + b).max().unwrap_or(0)
    }

    pub fn eval(&self, q: f64, p: f64) -> C64 {
        self.coeffs
            .iter()
            .map(|(&(a, b), c)| c * q.powi(a as i32) * p.powi(b as i32))
            .sum()
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &o.coeffs {
            *out.coeffs.entry(*k).or_insert(C64::new(0.0, 0.0)) += v;
        }
        out.coeffs.retain(|_, v| v.norm() > 0.0);
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v *= c;
        }
        out.coeffs.retain(|_, v| v.norm() > 0.0);
        out
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for (&(a, b), c) in &self.coeffs {
            for (&(a2, b2), c2) in &o.coeffs {
                *out.coeffs.entry((a + a2, b + b2)).or_insert(C64::new(0.0, 0.0)) += c * c2;
            }
        }
        out.coeffs.retain(|_, v| v.norm() > 0.0);
        out
    }

    pub fn d_q(&self) -> Self {
        let mut out = Self::zero();
        for (&(a, b), c) in &self.coeffs {
            if a > 0 {
                out.coeffs.insert((a - 1, b), c * a as f64);
            }
        }
        out
    }

    pub fn d_p(&self) -> Self {
        let mut out = Self::zero();
        for (&(a, b), c) in &self.coeffs {
            if b > 0 {
                out.coeffs.insert((a, b - 1), c * b as f64);
            }
        }
        out
    }

    /// `h(Lz)` for a real `2×2` matrix `L`.
    pub fn substitute(&self, l: &Matrix2<f64>) -> Self {
        let lq = Self::monomial(1, 0, l[(0, 0)].into()).add(&Self::monomial(0, 1, l[(0, 1)].into()));
        let lp = Self::monomial(1, 0, l[(1, 0)].into()).add(&Self::monomial(0, 1, l[(1, 1)].into()));
        let mut out = Self::zero();
        for (&(a, b), c) in &self.coeffs {
            let mut term = Self::constant(*c);
            for _ in 0..a {
                term = term.mul(&lq);
            }
            for _ in 0..b {
                term = term.mul(&lp);
            }
            out = out.add(&term);
        }
        out
    }

    /// `e^{½∇ᵀΣ∇} h`; the series terminates after `degree/2` terms.
    pub fn heat(&self, sigma: &Matrix2<C64>) -> Self {
        let op = |h: &Self| -> Self {
            h.d_q().d_q().scale(0.5 * sigma[(0, 0)])
                .add(&h.d_q().d_p().scale(0.5 * (sigma[(0, 1)] + sigma[(1, 0)])))
                .add(&h.d_p().d_p().scale(0.5 * sigma[(1, 1)]))
        };
        let mut out = self.clone();
        let mut term = self.clone();
        let mut k = 1.0;
        while !term.coeffs.is_empty() {
            term = op(&term).scale(C64::from(1.0 / k));
            out = out.add(&term);
            k += 1.0;
        }
        out
    }

    /// `{"degree": d, "coeffs": {"q^a p^b": [re, im]}}`.
    pub fn to_json(&self) -> String {
        let coeffs: BTreeMap<String, [f64; 2]> = self
            .coeffs
            .iter()
            .map(|(&(a, b), c)| (format!("q^{a} p^{b}"), [c.re, c.im]))
            .collect();
        serde_json::to_string(&PolyJson {
            degree: self.degree(),
            coeffs,
        })
        .expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: PolyJson = serde_json::from_str(s)?;
        let mut terms = Vec::new();
        for (k, v) in j.coeffs {
            let parse = |t: &str, var: char| -> Result<u32> {
                t.trim()
                    .strip_prefix(var)
                    .and_then(|r| r.strip_prefix('^'))
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad monomial key {k:?}")))
            };
            let mut parts = k.split_whitespace();
            let a = parse(parts.next().unwrap_or(""), 'q')?;
            let b = parse(parts.next().unwrap_or(""), 'p')?;
            terms.push((a, b, C64::new(v[0], v[1])));
        }
        let p = Self::from_terms(&terms)?;
        if p.degree() > j.degree {
            return Err(Error::Format("declared degree too small".into()));
        }
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    degree: u32,
    coeffs: BTreeMap<String, [f64; 2]>,
}

/// `c · exp(−½zᵀQz + vᵀz)` with `z = (q, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussTerm {
    pub c: C64,
    pub q: Matrix2<C64>,
    pub v: Vector2<C64>,
}

impl GaussTerm {
    /// `c · exp(−((q−q0)² + (p−p0)²)/(2w²))`.
    pub fn isotropic(c: C64, q0: f64, p0: f64, w: f64) -> Self {
        let k = 1.0 / (w * w);
        let q = Matrix2::new(k, 0.0, 0.0, k).map(C64::from);
        let v = Vector2::new(q0 * k, p0 * k).map(C64::from);
        let c = c * (-(q0 * q0 + p0 * p0) * k / 2.0).exp();
        Self { c, q, v }
    }

    pub fn eval(&self, q: f64, p: f64) -> C64 {
        let z = Vector2::new(C64::from(q), C64::from(p));
        self.c * (-0.5 * (z.transpose() * self.q * z)[0] + (self.v.transpose() * z)[0]).exp()
    }

    /// `e^{½∇ᵀΣ∇}` applied exactly.
    pub fn heat(&self, sigma: &Matrix2<C64>) -> Result<Self> {
        let id = Matrix2::identity();
        let a = id + self.q * sigma;
        let ainv = a
            .try_inverse()
            .ok_or_else(|| Error::DecayCondition("singular heat flow on Gaussian".into()))?;
        let b = (id + sigma * self.q)
            .try_inverse()
            .ok_or_else(|| Error::DecayCondition("singular heat flow on Gaussian".into()))?;
        let q = self.q * b;
        let q = (q + q.transpose()) * C64::from(0.5);
        let v = b.transpose() * self.v;
        let c = self.c * a.determinant().sqrt().inv()
            * (0.5 * (self.v.transpose() * sigma * ainv * self.v)[0]).exp();
        Ok(Self { c, q, v })
    }

    /// `h ∘ L` for a real invertible `L`.
    pub fn compose(&self, l: &Matrix2<f64>) -> Self {
        let lc = l.map(C64::from);
        Self {
            c: self.c,
            q: lc.transpose() * self.q * lc,
            v: lc.transpose() * self.v,
        }
    }

    /// `∫ h dq dp`.
    pub fn integral(&self) -> C64 {
        let qinv = self.q.try_inverse().unwrap_or(Matrix2::zeros());
        let det = self.q.determinant();
        self.c * 2.0 * PI / det.sqrt() * (0.5 * (self.v.transpose() * qinv * self.v)[0]).exp()
    }
}

/// Samples on a [`PhaseGrid`], `values[(i, j)] = h(q_i, p_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSymbol {
    pub grid: PhaseGrid,
    pub values: Array2<C64>,
}

impl GridSymbol {
    /// Catmull–Rom bicubic interpolation; zero outside the lattice.
    pub fn interp(&self, q: f64, p: f64) -> C64 {
        let g = &self.grid;
        let u = (q - g.q_min) / g.q_step;
        let v = (p - g.p_min) / g.p_step;
        if u < 0.0 || v < 0.0 || u > (g.mq - 1) as f64 || v > (g.mp - 1) as f64 {
            return C64::new(0.0, 0.0);
        }
        let (i0, j0) = (u.floor() as isize, v.floor() as isize);
        let (fu, fv) = (u - i0 as f64, v - j0 as f64);
        let w = |t: f64| -> [f64; 4] {
            let t2 = t * t;
            let t3 = t2 * t;
            [
                -0.5 * t3 + t2 - 0.5 * t,
                1.5 * t3 - 2.5 * t2 + 1.0,
                -1.5 * t3 + 2.0 * t2 + 0.5 * t,
                0.5 * t3 - 0.5 * t2,
            ]
        };
        let (wu, wv) = (w(fu), w(fv));
        let mut acc = C64::new(0.0, 0.0);
        for (a, wa) in wu.iter().enumerate() {
            let i = (i0 + a as isize - 1).clamp(0, g.mq as isize - 1) as usize;
            for (b, wb) in wv.iter().enumerate() {
                let j = (j0 + b as isize - 1).clamp(0, g.mp as isize - 1) as usize;
                acc += self.values[(i, j)] * (wa * wb);
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Symbol {
    Polynomial(Polynomial),
    Grid(GridSymbol),
    /// Sum of Gaussian terms.
    Gaussian(Vec<GaussTerm>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolField {
    pub symbol: Symbol,
    pub hbar: f64,
    /// Multiplicative constant relating this field to the crate's Weyl
    /// convention, when one was measured.
    pub calibration: Option<C64>,
}

impl SymbolField {
    pub fn polynomial(p: Polynomial, hbar: f64) -> Result<Self> {
        if p.degree() > MAX_DEGREE {
            return Err(Error::Unsupported(format!("degree {} > {MAX_DEGREE}", p.degree())));
        }
        Ok(Self {
            symbol: Symbol::Polynomial(p),
            hbar,
            calibration: None,
        })
    }

    pub fn gaussian(terms: Vec<GaussTerm>, hbar: f64) -> Self {
        Self {
            symbol: Symbol::Gaussian(terms),
            hbar,
            calibration: None,
        }
    }

    pub fn grid(grid: PhaseGrid, values: Array2<C64>, hbar: f64) -> Result<Self> {
        if values.dim() != (grid.mq, grid.mp) {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite symbol sample".into()));
        }
        Ok(Self {
            symbol: Symbol::Grid(GridSymbol { grid, values }),
            hbar,
            calibration: None,
        })
    }

    pub fn constant(c: C64, hbar: f64) -> Self {
        Self {
            symbol: Symbol::Polynomial(Polynomial::constant(c)),
            hbar,
            calibration: None,
        }
    }

    pub fn eval(&self, q: f64, p: f64) -> C64 {
        match &self.symbol {
            Symbol::Polynomial(poly) => poly.eval(q, p),
            Symbol::Grid(g) => g.interp(q, p),
            Symbol::Gaussian(ts) => ts.iter().map(|t| t.eval(q, p)).sum(),
        }
    }

    /// Samples onto a lattice (exact node values for grid symbols on the same
    /// lattice).
    pub fn sample(&self, grid: &PhaseGrid) -> GridSymbol {
        if let Symbol::Grid(g) = &self.symbol {
            if g.grid.same_as(grid) {
                return g.clone();
            }
        }
        let mut values = Array2::zeros((grid.mq, grid.mp));
        values
            .axis_iter_mut(ndarray::Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                for j in 0..grid.mp {
                    row[j] = self.eval(grid.q(i), grid.p(j));
                }
            });
        GridSymbol {
            grid: *grid,
            values,
        }
    }

    pub fn as_grid(&self) -> Option<&GridSymbol> {
        match &self.symbol {
            Symbol::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// CSV with header `q,p,re,im` (grid symbols only).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let g = self
            .as_grid()
            .ok_or_else(|| Error::Unsupported("CSV output needs a grid symbol".into()))?;
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "q,p,re,im")?;
        for i in 0..g.grid.mq {
            for j in 0..g.grid.mp {
                let z = g.values[(i, j)];
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", g.grid.q(i), g.grid.p(j), z.re, z.im)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, hbar: f64) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty file".into()))??;
        if header.trim() != "q,p,re,im" {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let mut rows: Vec<[f64; 4]> = Vec::new();
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
            if f.len() != 4 {
                return Err(Error::Format("expected 4 fields".into()));
            }
            rows.push([f[0], f[1], f[2], f[3]]);
        }
        let mp = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
        if mp < 2 || rows.len() % mp != 0 || rows.len() / mp < 2 {
            return Err(Error::Format("rows do not form a lattice".into()));
        }
        let mq = rows.len() / mp;
        let grid = PhaseGrid {
            q_min: rows[0][0],
            q_step: rows[mp][0] - rows[0][0],
            mq,
            p_min: rows[0][1],
            p_step: rows[1][1] - rows[0][1],
            mp,
        };
        let values = Array2::from_shape_fn((mq, mp), |(i, j)| {
            let r = rows[i * mp + j];
            C64::new(r[2], r[3])
        });
        Self::grid(grid, values, hbar)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SymbolJson {
    Polynomial {
        hbar: f64,
        degree: u32,
        coeffs: BTreeMap<String, [f64; 2]>,
    },
    Gaussian {
        hbar: f64,
        /// `[c, Q00, Q01, Q10, Q11, v0, v1]`, each `[re, im]`.
        terms: Vec<[[f64; 2]; 7]>,
    },
    Grid {
        hbar: f64,
        q_min: f64,
        q_step: f64,
        mq: usize,
        p_min: f64,
        p_step: f64,
        mp: usize,
        values: Vec<[f64; 2]>,
    },
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(v: [f64; 2]) -> C64 {
    C64::new(v[0], v[1])
}

impl SymbolField {
    /// Tagged JSON (`"kind"`: polynomial, gaussian or grid).
    pub fn to_json_value(&self) -> serde_json::Value {
        let hbar = self.hbar;
        let j = match &self.symbol {
            Symbol::Polynomial(p) => {
                let v: PolyJson = serde_json::from_str(&p.to_json()).expect("own output");
                SymbolJson::Polynomial {
                    hbar,
                    degree: v.degree,
                    coeffs: v.coeffs,
                }
            }
            Symbol::Gaussian(ts) => SymbolJson::Gaussian {
                hbar,
                terms: ts
                    .iter()
                    .map(|t| {
                        [
                            pair(t.c),
                            pair(t.q[(0, 0)]),
                            pair(t.q[(0, 1)]),
                            pair(t.q[(1, 0)]),
                            pair(t.q[(1, 1)]),
                            pair(t.v[0]),
                            pair(t.v[1]),
                        ]
                    })
                    .collect(),
            },
            Symbol::Grid(g) => SymbolJson::Grid {
                hbar,
                q_min: g.grid.q_min,
                q_step: g.grid.q_step,
                mq: g.grid.mq,
                p_min: g.grid.p_min,
                p_step: g.grid.p_step,
                mp: g.grid.mp,
                values: g.values.iter().map(|z| pair(*z)).collect(),
            },
        };
        serde_json::to_value(j).expect("serializable")
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        match serde_json::from_value::<SymbolJson>(v)? {
            SymbolJson::Polynomial { hbar, degree, coeffs } => {
                let s = serde_json::to_string(&PolyJson { degree, coeffs })?;
                Self::polynomial(Polynomial::from_json(&s)?, hbar)
            }
            SymbolJson::Gaussian { hbar, terms } => Ok(Self::gaussian(
                terms
                    .iter()
                    .map(|t| GaussTerm {
                        c: unpair(t[0]),
                        q: Matrix2::new(unpair(t[1]), unpair(t[2]), unpair(t[3]), unpair(t[4])),
                        v: Vector2::new(unpair(t[5]), unpair(t[6])),
                    })
                    .collect(),
                hbar,
            )),
            SymbolJson::Grid {
                hbar,
                q_min,
                q_step,
                mq,
                p_min,
                p_step,
                mp,
                values,
            } => {
                if values.len() != mq * mp {
                    return Err(Error::Format("grid symbol size mismatch".into()));
                }
                let grid = PhaseGrid {
                    q_min,
                    q_step,
                    mq,
                    p_min,
                    p_step,
                    mp,
                };
                let arr = Array2::from_shape_fn((mq, mp), |(i, j)| unpair(values[i * mp + j]));
                Self::grid(grid, arr, hbar)
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }
}

/// Inverse metric of `α`: the covariance shape `[[1/A, B/A], [B/A, A + B²/A]]`
/// with `A = Im α/|α|²`, `B = −Re α/|α|²`.
pub fn width_metric_inverse(alpha: C64) -> Matrix2<f64> {
    let n = alpha.norm_sqr();
    let a = alpha.im / n;
    let b = -alpha.re / n;
    Matrix2::new(1.0 / a, b / a, b / a, a + b * b / a)
}

/// `Σ = (ħ/2)(G_from⁻¹ − G_to⁻¹)`: `h_to = e^{½∇ᵀΣ∇} h_from` gives the same
/// Töplitz operator.
pub fn reparam_covariance(alpha_from: C64, alpha_to: C64, hbar: f64) -> Matrix2<f64> {
    (width_metric_inverse(alpha_from) - width_metric_inverse(alpha_to)) * (hbar / 2.0)
}

/// The operator as printed, `e^{−iħ/4(α−α′)Δ_ξ + iħ/4(1/α−1/α′)Δ_x}`, as a
/// covariance for [`Polynomial::heat`] (from `α′` to `α`).
pub fn printed_reparam_covariance(alpha: C64, alpha_p: C64, hbar: f64) -> Matrix2<C64> {
    let qq = I * hbar / 2.0 * (alpha.inv() - alpha_p.inv());
    let pp = -I * hbar / 2.0 * (alpha - alpha_p);
    Matrix2::new(qq, C64::new(0.0, 0.0), C64::new(0.0, 0.0), pp)
}

/// The printed decay condition `Im(α−α′) > 0`, `Im(1/α − 1/α′) < 0`.
pub fn printed_decay_condition(alpha: C64, alpha_p: C64) -> bool {
    (alpha - alpha_p).im > 0.0 && (alpha.inv() - alpha_p.inv()).im < 0.0
}

/// Rewrites `h` (a Töplitz symbol for width `alpha_from`) as the symbol for
/// `alpha_to` producing the same operator.
pub fn reparametrize(
    h: &SymbolField,
    alpha_from: &WidthParameter,
    alpha_to: &WidthParameter,
) -> Result<SymbolField> {
    let sigma = reparam_covariance(alpha_from.scalar_value(), alpha_to.scalar_value(), h.hbar);
    apply_heat(h, &sigma.map(C64::from))
}

/// `e^{½∇ᵀΣ∇} h` in every representation. The grid path requires a bounded
/// multiplier (`Re Σ` positive semidefinite).
pub fn apply_heat(h: &SymbolField, sigma: &Matrix2<C64>) -> Result<SymbolField> {
    let symbol = match &h.symbol {
        Symbol::Polynomial(p) => Symbol::Polynomial(p.heat(sigma)),
        Symbol::Gaussian(ts) => Symbol::Gaussian(ts.iter().map(|t| t.heat(sigma)).collect::<Result<_>>()?),
        Symbol::Grid(g) => {
            let re = sigma.map(|z| z.re);
            let ev = re.symmetric_eigenvalues();
            if ev.min() < -1e-14 * ev.max().abs().max(1.0) {
                return Err(Error::DecayCondition(format!(
                    "multiplier unbounded: Re Σ has eigenvalue {:.3e}",
                    ev.min()
                )));
            }
            Symbol::Grid(grid_multiplier(g, |wq, wp| {
                (-0.5 * (sigma[(0, 0)] * wq * wq + (sigma[(0, 1)] + sigma[(1, 0)]) * wq * wp + sigma[(1, 1)] * wp * wp)).exp()
            }))
        }
    };
    Ok(SymbolField {
        symbol,
        hbar: h.hbar,
        calibration: h.calibration,
    })
}

/// Applies `m(ω_q, ω_p)` in the Fourier domain of the lattice (`∂ ↔ iω`).
fn grid_multiplier(g: &GridSymbol, m: impl Fn(f64, f64) -> C64) -> GridSymbol {
    let (mq, mp) = (g.grid.mq, g.grid.mp);
    let dq = CenteredDft::new(mq);
    let dp = CenteredDft::new(mp);
    let mut v = g.values.clone();
    let cq = (mq as f64 - 1.0) / 2.0;
    let cp = (mp as f64 - 1.0) / 2.0;
    let fq = |k: usize| 2.0 * PI * (k as f64 - (mq / 2) as f64) / (mq as f64 * g.grid.q_step);
    let fp = |k: usize| 2.0 * PI * (k as f64 - (mp / 2) as f64) / (mp as f64 * g.grid.p_step);
    transform_2d(&mut v, &dq, &dp, (cq, (mq / 2) as f64), (cp, (mp / 2) as f64), -1.0);
    for i in 0..mq {
        for j in 0..mp {
            v[(i, j)] *= m(fq(i), fp(j));
        }
    }
    transform_2d(&mut v, &dq, &dp, ((mq / 2) as f64, cq), ((mp / 2) as f64, cp), 1.0);
    v.mapv_inplace(|z| z / (mq * mp) as f64);
    GridSymbol {
        grid: g.grid,
        values: v,
    }
}

fn transform_2d(
    v: &mut Array2<C64>,
    dq: &CenteredDft,
    dp: &CenteredDft,
    (ci_q, co_q): (f64, f64),
    (ci_p, co_p): (f64, f64),
    sign: f64,
) {
    let (mq, mp) = v.dim();
    let mut buf = vec![C64::new(0.0, 0.0); mp];
    for i in 0..mq {
        for j in 0..mp {
            buf[j] = v[(i, j)];
        }
        dp.apply(&mut buf, ci_p, co_p, sign);
        for j in 0..mp {
            v[(i, j)] = buf[j];
        }
    }
    let mut buf = vec![C64::new(0.0, 0.0); mq];
    for j in 0..mp {
        for i in 0..mq {
            buf[i] = v[(i, j)];
        }
        dq.apply(&mut buf, ci_q, co_q, sign);
        for i in 0..mq {
            v[(i, j)] = buf[i];
        }
    }
}

/// Weyl symbol of `|ψ_a⟩⟨ψ_b|` in the crate's convention, in closed form.
pub fn weyl_dyad_closed_form(a: &CoherentLabel, b: &CoherentLabel, x: f64, xi: f64, hbar: f64) -> C64 {
    label_gauss(a, hbar).weyl_dyad(&label_gauss(b, hbar), x, xi, hbar)
}

/// The rank-one formula exactly as printed, with `β = iα`, `β′ = iα′`.
/// Since `Re(iα) < 0` it does not define a tempered function; it is kept for
/// reporting only.
pub fn weyl_lemma_printed(a: &CoherentLabel, b: &CoherentLabel, x: f64, xi: f64, hbar: f64) -> C64 {
    lemma_formula(a, b, x, xi, hbar, |al| I * al, 1.0, 1.0 / hbar)
}

/// The same formula read with `β = i/α`, the phase `(p−p′)x/ħ`, the
/// prefactor `1/(πħ)` of its diagonal special case, and the state phase
/// `e^{−ipq/2ħ}`. Agrees with [`weyl_rank_one`] to rounding.
pub fn weyl_lemma_corrected(a: &CoherentLabel, b: &CoherentLabel, x: f64, xi: f64, hbar: f64) -> C64 {
    let (q, p) = (a.z.q[0], a.z.p[0]);
    let (qp, pp) = (b.z.q[0], b.z.p[0]);
    let ph = C64::from_polar(1.0, -(q * p - qp * pp) / (2.0 * hbar));
    ph * lemma_formula(a, b, x, xi, hbar, |al| I / al, 1.0 / hbar, 1.0 / (PI * hbar))
}

#[allow(clippy::too_many_arguments)]
fn lemma_formula(
    a: &CoherentLabel,
    b: &CoherentLabel,
    x: f64,
    xi: f64,
    hbar: f64,
    width: impl Fn(C64) -> C64,
    lin: f64,
    norm: f64,
) -> C64 {
    let beta = width(a.alpha.scalar_value());
    let betap = width(b.alpha.scalar_value());
    let bb = betap.conj();
    let s = beta + bb;
    let (q, p) = (a.z.q[0], a.z.p[0]);
    let (qp, pp) = (b.z.q[0], b.z.p[0]);
    let pref = (2.0 * C64::from(beta.re * betap.re).sqrt() / s).sqrt() * norm;
    let e1 = -beta * bb / (2.0 * s * hbar) * (q + qp - 2.0 * x).powi(2);
    let e2 = -(p + pp - 2.0 * xi).powi(2) / (2.0 * s * hbar);
    let e3 = I * ((p - pp) * x * lin - (p + pp - 2.0 * xi) * (beta * (x - q) - bb * (x - qp)) / (s * hbar));
    pref * (e1 + e2 + e3).exp()
}

/// Measured constant `κ` with `wigner_numeric ≈ κ · weyl_rank_one`, plus
/// relative residuals of the printed and corrected formulas on the probe pairs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WeylCalibration {
    pub kappa: [f64; 2],
    pub printed_residual: f64,
    pub corrected_residual: f64,
}

impl WeylCalibration {
    pub fn kappa(&self) -> C64 {
        C64::new(self.kappa[0], self.kappa[1])
    }
}

/// Calibrates `κ` once on the diagonal dyad of `ψ^i_0` at its peak node, then
/// scores the printed and corrected formulas on that pair and one
/// off-diagonal pair.
pub fn calibrate_weyl(grid: &GridSpec) -> Result<WeylCalibration> {
    let h = grid.hbar;
    let l = CoherentLabel::one(0.0, 0.0, I)?;
    let w = wigner_numeric(&dyad_matrix(&l, &l, grid)?)?;
    let g = w.as_grid().expect("grid symbol");
    let (mut bi, mut bj, mut best) = (0, 0, -1.0);
    for i in 0..g.grid.mq {
        for j in 0..g.grid.mp {
            let v = g.values[(i, j)].norm();
            if v > best {
                best = v;
                bi = i;
                bj = j;
            }
        }
    }
    let kappa = g.values[(bi, bj)] / lemma_normalised(&l, &l, g.grid.q(bi), g.grid.p(bj), h);
    let off = (
        CoherentLabel::one(0.5, 0.5, 2.0 * I)?,
        CoherentLabel::one(0.0, -0.25, I)?,
    );
    let mut printed = 0.0_f64;
    let mut corrected = 0.0_f64;
    for (la, lb) in [(l.clone(), l.clone()), off] {
        let w = wigner_numeric(&dyad_matrix(&la, &lb, grid)?)?;
        let g = w.as_grid().expect("grid symbol");
        let (mut e1, mut e2, mut den) = (0.0_f64, 0.0_f64, 0.0_f64);
        let pmax = g.grid.p(g.grid.mp - 1) / 2.0;
        for (i, j) in g.grid.interior(grid.half_width / 2.0, pmax) {
            let (x, xi) = (g.grid.q(i), g.grid.p(j));
            let v = g.values[(i, j)] / kappa;
            e1 = e1.max((v - weyl_lemma_printed(&la, &lb, x, xi, h)).norm());
            e2 = e2.max((v - weyl_lemma_corrected(&la, &lb, x, xi, h)).norm());
            den = den.max(v.norm());
        }
        printed = printed.max(e1 / den);
        corrected = corrected.max(e2 / den);
    }
    Ok(WeylCalibration {
        kappa: [kappa.re, kappa.im],
        printed_residual: printed,
        corrected_residual: corrected,
    })
}

/// Closed form in the normalisation with `∫σ dx dξ = trace`.
fn lemma_normalised(a: &CoherentLabel, b: &CoherentLabel, x: f64, xi: f64, hbar: f64) -> C64 {
    weyl_dyad_closed_form(a, b, x, xi, hbar) / (2.0 * PI * hbar)
}

/// Weyl symbol of `|ψ_a⟩⟨ψ_b|` sampled on `grid`, normalised so that
/// `∫σ = trace`; `calibration` records `κ`.
pub fn weyl_rank_one(
    a: &CoherentLabel,
    b: &CoherentLabel,
    grid: &PhaseGrid,
    hbar: f64,
    calibration: &WeylCalibration,
) -> Result<SymbolField> {
    if a.n() != 1 || b.n() != 1 {
        return Err(Error::Unsupported("rank-one Weyl symbol needs n = 1".into()));
    }
    let s = (label_gauss(a, hbar).q2 + label_gauss(b, hbar).q2.conj()) / 4.0;
    if !(s.re < 0.0) {
        return Err(Error::DegenerateWidth("β + conj β′ degenerate".into()));
    }
    let mut values = Array2::zeros((grid.mq, grid.mp));
    for i in 0..grid.mq {
        for j in 0..grid.mp {
            values[(i, j)] = lemma_normalised(a, b, grid.q(i), grid.p(j), hbar);
        }
    }
    let mut f = SymbolField::grid(*grid, values, hbar)?;
    f.calibration = Some(calibration.kappa());
    Ok(f)
}

/// Kernel `ψ_a(x) conj ψ_b(y)` of a coherent dyad.
pub fn dyad_matrix(a: &CoherentLabel, b: &CoherentLabel, grid: &GridSpec) -> Result<OperatorMatrix> {
    let ga = label_gauss(a, grid.hbar);
    let gb = label_gauss(b, grid.hbar).conj();
    Ok(OperatorMatrix::from_kernel(*grid, |x, y| ga.eval(x[0]) * gb.eval(y[0])))
}

/// Lattice of [`wigner_numeric`]: spatial nodes × `2N` frequencies spaced
/// `πħ/(2L)`.
pub fn wigner_grid(grid: &GridSpec) -> PhaseGrid {
    let n = grid.points;
    let dk = PI * grid.hbar / (2.0 * grid.half_width);
    PhaseGrid {
        q_min: grid.node(0),
        q_step: grid.dx(),
        mq: n,
        p_min: -(n as f64 - 0.5) * dk,
        p_step: dk,
        mp: 2 * n,
    }
}

/// `σ(x_i, ξ) = Δx Σ_m K(x_i + mΔx/2, x_i − mΔx/2) e^{−imΔxξ/ħ}`. Even `m`
/// read the kernel on nodes; odd `m` read a copy shifted half a node in
/// both arguments by spectral interpolation.
pub fn wigner_numeric(m: &OperatorMatrix) -> Result<SymbolField> {
    let grid = m.grid;
    if grid.n != 1 {
        return Err(Error::Unsupported("Wigner transform needs n = 1".into()));
    }
    let n = grid.points;
    let khh = half_shift_both(&m.entries, &grid);
    let dft = CenteredDft::new(2 * n);
    let pg = wigner_grid(&grid);
    let mut values = Array2::zeros((n, 2 * n));
    let dx = grid.dx();
    values
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut buf = vec![C64::new(0.0, 0.0); 2 * n];
            let ii = i as isize;
            let nn = n as isize;
            for (k, slot) in buf.iter_mut().enumerate() {
                let mm = k as isize - nn;
                let v = if mm % 2 == 0 {
                    let l = mm / 2;
                    let (u, w) = (ii + l, ii - l);
                    if u >= 0 && u < nn && w >= 0 && w < nn {
                        m.entries[(u as usize, w as usize)]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                } else {
                    let l = (mm - 1).div_euclid(2);
                    let (u, w) = (ii + l, ii - l - 1);
                    if u >= 0 && u < nn && w >= 0 && w < nn {
                        khh[(u as usize, w as usize)]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                };
                *slot = v;
            }
            dft.apply(&mut buf, n as f64, n as f64 - 0.5, -1.0);
            for (r, v) in row.iter_mut().zip(buf) {
                *r = v * dx;
            }
        });
    SymbolField::grid(pg, values, grid.hbar)
}

/// `H K Hᵀ` with `(Hf)(x) = f(x + Δx/2)`.
fn half_shift_both(k: &Array2<C64>, grid: &GridSpec) -> Array2<C64> {
    let n = grid.points;
    let dft = CenteredDft::new(n);
    let c = (n as f64 - 1.0) / 2.0;
    let dx = grid.dx();
    let phase: Vec<C64> = (0..n)
        .map(|j| C64::from_polar(1.0, PI * (j as f64 - c) * dx / (2.0 * grid.half_width)))
        .collect();
    let shift = |buf: &mut [C64]| {
        dft.apply(buf, c, c, -1.0);
        for (v, ph) in buf.iter_mut().zip(&phase) {
            *v *= ph;
        }
        dft.apply(buf, c, c, 1.0);
        for v in buf.iter_mut() {
            *v /= n as f64;
        }
    };
    let mut out = k.clone();
    out.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .for_each(|mut row| {
            let mut buf = row.to_vec();
            shift(&mut buf);
            for (r, v) in row.iter_mut().zip(buf) {
                *r = v;
            }
        });
    out.axis_iter_mut(ndarray::Axis(1))
        .into_par_iter()
        .for_each(|mut col| {
            let mut buf = col.to_vec();
            shift(&mut buf);
            for (r, v) in col.iter_mut().zip(buf) {
                *r = v;
            }
        });
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianMode {
    With,
    Without,
}

/// `h ∘ T⁻¹`, times `|det T|⁻¹` in [`JacobianMode::With`].
pub fn pushforward(h: &SymbolField, t: &TransportMatrix, mode: JacobianMode) -> Result<SymbolField> {
    if t.n() != 1 {
        return Err(Error::Unsupported("push-forward needs n = 1".into()));
    }
    let tm = Matrix2::from_iterator(t.matrix().transpose().iter().copied());
    let tinv = tm
        .try_inverse()
        .ok_or_else(|| Error::SingularMap("push-forward".into()))?;
    let jac = match mode {
        JacobianMode::With => 1.0 / tm.determinant().abs(),
        JacobianMode::Without => 1.0,
    };
    compose_linear(h, &tinv, jac)
}

/// `c · h ∘ L`.
pub fn compose_linear(h: &SymbolField, l: &Matrix2<f64>, c: f64) -> Result<SymbolField> {
    let symbol = match &h.symbol {
        Symbol::Polynomial(p) => Symbol::Polynomial(p.substitute(l).scale(C64::from(c))),
        Symbol::Gaussian(ts) => Symbol::Gaussian(
            ts.iter()
                .map(|t| {
                    let mut g = t.compose(l);
                    g.c *= c;
                    g
                })
                .collect(),
        ),
        Symbol::Grid(g) => {
            let mut values = Array2::zeros((g.grid.mq, g.grid.mp));
            for i in 0..g.grid.mq {
                for j in 0..g.grid.mp {
                    let (q, p) = (g.grid.q(i), g.grid.p(j));
                    let z = l * Vector2::new(q, p);
                    values[(i, j)] = g.interp(z[0], z[1]) * c;
                }
            }
            Symbol::Grid(GridSymbol {
                grid: g.grid,
                values,
            })
        }
    };
    Ok(SymbolField {
        symbol,
        hbar: h.hbar,
        calibration: h.calibration,
    })
}

/// Weyl symbol of the product of the operators with Weyl symbols `w1`, `w2`,
/// computed as a twisted convolution of their spreading functions
/// `ŵ(a,b) = ∫ w e^{−i(aq+bp)/ħ}` on an integer-centred frequency lattice.
/// `sign = −1` reflects the second factor (`ζ′ → −ζ′` in the phase), the form
/// taken by products involving an orientation-reversing map.
pub fn twisted_convolution(w1: &SymbolField, w2: &SymbolField) -> Result<SymbolField> {
    twisted_convolution_signed(w1, w2, 1.0)
}

pub fn twisted_convolution_signed(w1: &SymbolField, w2: &SymbolField, sign: f64) -> Result<SymbolField> {
    let (g1, g2) = match (w1.as_grid(), w2.as_grid()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Unsupported("twisted convolution needs grid symbols".into())),
    };
    if !g1.grid.same_as(&g2.grid) {
        return Err(Error::GridMismatch);
    }
    let grid = g1.grid;
    let h = w1.hbar;
    let (mq, mp) = (grid.mq, grid.mp);
    let dq = CenteredDft::new(mq);
    let dp = CenteredDft::new(mp);
    let cq = (mq as f64 - 1.0) / 2.0;
    let cp = (mp as f64 - 1.0) / 2.0;
    let (oq, op) = ((mq / 2) as f64, (mp / 2) as f64);
    let spread = |g: &GridSymbol| {
        let mut v = g.values.clone();
        transform_2d(&mut v, &dq, &dp, (cq, oq), (cp, op), -1.0);
        v.mapv_inplace(|z| z * grid.cell());
        v
    };
    let s1 = spread(g1);
    let s2 = spread(g2);
    // frequency lattice a_k = (k − M/2)·2πħ/(MΔq)
    let da = 2.0 * PI * h / (mq as f64 * grid.q_step);
    let db = 2.0 * PI * h / (mp as f64 * grid.p_step);
    let pref = da * db / (2.0 * PI * h).powi(2);
    let mut out = Array2::zeros((mq, mp));
    out.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(k, mut row)| {
            let ak = k as isize - mq as isize / 2;
            for l in 0..mp {
                let bl = l as isize - mp as isize / 2;
                let mut acc = C64::new(0.0, 0.0);
                for k2 in 0..mq {
                    let a2 = k2 as isize - mq as isize / 2;
                    let ka = ak - a2 + mq as isize / 2;
                    if ka < 0 || ka >= mq as isize {
                        continue;
                    }
                    for l2 in 0..mp {
                        let b2 = l2 as isize - mp as isize / 2;
                        let lb = bl - b2 + mp as isize / 2;
                        if lb < 0 || lb >= mp as isize {
                            continue;
                        }
                        // ω((a−a′, b−b′), (a′, b′)) = (a−a′)b′ − (b−b′)a′
                        let w = ((ak - a2) * b2 - (bl - b2) * a2) as f64 * da * db;
                        let ph = C64::from_polar(1.0, -sign * w / (2.0 * h));
                        acc += s1[(ka as usize, lb as usize)] * s2[(k2, l2)] * ph;
                    }
                }
                row[l] = acc * pref;
            }
        });
    // back to (q, p): σ = (2πħ)^{-2} ∫ σ̂ e^{i(aq+bp)/ħ} da db
    transform_2d(&mut out, &dq, &dp, (oq, cq), (op, cp), 1.0);
    let back = da * db / (2.0 * PI * h).powi(2);
    out.mapv_inplace(|z| z * back);
    SymbolField::grid(grid, out, h)
}

/// Compares the Weyl symbol of `U(S)⁻¹HU(S)` with `σ_H ∘ M` for the candidate
/// maps `M ∈ {S⁻¹, S, J′SJ′, J′S⁻¹J′}` at interior nodes (`|q|, |p| ≤ r`).
/// `U(S)` is the dense kernel; `S` must be real, so `U(S)⁻¹ = U(S)†`.
pub fn weyl_pushforward_check(h: &OperatorMatrix, s: &ComplexSymplectic, r: f64) -> Result<AuditReport> {
    if !s.is_real(1e-14) || s.det_class() != 1 {
        return Err(Error::Unsupported("push-forward check needs real S with det 1".into()));
    }
    let grid = h.grid;
    let u = crate::metaplectic::kernel_build(s, &grid)?.matrix;
    let conj = crate::hilbert_grid::operator_compose(
        &u.adjoint(),
        &crate::hilbert_grid::operator_compose(h, &u)?,
    )?;
    let lhs = wigner_numeric(&conj)?;
    let sig = wigner_numeric(h)?;
    let lg = lhs.as_grid().unwrap();
    let sg = sig.as_grid().unwrap();
    let si = s.inverse()?;
    let cands = [
        ("σ_H ∘ S⁻¹", si.clone()),
        ("σ_H ∘ S", s.clone()),
        ("σ_H ∘ J′SJ′", s.reflected()),
        ("σ_H ∘ J′S⁻¹J′", si.reflected()),
    ];
    let idx = lg.grid.interior(r, r);
    let scale = idx.iter().fold(0.0_f64, |a, &(i, j)| a.max(lg.values[(i, j)].norm())).max(1e-300);
    let mut report = AuditReport::new("Weyl push-forward", 1e-3);
    for (name, m) in cands {
        let mr = m.matrix().map(|z| z.re);
        let mut worst = 0.0_f64;
        for &(i, j) in &idx {
            let (q, p) = (lg.grid.q(i), lg.grid.p(j));
            let (q2, p2) = (mr[(0, 0)] * q + mr[(0, 1)] * p, mr[(1, 0)] * q + mr[(1, 1)] * p);
            let d = (lg.values[(i, j)] - sg.interp(q2, p2)).norm();
            worst = worst.max(d / scale);
        }
        report.push(name, worst);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_on_q_squared() {
        let h = 0.5;
        let p = Polynomial::monomial(2, 0, C64::from(1.0));
        let s = reparam_covariance(I, 2.0 * I, h).map(C64::from);
        let out = p.heat(&s);
        assert!((out.eval(0.0, 0.0) + h / 2.0).norm() < 1e-15);
        assert!((out.eval(1.0, 3.0) - (1.0 - h / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn gaussian_heat_matches_polynomial_moments() {
        let s = Matrix2::new(0.3, 0.1, 0.1, 0.2).map(C64::from);
        let g = GaussTerm::isotropic(C64::from(1.0), 0.2, -0.1, 0.9);
        let out = g.heat(&s).unwrap();
        // heat preserves the integral
        assert!((out.integral() - g.integral()).norm() < 1e-12);
    }

    #[test]
    fn poly_json_round_trip() {
        let p = Polynomial::from_terms(&[(2, 0, C64::new(1.0, 0.5)), (0, 3, C64::from(-2.0))]).unwrap();
        assert_eq!(Polynomial::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn wigner_of_identity_is_one() {
        let g = GridSpec::one_d(64, 8.0, 0.5).unwrap();
        let w = wigner_numeric(&OperatorMatrix::identity(g)).unwrap();
        let gs = w.as_grid().unwrap();
        for i in 0..64 {
            for j in 0..128 {
                assert!((gs.values[(i, j)] - 1.0).norm() < 1e-10);
            }
        }
    }
}
