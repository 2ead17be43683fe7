//! Coherent states `ψ^α_z`, their closed-form overlaps, and the complex
//! Lagrangian `{x + αξ = q + αp}` attached to each state.
//!
//! In `n` dimensions the exponent is `−(i/2ħ)(x−q)·α⁻¹(x−q) + ip·x/ħ − iq·p/2ħ`
//! with prefactor `(πħ)^{−n/4} |det Im α⁻¹|^{1/4}`; at `n = 1` this is the
//! usual `(Im α/πħ|α|²)^{1/4} e^{−i(x−q)²/2ħα} e^{ipx/ħ} e^{−ipq/2ħ}`.

use crate::gauss::Gauss1;
use crate::hilbert_grid::{GridSpec, WaveFunction};
use crate::report::AuditReport;
use crate::symplectic_core::{
    moebius, reflected_transport, transport_matrix, CMat, ComplexSymplectic, PhasePoint,
    TransportMatrix, WidthParameter,
};
use crate::{Error, Result, C64};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct CoherentLabel {
    pub z: PhasePoint,
    pub alpha: WidthParameter,
}

#[derive(Serialize, Deserialize)]
struct LabelJson {
    q: Vec<f64>,
    p: Vec<f64>,
    alpha: Vec<[f64; 2]>,
}

impl CoherentLabel {
    pub fn new(z: PhasePoint, alpha: WidthParameter) -> Result<Self> {
        if z.n() != alpha.n() {
            return Err(Error::DimensionMismatch("label point and width".into()));
        }
        if !alpha.is_admissible() {
            return Err(Error::InadmissibleWidth(format!("{}", alpha.value())));
        }
        Ok(Self { z, alpha })
    }

    /// One-dimensional label `(q, p, α)`.
    pub fn one(q: f64, p: f64, alpha: C64) -> Result<Self> {
        Self::new(PhasePoint::one(q, p), WidthParameter::scalar(alpha)?)
    }

    pub fn n(&self) -> usize {
        self.z.n()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&LabelJson {
            q: self.z.q.clone(),
            p: self.z.p.clone(),
            alpha: self.alpha.to_flat(),
        })
        .expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: LabelJson = serde_json::from_str(s)?;
        Self::new(PhasePoint::new(j.q, j.p)?, WidthParameter::from_flat(&j.alpha)?)
    }
}

/// `ψ^β_{(q,p)}` as a [`Gauss1`] (no admissibility check).
pub fn gauss1_of(beta: C64, q: f64, p: f64, hbar: f64) -> Gauss1 {
    let i = C64::new(0.0, 1.0);
    let q2 = -i / (2.0 * hbar * beta);
    let q1 = i * q / (hbar * beta) + i * p / hbar;
    let norm = 0.25 * (beta.im / (PI * hbar * beta.norm_sqr())).ln();
    let q0 = -i * q * q / (2.0 * hbar * beta) - i * p * q / (2.0 * hbar) + norm;
    Gauss1::new(q2, q1, q0)
}

/// The one-dimensional coherent state of `label` as a [`Gauss1`].
pub fn label_gauss(label: &CoherentLabel, hbar: f64) -> Gauss1 {
    gauss1_of(label.alpha.scalar_value(), label.z.q[0], label.z.p[0], hbar)
}

/// Exponent of `ψ^α_z` written as `−½xᵀMx + bᵀx + c`.
pub fn exponent_nd(alpha: &WidthParameter, z: &PhasePoint, hbar: f64) -> Result<(CMat, DVector<C64>, C64)> {
    let binv = alpha
        .value()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateWidth("α not invertible".into()))?;
    let i = C64::new(0.0, 1.0);
    let m = &binv * (i / hbar);
    let q = DVector::from_iterator(z.n(), z.q.iter().map(|v| C64::from(*v)));
    let p = DVector::from_iterator(z.n(), z.p.iter().map(|v| C64::from(*v)));
    let bq = &binv * &q;
    let b = (&bq + &p) * (i / hbar);
    let c = -i / (2.0 * hbar) * q.dot(&bq) - i / (2.0 * hbar) * q.dot(&p) + log_prefactor(&binv, hbar);
    Ok((m, b, c))
}

fn log_prefactor(binv: &CMat, hbar: f64) -> C64 {
    let n = binv.nrows() as f64;
    let d = binv.map(|z| z.im).determinant().abs();
    C64::from(0.25 * d.ln() - 0.25 * n * (PI * hbar).ln())
}

/// Constant term `c` of [`exponent_nd`], used to read off amplitudes.
pub fn log_coherent_constant_nd(alpha: &WidthParameter, z: &PhasePoint, hbar: f64) -> Result<C64> {
    Ok(exponent_nd(alpha, z, hbar)?.2)
}

/// Samples `ψ^α_z` on `grid`.
pub fn coherent_state(label: &CoherentLabel, grid: &GridSpec) -> Result<WaveFunction> {
    if !label.alpha.is_admissible() {
        return Err(Error::InadmissibleWidth(format!("{}", label.alpha.value())));
    }
    if label.n() != grid.n {
        return Err(Error::DimensionMismatch("label and grid dimensions".into()));
    }
    let h = grid.hbar;
    if grid.n == 1 {
        let g = label_gauss(label, h);
        return Ok(WaveFunction::from_fn(*grid, |x| g.eval(x[0])));
    }
    let (m, b, c) = exponent_nd(&label.alpha, &label.z, h)?;
    let m = m.clone();
    Ok(WaveFunction::from_fn(*grid, move |x| {
        let (x0, x1) = (x[0], x[1]);
        let quad = m[(0, 0)] * x0 * x0 + 2.0 * m[(0, 1)] * x0 * x1 + m[(1, 1)] * x1 * x1;
        (-0.5 * quad + b[0] * x0 + b[1] * x1 + c).exp()
    }))
}

/// `∫ exp(−½xᵀMx + bᵀx + c) dx = (2π)^{n/2} det(M)^{-1/2} exp(½bᵀM⁻¹b + c)`
/// for complex symmetric `M` with positive-definite real part.
pub fn gaussian_integral_nd(m: &CMat, b: &DVector<C64>, c: C64) -> Result<C64> {
    let n = m.nrows();
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateWidth("singular quadratic form".into()))?;
    let log_det = log_det_branch(m)?;
    let e = 0.5 * b.dot(&(&minv * b)) + c;
    Ok((0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * log_det + e).exp())
}

/// `log det M` continued from the identity along `(1−t)I + tM`, which stays
/// invertible when `Re M` is positive definite.
pub fn log_det_branch(m: &CMat) -> Result<C64> {
    let n = m.nrows();
    let re = m.map(|z| z.re);
    let sym = (&re + re.transpose()) * 0.5;
    if sym.symmetric_eigenvalues().min() <= 0.0 {
        return Err(Error::DegenerateWidth("real part not positive definite".into()));
    }
    // Sum of principal logs of the eigenvalues; each has positive real part.
    if n == 1 {
        return Ok(m[(0, 0)].ln());
    }
    if n == 2 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr - 4.0 * det).sqrt();
        let l1 = (tr + disc) / 2.0;
        let l2 = (tr - disc) / 2.0;
        return Ok(l1.ln() + l2.ln());
    }
    let ev = m
        .clone()
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::DegenerateWidth("eigenvalues unavailable".into()))?;
    Ok(ev.iter().map(|z| z.ln()).sum())
}

/// `⟨ψ^{α_a}_{z_a} | ψ^{α_b}_{z_b}⟩` in closed form.
pub fn overlap_closed_form(a: &CoherentLabel, b: &CoherentLabel, hbar: f64) -> Result<C64> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch("overlap".into()));
    }
    if a.n() == 1 {
        let ga = label_gauss(a, hbar);
        let gb = label_gauss(b, hbar);
        let q2 = ga.q2.conj() + gb.q2;
        if !(q2.re < 0.0) {
            return Err(Error::DegenerateWidth(format!("combined quadratic {q2}")));
        }
        return Ok(ga.inner(&gb));
    }
    let (ma, ba, ca) = exponent_nd(&a.alpha, &a.z, hbar)?;
    let (mb, bb, cb) = exponent_nd(&b.alpha, &b.z, hbar)?;
    gaussian_integral_nd(&(ma.map(|z| z.conj()) + mb), &(ba.map(|z| z.conj()) + bb), ca.conj() + cb)
}

/// `|x + αξ − (q + αp)|`.
pub fn lagrangian_residual(label: &CoherentLabel, point: (C64, C64)) -> f64 {
    let a = label.alpha.scalar_value();
    let (x, xi) = point;
    (x + a * xi - (label.z.q[0] + a * label.z.p[0])).norm()
}

/// Deterministic complex parameters for sampling a Lagrangian.
fn lagrangian_params(samples: usize) -> Vec<C64> {
    (0..samples.max(1))
        .map(|k| {
            let t = k as f64 + 1.0;
            C64::new((1.3 * t).sin(), 0.7 * (2.1 * t).cos())
        })
        .collect()
}

/// Pushes points of `_αΛ_z` through candidate maps and measures membership
/// in candidate image Lagrangians.
pub fn lagrangian_transport_check(
    s: &ComplexSymplectic,
    label: &CoherentLabel,
    samples: usize,
) -> Result<AuditReport> {
    if s.n() != 1 {
        return Err(Error::Unsupported("lagrangian check needs n = 1".into()));
    }
    let tol = 1e-10;
    let mut report = AuditReport::new("lagrangian transport", tol);
    let alpha = &label.alpha;
    let si = s.inverse()?;
    let beta_fwd = moebius(s, alpha)?;
    let beta_inv = moebius(&si, alpha)?;
    let t_s = transport_matrix(s, alpha)?;
    let t_s_inv = t_s.inverse()?;
    let t_refl = reflected_transport(s, alpha)?;
    let maps: [(&str, ComplexSymplectic); 3] =
        [("S⁻¹", si.clone()), ("S", s.clone()), ("J′SJ′", s.reflected())];
    let betas = [("S·α", &beta_fwd), ("S⁻¹·α", &beta_inv)];
    let ts: [(&str, &TransportMatrix); 3] =
        [("_αT_S", &t_s), ("(_αT_S)⁻¹", &t_s_inv), ("reflected _αT_S", &t_refl)];
    let z = &label.z;
    let a = alpha.scalar_value();
    let params = lagrangian_params(samples);
    for (mname, m) in &maps {
        for (bname, beta) in &betas {
            for (tname, t) in &ts {
                let name = format!("{mname} maps onto Λ[{bname}, {tname} z]");
                let b = beta.scalar_value();
                let (tq, tp) = t.apply2(z.q[0], z.p[0]);
                let target = C64::from(tq) + b * tp;
                let mut worst = 0.0_f64;
                for (k, &tau) in params.iter().enumerate() {
                    let x = z.q[0] + a * tau;
                    let xi = C64::from(z.p[0]) - tau;
                    let xp = m.a() * x + m.b() * xi;
                    let xip = m.c() * x + m.d() * xi;
                    let r = (xp + b * xip - target).norm() / (1.0 + tau.norm());
                    if !(r <= tol) {
                        report.counterexamples.push((name.clone(), k, r));
                    }
                    worst = worst.max(r);
                }
                report.push(name, worst);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert_grid::inner_product;

    #[test]
    fn ground_state_formula() {
        let g = GridSpec::default_1d();
        let l = CoherentLabel::one(0.0, 0.0, C64::new(0.0, 1.0)).unwrap();
        let psi = coherent_state(&l, &g).unwrap();
        let h = g.hbar;
        for k in [0usize, 700, 1024, 1500] {
            let x = g.node(k);
            let e = (PI * h).powf(-0.25) * (-x * x / (2.0 * h)).exp();
            assert!((psi.samples[k] - e).norm() < 1e-14);
        }
    }

    #[test]
    fn overlap_examples() {
        let h = 0.5;
        let a = CoherentLabel::one(0.0, 0.0, C64::new(0.0, 1.0)).unwrap();
        let b = CoherentLabel::one(1.0, 0.0, C64::new(0.0, 1.0)).unwrap();
        assert!((overlap_closed_form(&a, &b, h).unwrap() - (-0.5f64).exp()).norm() < 1e-14);
        let c = CoherentLabel::one(0.0, 0.0, C64::new(0.0, 2.0)).unwrap();
        let e = 2f64.powf(0.75) / 3f64.sqrt();
        assert!((overlap_closed_form(&a, &c, h).unwrap() - e).norm() < 1e-14);
        assert!((overlap_closed_form(&b, &b, h).unwrap() - 1.0).norm() < 1e-14);
        let g = GridSpec::default_1d();
        let q = inner_product(&coherent_state(&a, &g).unwrap(), &coherent_state(&c, &g).unwrap()).unwrap();
        assert!((q - e).norm() < 1e-12);
    }

    #[test]
    fn lagrangian_examples() {
        let i = C64::new(0.0, 1.0);
        let l = CoherentLabel::one(0.4, -0.3, C64::new(0.2, 0.9)).unwrap();
        assert!(lagrangian_residual(&l, (0.4.into(), (-0.3).into())) < 1e-15);
        let a = l.alpha.scalar_value();
        assert!(lagrangian_residual(&l, (0.4 + a, C64::from(-1.3))) < 1e-15);
        assert!((lagrangian_residual(&l, (1.4.into(), (-0.3).into())) - 1.0).abs() < 1e-15);
        let _ = i;
    }

    #[test]
    fn json_round_trip() {
        let l = CoherentLabel::one(1.0, 2.0, C64::new(0.3, 0.7)).unwrap();
        assert_eq!(CoherentLabel::from_json(&l.to_json()).unwrap(), l);
    }
}
