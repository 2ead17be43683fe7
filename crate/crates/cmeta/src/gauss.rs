//! Algebra of one-dimensional complex Gaussians `exp(a x² + b x + c)`.
//!
//! Every closed form in the crate (overlaps, propagated coherent states,
//! Weyl symbols of coherent dyads, Gaussian Fourier transforms) reduces to
//! [`integral`].

use crate::C64;
use std::f64::consts::PI;

/// `∫_ℝ exp(a x² + b x + c) dx = sqrt(π/(−a)) exp(c − b²/(4a))`, principal
/// branch, valid for `Re a < 0`.
pub fn integral(a: C64, b: C64, c: C64) -> C64 {
    (C64::from(PI) / (-a)).sqrt() * (c - b * b / (4.0 * a)).exp()
}

/// Logarithm of [`integral`]; avoids overflow when the result is huge or tiny.
pub fn log_integral(a: C64, b: C64, c: C64) -> C64 {
    0.5 * (C64::from(PI) / (-a)).ln() + c - b * b / (4.0 * a)
}

/// `exp(q2 x² + q1 x + q0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gauss1 {
    pub q2: C64,
    pub q1: C64,
    pub q0: C64,
}

impl Gauss1 {
    pub fn new(q2: C64, q1: C64, q0: C64) -> Self {
        Self { q2, q1, q0 }
    }

    /// Complex conjugate of the function of a real variable.
    pub fn conj(&self) -> Self {
        Self::new(self.q2.conj(), self.q1.conj(), self.q0.conj())
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(self.q2 + o.q2, self.q1 + o.q1, self.q0 + o.q0)
    }

    pub fn exponent(&self, x: f64) -> C64 {
        self.q2 * x * x + self.q1 * x + self.q0
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.exponent(x).exp()
    }

    /// Complex-argument evaluation (analytic continuation).
    pub fn eval_c(&self, x: C64) -> C64 {
        (self.q2 * x * x + self.q1 * x + self.q0).exp()
    }

    pub fn integral(&self) -> C64 {
        integral(self.q2, self.q1, self.q0)
    }

    /// `⟨self|other⟩ = ∫ conj(self) other`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.conj().mul(other).integral()
    }

    /// ħ-scaled Fourier transform `∫ g(x) e^{−ixξ/ħ} dx / sqrt(2πħ)` as a
    /// Gaussian in ξ.
    pub fn fourier(&self, hbar: f64) -> Self {
        // exponent q2 x² + (q1 − iξ/ħ) x + q0, integrate over x
        let a = self.q2;
        let k = C64::new(0.0, -1.0 / hbar);
        // −(q1 + kξ)²/(4a) = −(q1² + 2 q1 k ξ + k² ξ²)/(4a)
        let q2 = -k * k / (4.0 * a);
        let q1 = -2.0 * self.q1 * k / (4.0 * a);
        let q0 = self.q0 - self.q1 * self.q1 / (4.0 * a) + 0.5 * (C64::from(PI) / (-a)).ln()
            - 0.5 * (2.0 * PI * hbar).ln();
        Self::new(q2, q1, q0)
    }

    /// Weyl symbol `σ(x,ξ) = ∫ self(x+y/2) conj(bra)(x−y/2) e^{−iyξ/ħ} dy` of
    /// the dyad `|self⟩⟨bra|`.
    pub fn weyl_dyad(&self, bra: &Self, x: f64, xi: f64, hbar: f64) -> C64 {
        let b = bra.conj();
        let a2 = (self.q2 + b.q2) / 4.0;
        let a1 = self.q2 * x + self.q1 / 2.0 - b.q2 * x - b.q1 / 2.0 - C64::new(0.0, xi / hbar);
        let a0 = (self.q2 + b.q2) * x * x + (self.q1 + b.q1) * x + self.q0 + b.q0;
        integral(a2, a1, a0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gaussian_integral() {
        let v = integral(C64::from(-1.0), C64::from(0.0), C64::from(0.0));
        assert!((v - C64::from(PI.sqrt())).norm() < 1e-14);
    }

    #[test]
    fn shifted_gaussian_integral_matches_riemann_sum() {
        let (a, b, c) = (C64::new(-0.7, 0.4), C64::new(0.3, -1.1), C64::new(0.2, 0.5));
        let h = 1e-3;
        let mut s = C64::from(0.0);
        for k in -20000..20000 {
            let x = (k as f64 + 0.5) * h;
            s += (a * x * x + b * x + c).exp() * h;
        }
        assert!((s - integral(a, b, c)).norm() < 1e-10);
    }

    #[test]
    fn log_integral_consistent() {
        let (a, b, c) = (C64::new(-2.0, 0.3), C64::new(1.0, 1.0), C64::new(0.0, 0.1));
        assert!((log_integral(a, b, c).exp() - integral(a, b, c)).norm() < 1e-13);
    }
}
