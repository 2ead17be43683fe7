//! Töplitz quantization `∫ h |ψ^α_z⟩⟨ψ^α_z| dz/2πħ` by midpoint quadrature on a
//! phase-space disc, its off-diagonal variant with normalised dyads, the
//! conjugation oracle, and the builders that represent `U(S)⁻¹HU(S)` and its
//! parity-twisted analogue for `det S = −1` as off-diagonal symbols.
//!
//! An [`OffDiagSymbol`] stands for
//! `∫ h(±z) |ψ^{α_out}_{Mz}⟩⟨ψ^{α_in}_z| / N(z) dz/2πħ`, with the sign and a
//! parity operator in `N` switched on by `sign_flip`.

use crate::coherent::{label_gauss, overlap_closed_form, CoherentLabel};
use crate::gauss::Gauss1;
use crate::hilbert_grid::{inner_product, operator_compose, GridSpec, OperatorMatrix};
use crate::metaplectic::{kernel_build, propagate};
use crate::symbols::{
    compose_linear, pushforward, reparametrize, JacobianMode, PhaseGrid, SymbolField,
};
use crate::symplectic_core::{
    moebius, ComplexSymplectic, PhasePoint, TransportConvention, TransportMatrix, WidthParameter,
};
use crate::{Error, Result, C64};
use nalgebra::Matrix2;
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Nodes whose quadrature weight is below this fraction of the largest one are
/// dropped; their contribution is below rounding.
const PRUNE: f64 = 1e-17;
const MIN_OVERLAP: f64 = 1e-12;

/// Midpoint nodes of a square lattice restricted to the disc `|z| ≤ R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub radius: f64,
    pub step: f64,
    pub nodes: Vec<(f64, f64)>,
}

impl Mesh {
    pub fn disc(radius: f64, step: f64) -> Self {
        let m = (2.0 * radius / step).round() as i64;
        let mut nodes = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let q = -radius + (i as f64 + 0.5) * step;
                let p = -radius + (j as f64 + 0.5) * step;
                if q * q + p * p <= radius * radius {
                    nodes.push((q, p));
                }
            }
        }
        Self {
            radius,
            step,
            nodes,
        }
    }

    /// Coarsest admissible mesh for `grid`: step `≤ √ħ/4` dividing `R`.
    pub fn for_grid(grid: &GridSpec, radius: f64) -> Result<Self> {
        let k = (radius / max_step(grid)).ceil().max(1.0);
        Self::checked(grid, radius, radius / k)
    }

    pub fn checked(grid: &GridSpec, radius: f64, step: f64) -> Result<Self> {
        if grid.n != 1 {
            return Err(Error::Unsupported("Töplitz quadrature needs n = 1".into()));
        }
        if !(radius > 0.0) || radius > grid.half_width / 2.0 {
            return Err(Error::InvalidGrid(format!(
                "radius {radius} must lie in (0, L/2 = {}]",
                grid.half_width / 2.0
            )));
        }
        if step > max_step(grid) * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "phase-space mesh {step} coarser than √ħ/4 = {}",
                max_step(grid)
            )));
        }
        Ok(Self::disc(radius, step))
    }

    pub fn cell(&self) -> f64 {
        self.step * self.step
    }
}

fn max_step(grid: &GridSpec) -> f64 {
    grid.hbar.sqrt() / 4.0
}

/// One quadrature term `w |ket⟩⟨bra|`.
struct Term {
    ket: Gauss1,
    bra: Gauss1,
    weight: C64,
}

/// `Σ_k w_k ket_k(x) conj(bra_k(y))`, as one matrix product.
fn assemble(grid: &GridSpec, terms: &[Term]) -> Result<OperatorMatrix> {
    let wmax = terms.iter().fold(0.0_f64, |a, t| a.max(t.weight.norm()));
    let kept: Vec<&Term> = terms
        .iter()
        .filter(|t| t.weight.norm() > PRUNE * wmax)
        .collect();
    let n = grid.points;
    let xs = grid.nodes();
    let m = kept.len();
    let mut ket = Array2::<C64>::zeros((n, m));
    let mut bra = Array2::<C64>::zeros((m, n));
    ket.axis_iter_mut(Axis(1))
        .into_par_iter()
        .zip(bra.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(k, (mut kc, mut br))| {
            let t = kept[k];
            let b = t.bra.conj();
            for (i, &x) in xs.iter().enumerate() {
                kc[i] = t.ket.eval(x);
                br[i] = t.weight * b.eval(x);
            }
        });
    let mut out = Array2::<C64>::zeros((n, n));
    out.axis_chunks_iter_mut(Axis(0), 64)
        .into_par_iter()
        .zip(ket.axis_chunks_iter(Axis(0), 64).into_par_iter())
        .for_each(|(mut o, k)| o.assign(&k.dot(&bra)));
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidGrid("non-finite operator entry".into()));
    }
    OperatorMatrix::new(*grid, out)
}

fn label(q: f64, p: f64, alpha: &WidthParameter) -> Result<CoherentLabel> {
    CoherentLabel::new(PhasePoint::one(q, p), alpha.clone())
}

/// `Σ_k h(z_k) |ψ^α_{z_k}⟩⟨ψ^α_{z_k}| ΔqΔp/2πħ` over the disc `|z| ≤ R`.
pub fn toeplitz_quantize(
    h: &SymbolField,
    alpha: &WidthParameter,
    grid: &GridSpec,
    radius: f64,
) -> Result<OperatorMatrix> {
    toeplitz_quantize_on(h, alpha, grid, &Mesh::for_grid(grid, radius)?)
}

pub fn toeplitz_quantize_on(
    h: &SymbolField,
    alpha: &WidthParameter,
    grid: &GridSpec,
    mesh: &Mesh,
) -> Result<OperatorMatrix> {
    if alpha.n() != 1 || !alpha.is_admissible() {
        return Err(Error::InadmissibleWidth(format!("{}", alpha.value())));
    }
    let c = mesh.cell() / (2.0 * PI * grid.hbar);
    let terms = mesh
        .nodes
        .iter()
        .map(|&(q, p)| {
            let g = label_gauss(&label(q, p, alpha)?, grid.hbar);
            Ok(Term {
                ket: g,
                bra: g,
                weight: h.eval(q, p) * c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(grid, &terms)
}

/// Order of the normalising overlap of a dyad `|a⟩⟨b|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenominatorOrder {
    /// `⟨b|a⟩`: makes `|a⟩⟨b|/⟨b|a⟩` a projector.
    Projector,
    /// `⟨a|b⟩`, ket first.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `S` in its JSON form, when the symbol came from a builder.
    #[serde(rename = "S")]
    pub s: Option<serde_json::Value>,
    pub variant: String,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffDiagSymbol {
    pub h: SymbolField,
    /// `z ↦ z′`: the ket centre as a function of the bra centre.
    pub map: TransportMatrix,
    /// Width of the bras.
    pub alpha_in: WidthParameter,
    /// Width of the kets.
    pub alpha_out: WidthParameter,
    /// Evaluate `h` at `−z` and put the parity operator in the normaliser.
    pub sign_flip: bool,
    pub denominator: DenominatorOrder,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct OffDiagJson {
    h: serde_json::Value,
    map: Vec<Vec<f64>>,
    alpha_in: Vec<[f64; 2]>,
    alpha_out: Vec<[f64; 2]>,
    sign_flip: bool,
    #[serde(default = "default_order")]
    denominator: DenominatorOrder,
    #[serde(default)]
    provenance: Option<Provenance>,
}

fn default_order() -> DenominatorOrder {
    DenominatorOrder::Projector
}

impl OffDiagSymbol {
    pub fn new(
        h: SymbolField,
        map: TransportMatrix,
        alpha_in: WidthParameter,
        alpha_out: WidthParameter,
        sign_flip: bool,
    ) -> Result<Self> {
        if map.det().abs() < 1e-14 {
            return Err(Error::SingularMap("off-diagonal symbol map".into()));
        }
        for a in [&alpha_in, &alpha_out] {
            if a.n() != 1 || !a.is_admissible() {
                return Err(Error::InadmissibleWidth(format!("{}", a.value())));
            }
        }
        Ok(Self {
            h,
            map,
            alpha_in,
            alpha_out,
            sign_flip,
            denominator: DenominatorOrder::Projector,
            provenance: None,
        })
    }

    /// The Töplitz operator of `h` at width `α` written as an off-diagonal
    /// symbol.
    pub fn diagonal(h: SymbolField, alpha: WidthParameter) -> Result<Self> {
        Self::new(h, TransportMatrix::identity(1), alpha.clone(), alpha, false)
    }

    pub fn bra_label(&self, q: f64, p: f64) -> Result<CoherentLabel> {
        label(q, p, &self.alpha_in)
    }

    pub fn ket_label(&self, q: f64, p: f64) -> Result<CoherentLabel> {
        let (q2, p2) = self.map.apply2(q, p);
        label(q2, p2, &self.alpha_out)
    }

    /// Normaliser `N(z)` of the dyad at bra centre `z`.
    pub fn normaliser(&self, q: f64, p: f64, hbar: f64) -> Result<C64> {
        let a = self.ket_label(q, p)?;
        let b = self.bra_label(q, p)?;
        normaliser(&a, &b, self.sign_flip, self.denominator, hbar)
    }

    /// Symbol value with the sign flip applied.
    pub fn weight(&self, q: f64, p: f64) -> C64 {
        if self.sign_flip {
            self.h.eval(-q, -p)
        } else {
            self.h.eval(q, p)
        }
    }

    pub fn to_json(&self) -> String {
        let j = OffDiagJson {
            h: self.h.to_json_value(),
            map: self.map.to_rows(),
            alpha_in: self.alpha_in.to_flat(),
            alpha_out: self.alpha_out.to_flat(),
            sign_flip: self.sign_flip,
            denominator: self.denominator,
            provenance: self.provenance.clone(),
        };
        serde_json::to_string(&j).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: OffDiagJson = serde_json::from_str(s)?;
        let mut out = Self::new(
            SymbolField::from_json_value(j.h)?,
            TransportMatrix::from_rows(&j.map)?,
            WidthParameter::from_flat(&j.alpha_in)?,
            WidthParameter::from_flat(&j.alpha_out)?,
            j.sign_flip,
        )?;
        out.denominator = j.denominator;
        out.provenance = j.provenance;
        Ok(out)
    }
}

/// `⟨b|I^f a⟩` (projector order) or `⟨a|I^f b⟩`; `Iψ^β_z = ψ^β_{−z}`.
fn normaliser(
    a: &CoherentLabel,
    b: &CoherentLabel,
    flip: bool,
    order: DenominatorOrder,
    hbar: f64,
) -> Result<C64> {
    match (order, flip) {
        (DenominatorOrder::Projector, false) => overlap_closed_form(b, a, hbar),
        (DenominatorOrder::Projector, true) => {
            overlap_closed_form(b, &CoherentLabel::new(a.z.neg(), a.alpha.clone())?, hbar)
        }
        (DenominatorOrder::Printed, false) => overlap_closed_form(a, b, hbar),
        (DenominatorOrder::Printed, true) => {
            overlap_closed_form(a, &CoherentLabel::new(b.z.neg(), b.alpha.clone())?, hbar)
        }
    }
}

/// `Σ_k h(±z_k) |ψ^{α_out}_{Mz_k}⟩⟨ψ^{α_in}_{z_k}| / N(z_k) · ΔqΔp/2πħ`.
pub fn offdiag_quantize(sym: &OffDiagSymbol, grid: &GridSpec, radius: f64) -> Result<OperatorMatrix> {
    offdiag_quantize_on(sym, grid, &Mesh::for_grid(grid, radius)?)
}

pub fn offdiag_quantize_on(sym: &OffDiagSymbol, grid: &GridSpec, mesh: &Mesh) -> Result<OperatorMatrix> {
    let h = grid.hbar;
    let c = mesh.cell() / (2.0 * PI * h);
    let terms = mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(k, &(q, p))| {
            let a = sym.ket_label(q, p)?;
            let b = sym.bra_label(q, p)?;
            let n = normaliser(&a, &b, sym.sign_flip, sym.denominator, h)?;
            if !(n.norm() >= MIN_OVERLAP) {
                return Err(Error::VanishingOverlap {
                    node: k,
                    value: n.norm(),
                });
            }
            Ok(Term {
                ket: label_gauss(&a, h),
                bra: label_gauss(&b, h),
                weight: sym.weight(q, p) / n * c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(grid, &terms)
}

/// `U(S⁻¹)·H·U(S)` from dense kernels, divided by the scalar
/// `c = ⟨φ|U(S⁻¹)U(S)φ⟩` measured on `φ = ψ^i_0`, so that the result is a
/// similarity transform of `H`.
pub fn conjugate_oracle(h: &OperatorMatrix, s: &ComplexSymplectic, grid: &GridSpec) -> Result<OperatorMatrix> {
    Ok(conjugate_oracle_scaled(h, s, grid)?.0)
}

/// [`conjugate_oracle`] together with the removed scalar `c`.
pub fn conjugate_oracle_scaled(
    h: &OperatorMatrix,
    s: &ComplexSymplectic,
    grid: &GridSpec,
) -> Result<(OperatorMatrix, C64)> {
    h.grid.check_same(grid)?;
    let si = s.inverse()?;
    let u = kernel_build(s, grid)?.matrix;
    let ui = kernel_build(&si, grid)?.matrix;
    let phi = crate::coherent::coherent_state(&label(0.0, 0.0, &WidthParameter::scalar(C64::i())?)?, grid)?;
    let back = propagate(&si, &propagate(s, &phi)?)?;
    let c = inner_product(&phi, &back)? / inner_product(&phi, &phi)?;
    let raw = operator_compose(&ui, &operator_compose(h, &u)?)?;
    Ok((raw.scale(c.inv()), c))
}

/// How the Töplitz symbol is carried by `T = _αT_{S̄}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolTransform {
    /// `h ∘ T · |det T|`.
    PullbackJacobian,
    /// `h ∘ T`.
    Pullback,
    /// `h ∘ T⁻¹ · |det T|⁻¹`.
    PushforwardJacobian,
    /// `h ∘ T⁻¹`.
    Pushforward,
}

impl SymbolTransform {
    pub const ALL: [Self; 4] = [
        Self::PullbackJacobian,
        Self::Pullback,
        Self::PushforwardJacobian,
        Self::Pushforward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PullbackJacobian => "pull-back with Jacobian",
            Self::Pullback => "pull-back",
            Self::PushforwardJacobian => "push-forward with Jacobian",
            Self::Pushforward => "push-forward",
        }
    }

    fn apply(self, h: &SymbolField, t: &TransportMatrix) -> Result<SymbolField> {
        let tm = Matrix2::new(
            t.matrix()[(0, 0)],
            t.matrix()[(0, 1)],
            t.matrix()[(1, 0)],
            t.matrix()[(1, 1)],
        );
        let det = tm.determinant().abs();
        match self {
            Self::PullbackJacobian => compose_linear(h, &tm, det),
            Self::Pullback => compose_linear(h, &tm, 1.0),
            Self::PushforwardJacobian => pushforward(h, t, JacobianMode::With),
            Self::Pushforward => pushforward(h, t, JacobianMode::Without),
        }
    }
}

/// One reading of the off-diagonal representation formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem1Variant {
    pub convention: TransportConvention,
    pub transform: SymbolTransform,
    pub denominator: DenominatorOrder,
}

impl Theorem1Variant {
    pub fn all(conventions: &[TransportConvention]) -> Vec<Self> {
        let mut v = Vec::new();
        for &convention in conventions {
            for transform in SymbolTransform::ALL {
                for denominator in [DenominatorOrder::Projector, DenominatorOrder::Printed] {
                    v.push(Self {
                        convention,
                        transform,
                        denominator,
                    });
                }
            }
        }
        v
    }

    pub fn name(&self) -> String {
        let d = match self.denominator {
            DenominatorOrder::Projector => "projector-order denominator",
            DenominatorOrder::Printed => "printed-order denominator",
        };
        format!("{} transport, {}, {}", self.convention.name(), self.transform.name(), d)
    }
}

/// Off-diagonal symbol of `ℂomp_S H` for `H` the Töplitz operator of `h` at
/// width `α`, read with `variant`: `h` is rewritten at width `S̄·α`, carried
/// by `_αT_{S̄}`, and paired with the map `_αT_{S⁻¹S̄}` and width
/// `S⁻¹S̄·α`. For `det S = −1` the sign flip is set.
pub fn theorem1_symbol(
    h: &SymbolField,
    alpha: &WidthParameter,
    s: &ComplexSymplectic,
    variant: Theorem1Variant,
) -> Result<OffDiagSymbol> {
    if s.n() != 1 {
        return Err(Error::Unsupported("off-diagonal builder needs n = 1".into()));
    }
    let sbar = s.conj();
    let w = s.inverse()?.mul(&sbar)?;
    for v in [&s.inverse()?, &sbar.inverse()?, &w] {
        let b = moebius(v, alpha)?;
        if !b.is_admissible() {
            return Err(Error::InadmissibleWidth(format!("V·α = {}", b.value())));
        }
    }
    let beta = moebius(&sbar, alpha)?;
    if !beta.is_admissible() {
        return Err(Error::InadmissibleWidth(format!("S̄·α = {}", beta.value())));
    }
    let h_beta = reparametrize(h, alpha, &beta)?;
    let t = variant.convention.transport(&sbar, alpha)?;
    let carried = variant.transform.apply(&h_beta, &t)?;
    let map = variant.convention.transport(&w, alpha)?;
    let alpha_out = moebius(&w, alpha)?;
    let mut sym = OffDiagSymbol::new(carried, map, alpha.clone(), alpha_out, s.det_class() == -1)?;
    sym.denominator = variant.denominator;
    sym.provenance = Some(Provenance {
        s: serde_json::from_str(&s.to_json()).ok(),
        variant: variant.name(),
        residual: f64::NAN,
    });
    Ok(sym)
}

/// Result of [`theorem1_build`].
#[derive(Clone, Debug)]
pub struct Theorem1Outcome {
    pub symbol: OffDiagSymbol,
    pub operator: OperatorMatrix,
    pub oracle: OperatorMatrix,
    pub variant: Theorem1Variant,
    pub residual: f64,
    /// Residual of every variant tried, in order.
    pub residuals: Vec<(String, f64)>,
}

/// Relative Frobenius distance on nodes with `|x| ≤ L − 4√ħ`.
pub fn interior_residual(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    let idx = b.grid.interior(4.0 * b.grid.hbar.sqrt());
    a.rel_frobenius_on(b, &idx)
}

pub const THEOREM1_TOLERANCE: f64 = 5e-2;

/// Builds every variant for the given transport conventions, quantizes it,
/// and keeps the one closest to [`conjugate_oracle`].
pub fn theorem1_build(
    h: &SymbolField,
    alpha: &WidthParameter,
    s: &ComplexSymplectic,
    grid: &GridSpec,
    radius: f64,
    conventions: &[TransportConvention],
) -> Result<Theorem1Outcome> {
    let hop = toeplitz_quantize(h, alpha, grid, radius)?;
    let oracle = conjugate_oracle(&hop, s, grid)?;
    let mut best: Option<(f64, Theorem1Variant, OffDiagSymbol, OperatorMatrix)> = None;
    let mut residuals = Vec::new();
    for v in Theorem1Variant::all(conventions) {
        let r = theorem1_symbol(h, alpha, s, v)
            .and_then(|sym| Ok((offdiag_quantize(&sym, grid, radius)?, sym)));
        let (op, sym) = match r {
            Ok(x) => x,
            Err(e) => {
                residuals.push((format!("{} ({e})", v.name()), f64::INFINITY));
                continue;
            }
        };
        let res = interior_residual(&op, &oracle);
        residuals.push((v.name(), res));
        if best.as_ref().map_or(true, |b| res < b.0) {
            best = Some((res, v, sym, op));
        }
    }
    let best_res = best.as_ref().map_or(f64::INFINITY, |b| b.0);
    match best {
        Some((res, variant, mut symbol, operator)) if res <= THEOREM1_TOLERANCE => {
            if let Some(p) = symbol.provenance.as_mut() {
                p.residual = res;
            }
            Ok(Theorem1Outcome {
                symbol,
                operator,
                oracle,
                variant,
                residual: res,
                residuals,
            })
        }
        _ => Err(Error::RepresentationMismatch {
            best: best_res,
            residuals,
        }),
    }
}

/// `D_α(z) = ⟨ψ^{S⁻¹S̄·α}_{_αT_{S⁻¹S̄}(z)} | ψ^α_z⟩⁻¹`, parity-twisted when
/// `det S = −1`.
pub fn normalization_d(
    s: &ComplexSymplectic,
    alpha: &WidthParameter,
    z: &PhasePoint,
    hbar: f64,
    convention: TransportConvention,
) -> Result<C64> {
    let w = s.inverse()?.mul(&s.conj())?;
    let t = convention.transport(&w, alpha)?;
    let a = CoherentLabel::new(t.apply(z), moebius(&w, alpha)?)?;
    let b = CoherentLabel::new(z.clone(), alpha.clone())?;
    let n = normaliser(&a, &b, s.det_class() == -1, DenominatorOrder::Printed, hbar)?;
    if !(n.norm() >= MIN_OVERLAP) {
        return Err(Error::VanishingOverlap {
            node: 0,
            value: n.norm(),
        });
    }
    Ok(n.inv())
}

/// Variants used by [`noncanonical_compose`]: the audited one for
/// `det S = 1` and the definition's own transport for `det S = −1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompConventions {
    pub canonical: Theorem1Variant,
    pub anticanonical: Theorem1Variant,
}

impl CompConventions {
    pub fn from_audited(winner: Theorem1Variant) -> Self {
        Self {
            canonical: winner,
            anticanonical: Theorem1Variant {
                convention: TransportConvention::Printed,
                ..winner
            },
        }
    }

    pub fn for_det(&self, det: i8) -> Theorem1Variant {
        if det == 1 {
            self.canonical
        } else {
            self.anticanonical
        }
    }
}

/// `ℂomp_S H` for `H` the Töplitz operator of `h` at width `α`.
pub fn noncanonical_compose(
    h: &SymbolField,
    alpha: &WidthParameter,
    s: &ComplexSymplectic,
    grid: &GridSpec,
    radius: f64,
    conv: &CompConventions,
) -> Result<(OffDiagSymbol, OperatorMatrix)> {
    let sym = theorem1_symbol(h, alpha, s, conv.for_det(s.det_class()))?;
    let op = offdiag_quantize(&sym, grid, radius)?;
    Ok((sym, op))
}

/// `ℂomp_S` applied to an operator given by an off-diagonal symbol: each
/// normalised dyad `|a⟩⟨b|/N` goes to `|a′⟩⟨b′|/N′` with
/// `a′ = ±_{α_out}T_{S⁻¹}(a)` at width `S⁻¹·α_out` and
/// `b′ = ±_{α_in}T_{S̄⁻¹}(b)` at width `S̄⁻¹·α_in` (sign `−` and a parity flip
/// when `det S = −1`). For `det S = 1` with the kernel's transport this is the
/// conjugation by `U(S)`.
pub fn comp_apply(sym: &OffDiagSymbol, s: &ComplexSymplectic, conv: &CompConventions) -> Result<OffDiagSymbol> {
    let odd = s.det_class() == -1;
    let convention = conv.for_det(s.det_class()).convention;
    let si = s.inverse()?;
    let sbi = s.conj().inverse()?;
    let sign = if odd { -1.0 } else { 1.0 };
    let b = convention.transport(&sbi, &sym.alpha_in)?;
    let b = TransportMatrix::new(b.matrix() * sign)?;
    let a = convention.transport(&si, &sym.alpha_out)?;
    let a = TransportMatrix::new(a.matrix() * sign)?;
    let binv = b.inverse()?;
    let flip = sym.sign_flip ^ odd;
    // h₂(y) = h(σ_f B⁻¹ σ_{f′} y) |det B⁻¹|, σ = ±1 from the flips
    let s_f = if sym.sign_flip { -1.0 } else { 1.0 };
    let s_f2 = if flip { -1.0 } else { 1.0 };
    let bm = binv.matrix() * (s_f * s_f2);
    let l = Matrix2::new(bm[(0, 0)], bm[(0, 1)], bm[(1, 0)], bm[(1, 1)]);
    let h2 = compose_linear(&sym.h, &l, binv.det().abs())?;
    let map = a.compose(&sym.map.compose(&binv));
    let mut out = OffDiagSymbol::new(
        h2,
        map,
        moebius(&sbi, &sym.alpha_in)?,
        moebius(&si, &sym.alpha_out)?,
        flip,
    )?;
    out.denominator = sym.denominator;
    out.provenance = sym.provenance.clone();
    Ok(out)
}

/// Leading-order symbol of the product `Op(s2)·Op(s1)` (`s1` acts first):
/// `h(z) = h₁(z) h₂(M₁z) N(z)/(N₁(z)N₂(M₁z))`, map `M₂M₁`, sampled on `lattice`.
pub fn offdiag_symbol_compose(
    s1: &OffDiagSymbol,
    s2: &OffDiagSymbol,
    lattice: &PhaseGrid,
) -> Result<OffDiagSymbol> {
    if s1.alpha_out.distance(&s2.alpha_in) > 1e-12 {
        return Err(Error::ChartMismatch(format!(
            "output width {} vs input width {}",
            s1.alpha_out.value(),
            s2.alpha_in.value()
        )));
    }
    if s1.sign_flip || s2.sign_flip {
        return Err(Error::Unsupported("symbol composition with parity flip".into()));
    }
    let hbar = s1.h.hbar;
    let mut out = OffDiagSymbol::new(
        SymbolField::constant(C64::new(0.0, 0.0), hbar),
        s2.map.compose(&s1.map),
        s1.alpha_in.clone(),
        s2.alpha_out.clone(),
        false,
    )?;
    out.denominator = DenominatorOrder::Projector;
    let mut values = Array2::zeros((lattice.mq, lattice.mp));
    for i in 0..lattice.mq {
        for j in 0..lattice.mp {
            let (q, p) = (lattice.q(i), lattice.p(j));
            let (q1, p1) = s1.map.apply2(q, p);
            let n1 = s1.normaliser(q, p, hbar)?;
            let n2 = s2.normaliser(q1, p1, hbar)?;
            let n = out.normaliser(q, p, hbar)?;
            values[(i, j)] = s1.weight(q, p) * s2.weight(q1, p1) * n / (n1 * n2);
        }
    }
    out.h = SymbolField::grid(*lattice, values, hbar)?;
    Ok(out)
}

/// `‖P² − P‖/‖P‖` (Frobenius) for the single normalised dyad
/// `P = |ψ^{S⁻¹S̄·α}_{Tz}⟩⟨ψ^α_z| / ⟨ψ^α_z|ψ^{S⁻¹S̄·α}_{Tz}⟩`, `T = _αT_{S⁻¹S̄}`.
pub fn dyad_projector_defect(
    s: &ComplexSymplectic,
    alpha: &WidthParameter,
    z: &PhasePoint,
    grid: &GridSpec,
    convention: TransportConvention,
) -> Result<f64> {
    let w = s.inverse()?.mul(&s.conj())?;
    let t = convention.transport(&w, alpha)?;
    let a = CoherentLabel::new(t.apply(z), moebius(&w, alpha)?)?;
    let b = CoherentLabel::new(z.clone(), alpha.clone())?;
    let n = normaliser(&a, &b, false, DenominatorOrder::Projector, grid.hbar)?;
    let ga = label_gauss(&a, grid.hbar);
    let gb = label_gauss(&b, grid.hbar).conj();
    let p = OperatorMatrix::from_kernel(*grid, |x, y| ga.eval(x[0]) * gb.eval(y[0]) / n);
    let p2 = operator_compose(&p, &p)?;
    let num: f64 = p2
        .entries
        .iter()
        .zip(p.entries.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let den: f64 = p.entries.iter().map(|y| y.norm_sqr()).sum();
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::one_d(128, 8.0, 0.5).unwrap()
    }

    #[test]
    fn zero_symbol_gives_zero_operator() {
        let g = grid();
        let h = SymbolField::constant(C64::new(0.0, 0.0), 0.5);
        let op = toeplitz_quantize(&h, &WidthParameter::scalar(C64::i()).unwrap(), &g, 4.0).unwrap();
        assert_eq!(op.max_abs(), 0.0);
    }

    #[test]
    fn radius_beyond_half_width_is_rejected() {
        let g = grid();
        let h = SymbolField::constant(C64::new(1.0, 0.0), 0.5);
        let r = toeplitz_quantize(&h, &WidthParameter::scalar(C64::i()).unwrap(), &g, 4.5);
        assert!(matches!(r, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn diagonal_offdiag_equals_toeplitz() {
        let g = grid();
        let a = WidthParameter::scalar(C64::i()).unwrap();
        let h = SymbolField::gaussian(vec![crate::symbols::GaussTerm::isotropic(C64::new(1.0, 0.0), 0.3, 0.0, 1.0)], 0.5);
        let t = toeplitz_quantize(&h, &a, &g, 4.0).unwrap();
        let o = offdiag_quantize(&OffDiagSymbol::diagonal(h, a).unwrap(), &g, 4.0).unwrap();
        let d = t.entries.iter().zip(o.entries.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()));
        assert!(d <= 1e-14 * t.max_abs());
    }

    #[test]
    fn offdiag_json_round_trip() {
        let a = WidthParameter::scalar(C64::new(0.2, 1.1)).unwrap();
        let h = SymbolField::gaussian(vec![crate::symbols::GaussTerm::isotropic(C64::new(1.0, 0.5), 0.3, 0.0, 1.0)], 0.5);
        let mut s = OffDiagSymbol::new(h, TransportMatrix::scaled_identity(1, -1.0), a.clone(), a, true).unwrap();
        s.provenance = Some(Provenance {
            s: None,
            variant: "v".into(),
            residual: 0.25,
        });
        assert_eq!(OffDiagSymbol::from_json(&s.to_json()).unwrap(), s);
    }
}
