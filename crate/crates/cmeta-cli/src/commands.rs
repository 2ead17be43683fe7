//! Commands other than `verify`: tables, propagation, quantization, Wigner
//! dumps, audits and the flow composition check.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use cmeta::coherent::{coherent_state, lagrangian_transport_check, CoherentLabel};
use cmeta::hilbert_grid::{gaussian_fit, inner_product, operator_apply, GridSpec, OperatorMatrix};
use cmeta::metaplectic::{convention_audit, hypothesis_families, meta_audit, propagate};
use cmeta::quantize::{theorem1_build, toeplitz_quantize, THEOREM1_TOLERANCE};
use cmeta::report::Check;
use cmeta::symbols::{weyl_pushforward_check, wigner_numeric, GaussTerm, SymbolField};
use cmeta::symplectic_core::{
    flow_composition_audit, ComplexSymplectic, ExtendedPoint, PhasePoint, TransportConvention, WidthParameter,
};
use cmeta::tables::{markdown, reproduce, TableName};
use cmeta::{C64, I};
use nalgebra::DMatrix;
use serde_json::json;

use crate::suites::{audit_rows, c, guard, label, moebius_law, real_set};
use crate::{AuditKind, Environment, GlobalFlags, Output, TableArg, UsageError};

type CmdResult = Result<Output, UsageError>;

fn numbers(s: &str, what: &str) -> Result<Vec<f64>, UsageError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| UsageError(format!("{what} {s:?}: {e}")))
}

/// `re,im` as a complex number.
pub fn parse_complex(s: &str) -> Result<C64, UsageError> {
    match numbers(s, "complex value")?.as_slice() {
        [re, im] => Ok(C64::new(*re, *im)),
        _ => Err(UsageError(format!("expected `re,im`, got {s:?}"))),
    }
}

fn read(path: &Path) -> Result<String, UsageError> {
    std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<(), UsageError> {
    std::fs::write(path, body).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn one_d(env: &Environment) -> Result<GridSpec, UsageError> {
    if env.n != 1 {
        return Err(UsageError("this command needs --n 1".into()));
    }
    Ok(env.grid()?)
}

pub fn table(name: TableArg, t: f64, env: &Environment, flags: &GlobalFlags) -> CmdResult {
    let name = match name {
        TableArg::Annb1 => TableName::Annb1,
        TableArg::Annb2 => TableName::Annb2,
    };
    let rows = reproduce(name, t, env.hbar)?;
    let text = markdown(&rows);
    if let Some(path) = &flags.out {
        write(path, &text)?;
    }
    let checks = rows
        .iter()
        .flat_map(|r| {
            r.cells
                .iter()
                .map(move |c| Check::info(format!("{} {}", r.row, c.column), c.residual, cmeta::tables::CELL_TOLERANCE))
        })
        .collect();
    Ok(Output {
        checks,
        text: Some(text),
    })
}

pub fn propagate_cmd(s_file: &Path, alpha: &str, z: &str, flags: &GlobalFlags) -> CmdResult {
    let s = ComplexSymplectic::from_json(&read(s_file)?)?;
    let n = s.n();
    let a = parse_complex(alpha)?;
    let alpha = WidthParameter::matrix(DMatrix::from_diagonal_element(n, n, a))?;
    let zv = numbers(z, "center")?;
    if zv.len() != 2 * n {
        return Err(UsageError(format!("--z needs {} numbers for n = {n}", 2 * n)));
    }
    let z = PhasePoint::from_slice(&zv);
    // the grid dimension follows S, not --n
    let env = Environment::from_flags(&GlobalFlags {
        n: Some(n),
        ..flags.clone()
    });
    let grid = env.grid()?;
    let psi = coherent_state(&CoherentLabel::new(z.clone(), alpha.clone())?, &grid)?;
    let out = propagate(&s, &psi)?;
    let fit = gaussian_fit(&out)?;
    let dir = flags.out.clone().unwrap_or_else(|| PathBuf::from("cmeta-propagate"));
    std::fs::create_dir_all(&dir)?;
    out.write_csv(dir.join("propagated.csv"))?;
    let fit_json = json!({
        "beta": fit.beta.to_flat(),
        "w": fit.z.to_vec(),
        "lambda": [fit.lambda.re, fit.lambda.im],
        "residual": fit.residual,
    });
    let mut families = Vec::new();
    let mut checks = vec![Check::info("Gaussian fit residual", fit.residual, 1e-6)];
    let mut best: Option<(String, f64)> = None;
    for f in hypothesis_families(&s)? {
        let entry = match f.predict(&alpha, &z) {
            Ok((beta, w)) => {
                let r = beta.distance(&fit.beta).max(w.distance(&fit.z));
                checks.push(Check::info(format!("family: {}", f.name), r, 1e-6));
                if best.as_ref().map_or(true, |b| r < b.1) {
                    best = Some((f.name.clone(), r));
                }
                json!({"name": f.name, "beta": beta.to_flat(), "w": w.to_vec(), "residual": r})
            }
            Err(e) => json!({"name": f.name, "error": e.to_string()}),
        };
        families.push(entry);
    }
    let comparison = json!({"families": families, "best": best.as_ref().map(|b| &b.0)});
    write(&dir.join("fit.json"), &serde_json::to_string_pretty(&fit_json).expect("json"))?;
    write(&dir.join("comparison.json"), &serde_json::to_string_pretty(&comparison).expect("json"))?;
    let tol = if n == 1 { 1e-6 } else { 1e-2 };
    let (name, r) = best.unwrap_or_else(|| ("none".into(), f64::NAN));
    checks.push(Check::gate("best family predicts the fit", r, tol).with_detail(name));
    Ok(Output::checks(checks))
}

pub fn quantize(symbol: &Path, alpha: &str, env: &Environment, flags: &GlobalFlags) -> CmdResult {
    let grid = one_d(env)?;
    let h = SymbolField::from_json(&read(symbol)?)?;
    let a = parse_complex(alpha)?;
    let op = toeplitz_quantize(&h, &WidthParameter::scalar(a)?, &grid, env.radius)?;
    let path = flags.out.clone().unwrap_or_else(|| PathBuf::from("operator.mkop"));
    op.write_binary(&path)?;
    let mut checks = Vec::new();
    for (q, p) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)] {
        let psi = coherent_state(&CoherentLabel::one(q, p, a)?, &grid)?;
        let e = inner_product(&psi, &operator_apply(&op, &psi)?)?;
        let hz = h.eval(q, p);
        checks.push(
            Check::info(format!("⟨ψ_z|Op(h)|ψ_z⟩ − h(z) at z = ({q}, {p})"), (e - hz).norm(), 0.0)
                .with_detail(format!("expectation {e:.6}, h(z) {hz:.6}")),
        );
    }
    let finite = op.entries.iter().all(|z| z.is_finite());
    checks.push(
        Check::gate("operator entries finite", if finite { 0.0 } else { f64::NAN }, 0.0)
            .with_detail(format!("written to {}", path.display())),
    );
    Ok(Output::checks(checks))
}

pub fn wigner(operator: &Path, flags: &GlobalFlags) -> CmdResult {
    let op = OperatorMatrix::read_binary(operator)?;
    let w = wigner_numeric(&op)?;
    let path = flags.out.clone().unwrap_or_else(|| PathBuf::from("wigner.csv"));
    w.write_csv(&path)?;
    let g = w.as_grid().expect("numeric Wigner transform is gridded");
    // ∫σ dq dp equals 2πħ·tr in the numeric normalization
    let integral: C64 = g.values.iter().sum::<C64>() * g.grid.cell() / (2.0 * PI * op.grid.hbar);
    let tr = op.trace();
    let r = (integral - tr).norm() / tr.norm().max(1.0);
    Ok(Output::checks(vec![Check::gate("∫σ dz/(2πħ) = tr H", r, 1e-6)
        .with_detail(format!("trace {tr:.6}; written to {}", path.display()))]))
}

pub fn audit(kind: AuditKind, env: &Environment) -> CmdResult {
    let grid = one_d(env)?;
    let mut checks = Vec::new();
    match kind {
        AuditKind::Convention => guard(&mut checks, "convention audit", || {
            let cases = [
                ComplexSymplectic::free_evolution(0.1),
                ComplexSymplectic::free_evolution(0.25),
                ComplexSymplectic::gaussian_multiplier(0.1),
                ComplexSymplectic::complex_oscillator(0.2),
            ];
            let zs = [PhasePoint::one(0.0, 0.0), PhasePoint::one(1.0, -0.5), PhasePoint::one(-0.7, 0.9)];
            let r = convention_audit(&cases, &[WidthParameter::scalar(I)?], &zs, &grid)?;
            let mut v: Vec<Check> = r
                .families
                .iter()
                .map(|(n, res)| Check::info(format!("family: {n}"), *res, r.tolerance))
                .collect();
            v.extend(audit_rows("conjugation", &r.meta));
            Ok(v)
        }),
        AuditKind::Meta => guard(&mut checks, "conjugation audit", || {
            let probes = vec![label(0.0, 0.0, I)?, label(1.0, -0.5, I)?];
            Ok(audit_rows("conjugation", &meta_audit(&real_set()?, &grid, &probes)?))
        }),
        AuditKind::Theorem1 => guard(&mut checks, "off-diagonal variants", || {
            let sym = SymbolField::gaussian(vec![GaussTerm::isotropic(c(1.0, 0.0), 0.0, 0.0, 1.0)], grid.hbar);
            let convs = [TransportConvention::Printed, TransportConvention::Reflected];
            let o = theorem1_build(
                &sym,
                &WidthParameter::scalar(I)?,
                &ComplexSymplectic::free_evolution(0.25),
                &grid,
                env.radius,
                &convs,
            )?;
            Ok(o.residuals
                .iter()
                .map(|(n, r)| Check::info(n.clone(), *r, THEOREM1_TOLERANCE))
                .collect())
        }),
        AuditKind::Pushforward => guard(&mut checks, "push-forward audit", || {
            let sym = SymbolField::gaussian(vec![GaussTerm::isotropic(c(1.0, 0.0), 0.5, -0.3, 1.0)], grid.hbar);
            let op = toeplitz_quantize(&sym, &WidthParameter::scalar(I)?, &grid, env.radius)?;
            let s = ComplexSymplectic::from_real_2x2(2.0, 0.0, 0.3, 0.5)?;
            Ok(audit_rows("push-forward", &weyl_pushforward_check(&op, &s, 2.0)?))
        }),
        AuditKind::Lagrangian => guard(&mut checks, "lagrangian audit", || {
            let l = label(0.4, -0.2, I)?;
            let r = lagrangian_transport_check(&ComplexSymplectic::free_evolution(0.25), &l, 16)?;
            Ok(audit_rows("lagrangian transport", &r))
        }),
    }
    Ok(Output::checks(checks))
}

pub fn flow() -> CmdResult {
    let mut checks = Vec::new();
    guard(&mut checks, "flow composition audit", || {
        let samples = vec![
            ExtendedPoint::new(PhasePoint::one(0.0, 0.0), WidthParameter::scalar(I)?)?,
            ExtendedPoint::new(PhasePoint::one(1.0, -0.5), WidthParameter::scalar(2.0 * I)?)?,
            ExtendedPoint::new(PhasePoint::one(-0.3, 0.7), WidthParameter::scalar(c(0.5, 1.0))?)?,
        ];
        let pairs = [
            ("free·multiplier", ComplexSymplectic::free_evolution(0.1), ComplexSymplectic::gaussian_multiplier(0.1)),
            ("oscillator·rotation", ComplexSymplectic::complex_oscillator(0.2), ComplexSymplectic::rotation(0.4)),
            ("dilation·free", ComplexSymplectic::dilation(0.1), ComplexSymplectic::free_evolution(0.2)),
        ];
        let mut v = Vec::new();
        for (name, s, s2) in &pairs {
            v.extend(audit_rows(name, &flow_composition_audit(s, s2, &samples)?));
        }
        v.push(Check::gate("(S S2)·α = S·(S2·α)", moebius_law(200, 14)?, 1e-10));
        Ok(v)
    });
    Ok(Output::checks(checks))
}
