//! Property tests for the algebraic laws and the file formats.

use cmeta::coherent::{overlap_closed_form, CoherentLabel};
use cmeta::hilbert_grid::{GridSpec, OperatorMatrix, WaveFunction};
use cmeta::symbols::{PhaseGrid, Polynomial, SymbolField};
use cmeta::symplectic_core::{
    flow_map_with, moebius, ComplexSymplectic, ExtendedPoint, PhasePoint, TransportConvention, WidthParameter,
};
use cmeta::C64;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn symplectic() -> impl Strategy<Value = ComplexSymplectic> {
    (-0.3..0.3f64, -0.3..0.3f64, -1.5..1.5f64, -0.3..0.3f64, -1.0..1.0f64).prop_map(|(f, m, r, d, s)| {
        [
            ComplexSymplectic::free_evolution(f),
            ComplexSymplectic::gaussian_multiplier(m),
            ComplexSymplectic::rotation(r),
            ComplexSymplectic::dilation(d),
            ComplexSymplectic::shear(s),
        ]
        .iter()
        .fold(ComplexSymplectic::identity(1), |acc, g| acc.mul(g).unwrap())
    })
}

fn width() -> impl Strategy<Value = WidthParameter> {
    (-1.0..1.0f64, 0.3..2.0f64).prop_map(|(re, im)| WidthParameter::scalar(C64::new(re, im)).unwrap())
}

fn point() -> impl Strategy<Value = PhasePoint> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(q, p)| PhasePoint::one(q, p))
}

fn complex() -> impl Strategy<Value = C64> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_two_sided(s in symplectic()) {
        let si = s.inverse().unwrap();
        let id = ComplexSymplectic::identity(1);
        prop_assert!((s.mul(&si).unwrap().matrix() - id.matrix()).norm() < 1e-10);
        prop_assert!((si.mul(&s).unwrap().matrix() - id.matrix()).norm() < 1e-10);
    }

    #[test]
    fn width_action_is_a_left_action(s in symplectic(), s2 in symplectic(), a in width()) {
        let inner = moebius(&s2, &a);
        let lhs = moebius(&s.mul(&s2).unwrap(), &a);
        prop_assume!(inner.is_ok() && lhs.is_ok());
        let rhs = moebius(&s, &inner.unwrap());
        prop_assume!(rhs.is_ok());
        prop_assert!(close(lhs.unwrap().scalar_value(), rhs.unwrap().scalar_value(), 1e-10));
    }

    #[test]
    fn reflected_flow_composes(s in symplectic(), s2 in symplectic(), a in width(), z in point()) {
        let conv = TransportConvention::Reflected;
        let x = ExtendedPoint::new(z, a).unwrap();
        let step = flow_map_with(&s2, &x, conv).and_then(|y| flow_map_with(&s, &y, conv));
        let direct = flow_map_with(&s.mul(&s2).unwrap(), &x, conv);
        prop_assume!(step.is_ok() && direct.is_ok());
        let (step, direct) = (step.unwrap(), direct.unwrap());
        prop_assert!(step.distance(&direct) <= 1e-8 * (1.0 + direct.z.to_vec().iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn overlap_is_hermitian(a in width(), b in width(), z in point(), w in point()) {
        let la = CoherentLabel::new(z, a).unwrap();
        let lb = CoherentLabel::new(w, b).unwrap();
        let ab = overlap_closed_form(&la, &lb, 0.5).unwrap();
        let ba = overlap_closed_form(&lb, &la, 0.5).unwrap();
        prop_assert!(close(ab, ba.conj(), 1e-12));
        prop_assert!(ab.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn symplectic_json_round_trips(s in symplectic()) {
        let back = ComplexSymplectic::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(back.matrix(), s.matrix());
    }

    #[test]
    fn polynomial_symbol_json_round_trips(c in prop::collection::vec(complex(), 6)) {
        let terms: Vec<(u32, u32, C64)> =
            [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)].iter().zip(&c).map(|(&(i, j), &v)| (i, j, v)).collect();
        let h = SymbolField::polynomial(Polynomial::from_terms(&terms).unwrap(), 0.5).unwrap();
        let back = SymbolField::from_json(&h.to_json()).unwrap();
        for (q, p) in [(0.0, 0.0), (1.0, -2.0), (0.3, 0.7)] {
            prop_assert!(close(back.eval(q, p), h.eval(q, p), 1e-14));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn wave_function_csv_round_trips(v in prop::collection::vec(complex(), 16)) {
        let g = GridSpec::one_d(16, 4.0, 0.5).unwrap();
        let psi = WaveFunction::new(g, Array1::from(v)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.csv");
        psi.write_csv(&path).unwrap();
        let back = WaveFunction::read_csv(&path, 0.5).unwrap();
        prop_assert!(back.max_distance(&psi) <= 1e-12);
    }

    #[test]
    fn operator_binary_round_trips(v in prop::collection::vec(complex(), 256)) {
        let g = GridSpec::one_d(16, 4.0, 0.5).unwrap();
        let m = OperatorMatrix::new(g, Array2::from_shape_vec((16, 16), v).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op.mkop");
        m.write_binary(&path).unwrap();
        prop_assert_eq!(OperatorMatrix::read_binary(&path).unwrap(), m);
    }

    #[test]
    fn grid_symbol_csv_round_trips(v in prop::collection::vec(complex(), 64)) {
        let pg = PhaseGrid::square(2.0, 8);
        let h = SymbolField::grid(pg, Array2::from_shape_vec((8, 8), v).unwrap(), 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sym.csv");
        h.write_csv(&path).unwrap();
        let back = SymbolField::read_csv(&path, 0.5).unwrap();
        let (a, b) = (back.as_grid().unwrap(), h.as_grid().unwrap());
        prop_assert!(a.grid.same_as(&b.grid));
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }
}
