use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spopf_core::case::RawCase;
use spopf_core::dense::{det_sign_logabs, DenseLu};
use spopf_core::{parse_case_json, parse_case_matpower, NetworkCase, QuadraticModel};

fn load(name: &str) -> NetworkCase {
    let path = format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_case_matpower(&std::fs::read_to_string(path).unwrap()).unwrap().case
}

/// Bus admittance matrix built from the usual Π-model formulas.
fn ybus(case: &NetworkCase) -> Vec<Vec<Complex64>> {
    let n = case.bus_count();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in &case.branches {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let bc = Complex64::new(0.0, br.b / 2.0);
        let tau = Complex64::from_polar(br.tap, br.shift);
        let (f, t) = (br.from, br.to);
        y[f][f] += (ys + bc) / (br.tap * br.tap);
        y[f][t] += -ys / tau.conj();
        y[t][f] += -ys / tau;
        y[t][t] += ys + bc;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[i][i] += Complex64::new(bus.gs, bus.bs);
    }
    y
}

fn voltages(x: &[f64]) -> Vec<Complex64> {
    let n = x.len() / 2;
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}

fn random_state(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; 2 * n];
    for i in 0..n {
        let (v, a) = (rng.random_range(0.85..1.15), rng.random_range(-0.6..0.6));
        x[i] = v * f64::cos(a);
        x[n + i] = v * f64::sin(a);
    }
    x
}

#[test]
fn injections_match_complex_power_balance() {
    for name in ["case9.m", "case9mod.m"] {
        let case = load(name);
        let model = QuadraticModel::build(&case).unwrap();
        let y = ybus(&case);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..25 {
            let x = random_state(&mut rng, case.bus_count());
            let v = voltages(&x);
            for i in 0..case.bus_count() {
                let current: Complex64 = (0..v.len()).map(|j| y[i][j] * v[j]).sum();
                let s = v[i] * current.conj();
                let (p, q) = model.injection(i);
                assert!((p.eval(&x) - s.re).abs() < 1e-12, "{name} bus {i} P");
                assert!((q.eval(&x) - s.im).abs() < 1e-12, "{name} bus {i} Q");
            }
        }
    }
}

#[test]
fn branch_flows_match_complex_formulas() {
    let case = load("case9.m");
    let model = QuadraticModel::build(&case).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    let x = random_state(&mut rng, case.bus_count());
    let v = voltages(&x);
    for (k, br) in case.branches.iter().enumerate() {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let bc = Complex64::new(0.0, br.b / 2.0);
        let tau = Complex64::from_polar(br.tap, br.shift);
        let (vf, vt) = (v[br.from], v[br.to]);
        let i_f = (ys + bc) / (br.tap * br.tap) * vf - ys / tau.conj() * vt;
        let i_t = -ys / tau * vf + (ys + bc) * vt;
        let (sf, st) = (vf * i_f.conj(), vt * i_t.conj());
        let (from, to) = model.branch_power(k);
        assert!((from.p.eval(&x) - sf.re).abs() < 1e-12);
        assert!((from.q.eval(&x) - sf.im).abs() < 1e-12);
        assert!((to.p.eval(&x) - st.re).abs() < 1e-12);
        assert!((to.q.eval(&x) - st.im).abs() < 1e-12);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let case = load("case9.m");
    let model = QuadraticModel::build(&case).unwrap();
    let u = vec![1.0; model.controls().len()];
    let mut rng = StdRng::seed_from_u64(3);
    let x = random_state(&mut rng, case.bus_count());
    let j = model.jacobian(&x);
    let h = 1e-6;
    for c in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[c] += h;
        xm[c] -= h;
        let fd = (model.residual(&xp, &u) - model.residual(&xm, &u)) / (2.0 * h);
        // quadratic residuals: central differences are exact up to rounding
        assert!((fd - j.column(c)).amax() < 1e-8, "column {c}");
    }
}

#[test]
fn jacobian_is_affine_in_state() {
    let case = load("case9.m");
    let model = QuadraticModel::build(&case).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let x = random_state(&mut rng, case.bus_count());
    let j0 = model.jacobian_constant();
    let sum = (0..x.len()).fold(j0.clone(), |acc, m| acc + model.jacobian_slope(m) * x[m]);
    assert!((sum - model.jacobian(&x)).amax() < 1e-12);
    assert!((j0 + model.jacobian_linear(&x) - model.jacobian(&x)).amax() < 1e-12);
}

#[test]
fn log_determinant_matches_dense_determinant() {
    let mut rng = StdRng::seed_from_u64(13);
    for n in [1, 2, 5, 9, 18] {
        for _ in 0..10 {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let det = a.determinant();
            let (sign, logabs) = det_sign_logabs(&a, 1e-14);
            assert_eq!(sign as f64, det.signum());
            assert!((logabs - det.abs().ln()).abs() < 1e-9 * (1.0 + logabs.abs()));
            let (s2, l2) = DenseLu::new(a).det_sign_logabs();
            assert_eq!((s2, l2), (sign, logabs));
        }
    }
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    assert_eq!(det_sign_logabs(&singular, 1e-14).0, 0);
}

#[test]
fn residual_vanishes_at_power_flow_solution() {
    let case = load("case9.m");
    let model = QuadraticModel::build(&case).unwrap();
    let u: Vec<f64> = model
        .controls()
        .iter()
        .map(|c| if c.name().starts_with('P') { 0.9 } else { 1.0 })
        .collect();
    let r = spopf_core::powerflow::solve_power_flow(&model, &u, &model.flat_start(&u), Default::default());
    assert!(r.converged);
    assert!(model.residual(&r.x, &u).amax() <= 1e-8);
    let v = DVector::from_column_slice(&r.x);
    assert!(v.iter().all(|c| c.is_finite()));
}

fn raw_case() -> impl Strategy<Value = RawCase> {
    let n = 2usize..6;
    n.prop_flat_map(|n| {
        let buses = prop::collection::vec((0.0..200.0f64, -50.0..50.0f64, 0.85..0.95f64), n);
        let lines = prop::collection::vec((0.001..0.05f64, 0.02..0.3f64, 0.0..0.5f64), n - 1);
        let gen = (10.0..250.0f64, 0.95..1.05f64);
        (buses, lines, gen).prop_map(move |(buses, lines, (pmax, vset))| {
            let bus = buses
                .iter()
                .enumerate()
                .map(|(i, &(pd, qd, vmin))| {
                    let kind = if i == 0 { 3.0 } else { 1.0 };
                    vec![(i + 1) as f64, kind, pd, qd, 0.0, 0.0, 1.0, 1.0, 0.0, 230.0, 1.0, 1.1, vmin]
                })
                .collect();
            // a chain keeps the network connected
            let branch = lines
                .iter()
                .enumerate()
                .map(|(i, &(r, x, b))| {
                    vec![(i + 1) as f64, (i + 2) as f64, r, x, b, 250.0, 250.0, 250.0, 0.0, 0.0, 1.0, -360.0, 360.0]
                })
                .collect();
            RawCase {
                base_mva: 100.0,
                bus,
                gen: vec![vec![1.0, 0.0, 0.0, 300.0, -300.0, vset, 100.0, 1.0, pmax, 0.0]],
                branch,
            }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip_preserves_case(raw in raw_case()) {
        let direct = raw.clone().into_network(&mut Vec::new()).unwrap();
        let parsed = parse_case_json(&raw.to_json()).unwrap();
        prop_assert!(parsed.warnings.is_empty());
        prop_assert_eq!(parsed.case, direct);
    }

    #[test]
    fn model_equations_are_symmetric_quadratics(raw in raw_case()) {
        let case = raw.into_network(&mut Vec::new()).unwrap();
        let model = QuadraticModel::build(&case).unwrap();
        for q in model.equations() {
            let h = q.h.to_dense();
            prop_assert!((&h - h.transpose()).amax() < 1e-12);
        }
    }
}
