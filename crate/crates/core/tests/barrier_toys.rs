mod common;

use common::{disc_geodesic, DiscObstacle};
use nalgebra::{DMatrix, DVector};
use spopf_core::homotopy::shortest_path;
use spopf_core::ipm::{barrier_solve, BarrierStatus, LinearConstraints};
use spopf_core::metrics::polyline_length;
use spopf_core::path::uniform_parameters;
use spopf_core::{HomotopyParams, HomotopyStatus, IpmParams, PathDiscretization};

fn tight() -> IpmParams {
    IpmParams {
        eps_tol: 1e-10,
        ..Default::default()
    }
}

#[test]
fn one_dimensional_path_is_forced_onto_the_line() {
    // in 1-D the K equalities fix the K corners: p_k = t_k
    let lc = LinearConstraints {
        a: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        b: DVector::from_vec(vec![2.0, 1.0]),
    };
    let t = vec![0.0, 0.1, 0.3, 0.35, 0.7, 1.0];
    let path = PathDiscretization::new(t.clone(), vec![0.0], vec![1.0], vec![0.12, 0.25, 0.4, 0.66]).unwrap();
    let out = barrier_solve(&lc, &[], path, vec![vec![]; 4], 1e-2, &tight(), None).unwrap();
    assert_eq!(out.status, BarrierStatus::Converged);
    for (p, tk) in out.iterate.path.points().iter().zip(&t[1..5]) {
        assert!((p - tk).abs() < 1e-8, "{p} vs {tk}");
    }
}

#[test]
fn strip_barrier_path_is_symmetric_and_tends_to_the_line() {
    // −2 ≤ u_y ≤ 0.5 with the line along u_y = 0: the barrier pushes corners
    // towards the wider side, symmetrically about the midpoint
    let lc = LinearConstraints {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]),
        b: DVector::from_vec(vec![0.5, 2.0]),
    };
    let k = 7;
    let line = PathDiscretization::init_line_path(vec![0.0, 0.0], vec![1.0, 0.0], uniform_parameters(k)).unwrap();
    let mut prev_gap = f64::INFINITY;
    for mu in [3e-2, 1e-2, 1e-3, 1e-6] {
        let out = barrier_solve(&lc, &[], line.clone(), vec![vec![]; k], mu, &IpmParams::default(), None).unwrap();
        assert_eq!(out.status, BarrierStatus::Converged);
        let p = &out.iterate.path;
        for i in 1..=k {
            let (a, b) = (p.interior(i), p.interior(k + 1 - i));
            assert!((a[0] + b[0] - 1.0).abs() < 1e-8);
            assert!((a[1] - b[1]).abs() < 1e-8);
            assert!(a[1] <= 1e-12);
        }
        let gap = p.objective() - 1.0;
        assert!(gap >= -1e-9 && gap <= prev_gap);
        prev_gap = gap;
    }
    assert!(prev_gap < 1e-6);
}

#[test]
fn homotopy_goes_around_a_disc() {
    let disc = DiscObstacle { c: [0.0, 0.1], r: 1.0 };
    let (u0, u1) = (vec![-2.0, 0.0], vec![2.0, 0.0]);
    let out = shortest_path(
        &disc,
        uniform_parameters(19),
        u0.clone(),
        u1.clone(),
        &[],
        &[],
        &HomotopyParams::default(),
        &IpmParams::default(),
        None,
    )
    .unwrap();
    assert_eq!(out.status, HomotopyStatus::Success);
    assert!(out.max_violation_before > 0.9);
    assert!(out.max_violation_after <= -1e-8);
    let corners: Vec<&[f64]> = (0..=20).map(|k| out.path.corner(k)).collect();
    let len = polyline_length(&corners);
    let geodesic = disc_geodesic([-2.0, 0.0], [2.0, 0.0], disc.c, disc.r);
    // corners outside the disc, chords may cut it: slightly shorter than the geodesic
    assert!((len - geodesic).abs() / geodesic < 0.01, "length {len} vs {geodesic}");
    // the shorter way round is below the centre
    assert!(corners[1..20].iter().all(|c| c[1] < 0.1));
    for i in 1..=19 {
        let c = out.path.interior(i);
        // the final solve enforces g ≤ ε_ls
        let g = disc.r * disc.r - (c[0] - disc.c[0]).powi(2) - (c[1] - disc.c[1]).powi(2);
        assert!(g < 1e-6);
    }
}

#[test]
fn feasible_line_stays_put() {
    let lc = LinearConstraints {
        a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        b: DVector::from_vec(vec![3.0, 3.0]),
    };
    let out = shortest_path(
        &lc,
        uniform_parameters(9),
        vec![0.0, 0.0],
        vec![1.0, 2.0],
        &[],
        &[],
        &HomotopyParams::default(),
        &IpmParams::default(),
        None,
    )
    .unwrap();
    assert_eq!(out.status, HomotopyStatus::Success);
    assert!(out.v.norm_inf() == 0.0);
    assert!((out.path.objective() - 5.0).abs() < 1e-5);
}
