mod common;

use std::collections::VecDeque;

use common::{data_path, load_case};
use spopf_core::diagnostics::{check_derivatives, CheckOptions, Fault};
use spopf_core::metrics::path_metrics;
use spopf_core::{run_solve, ConstraintSet, HomotopyStatus, QuadraticModel, Scenario};

fn scenario(name: &str) -> (Scenario, spopf_core::NetworkCase) {
    let file = data_path(name);
    let sc = Scenario::from_json(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let case_file = sc.case_path(&file).unwrap();
    let case = spopf_core::parse_case_matpower(&std::fs::read_to_string(case_file).unwrap())
        .unwrap()
        .case;
    (sc, case)
}

#[test]
fn variant1_reaches_a_feasible_path() {
    let (sc, case) = scenario("variant1.json");
    let run = run_solve(&case, &sc, None).unwrap();
    let r = &run.report;
    assert_eq!(r.status, HomotopyStatus::Success);
    assert_eq!(r.controls, vec!["P2", "P3"]);
    assert!(r.max_violation_before > 0.0);
    assert!(r.max_violation_after <= -1e-8);
    assert!(r.residual_relaxation == 0.0);
    assert!((r.obj_fun_gap_pct - 34.8).abs() < 0.5, "gap {}", r.obj_fun_gap_pct);
    // every stage relaxation is no larger than the previous one
    for w in r.stages.windows(2) {
        assert!(w[1].v_inf <= w[0].v_inf);
    }
}

#[test]
fn variant1_is_deterministic() {
    let (sc, case) = scenario("variant1.json");
    let a = run_solve(&case, &sc, None).unwrap();
    let b = run_solve(&case, &sc, None).unwrap();
    assert_eq!(a.path, b.path);
    let (mut ra, mut rb) = (a.report, b.report);
    ra.wall_time_s = 0.0;
    rb.wall_time_s = 0.0;
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

#[test]
fn variant2_stagnates_with_a_residual_relaxation() {
    let (sc, case) = scenario("variant2.json");
    let run = run_solve(&case, &sc, None).unwrap();
    assert_eq!(run.report.status, HomotopyStatus::StagnationFailure);
    assert!(run.report.residual_relaxation > 1e-3);
}

/// Feasibility of a `(P2, P3)` grid over the generator boxes, everything else
/// held at the scenario's values.
fn feasible_grid(sc: &Scenario, case: &spopf_core::NetworkCase, n: usize) -> (Vec<Vec<bool>>, [f64; 4]) {
    let model = QuadraticModel::build(case).unwrap();
    let resolved = sc.resolve(case, &model).unwrap();
    let set = ConstraintSet::build(case, &model, resolved.layout.clone(), sc.constraints).unwrap();
    let gen = |name: &str| {
        let c = model.control_index(name).unwrap();
        case.generator_at(model.controls()[c].bus).unwrap().clone()
    };
    let (g2, g3) = (gen("P2"), gen("P3"));
    let bounds = [g2.pmin, g2.pmax, g3.pmin, g3.pmax];
    let mut grid = vec![vec![false; n]; n];
    for (i, row) in grid.iter_mut().enumerate() {
        let p2 = bounds[0] + (bounds[1] - bounds[0]) * i as f64 / (n - 1) as f64;
        let mut warm = model.flat_start(&resolved.layout.full(&resolved.u0));
        for (j, cell) in row.iter_mut().enumerate() {
            let p3 = bounds[2] + (bounds[3] - bounds[2]) * j as f64 / (n - 1) as f64;
            let u = [p2, p3];
            if let Ok(eval) = set.eval(&model, &u, &warm) {
                *cell = eval.g.iter().all(|v| *v < 0.0);
                warm = eval.x;
            }
        }
    }
    (grid, bounds)
}

#[test]
fn case9mod_endpoints_lie_in_disconnected_regions() {
    let (sc, case) = scenario("variant2.json");
    let n = 121;
    let (grid, b) = feasible_grid(&sc, &case, n);
    let cell = |p2: f64, p3: f64| {
        let i = ((p2 - b[0]) / (b[1] - b[0]) * (n - 1) as f64).round() as usize;
        let j = ((p3 - b[2]) / (b[3] - b[2]) * (n - 1) as f64).round() as usize;
        (i, j)
    };
    let start = cell(sc.u0["P2"], sc.u0["P3"]);
    let goal = cell(sc.u1["P2"], sc.u1["P3"]);
    assert!(grid[start.0][start.1] && grid[goal.0][goal.1]);
    let mut seen = vec![vec![false; n]; n];
    let mut queue = VecDeque::from([start]);
    seen[start.0][start.1] = true;
    while let Some((i, j)) = queue.pop_front() {
        let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
        for (a, c) in nbrs {
            if a < n && c < n && grid[a][c] && !seen[a][c] {
                seen[a][c] = true;
                queue.push_back((a, c));
            }
        }
    }
    assert!(!seen[goal.0][goal.1], "a feasible grid route joins the endpoints");
}

#[test]
fn derivative_checks_pass_and_catch_a_corrupted_hessian() {
    let case = load_case("case9.m");
    let report = check_derivatives(&case, &CheckOptions::default()).unwrap();
    assert_eq!(report.points, 20);
    assert!(report.pass(), "{report:#?}");
    let families: Vec<&str> = report.families.iter().map(|f| f.family.as_str()).collect();
    for f in ["dx/du", "dg/du", "hess(z'g)", "grad phi", "hess phi"] {
        assert!(families.contains(&f), "missing family {f} in {families:?}");
    }
    let faulty = CheckOptions {
        fault: Some(Fault::Hessian),
        points: 3,
        ..Default::default()
    };
    let report = check_derivatives(&case, &faulty).unwrap();
    assert!(!report.pass());
    let bad: Vec<&str> = report.families.iter().filter(|f| !f.pass).map(|f| f.family.as_str()).collect();
    assert_eq!(bad, vec!["hess(z'g)"]);
}

#[test]
fn csv_reload_reproduces_metrics() {
    let (sc, case) = scenario("variant1.json");
    let run = run_solve(&case, &sc, None).unwrap();
    let mut buf = Vec::new();
    run.path.write_csv(&run.names, &mut buf).unwrap();
    let (path, names) = spopf_core::PathDiscretization::read_csv(&buf[..]).unwrap();
    assert_eq!(names, run.names);
    let corners: Vec<&[f64]> = (0..=path.k() + 1).map(|k| path.corner(k)).collect();
    let m = path_metrics(&corners);
    assert!((m.path_diff_pct - run.report.path_diff_pct).abs() <= 1e-12);
    assert!((m.obj_fun_gap_pct - run.report.obj_fun_gap_pct).abs() <= 1e-12);
}
