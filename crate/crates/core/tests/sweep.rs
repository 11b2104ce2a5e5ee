use std::fs;

use dwn_core::dynamics::{DynamicsConfig, InitialState};
use dwn_core::model::{builtin, Momentum};
use dwn_core::spectral::{Axis, Plane};
use dwn_core::sweep::*;
use dwn_core::winding::{Rational, Source, Status};
use dwn_core::Error;
use num_complex::Complex64;

fn axis(param: &str, min: f64, max: f64, count: usize) -> AxisSpec {
    AxisSpec {
        param: param.into(),
        min,
        max,
        count,
    }
}

fn chiral_plan(n: usize) -> SweepPlan {
    SweepPlan {
        family: "chiral1d".into(),
        params: vec![0.0, 1.0, 1.0, 0.0],
        axis1: axis("J0", 0.0, 2.5, n),
        axis2: axis("delta", 0.0, 2.5, n),
        invariant: Invariant::Dwn1d,
        budget: Budget::default(),
    }
}

fn dynamic_plan() -> SweepPlan {
    let mut p = chiral_plan(4);
    p.axis1 = axis("J0", 0.3, 1.7, 4);
    p.axis2 = axis("delta", 0.15, 0.9, 3);
    p.budget.samples = 64;
    p.budget.source = Source::Dynamic(DynamicsConfig {
        horizon: 40.0,
        ..DynamicsConfig::default()
    });
    p
}

fn same_cells(a: &SweepGrid, b: &SweepGrid) {
    assert_eq!(a.cells.len(), b.cells.len());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!((x.index, x.value, x.status), (y.index, y.value, y.status));
        assert_eq!(x.axis1.to_bits(), y.axis1.to_bits());
        assert_eq!(x.diagnostics, y.diagnostics, "cell {}", x.index);
    }
}

#[test]
fn plan_validation() {
    let mut p = chiral_plan(5);
    p.axis1.count = 1;
    assert!(matches!(p.validate(), Err(Error::InvalidPlan(_))));
    let mut p = chiral_plan(5);
    p.axis2.param = "mz".into();
    assert!(matches!(p.validate(), Err(Error::InvalidPlan(_))));
    let mut p = chiral_plan(5);
    p.axis2.param = "J0".into();
    assert!(matches!(p.validate(), Err(Error::InvalidPlan(_))));
    let mut p = chiral_plan(5);
    p.invariant = Invariant::ChernDwn;
    assert!(matches!(p.validate(), Err(Error::InvalidPlan(_))));
    let mut p = chiral_plan(5);
    p.axis1.max = f64::INFINITY;
    assert!(matches!(p.validate(), Err(Error::InvalidPlan(_))));
    let mut p = chiral_plan(5);
    p.params.pop();
    assert!(matches!(p.validate(), Err(Error::InvalidPlan(_))));
}

#[test]
fn plan_json_round_trip_with_defaults() {
    let text = r#"{"family":"qah2d","params":[1,0,0],
        "axis1":{"param":"mz","min":0,"max":3,"count":5},
        "axis2":{"param":"delta","min":0,"max":1.2,"count":4},
        "invariant":"chern-dwn"}"#;
    let plan: SweepPlan = serde_json::from_str(text).unwrap();
    assert_eq!(plan.budget, Budget::default());
    let back: SweepPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(back, plan);
    assert!(serde_json::from_str::<SweepPlan>(&text.replace("\"invariant\"", "\"bogus\":1,\"invariant\"")).is_err());
}

#[test]
fn identical_across_worker_counts() {
    let p = dynamic_plan();
    let one = run_sweep(&p, &SweepOptions { workers: Some(1), ..Default::default() }).unwrap();
    let four = run_sweep(&p, &SweepOptions { workers: Some(4), ..Default::default() }).unwrap();
    assert!(one.is_complete());
    same_cells(&one, &four);
}

#[test]
fn per_cell_seeds() {
    assert_eq!(cell_seed(7, 3), cell_seed(7, 3));
    assert_ne!(cell_seed(7, 3), cell_seed(7, 4));
    assert_ne!(cell_seed(7, 3), cell_seed(8, 3));
}

#[test]
fn resume_after_interruption_matches_fresh_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dynamic_plan();
    let fresh_path = dir.path().join("fresh.csv");
    let fresh = run_sweep(&p, &SweepOptions { output: Some(fresh_path.clone()), ..Default::default() }).unwrap();

    let path = dir.path().join("resumed.csv");
    let partial = run_sweep(
        &p,
        &SweepOptions {
            output: Some(path.clone()),
            limit: Some(5),
            workers: Some(2),
        },
    )
    .unwrap();
    assert_eq!(partial.cells.len(), 5);
    assert!(!partial.is_complete());
    // a torn row and a torn sidecar line, as left by a kill mid-write
    let mut csv = fs::read_to_string(&path).unwrap();
    csv.push_str("11,2,2,1.23");
    fs::write(&path, csv).unwrap();
    let mut side = fs::read_to_string(sidecar_path(&path)).unwrap();
    side.push_str("{\"index\":11,\"diag");
    fs::write(sidecar_path(&path), side).unwrap();

    let resumed = run_sweep(&p, &SweepOptions { output: Some(path.clone()), ..Default::default() }).unwrap();
    same_cells(&fresh, &resumed);

    let rows = |f: &std::path::Path| {
        let mut v: Vec<String> = fs::read_to_string(f).unwrap().lines().skip(1).map(String::from).collect();
        v.sort();
        v
    };
    assert_eq!(rows(&fresh_path), rows(&path));
    let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "index,i,j,axis1,axis2,value_num,value_den,status");

    // a finished output resumes to itself without recomputation
    let again = run_sweep(&p, &SweepOptions { output: Some(path.clone()), ..Default::default() }).unwrap();
    same_cells(&fresh, &again);
}

#[test]
fn refuses_output_of_another_plan() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    run_sweep(&chiral_plan(3), &SweepOptions { output: Some(path.clone()), ..Default::default() }).unwrap();
    let err = run_sweep(&chiral_plan(4), &SweepOptions { output: Some(path), ..Default::default() });
    assert!(matches!(err, Err(Error::InvalidPlan(_))));
}

#[test]
fn single_phase_grid_has_no_violations() {
    let mut p = chiral_plan(6);
    p.axis1 = axis("J0", 3.0, 4.0, 6);
    p.axis2 = axis("delta", 0.0, 0.2, 6);
    let g = run_sweep(&p, &SweepOptions::default()).unwrap();
    let a = boundary_audit(&g, BoundarySet::Chain1d).unwrap();
    assert_eq!(a.changes, 0);
    assert!(a.violations.is_empty());
    assert_eq!(a.histogram.get("0"), Some(&36));
}

#[test]
fn coarse_chiral_diagram_audits_clean() {
    let g = run_sweep(&chiral_plan(21), &SweepOptions::default()).unwrap();
    let a = boundary_audit(&g, BoundarySet::Chain1d).unwrap();
    assert!(a.violations.is_empty(), "{:?}", a.violations);
    for v in ["0", "1/2", "1", "3/2", "2"] {
        assert!(a.histogram.contains_key(v), "missing region {v}: {:?}", a.histogram);
    }
}

#[test]
fn audit_flags_misplaced_changes() {
    let mut g = run_sweep(&chiral_plan(11), &SweepOptions::default()).unwrap();
    // (J0, δ) = (2.5, 0) is far from every crossing line
    let n = 10 * 11;
    assert_eq!(g.cells[n].value, Some(Rational::integer(0)));
    g.cells[n].value = Some(Rational::integer(1));
    let a = boundary_audit(&g, BoundarySet::Chain1d).unwrap();
    assert!(!a.violations.is_empty());
    assert!(boundary_audit(&g, BoundarySet::Qah2dExact).is_err());
}

#[test]
fn incomplete_grid_cannot_be_audited() {
    let g = run_sweep(&chiral_plan(4), &SweepOptions { limit: Some(3), ..Default::default() }).unwrap();
    assert!(boundary_audit(&g, BoundarySet::Chain1d).is_err());
}

#[test]
fn wtotal_and_oracle_invariants() {
    let p = SweepPlan {
        family: "nonchiral1d".into(),
        params: vec![0.0, 1.0, 0.0, 0.0, 0.5],
        axis1: axis("J0", 0.0, 2.5, 11),
        axis2: axis("delta", 0.0, 2.5, 11),
        invariant: Invariant::Wtotal,
        budget: Budget::default(),
    };
    let g = run_sweep(&p, &SweepOptions::default()).unwrap();
    assert!(boundary_audit(&g, BoundarySet::Chain1d).unwrap().violations.is_empty());
    let c = g.at(1, 1).unwrap();
    assert_eq!((c.value, c.status), (Some(Rational::integer(2)), Status::Resolved));

    let q = SweepPlan {
        family: "qah2d".into(),
        params: vec![1.0, 0.0, 0.0],
        axis1: axis("mz", 0.5, 2.9, 4),
        axis2: axis("delta", 0.0, 0.3, 2),
        invariant: Invariant::ChernOracle,
        budget: Budget::default(),
    };
    let g = run_sweep(&q, &SweepOptions::default()).unwrap();
    let values: Vec<Option<i64>> = g.cells.iter().map(|c| c.value.map(|v| v.num)).collect();
    assert_eq!(values, vec![Some(1), Some(1), Some(1), Some(1), Some(0), Some(0), Some(0), Some(0)]);
}

#[test]
fn convergence_ladder_decreases() {
    let m = builtin("qah2d", &[1.0, 1.0, 0.0]).unwrap();
    let ks = offset_grid(16);
    let rows = convergence_study(&m, &ks, &[10.0, 20.0, 40.0, 80.0], 0.02, Axis::Y.plane(), &InitialState::default()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[3].max_diff < rows[0].max_diff);
    assert!(rows.windows(2).all(|w| w[1].mean_diff < w[0].mean_diff));
}

#[test]
fn stationary_state_has_no_transient() {
    let m = builtin("qah2d", &[1.0, 1.0, 0.0]).unwrap();
    let init = InitialState::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let rows = convergence_study(&m, &offset_grid(8), &[10.0, 80.0], 0.02, Axis::Y.plane(), &init).unwrap();
    assert!(rows.iter().all(|r| r.max_diff < 1e-9), "{rows:?}");
}

#[test]
fn b_dominated_point_converges() {
    let m = builtin("chiral1d", &[1.0, 1.0, 0.0, 0.3]).unwrap();
    let k = [Momentum::k1(0.7)];
    let h = m.h_at(&k[0]);
    let b = dwn_core::spectral::principal_energy(&h).im.abs();
    let ladder = [10.0 / b, 20.0 / b, 40.0 / b];
    let rows = convergence_study(&m, &k, &ladder, 0.02, Plane::YX, &InitialState::default()).unwrap();
    // the subdominant transient decays as 1/(|B| T)
    assert!(rows.windows(2).all(|w| w[1].max_diff < w[0].max_diff), "{rows:?}");
    assert!(rows[0].max_diff < 0.05, "{rows:?}");
}

#[test]
fn load_grid_reads_back_without_touching_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let p = chiral_plan(3);
    let g = run_sweep(&p, &SweepOptions { output: Some(path.clone()), ..Default::default() }).unwrap();
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("9,3,0,0.5");
    fs::write(&path, &text).unwrap();
    let back = load_grid(&path).unwrap();
    assert_eq!(back.plan, p);
    same_cells(&g, &back);
    assert_eq!(fs::read_to_string(&path).unwrap(), text);

    let mut buf = Vec::new();
    write_csv(&g, &mut buf).unwrap();
    let out = String::from_utf8(buf).unwrap();
    assert_eq!(out.lines().count(), 10);
    assert!(out.starts_with("index,i,j,axis1,axis2,value_num,value_den,status\n"));
}
