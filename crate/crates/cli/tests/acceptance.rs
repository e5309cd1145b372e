//! Acceptance criteria 1 to 12. Each test prints one PASS/FAIL line.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dwlab_core::dyadic::{CubeFilter, CubeId, Truncation};
use dwlab_core::harness::{run_experiment, Experiment, ExperimentName, Report, DEFAULT_SEED};
use dwlab_core::linalg::C64;
use dwlab_core::reducing::{build_family, Backend};
use dwlab_core::seqspace::{random_sequence, seq_norm, single_point_oracle, vec_norm, CoeffSeq, Family, Mode, ScaleLaw, SpaceParams};
use dwlab_core::weights::{MatrixWeight, PowerGrid, QuadratureSpec};

const IDENTITY_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-3;
const EXACT_RANGE: (f64, f64) = (0.999, 1.001);

fn line(n: u32, name: &str, ok: bool, detail: &str, elapsed: Duration, limit: Duration) -> bool {
    let in_time = elapsed < limit;
    println!(
        "criterion {n:>2} {name}: {} ({detail}; {:.2} s, limit {} s)",
        if ok && in_time { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok && in_time
}

fn experiment_criteria(n: u32, names: &[ExperimentName], limit: u64) {
    let start = Instant::now();
    let reports: Vec<Report> = names.iter().map(|&e| run_experiment(&Experiment::new(e, DEFAULT_SEED)).unwrap()).collect();
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.criteria.iter().filter(|c| !c.passed).map(move |c| format!("{} / {} = {}", r.experiment, c.name, c.value.0)))
        .collect();
    let label = names.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(" + ");
    let count: usize = reports.iter().map(|r| r.criteria.len()).sum();
    let detail = if failed.is_empty() { format!("{count} checks") } else { failed.join("; ") };
    assert!(line(n, &label, failed.is_empty(), &detail, start.elapsed(), Duration::from_secs(limit)));
}

#[test]
fn criterion_01_averaging_identity() {
    let start = Instant::now();
    let t = Truncation::new(1, 0, 5, 2).unwrap();
    let quad = QuadratureSpec::new(4).unwrap();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for m in 1..=3usize {
        let exps: Vec<f64> = [-0.5, -0.25, 0.5][..m].to_vec();
        let w = MatrixWeight::diag_power(1, &exps, None).unwrap();
        let fam = Arc::new(build_family(&w, 2.0, &t, quad, Backend::ExactP2).unwrap());
        for (family, q) in [(Family::B, 0.5), (Family::B, 2.0), (Family::F, 0.5), (Family::F, 2.0)] {
            let base = SpaceParams::new(family, 0.3, 2.0, q);
            let avg = base.clone().with_mode(Mode::Averaging(fam.clone()));
            for i in 0..25u64 {
                let tv = random_sequence(&t, m, 1000 * m as u64 + i, 0.3, ScaleLaw { sigma: 0.0 }, false).unwrap();
                let mags = CoeffSeq::from_scalars(tv.entries.iter().map(|(c, v)| (c.clone(), vec_norm(&fam.get(c).unwrap().mul_vec(v)))));
                let a = seq_norm(&tv, &avg, &t).unwrap();
                let b = seq_norm(&mags, &base, &t).unwrap();
                worst = worst.max((a - b).abs() / b);
                cases += 1;
            }
        }
    }
    assert!(line(1, "averaging identity", worst <= IDENTITY_TOL, &format!("{cases} sequences, max rel err {worst:e}"), start.elapsed(), Duration::from_secs(5)));
}

#[test]
fn criterion_02_single_point_oracle() {
    let start = Instant::now();
    let report = run_experiment(&Experiment::new(ExperimentName::Single, DEFAULT_SEED)).unwrap();
    let t = Truncation::new(1, 0, 6, 2).unwrap();
    let quad = QuadratureSpec::new(16).unwrap();
    let mut worst: f64 = 0.0;
    for exps in [[0.5, 1.0], [-0.5, 0.5]] {
        let w = MatrixWeight::diag_power(1, &exps, None).unwrap();
        let space = SpaceParams::new(Family::F, 0.2, 1.5, 2.0);
        let grid = Arc::new(PowerGrid::new(&w, space.p, &t, quad).unwrap());
        let sp = space.clone().with_mode(Mode::Matrix(grid));
        for q in t.enumerate(&CubeFilter::All).unwrap().into_iter().filter(|q| q.k[0] > 0).step_by(9) {
            let z = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
            let mut tv = CoeffSeq::new(2);
            tv.insert(q.clone(), z.clone()).unwrap();
            let got = seq_norm(&tv, &sp, &t).unwrap();
            let want = single_point_oracle(&q, &z, &space, Some(&w)).unwrap();
            worst = worst.max((got - want).abs() / want);
        }
    }
    let p1 = {
        let t = Truncation::new(1, 0, 4, 1).unwrap();
        let mut tv = CoeffSeq::new(1);
        tv.insert(CubeId::new(2, &[0]), vec![C64::new(1.0, 0.0)]).unwrap();
        seq_norm(&tv, &SpaceParams::new(Family::B, 0.0, 1.0, 1.0), &t).unwrap()
    };
    let ok = report.passed() && worst < ORACLE_TOL && p1 == 0.5;
    let detail = format!("SINGLE report passed = {}, diag(|x|^a, |x|^b) max rel err {worst:e}, p=1 example {p1}", report.passed());
    assert!(line(2, "single-point oracle", ok, &detail, start.elapsed(), Duration::from_secs(10)));
}

#[test]
fn criterion_03_reducing_validity() {
    let start = Instant::now();
    let t = Truncation::new(1, 0, 5, 2).unwrap();
    let quad = QuadratureSpec::new(4).unwrap();
    let mut msgs = vec![];
    let mut ok = true;
    let weights = [
        MatrixWeight::rotated_diag_power(1, -0.5, 0.5),
        MatrixWeight::diag_power(1, &[-0.5, -0.25], None).unwrap(),
        MatrixWeight::diag_power(1, &[-0.5, 0.25, 0.75], None).unwrap(),
    ];
    for w in &weights {
        let exact = build_family(w, 2.0, &t, quad, Backend::ExactP2).unwrap().bounds;
        let pass = exact.0 >= EXACT_RANGE.0 && exact.1 <= EXACT_RANGE.1;
        ok &= pass;
        msgs.push(format!("{} exact [{:.6}, {:.6}]", w.label, exact.0, exact.1));
        for p in [1.0, 2.0, 4.0] {
            let (lo, hi) = build_family(w, p, &t, quad, Backend::Mvee).unwrap().bounds;
            let limit = 2.0 * (w.m as f64).sqrt();
            ok &= hi / lo <= limit;
            msgs.push(format!("m={} p={p} mvee spread {:.4} <= {:.4}", w.m, hi / lo, limit));
        }
    }
    assert!(line(3, "reducing operators", ok, &msgs.join(", "), start.elapsed(), Duration::from_secs(30)));
}

#[test]
fn criterion_04_eq_aw() {
    experiment_criteria(4, &[ExperimentName::EqAw], 60);
}

#[test]
fn criterion_05_eq_gstar() {
    experiment_criteria(5, &[ExperimentName::EqGstar], 30);
}

#[test]
fn criterion_06_ad_bound_and_necessity() {
    experiment_criteria(6, &[ExperimentName::AdBound, ExperimentName::AdNec], 60);
}

#[test]
fn criterion_07_cex_b() {
    experiment_criteria(7, &[ExperimentName::CexB], 10);
}

#[test]
fn criterion_08_inv_f() {
    experiment_criteria(8, &[ExperimentName::InvF], 60);
}

#[test]
fn criterion_09_sob() {
    experiment_criteria(9, &[ExperimentName::Sob], 30);
}

#[test]
fn criterion_10_calderon_and_wavelets() {
    experiment_criteria(10, &[ExperimentName::Calderon, ExperimentName::WavNorm], 60);
}

#[test]
fn criterion_11_peetre_and_square_functions() {
    experiment_criteria(11, &[ExperimentName::Peetre, ExperimentName::Lpfunc], 120);
}

#[test]
fn criterion_12_full_cli_run() {
    let start = Instant::now();
    let out = std::env::temp_dir().join(format!("dwlab-acceptance-{}.json", std::process::id()));
    let status = Command::new(env!("CARGO_BIN_EXE_dwlab"))
        .args(["verify", "all", "--seed", "0xDAD1C", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    let text = std::fs::read_to_string(&out).unwrap_or_default();
    let _ = std::fs::remove_file(&out);
    let suite: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
    let ok = status.status.success() && suite["passed"] == true && suite["results"].as_array().map_or(0, |a| a.len()) == 14;
    let detail = format!("exit {:?}, {} reports", status.status.code(), suite["results"].as_array().map_or(0, |a| a.len()));
    assert!(line(12, "dwlab verify all", ok, &detail, start.elapsed(), Duration::from_secs(600)));
}
