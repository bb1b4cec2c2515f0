//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::sync::Arc;

use dampde::fem::FeContext;
use dampde::forward::{ModelParams, Sampling, SolverSettings, SpaceTimeSolver, StepMode};
use dampde::harness::{run_study, StudyMode, StudyPlan, StudyReport, StudyRow};
use dampde::time::TimeGrid;
use dampde::verify::{
    duality_defect, gradient_fd_defect, oracle_discrepancy, random_control_problem,
    random_instance, DenseOracle,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn within(&mut self, what: &str, got: Option<f64>, want: f64, rel: f64) {
        match got {
            Some(v) if ((v - want) / want).abs() <= rel => {}
            Some(v) => self.failures.push(format!(
                "{what}: {v:.6} vs {want} (tolerance {:.0}%)",
                rel * 100.0
            )),
            None => self.failures.push(format!("{what}: missing")),
        }
    }

    fn near(&mut self, what: &str, got: Option<f64>, want: f64, abs: f64) {
        match got {
            Some(v) if (v - want).abs() <= abs => {}
            Some(v) => self
                .failures
                .push(format!("{what}: {v:.4} vs {want} ± {abs}")),
            None => self.failures.push(format!("{what}: missing")),
        }
    }

    fn report(self, label: &str, summary: String, all: &mut bool) {
        if self.failures.is_empty() {
            println!("PASS  {label}: {summary}");
        } else {
            *all = false;
            println!("FAIL  {label}: {summary}; {}", self.failures.join("; "));
        }
    }
}

fn study(mode: StudyMode, fixed: usize, sweep: &[usize]) -> StudyReport {
    let mut plan = StudyPlan::new(mode, fixed, sweep.to_vec());
    plan.settings = SolverSettings {
        sampling: Sampling::EndpointNodal,
        ..SolverSettings::default()
    };
    run_study(&plan).expect("valid plan")
}

fn column(rows: &[StudyRow], f: fn(&StudyRow) -> Option<f64>) -> String {
    rows.iter()
        .map(|r| f(r).map_or("-".into(), |v| format!("{v:.6}")))
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_rows(o: &mut Outcome, name: &str, rows: &[StudyRow]) {
    for r in rows {
        if let Some(f) = &r.failure {
            o.failures
                .push(format!("{name} n={} M={} failed: {f}", r.n, r.m));
        }
    }
}

fn small_solver(n: usize, m: usize) -> SpaceTimeSolver {
    let ctx = Arc::new(FeContext::new(n).unwrap());
    let settings = SolverSettings {
        mode: StepMode::default(),
        sampling: Sampling::EndpointNodal,
        ..SolverSettings::default()
    };
    SpaceTimeSolver::new(
        ctx,
        ModelParams::default(),
        TimeGrid::uniform(1.0, m).unwrap(),
        settings,
    )
    .unwrap()
}

fn main() -> ExitCode {
    let mut all = true;
    let mut slack: Vec<(String, f64)> = Vec::new();
    let mut excess: Vec<(String, f64)> = Vec::new();
    let mut rvd: Vec<(String, f64, f64)> = Vec::new();
    let mut record = |name: &str,
                      rows: &[StudyRow],
                      slack: &mut Vec<(String, f64)>,
                      excess: &mut Vec<(String, f64)>| {
        for r in rows {
            let tag = format!("{name} n={} M={}", r.n, r.m);
            if let Some(s) = r.min_stability_slack {
                slack.push((tag.clone(), s));
            }
            if let Some(e) = r.contraction_excess {
                excess.push((tag.clone(), e));
            }
            if let (Some(v), Some(g)) = (r.r_vd, r.initial_gradient_norm) {
                rvd.push((tag, v, g));
            }
        }
    };

    // 1
    let t1 = study(StudyMode::TimeRefine, 256, &[8, 32, 128]);
    let mut o = Outcome {
        failures: Vec::new(),
    };
    check_rows(&mut o, "time study", &t1.rows);
    for (r, (d, phi)) in t1.rows.iter().zip([
        (0.033285, 0.001617),
        (0.010362, 0.000512),
        (0.002764, 0.000148),
    ]) {
        o.within(&format!("err_d M={}", r.m), r.err_d, d, 0.01);
        o.within(&format!("err_phi M={}", r.m), r.err_phi, phi, 0.02);
    }
    for (r, e) in t1.rows[1..].iter().zip([0.84, 0.95]) {
        o.near(&format!("eoc_d M={}", r.m), r.eoc_d, e, 0.05);
    }
    let summary = format!(
        "err_d [{}] eoc_d [{}] err_phi [{}]",
        column(&t1.rows, |r| r.err_d),
        column(&t1.rows, |r| r.eoc_d),
        column(&t1.rows, |r| r.err_phi)
    );
    o.report("criterion 1 (time refinement, n=256)", summary, &mut all);
    record("time study", &t1.rows, &mut slack, &mut excess);

    // 2
    let t2 = study(StudyMode::SpaceRefine, 512, &[8, 16, 32, 64]);
    let mut o = Outcome {
        failures: Vec::new(),
    };
    check_rows(&mut o, "space study", &t2.rows);
    for (r, (phi, d)) in t2.rows.iter().zip([
        (0.032623, 0.029018),
        (0.008523, 0.007740),
        (0.002163, 0.002195),
        (0.000552, 0.000947),
    ]) {
        o.within(&format!("err_phi n={}", r.n), r.err_phi, phi, 0.01);
        o.within(&format!("err_d n={}", r.n), r.err_d, d, 0.02);
    }
    for (r, e) in t2.rows[1..].iter().zip([1.93, 1.97, 1.97]) {
        o.near(&format!("eoc_phi n={}", r.n), r.eoc_phi, e, 0.05);
    }
    let summary = format!(
        "err_phi [{}] eoc_phi [{}] err_d [{}]",
        column(&t2.rows, |r| r.err_phi),
        column(&t2.rows, |r| r.eoc_phi),
        column(&t2.rows, |r| r.err_d)
    );
    o.report("criterion 2 (space refinement, M=512)", summary, &mut all);
    record("space study", &t2.rows, &mut slack, &mut excess);

    // 3
    let t3a = study(StudyMode::OcpTimeRefine, 128, &[8, 32, 128]);
    let t3b = study(StudyMode::OcpSpaceRefine, 512, &[8, 16, 32]);
    let mut o = Outcome {
        failures: Vec::new(),
    };
    check_rows(&mut o, "control time study", &t3a.rows);
    check_rows(&mut o, "control space study", &t3b.rows);
    for (r, l) in t3a.rows.iter().zip([0.001394, 0.000439, 0.000118]) {
        o.within(&format!("err_l n=128 M={}", r.m), r.err_l, l, 0.05);
    }
    for (r, e) in t3a.rows[1..].iter().zip([0.88, 0.94]) {
        o.near(&format!("eoc_l M={}", r.m), r.eoc_l, e, 0.1);
    }
    for (r, l) in t3b.rows.iter().zip([0.002830, 0.000766, 0.000203]) {
        o.within(&format!("err_l M=512 n={}", r.n), r.err_l, l, 0.05);
    }
    for (r, e) in t3b.rows[1..].iter().zip([1.88, 1.91]) {
        o.near(&format!("eoc_l n={}", r.n), r.eoc_l, e, 0.1);
    }
    let summary = format!(
        "time block err_l [{}] eoc [{}]; space block err_l [{}] eoc [{}]",
        column(&t3a.rows, |r| r.err_l),
        column(&t3a.rows, |r| r.eoc_l),
        column(&t3b.rows, |r| r.err_l),
        column(&t3b.rows, |r| r.eoc_l)
    );
    o.report("criterion 3 (optimal control)", summary, &mut all);
    record("control time study", &t3a.rows, &mut slack, &mut excess);
    record("control space study", &t3b.rows, &mut slack, &mut excess);

    // 4
    let mut o = Outcome {
        failures: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for n in [1, 2, 4] {
        for m in [1, 2, 4] {
            let solver = small_solver(n, m);
            let oracle = DenseOracle::new(&solver).unwrap();
            for k in 0..20 {
                let inst = random_instance(&solver, &mut rng);
                match oracle_discrepancy(&solver, &oracle, &inst) {
                    Ok(d) => worst = worst.max(d),
                    Err(e) => o.failures.push(format!("n={n} M={m} set {k}: {e}")),
                }
                if let Ok(st) = solver.solve_state_loads(inst.loads, inst.d_init, inst.ode) {
                    slack.push((
                        format!("oracle n={n} M={m}"),
                        solver.stability_report(&st).unwrap().min_slack(),
                    ));
                    for r in &st.contraction {
                        excess.push((format!("oracle n={n} M={m}"), r.max_ratio - r.bound));
                    }
                }
            }
        }
    }
    if worst > 1e-10 {
        o.failures
            .push(format!("max relative difference {worst:.3e} > 1e-10"));
    }
    o.report(
        "criterion 4 (dense oracle equivalence)",
        format!("180 data sets, max relative difference {worst:.3e}"),
        &mut all,
    );

    // 5
    let mut o = Outcome {
        failures: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sizes = [
        (1, 1),
        (2, 2),
        (2, 4),
        (4, 1),
        (4, 2),
        (4, 4),
        (3, 3),
        (4, 3),
    ];
    let mut worst_dual: f64 = 0.0;
    for k in 0..50 {
        let (n, m) = sizes[k % sizes.len()];
        match duality_defect(&small_solver(n, m), &mut rng) {
            Ok(d) => worst_dual = worst_dual.max(d),
            Err(e) => o.failures.push(format!("duality instance {k}: {e}")),
        }
    }
    let mut worst_fd: f64 = 0.0;
    for k in 0..20 {
        let (n, m) = sizes[k % sizes.len()];
        let solver = Arc::new(small_solver(n, m));
        let defect =
            random_control_problem(solver, &mut rng).and_then(|p| gradient_fd_defect(&p, &mut rng));
        match defect {
            Ok(d) => worst_fd = worst_fd.max(d),
            Err(e) => o.failures.push(format!("gradient instance {k}: {e}")),
        }
    }
    if worst_dual > 1e-9 {
        o.failures
            .push(format!("duality defect {worst_dual:.3e} > 1e-9"));
    }
    if worst_fd > 1e-6 {
        o.failures
            .push(format!("finite-difference defect {worst_fd:.3e} > 1e-6"));
    }
    o.report(
        "criterion 5 (duality and gradient)",
        format!("50 duality instances max {worst_dual:.3e}; 20 gradient checks max {worst_fd:.3e}"),
        &mut all,
    );

    // 6
    let mut o = Outcome {
        failures: Vec::new(),
    };
    let min_slack = slack.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    for (tag, s) in &slack {
        if *s < -1e-10 {
            o.failures.push(format!("{tag}: slack {s:.3e}"));
        }
    }
    o.report(
        "criterion 6 (stability)",
        format!("{} runs, min slack {min_slack:.3e}", slack.len()),
        &mut all,
    );

    // 7
    let mut o = Outcome {
        failures: Vec::new(),
    };
    let cg_rel_tol = dampde::optimizer::OptimizerConfig::default().cg_rel_tol;
    let mut worst_ratio: f64 = 0.0;
    for (tag, v, g) in &rvd {
        worst_ratio = worst_ratio.max(v / g);
        if *v > 10.0 * cg_rel_tol * g {
            o.failures
                .push(format!("{tag}: r_vd {v:.3e} > 10·tol·{g:.3e}"));
        }
    }
    if rvd.is_empty() {
        o.failures.push("no optimal control runs recorded".into());
    }
    o.report(
        "criterion 7 (variational discretization)",
        format!("{} runs, max r_vd/|grad j(0)| {worst_ratio:.3e}", rvd.len()),
        &mut all,
    );

    // 8
    let mut o = Outcome {
        failures: Vec::new(),
    };
    let max_excess = excess.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    for (tag, e) in &excess {
        if *e > 1e-8 {
            o.failures
                .push(format!("{tag}: ratio exceeds bound by {e:.3e}"));
        }
    }
    o.report(
        "criterion 8 (fixed-point contraction)",
        format!(
            "{} records, max (ratio - bound) {max_excess:.3e}",
            excess.len()
        ),
        &mut all,
    );

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
