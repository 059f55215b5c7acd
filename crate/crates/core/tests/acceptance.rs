//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the report.

use std::path::Path;
use std::process::Command;

use neurwin::arm::{Action, Arm};
use neurwin::arms::{DeadlineArm, DeadlineState, EnvKind, RecoveringArm, RecoveringClass, RecoveringState, WirelessArm};
use neurwin::harness::{
    evaluate_config, evaluate_networks, kendall_tau, noisy_sweep, train_arm_types, ExperimentConfig, PolicySpec,
};
use neurwin::nn::{grad_log_prob, log_prob, Mlp};
use neurwin::oracle::{index_table, lambda_grid, q_values, strong_indexability_check, DpSettings, FiniteArm};
use neurwin::rng::RngStream;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `a` is at least `frac` of `b` (or exceeds it), for rewards of either sign.
fn at_least_fraction(a: f64, b: f64, frac: f64) -> bool {
    a >= b - (1.0 - frac) * b.abs()
}

fn within(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

fn gradient_check() -> Outcome {
    fn fd_draws<A: Arm>(arm: &A, seed: u64, draws: usize) -> (usize, f64) {
        let mut rng = RngStream::new(seed, 0);
        let sizes = [arm.feature_dim(), 16, 32, 1];
        let mut done = 0;
        let mut worst: f64 = 0.0;
        let mut failures = 0;
        while done < draws {
            let mut net = Mlp::init(&sizes, &mut rng).unwrap();
            for p in net.params_mut() {
                *p += 0.2 * (2.0 * rng.uniform() - 1.0);
            }
            let x = arm.feature_vec(&arm.sample_initial(&mut rng));
            if net.kink_margin(&x).unwrap() <= 1e-3 {
                continue;
            }
            let lambda = 4.0 * rng.uniform() - 2.0;
            let m = 0.25 + 4.75 * rng.uniform();
            let a = Action::from_active(rng.bernoulli(0.5));
            let g = grad_log_prob(&net, &x, lambda, m, a).unwrap();
            let h = 1e-5;
            let mut bad = false;
            for i in 0..net.len() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (log_prob(&plus, &x, lambda, m, a).unwrap() - log_prob(&minus, &x, lambda, m, a).unwrap())
                    / (2.0 * h);
                let err = (g.0[i] - fd).abs() / g.0[i].abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
                bad |= err > 1e-5;
            }
            failures += usize::from(bad);
            done += 1;
        }
        (failures, worst)
    }
    let results = [
        ("deadline", fd_draws(&DeadlineArm::default(), 101, 100)),
        (
            "recovering",
            fd_draws(&RecoveringArm::new(RecoveringClass::A.params(), 20).unwrap(), 102, 100),
        ),
        ("wireless", fd_draws(&WirelessArm::default(), 103, 100)),
    ];
    let passed = results.iter().all(|r| r.1 .0 == 0);
    let detail = results
        .iter()
        .map(|(n, (f, w))| format!("{n}: {f}/100 failing draws, worst rel err {w:.2e}"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(passed, detail)
}

fn strong_indexability() -> Outcome {
    let dp = DpSettings::default();
    let mut parts = Vec::new();
    let mut passed = true;
    let deadline = strong_indexability_check(
        &DeadlineArm::default().model().unwrap(),
        &lambda_grid(-1.0, 2.0, 0.05),
        &dp,
        1e-9,
    )
    .unwrap();
    passed &= deadline.passed() && deadline.states == 120;
    parts.push(format!("deadline {} states, {} violations", deadline.states, deadline.violations.len()));
    for c in RecoveringClass::ALL {
        let arm = RecoveringArm::new(c.params(), 20).unwrap();
        let r = strong_indexability_check(&arm.model().unwrap(), &lambda_grid(0.0, 12.0, 0.1), &dp, 1e-9).unwrap();
        passed &= r.passed();
        parts.push(format!("class {c} {} violations", r.violations.len()));
    }
    outcome(passed, parts.join(", "))
}

fn oracle_consistency() -> Outcome {
    let dp = DpSettings::default();
    let tol = 1e-6;
    let mut worst: f64 = 0.0;
    let mut zero_ok = true;
    let deadline = DeadlineArm::default().model().unwrap();
    let table = index_table(&deadline, &dp, tol).unwrap();
    for (s, e) in table.states.iter().zip(&table.estimates) {
        worst = worst.max(e.residual.abs());
        if s.load == 0 {
            zero_ok &= e.index.abs() <= tol;
        }
    }
    for c in RecoveringClass::ALL {
        let model = RecoveringArm::new(c.params(), 20).unwrap().model().unwrap();
        let table = index_table(&model, &dp, tol).unwrap();
        for e in &table.estimates {
            worst = worst.max(e.residual.abs());
        }
    }
    // Independent recheck of the residual for one state.
    let i = deadline.index_of(&DeadlineState::new(1, 1)).unwrap();
    let w = table.index(&DeadlineState::new(1, 1)).unwrap();
    let recheck = q_values(&deadline, w, &dp).unwrap().d(i).abs();
    outcome(
        worst <= 1e-4 && zero_ok && recheck <= 1e-4,
        format!("max |D_s(W)| = {worst:.2e}, W(B=0) within tol: {zero_ok}"),
    )
}

fn deadline_learning() -> Outcome {
    let mut oracle = ExperimentConfig::new(EnvKind::Deadline);
    oracle.policy = PolicySpec::WhittleOracle;
    let target = evaluate_config(&oracle).unwrap().mean;
    let mut wins = 0;
    let mut means = Vec::new();
    for seed in SEEDS {
        let mut c = ExperimentConfig::new(EnvKind::Deadline);
        c.training.seed = seed;
        let nets = train_arm_types(&c, 0.0).unwrap();
        let mean = evaluate_networks(&c, &nets).unwrap().mean;
        wins += usize::from(at_least_fraction(mean, target, 0.95));
        means.push(format!("{mean:.3}"));
    }
    outcome(
        wins >= 2,
        format!("oracle {target:.3}; NeurWIN by seed [{}]; {wins}/3 seeds within 95%", means.join(", ")),
    )
}

fn recovering_fidelity() -> Outcome {
    let dp = DpSettings::default();
    let arms: Vec<RecoveringArm> = RecoveringClass::ALL
        .iter()
        .map(|c| RecoveringArm::new(c.params(), 20).unwrap())
        .collect();
    let oracle: Vec<Vec<f64>> = arms
        .iter()
        .map(|a| index_table(&a.model().unwrap(), &dp, 1e-6).unwrap().values())
        .collect();
    let mut eval = ExperimentConfig::new(EnvKind::Recovering);
    eval.n = 10;
    eval.m = 1;
    eval.policy = PolicySpec::Lookahead {
        depth: 1,
        beam_width: None,
    };
    let greedy = evaluate_config(&eval).unwrap().mean;
    eval.policy = PolicySpec::Lookahead {
        depth: 3,
        beam_width: None,
    };
    let exact3 = evaluate_config(&eval).unwrap().mean;

    let mut best_tau = [f64::NEG_INFINITY; 4];
    let mut reward_ok = false;
    let mut means = Vec::new();
    for seed in SEEDS {
        let mut c = eval.clone();
        c.training.seed = seed;
        let nets = train_arm_types(&c, 0.0).unwrap();
        for (k, (arm, net)) in arms.iter().zip(&nets).enumerate() {
            let learned: Vec<f64> = (1..=20)
                .map(|z| net.forward(&arm.feature_vec(&RecoveringState(z))).unwrap())
                .collect();
            best_tau[k] = best_tau[k].max(kendall_tau(&oracle[k], &learned).unwrap());
        }
        let mean = evaluate_networks(&c, &nets).unwrap().mean;
        means.push(format!("{mean:.3}"));
        reward_ok |= mean >= greedy && at_least_fraction(mean, exact3, 0.95);
        if reward_ok && best_tau.iter().all(|&t| t >= 0.9) {
            break;
        }
    }
    let taus: Vec<String> = best_tau.iter().map(|t| format!("{t:.3}")).collect();
    outcome(
        reward_ok && best_tau.iter().all(|&t| t >= 0.9),
        format!(
            "best tau A-D [{}]; (10,1) NeurWIN [{}] vs greedy {greedy:.3}, d=3 {exact3:.3}",
            taus.join(", "),
            means.join(", ")
        ),
    )
}

fn wireless_parity() -> Outcome {
    let mut c = ExperimentConfig::new(EnvKind::Wireless);
    c.policy = PolicySpec::SizeAware;
    let target = evaluate_config(&c).unwrap().mean;
    let mut means = Vec::new();
    let mut passed = false;
    for seed in SEEDS {
        c.training.seed = seed;
        let nets = train_arm_types(&c, 0.0).unwrap();
        let mean = evaluate_networks(&c, &nets).unwrap().mean;
        means.push(format!("{mean:.3}"));
        if at_least_fraction(mean, target, 0.95) {
            passed = true;
            break;
        }
    }
    outcome(
        passed,
        format!("size-aware {target:.3}; NeurWIN by seed [{}]", means.join(", ")),
    )
}

fn noise_robustness() -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (n, m) in [(4, 1), (100, 25)] {
        let mut c = ExperimentConfig::new(EnvKind::Deadline);
        c.n = n;
        c.m = m;
        let rows = noisy_sweep(&c, &[0.0, 0.4]).unwrap();
        let (clean, noisy) = (rows[0].mean, rows[1].mean);
        passed &= within(noisy, clean, 0.10);
        parts.push(format!("(N={n}, M={m}) level 0: {clean:.3}, level 0.4: {noisy:.3}"));
    }
    outcome(passed, parts.join("; "))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_neurwin");
    let root = tempfile::tempdir().unwrap();
    let run = |tag: &str, args: &[&str]| -> std::path::PathBuf {
        let out = root.path().join(tag);
        let status = Command::new(bin)
            .args(args)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let ckpt_for = |out: &Path| out.join("ckpt_20.txt").display().to_string();
    let mut mismatches = Vec::new();
    let mut files = 0;
    let mut compare = |a: &Path, b: &Path, names: &[&str]| {
        for n in names {
            files += 1;
            if std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap() {
                mismatches.push(n.to_string());
            }
        }
    };
    let train = ["train", "--env", "deadline", "--episodes", "20", "--seed", "4"];
    let (t1, t2) = (run("t1", &train), run("t2", &train));
    compare(&t1, &t2, &["training_log.csv", "ckpt_20.txt"]);

    let policy = format!("neurwin:ckpt={}", ckpt_for(&t1));
    let evaluate = ["evaluate", "--env", "deadline", "--policy", &policy, "--runs", "5", "--seed", "4"];
    let (e1, e2) = (run("e1", &evaluate), run("e2", &evaluate));
    compare(&e1, &e2, &["evaluation.csv", "summary.csv"]);

    let dir = t1.display().to_string();
    let curve = ["curve", "--env", "deadline", "--ckpt-dir", &dir, "--runs", "3", "--seed", "4"];
    let (c1, c2) = (run("c1", &curve), run("c2", &curve));
    compare(&c1, &c2, &["learning_curve.csv"]);

    let oracle = ["oracle", "--env", "recovering", "--class", "B"];
    let (o1, o2) = (run("o1", &oracle), run("o2", &oracle));
    compare(&o1, &o2, &["index_table.csv", "ds_curves.csv"]);

    let idx = ["indexability", "--env", "deadline"];
    let (i1, i2) = (run("i1", &idx), run("i2", &idx));
    compare(&i1, &i2, &["indexability_violations.csv"]);

    let noisy = ["noisy", "--env", "deadline", "--levels", "0,0.4", "--episodes", "20", "--runs", "3", "--seed", "4"];
    let (n1, n2) = (run("n1", &noisy), run("n2", &noisy));
    compare(&n1, &n2, &["noisy_sweep.csv"]);

    outcome(
        mismatches.is_empty(),
        format!("{files} CSV/checkpoint files compared, mismatches: {mismatches:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("1 gradient correctness", gradient_check),
        ("2 strong indexability", strong_indexability),
        ("3 oracle self-consistency", oracle_consistency),
        ("4 deadline index learning", deadline_learning),
        ("5 recovering index fidelity", recovering_fidelity),
        ("6 wireless parity with size-aware", wireless_parity),
        ("7 noise robustness", noise_robustness),
        ("8 CLI determinism", cli_determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let o = check();
        println!("criterion {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
