//! Acceptance gate: one line per criterion with the measured value, the
//! pinned threshold and the runtime budget.
//!
//! Criteria listed in [`KNOWN_FAILURES`] are reported as `FAIL` without
//! failing the target; any other failure exits non-zero, and so does a
//! known failure that starts passing (the list must then be updated).

#[path = "../../core/tests/support/series.rs"]
mod series;

use std::time::{Duration, Instant};

use brlab::cli;
use brlab::harness::{self, DecayFitReport, KernelCellSummary};
use brlab_core::decomp::Variant;
use brlab_core::specfun::{bessel_j, ComplexOrder};
use brlab_core::C64;
use series::{bessel_j_half, bessel_j_integer, rational};

/// Criteria that fail at the pinned parameters (see the README).
const KNOWN_FAILURES: &[u32] = &[6];

const SIGMA: f64 = 0.1;
const C: f64 = 8.0;
const ALPHA: f64 = 0.8;
const SHARP_BETA: f64 = 0.4875;
const FLAT_BETA: f64 = 0.25;
const N: usize = 2;
const SEED: u64 = 20_240_601;

const BESSEL_TOLERANCE: f64 = 1e-10;
const KEY_OBSERVATION_TOLERANCE: f64 = 1e-8;
const M_PLUS_TOLERANCE: f64 = 1e-8;
const LAMBDA_TOLERANCE: f64 = 1e-2;
const PARTITION_TOLERANCE: f64 = 1e-12;
const SPLIT_TOLERANCE: f64 = 1e-12;
const MIN_R2: f64 = 0.9;
const CROSS_VALIDATION_TOLERANCE: f64 = 1e-3;
const NONVANISHING_BOUND: f64 = 1e-6;
const RECURRENCE_TOLERANCE: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn fit_text(r: &DecayFitReport) -> String {
    format!(
        "slope {:.3} (≤ {:.3}), R² {:.4} (≥ {MIN_R2})",
        r.fit.slope, r.threshold, r.fit.r2
    )
}

fn fit_ok(r: &DecayFitReport) -> bool {
    r.fit.slope <= r.threshold && r.fit.r2 >= MIN_R2
}

/// Error relative to `max(|J|, √(2/(πρ)) ∧ 1)` so zeros of `J` do not blow up.
fn scaled_error(got: f64, want: f64, rho: f64) -> f64 {
    let envelope = (2.0 / (std::f64::consts::PI * rho)).sqrt().min(1.0);
    (got - want).abs() / want.abs().max(envelope)
}

fn criterion_1() -> Outcome {
    let mut args: Vec<(i64, i64)> = vec![(1, 100), (1, 20), (1, 4)];
    args.extend((1..=50).map(|k| (k, 1)));
    args.extend((0..25).map(|k| (4 * k + 3, 4)));
    let mut worst = 0.0f64;
    for nu in [0.0, 0.5, 1.0, 2.0] {
        let order = ComplexOrder::new(nu, 0.0).expect("order");
        for &(p, q) in &args {
            let rho = p as f64 / q as f64;
            let x = rational(p, q);
            let want = if nu == 0.5 {
                bessel_j_half(&x)
            } else {
                bessel_j_integer(nu as u32, &x)
            };
            let got = bessel_j(order, rho).expect("bessel");
            worst = worst.max(scaled_error(got.re, want, rho)).max(got.im.abs());
        }
    }
    let rec = harness::recurrence_experiment(1000, SEED).expect("recurrence");
    Outcome {
        pass: worst <= BESSEL_TOLERANCE && rec.max_residual <= RECURRENCE_TOLERANCE,
        detail: format!(
            "series error {worst:.2e} (≤ {BESSEL_TOLERANCE:.0e}) over {} points, recurrence {:.2e} (≤ {RECURRENCE_TOLERANCE:.0e}) at 1000 orders",
            4 * args.len(),
            rec.max_residual
        ),
    }
}

fn criterion_2() -> Outcome {
    let r = harness::key_observation_experiment(&[0.1, 0.3, 0.49], &[0.0, 0.3, 0.7, 0.99]).expect("key observation");
    Outcome {
        pass: r.max_residual <= KEY_OBSERVATION_TOLERANCE,
        detail: format!(
            "max residual {:.2e} (≤ {KEY_OBSERVATION_TOLERANCE:.0e}) over {} pairs",
            r.max_residual,
            r.rows.len()
        ),
    }
}

fn criterion_3() -> Outcome {
    let probes = harness::default_m_plus_probes();
    let r = harness::m_plus_experiment(&probes).expect("m plus");
    Outcome {
        pass: r.max_residual <= M_PLUS_TOLERANCE && probes.len() == 20,
        detail: format!(
            "max difference {:.2e} (≤ {M_PLUS_TOLERANCE:.0e}) at {} probes",
            r.max_residual,
            probes.len()
        ),
    }
}

fn criterion_4() -> Outcome {
    let probes = harness::default_lambda_probes();
    let mut pass = probes.len() == 10;
    let mut parts = Vec::new();
    for alpha in [C64::new(0.7, 0.0), C64::new(0.7, 0.3)] {
        let r = harness::lambda_consistency_experiment(alpha, &probes, 16384.0).expect("lambda");
        pass &= r.max_relative_difference <= LAMBDA_TOLERANCE && r.pass;
        parts.push(format!("α={}: {:.2e}", alpha, r.max_relative_difference));
    }
    Outcome {
        pass,
        detail: format!(
            "{} (≤ {LAMBDA_TOLERANCE:.0e}) at {} probes, R=2^14",
            parts.join(", "),
            probes.len()
        ),
    }
}

fn criterion_5() -> Outcome {
    let js: Vec<u32> = (2..=10).collect();
    let r = harness::partition_experiment(&js, &[2, 3], 1000, SEED).expect("partition");
    Outcome {
        pass: r.max_residual <= PARTITION_TOLERANCE,
        detail: format!(
            "max |Σφ − 1| {:.2e} (≤ {PARTITION_TOLERANCE:.0e}), j ∈ 2..10, n ∈ {{2, 3}}",
            r.max_residual
        ),
    }
}

fn criterion_6() -> Outcome {
    let r = harness::geometry_experiment(12, 8, 8, N, SIGMA, C, 10_000, SEED).expect("geometry");
    let certs_ok = r.certificates.iter().all(|c| c.pass);
    let l = &r.lemmas;
    let lemmas_ok = l.passed();
    Outcome {
        pass: certs_ok && lemmas_ok,
        detail: format!(
            "{} certificates {}, frequency lemma {} violations, physical lemma {} violations at c={C} (j=8, 10^4 samples), smallest passing c {}",
            r.certificates.len(),
            if certs_ok { "hold" } else { "fail" },
            l.lemma_frequency.violations,
            l.lemma_physical.violations,
            r.smallest_passing_c.map_or("none".to_string(), |c| c.to_string())
        ),
    }
}

struct Sweeps {
    standard: Vec<KernelCellSummary>,
    sharp: Vec<KernelCellSummary>,
    flat: Vec<KernelCellSummary>,
}

fn variants() -> [Variant; 3] {
    let alpha = C64::new(ALPHA, 0.0);
    [
        Variant::Standard { alpha },
        Variant::Sharp {
            alpha,
            beta: C64::new(SHARP_BETA, 0.0),
        },
        Variant::Flat {
            alpha,
            beta: C64::new(FLAT_BETA, 0.0),
        },
    ]
}

fn kernel_sweeps() -> (Sweeps, Duration) {
    let start = Instant::now();
    let js: Vec<u32> = (4..=8).collect();
    let [standard, sharp, flat] = variants().map(|v| harness::kernel_sweep(&v, &js, SIGMA, C, N).expect("sweep"));
    (Sweeps { standard, sharp, flat }, start.elapsed())
}

fn criterion_7(s: &Sweeps) -> Outcome {
    let vs = variants();
    let r = harness::split_report(&[(&vs[0], &s.standard), (&vs[1], &s.sharp), (&vs[2], &s.flat)]);
    Outcome {
        pass: r.max_residual <= SPLIT_TOLERANCE && r.rows.len() == 15,
        detail: format!(
            "max |U+V−P|/max|P| {:.2e} (≤ {SPLIT_TOLERANCE:.0e}) over {} cells",
            r.max_residual,
            r.rows.len()
        ),
    }
}

fn criterion_8() -> Outcome {
    let js: Vec<u32> = (4..=11).collect();
    let r = harness::lemma_one_experiment(C64::new(ALPHA, 0.0), C64::new(SHARP_BETA, 0.0), &js, SIGMA, N)
        .expect("lemma one");
    Outcome {
        pass: fit_ok(&r.on_shell) && fit_ok(&r.off_shell),
        detail: format!(
            "on-shell {}; off-shell {}",
            fit_text(&r.on_shell),
            fit_text(&r.off_shell)
        ),
    }
}

fn criterion_9(s: &Sweeps) -> Outcome {
    let r = harness::prop_one_from_cells(&variants()[1], s.sharp.clone(), SIGMA, C, N).expect("prop one");
    Outcome {
        pass: r.u.fit.slope <= r.u.threshold && r.v.fit.slope <= r.v.threshold,
        detail: format!("sup|Û| {}; sup|V̂| {}", fit_text(&r.u), fit_text(&r.v)),
    }
}

fn criterion_10(s: &Sweeps) -> Outcome {
    let r = harness::prop_two_from_cells(&variants()[2], s.flat.clone(), SIGMA, C, N).expect("prop two");
    Outcome {
        pass: r.u.fit.slope <= r.u.threshold && r.v.fit.slope <= r.v.threshold,
        detail: format!("‖U‖₁ {}; ‖V‖₁ {}", fit_text(&r.u), fit_text(&r.v)),
    }
}

fn criterion_11() -> Outcome {
    let ts: Vec<u32> = (2..=8).collect();
    let r = harness::tail_decay_experiment(C64::new(ALPHA, 0.0), C64::new(SHARP_BETA, 0.0), &ts, 1, 256, 0.05, N)
        .expect("tail-decay");
    Outcome {
        pass: r.fit.slope < 0.0 && r.fit.r2 >= MIN_R2,
        detail: format!(
            "T-slope {:.3} (< 0), R² {:.4} (≥ {MIN_R2}), T ∈ 2..8",
            r.fit.slope, r.fit.r2
        ),
    }
}

fn criterion_12() -> Outcome {
    let r = harness::cross_validation_experiment(&[0.5, 1.0], N, 256, 32.0).expect("cross validation");
    let ok = r.rows.iter().all(|row| {
        row.route_difference <= CROSS_VALIDATION_TOLERANCE && row.extent_doubling <= CROSS_VALIDATION_TOLERANCE
    });
    let parts: Vec<String> = r
        .rows
        .iter()
        .map(|row| {
            format!(
                "δ={}: routes {:.2e}, doubling {:.2e}",
                row.delta, row.route_difference, row.extent_doubling
            )
        })
        .collect();
    Outcome {
        pass: ok && r.rows.len() == 2,
        detail: format!(
            "{} (≤ {CROSS_VALIDATION_TOLERANCE:.0e}), 256² grid, X=32",
            parts.join("; ")
        ),
    }
}

fn criterion_13() -> Outcome {
    let r = harness::nonvanishing_experiment(50);
    Outcome {
        pass: r.min_modulus >= NONVANISHING_BOUND,
        detail: format!(
            "min modulus {:.3e} (≥ {NONVANISHING_BOUND:.0e}) at α = {}{:+}i on a 50×50 grid",
            r.min_modulus, r.argmin[0], r.argmin[1]
        ),
    }
}

fn criterion_14() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("report.json");
    let out_arg = out.to_str().expect("utf-8 path").to_string();
    let runs: [&[&str]; 3] = [
        &["verify", "--experiment", "key-observation"],
        &[
            "verify",
            "--experiment",
            "partition",
            "--j-range",
            "2..6",
            "--n",
            "3",
            "--samples",
            "200",
        ],
        &[
            "verify",
            "--experiment",
            "cross-validation",
            "--side",
            "128",
            "--extent",
            "16",
            "--delta",
            "1",
        ],
    ];
    let mut identical = 0;
    let mut codes = Vec::new();
    for args in runs {
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let argv = std::iter::once("brlab")
                .chain(args.iter().copied())
                .chain(["--out", out_arg.as_str()]);
            codes.push(cli::main_with_args(argv));
            bytes.push(std::fs::read(&out).expect("report"));
        }
        if bytes[0] == bytes[1] {
            identical += 1;
        }
    }
    Outcome {
        pass: identical == runs.len() && codes.iter().all(|&c| c == cli::EXIT_SUCCESS),
        detail: format!(
            "{identical}/{} verify configurations byte-identical across two runs, exit codes {codes:?}",
            runs.len()
        ),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome, Duration, Duration)> = Vec::new();
    let mut record = |id, name, (o, t): (Outcome, Duration), budget| results.push((id, name, o, t, budget));
    record(1, "Bessel correctness", timed(criterion_1), secs(10));
    record(2, "key observation identity", timed(criterion_2), secs(5));
    record(3, "m_+ closed form", timed(criterion_3), secs(5));
    record(4, "Λ̂ consistency", timed(criterion_4), secs(120));
    record(5, "partition of unity", timed(criterion_5), secs(30));
    record(6, "geometry certificates", timed(criterion_6), secs(120));
    let (sweeps, sweep_time) = kernel_sweeps();
    record(7, "U + V = P", timed(|| criterion_7(&sweeps)), sweep_time + secs(300));
    record(8, "Lemma One slopes", timed(criterion_8), secs(600));
    let (o9, t9) = timed(|| criterion_9(&sweeps));
    record(9, "Proposition One slopes", (o9, t9 + sweep_time), secs(900));
    let (o10, t10) = timed(|| criterion_10(&sweeps));
    record(10, "Proposition Two slopes", (o10, t10 + sweep_time), secs(900));
    record(11, "tail decay in T", timed(criterion_11), secs(600));
    record(12, "operator cross-validation", timed(criterion_12), secs(120));
    record(13, "nonvanishing check", timed(criterion_13), secs(1));
    record(14, "determinism", timed(criterion_14), Duration::MAX);

    println!(
        "kernel sweeps (three variants, j ∈ 4..8) took {:.1} s and are shared by criteria 7, 9, 10",
        sweep_time.as_secs_f64()
    );
    let mut unexpected = Vec::new();
    for (id, name, o, t, budget) in &results {
        let in_budget = t <= budget;
        let pass = o.pass && in_budget;
        let budget_text = if *budget == Duration::MAX {
            "no budget".to_string()
        } else {
            format!("budget {} s", budget.as_secs())
        };
        println!(
            "criterion {id:>2} {} {name}: {}; {:.2} s ({budget_text})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            t.as_secs_f64()
        );
        let known = KNOWN_FAILURES.contains(id);
        if pass == known {
            unexpected.push(*id);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all outcomes as recorded (known failures: {KNOWN_FAILURES:?})");
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
