//! Verification suites behind `fcco check`.

use fcco_core::grad::GradKind;
use fcco_core::problem::{
    AucConfig, AucProblem, FccoProblem, PlConfig, PlProblem, QuadraticConfig, QuadraticProblem,
};
use fcco_core::rng::{streams, RngStream};
use fcco_core::tracker::TrackerKind;
use fcco_core::verify::{
    estimator_gap, finite_diff_grad, max_rel_err, reference_storm_equiv, DriverPath, LemmaId, McAccumulator,
    McConfig, McReport, McSetup,
};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Lemmas,
    Equiv,
    Grad,
    All,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: serde_json::Value,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: serde_json::Value) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Monte-Carlo recursion check with trials spread over the rayon pool.
pub fn parallel_mc<P: FccoProblem + ?Sized>(problem: &P, cfg: McConfig) -> Result<McReport> {
    let setup = McSetup::new(problem, cfg)?;
    let steps = setup.config().steps;
    let acc = (0..setup.config().trials)
        .into_par_iter()
        .map(|k| setup.run_trial(k))
        .try_fold(
            || McAccumulator::new(steps),
            |mut acc, errs| -> std::result::Result<McAccumulator, fcco_core::Error> {
                acc.add(&errs?)?;
                Ok(acc)
            },
        )
        .try_reduce(|| McAccumulator::new(steps), |a, b| a.merge(b))?;
    Ok(setup.report(&acc)?)
}

/// Affine test problem for the recursion checks: `m = 8`, `p = 2`, `d = 4`.
pub fn lemma_problem(n: Option<usize>) -> Result<QuadraticProblem> {
    let cfg = QuadraticConfig {
        m: 8,
        d: 4,
        p: 2,
        n,
        sigma: 1.0,
        ..QuadraticConfig::default()
    };
    Ok(QuadraticProblem::generate(&cfg, &mut RngStream::new(1, streams::PROBLEM).rng())?)
}

/// The standard configuration: `B1 = 2`, `B2 = 1`, `beta = 1/4`,
/// 4000 trials, 50 steps along a straight path.
pub fn lemma_config(lemma: LemmaId, tracker: TrackerKind) -> McConfig {
    McConfig {
        lemma,
        tracker,
        beta: 0.25,
        b1: 2,
        b2: 1,
        eta: 0.05,
        steps: 50,
        trials: 4000,
        seed: 17,
        path: DriverPath::Straight,
        period: None,
        init_error: 1.0,
    }
}

fn mc_outcome(name: &str, report: &McReport, expect_pass: bool) -> CheckOutcome {
    let worst = report
        .mean_error
        .iter()
        .skip(1)
        .zip(&report.rhs)
        .map(|(e, r)| e / r)
        .fold(0.0, f64::max);
    CheckOutcome::new(
        name,
        report.passed() == expect_pass,
        serde_json::json!({
            "violations": report.violation_count(),
            "violation_fraction": report.violation_fraction(),
            "worst_mean_over_rhs": worst,
            "report": report,
        }),
    )
}

pub fn lemma_suite() -> Result<Vec<CheckOutcome>> {
    let infinite = lemma_problem(None)?;
    let finite = lemma_problem(Some(20))?;
    let mut out = Vec::new();
    let r = parallel_mc(&infinite, lemma_config(LemmaId::TwoPoint, TrackerKind::Msvr))?;
    out.push(mc_outcome("two-point recursion (msvr)", &r, true));
    let r = parallel_mc(&infinite, lemma_config(LemmaId::TwoPoint, TrackerKind::NaiveStorm))?;
    out.push(mc_outcome("two-point recursion negative control (naive storm must violate)", &r, false));
    let r = parallel_mc(&infinite, lemma_config(LemmaId::SinglePoint, TrackerKind::MsvrSp))?;
    out.push(mc_outcome("single-point recursion (msvr-sp)", &r, true));
    // I = ceil(8 * 20 / 2) = 80, so beta I <= m / B1 needs beta <= 0.05.
    let fs = McConfig {
        beta: 0.05,
        steps: 200,
        ..lemma_config(LemmaId::FiniteSum, TrackerKind::MsvrFs)
    };
    let r = parallel_mc(&finite, fs)?;
    out.push(mc_outcome("finite-sum recursion (msvr-fs)", &r, true));
    Ok(out)
}

pub fn equiv_suite(cases: usize) -> Result<Vec<CheckOutcome>> {
    let r = reference_storm_equiv(2024, cases)?;
    Ok(vec![CheckOutcome::new(
        "msvr with B1 = m equals reference storm bitwise",
        r.passed(),
        serde_json::json!({"cases": r.cases, "mismatches": r.mismatches}),
    )])
}

/// Small instances of every built-in problem.
pub fn builtin_problems(seed: u64, noiseless: bool) -> Result<Vec<(String, Box<dyn FccoProblem>)>> {
    let mut rng = RngStream::new(seed, streams::PROBLEM).rng();
    let sigma = if noiseless { 0.0 } else { 1.0 };
    let m = rng.random_range(2..=5);
    let p = rng.random_range(1..=3);
    // d <= m p keeps the design full rank
    let d = rng.random_range(2..=6.min(m * p));
    let quad = QuadraticConfig {
        m,
        d,
        p,
        n: Some(rng.random_range(2..=8)),
        sigma,
        jacobian_noise: if noiseless { 0.0 } else { 0.2 },
        ..QuadraticConfig::default()
    };
    let pl = PlConfig {
        m: rng.random_range(2..=4),
        d: rng.random_range(4..=8),
        n: Some(rng.random_range(2..=8)),
        sigma: sigma * 0.5,
        ..PlConfig::default()
    };
    let auc = AucConfig {
        m: rng.random_range(2..=3),
        model_dim: rng.random_range(2..=5),
        n_pos: rng.random_range(3..=10),
        n_neg: rng.random_range(3..=10),
        probe_points: 20,
        ..AucConfig::default()
    };
    Ok(vec![
        ("quadratic-sc".into(), Box::new(QuadraticProblem::generate(&quad, &mut rng)?) as Box<dyn FccoProblem>),
        ("pl-composition".into(), Box::new(PlProblem::generate(&pl, &mut rng)?)),
        ("auc-multitask".into(), Box::new(AucProblem::generate(&auc, &mut rng)?)),
    ])
}

fn random_point<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Finite differences on every built-in problem, and the three gradient
/// estimators against `exact_gradient` on noiseless instances.
pub fn grad_suite(instances: usize) -> Result<Vec<CheckOutcome>> {
    let mut fd_worst = 0.0f64;
    let mut gap_worst = 0.0f64;
    let mut rng = RngStream::new(99, streams::DRIVER).rng();
    for k in 0..instances {
        for (_, p) in builtin_problems(k as u64, false)? {
            let w = random_point(p.dim(), &mut rng);
            let fd = finite_diff_grad(&*p, &w, 1e-6)?;
            let ex = p.exact_gradient(&w)?;
            fd_worst = fd_worst.max(max_rel_err(&fd, &ex, 1e-8));
        }
        for (_, p) in builtin_problems(1000 + k as u64, true)? {
            let w = random_point(p.dim(), &mut rng);
            let wp = random_point(p.dim(), &mut rng);
            let ws = random_point(p.dim(), &mut rng);
            for kind in [GradKind::MovingAverage, GradKind::Storm, GradKind::FiniteSum] {
                gap_worst = gap_worst.max(estimator_gap(&*p, kind, &w, &wp, &ws)?);
            }
        }
    }
    Ok(vec![
        CheckOutcome::new(
            "exact gradient matches finite differences (rel 1e-5)",
            fd_worst <= 1e-5,
            serde_json::json!({"instances": instances, "worst_rel_err": fd_worst}),
        ),
        CheckOutcome::new(
            "full-batch estimators equal the exact gradient (abs 1e-12)",
            gap_worst <= 1e-12,
            serde_json::json!({"instances": instances, "worst_abs_err": gap_worst}),
        ),
    ])
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckOutcome>> {
    Ok(match suite {
        Suite::Lemmas => lemma_suite()?,
        Suite::Equiv => equiv_suite(1000)?,
        Suite::Grad => grad_suite(20)?,
        Suite::All => {
            let mut v = equiv_suite(1000)?;
            v.extend(grad_suite(20)?);
            v.extend(lemma_suite()?);
            v
        }
    })
}

/// Error for the exit code when any outcome failed.
pub fn verdict(outcomes: &[CheckOutcome]) -> Result<()> {
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::CheckFailed(failed.join("; ")))
    }
}
