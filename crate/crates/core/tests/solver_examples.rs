use fcco_core::linalg::ParamVector;
use fcco_core::problem::{FccoProblem, QuadraticConfig, QuadraticOuter, QuadraticProblem};
use fcco_core::rng::{streams, RngStream};
use fcco_core::sampling::draw_batch;
use fcco_core::schedule::{schedule_stagewise, Preset, Schedule};
use fcco_core::solver::{run_stagewise, Method, Projection, Solver, SolverConfig, StagewiseSpec};

fn storm_by_hand(problem: &QuadraticProblem, seed: u64, alpha: f64, eta: f64, steps: usize, b2: usize) -> Vec<ParamVector> {
    let mut inner = RngStream::new(seed, streams::INNER).rng();
    let mut w = problem.initial_point();
    let mut w_prev = w.clone();
    let mut z: Vec<f64> = Vec::new();
    let mut path = Vec::new();
    for t in 1..=steps {
        let batch = draw_batch(problem, 0, b2, &mut inner).unwrap();
        let g = problem.inner_jacobian(0, &w, &batch).unwrap().tr_mul(&[1.0]).unwrap();
        if t == 1 {
            z = g;
        } else {
            let gp = problem.inner_jacobian(0, &w_prev, &batch).unwrap().tr_mul(&[1.0]).unwrap();
            for k in 0..z.len() {
                z[k] = g[k] + (1.0 - alpha) * (z[k] - gp[k]);
            }
        }
        w_prev = w.clone();
        for (x, d) in w.iter_mut().zip(&z) {
            *x -= eta * d;
        }
        path.push(w.clone());
    }
    path
}

#[test]
fn single_block_identity_outer_is_plain_storm() {
    let cfg = QuadraticConfig {
        m: 1,
        d: 5,
        p: 1,
        n: Some(30),
        jacobian_noise: 0.3,
        outer: QuadraticOuter::Identity,
        ..QuadraticConfig::default()
    };
    let problem = QuadraticProblem::generate(&cfg, &mut RngStream::new(4, streams::PROBLEM).rng()).unwrap();
    let (alpha, eta, b2, steps) = (0.3, 0.05, 3, 100);
    let mut sc = SolverConfig::for_method(Method::MsvrV2, false);
    sc.b1 = 1;
    sc.b2 = b2;
    sc.seed = 11;
    sc.projection = Projection::Unbounded;
    sc.schedule.preset = Preset::Constant;
    sc.schedule.alpha = alpha;
    sc.schedule.beta = 0.5;
    sc.schedule.eta = eta;
    let want = storm_by_hand(&problem, 11, alpha, eta, steps, b2);
    let mut solver = Solver::new(&problem, sc).unwrap();
    for w in &want {
        solver.step().unwrap();
        for (a, b) in solver.iterate().iter().zip(w.iter()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn one_stage_equals_one_fixed_run() {
    let problem = QuadraticProblem::generate(&QuadraticConfig::default(), &mut RngStream::new(6, streams::PROBLEM).rng()).unwrap();
    let mut sc = SolverConfig::for_method(Method::StagewiseV2, false);
    sc.seed = 3;
    let spec = StagewiseSpec {
        stages: 1,
        eps_1: Some(0.1),
        max_stage_steps: Some(300),
        ..StagewiseSpec::default()
    };
    let staged = run_stagewise(&problem, sc.clone(), &spec).unwrap();
    let mu = problem.constants().mu.unwrap();
    let (t1, hp) = schedule_stagewise(1, 0.1, mu, 20, None, sc.b1, sc.b2, &sc.schedule).unwrap();
    let mut solver = Solver::new(&problem, sc.clone()).unwrap();
    solver.set_schedule(Schedule::fixed(hp, sc.tracker, 20, problem.max_support(), sc.b1, sc.b2).unwrap());
    solver.run_for(t1.min(300)).unwrap();
    assert_eq!(staged.stages.len(), 1);
    assert_eq!(&staged.run.w_final, solver.iterate());
}
