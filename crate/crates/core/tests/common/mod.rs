//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

use gcm_core::objective::evaluate;
use gcm_core::solver::SolverConfig;
use gcm_core::train::train_objective_from;
use gcm_core::{Aggregation, Candidate, Dataset, Hyperparams, Label, LinearModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GROUPS: usize = 10;
pub const GROUP_LEN: usize = 5;
pub const DIM: usize = 8;
/// Minimum distance of any soft margin or weight from a kink of the
/// penalties, and of every negative group's worst margin from its runner-up.
pub const KINK_GAP: f64 = 1e-3;

pub struct Instance {
    pub data: Dataset,
    pub model: LinearModel,
    pub hp: Hyperparams,
}

/// 50 rows in 10 groups of 5 (4 positive, 6 negative), d = 8, with a random
/// model and hyperparameters.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cands = Vec::with_capacity(GROUPS * GROUP_LEN);
    for g in 0..GROUPS {
        let label = if g < 4 { Label::Positive } else { Label::Negative };
        let key = rng.random_range(0..GROUP_LEN);
        for i in 0..GROUP_LEN {
            cands.push(Candidate {
                group_id: g as u64,
                label,
                is_key: label.is_positive() && i == key,
                features: (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            });
        }
    }
    let data = Dataset::new(DIM, cands).unwrap();
    let model = LinearModel::new(
        (0..DIM).map(|_| rng.random_range(-0.8..0.8)).collect(),
        rng.random_range(-0.5..0.5),
    )
    .unwrap();
    let deltas = [0.1, 0.5, 1.0];
    let hp = Hyperparams::new(
        rng.random_range(0.2..0.8),
        [0.3, 1.0][rng.random_range(0..2)],
        deltas[rng.random_range(0..3)],
    )
    .unwrap();
    Instance { data, model, hp }
}

fn near(t: f64, kinks: &[f64]) -> bool {
    kinks.iter().any(|k| (t - k).abs() < KINK_GAP)
}

/// True when both objectives are differentiable in a neighbourhood of the
/// instance's model.
pub fn is_smooth_point(inst: &Instance) -> bool {
    let Instance { data, model, hp } = inst;
    let kinks = [1.0, 1.0 - 2.0 * hp.delta];
    if model.w.iter().any(|w| near(w.abs(), &[hp.epsilon])) {
        return false;
    }
    for b in data.blocks() {
        let margins: Vec<f64> = b.rows().map(|x| b.label.sign() * model.score(x)).collect();
        match b.label {
            Label::Positive => {
                let k = b.key.expect("positive groups carry a key");
                if near(margins[k], &kinks) {
                    return false;
                }
            }
            Label::Negative => {
                if margins.iter().any(|&t| near(t, &kinks)) {
                    return false;
                }
                let mut sorted = margins.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted[0] < 1.0 && sorted[1] - sorted[0] < KINK_GAP {
                    return false;
                }
            }
        }
    }
    true
}

/// The first `count` smooth instances from seeds `first_seed, first_seed+1, …`.
pub fn smooth_instances(first_seed: u64, count: usize) -> Vec<Instance> {
    (first_seed..)
        .map(random_instance)
        .filter(is_smooth_point)
        .take(count)
        .collect()
}

pub fn objective(inst: &Instance, agg: Aggregation, point: &[f64]) -> f64 {
    evaluate(&LinearModel::from_point(point), &inst.data, &inst.hp, agg, false, 1)
        .unwrap()
        .0
        .total
}

pub fn analytic_gradient(inst: &Instance, agg: Aggregation) -> Vec<f64> {
    evaluate(&inst.model, &inst.data, &inst.hp, agg, true, 1)
        .unwrap()
        .1
        .unwrap()
        .to_point()
}

/// Central differences with step `h` per coordinate.
pub fn central_differences(inst: &Instance, agg: Aggregation, h: f64) -> Vec<f64> {
    let x = inst.model.to_point();
    (0..x.len())
        .map(|i| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            (objective(inst, agg, &up) - objective(inst, agg, &down)) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(max_i |b_i|, 1e-3)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-3_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Largest relative gradient error over the instances for one aggregation.
pub fn worst_gradient_error(instances: &[Instance], agg: Aggregation) -> f64 {
    instances
        .iter()
        .map(|inst| relative_error(&central_differences(inst, agg, 1e-6), &analytic_gradient(inst, agg)))
        .fold(0.0, f64::max)
}

/// Nesterov's accelerated gradient with backtracking on the Lipschitz
/// estimate and gradient-based restarts. Independent of the crate's solver.
pub fn accelerated_gradient<F>(f_and_grad: F, start: Vec<f64>, iterations: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = start.clone();
    let mut y = start;
    let mut t = 1.0_f64;
    let mut lip = 1.0_f64;
    for _ in 0..iterations {
        let (fy, gy) = f_and_grad(&y);
        let mut next;
        loop {
            next = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect::<Vec<_>>();
            let fx = f_and_grad(&next).0;
            let lin: f64 = next
                .iter()
                .zip(&y)
                .zip(&gy)
                .map(|((n, a), g)| g * (n - a) + lip / 2.0 * (n - a) * (n - a))
                .sum();
            if fx <= fy + lin + 1e-15 || lip > 1e12 {
                break;
            }
            lip *= 2.0;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let restart: f64 = gy.iter().zip(next.iter().zip(&x)).map(|(g, (n, o))| g * (n - o)).sum();
        if restart > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(n, o)| n + beta * (n - o)).collect();
            t = t_next;
        }
        x = next;
        lip = (lip / 1.5).max(1e-6);
    }
    let fx = f_and_grad(&x).0;
    (x, fx)
}

/// Per-candidate objective values reached by the crate's solver from
/// `starts` random points (plus zero), for one seeded problem.
pub fn multi_start_objectives(seed: u64, starts: usize) -> Vec<f64> {
    let inst = random_instance(seed);
    let hp = Hyperparams::new(0.5, 1.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let cfg = SolverConfig {
        grad_inf_tolerance: 1e-10,
        rel_obj_tolerance: 0.0,
        max_iterations: 5000,
        ..SolverConfig::default()
    };
    (0..starts)
        .map(|_| {
            let start = LinearModel::new(
                (0..DIM).map(|_| rng.random_range(-5.0..5.0)).collect(),
                rng.random_range(-5.0..5.0),
            )
            .unwrap();
            let (m, _) = train_objective_from(&inst.data, &hp, Aggregation::PerCandidate, &cfg, 1, start).unwrap();
            evaluate(&m, &inst.data, &hp, Aggregation::PerCandidate, false, 1).unwrap().0.total
        })
        .collect()
}

/// `(max - min) / max(|min|, tiny)`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo.abs().max(f64::MIN_POSITIVE)
}
