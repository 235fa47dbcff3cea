//! Limited-memory BFGS with Armijo backtracking.
//!
//! The same machinery drives the smooth per-candidate objective and the
//! grouped objective, where it runs on subgradients. Near the optimum of a
//! non-smooth objective the line search may fail to find a decrease; that is
//! reported as [`Termination::LineSearchFailure`] together with the best point,
//! not as an error.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Something the solver can minimise.
pub trait Problem {
    /// Number of optimisation variables.
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64 {
        self.value_and_gradient(x).0
    }

    /// Objective and a (sub)gradient at `x`.
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// Adapter for a separate objective closure and gradient closure.
pub struct FnProblem<F, G> {
    dim: usize,
    objective: F,
    gradient: G,
}

impl<F, G> FnProblem<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, objective: F, gradient: G) -> Self {
        FnProblem { dim, objective, gradient }
    }
}

impl<F, G> Problem for FnProblem<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        ((self.objective)(x), (self.gradient)(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub memory_pairs: usize,
    pub max_iterations: usize,
    pub grad_inf_tolerance: f64,
    pub rel_obj_tolerance: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub initial_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            memory_pairs: 10,
            max_iterations: 1000,
            grad_inf_tolerance: 1e-6,
            rel_obj_tolerance: 1e-10,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            initial_step: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must lie in (0, 1)",
                })
            }
        };
        unit("armijo_c1", self.armijo_c1)?;
        unit("backtrack_factor", self.backtrack_factor)?;
        if self.memory_pairs == 0 {
            return Err(Error::config("memory_pairs must be at least 1"));
        }
        for (name, v) in [
            ("grad_inf_tolerance", self.grad_inf_tolerance),
            ("rel_obj_tolerance", self.rel_obj_tolerance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be non-negative and finite",
                });
            }
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "initial_step",
                value: self.initial_step,
                reason: "must be positive and finite",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradTolerance,
    ObjTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::GradTolerance => "grad-tolerance",
            Termination::ObjTolerance => "obj-tolerance",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchFailure => "line-search-failure",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    /// Objective at the start point and after every accepted step.
    pub objective_history: Vec<f64>,
    pub final_grad_inf_norm: f64,
    pub termination: Termination,
}

impl SolveTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().expect("history holds the start value")
    }
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Two-loop recursion: returns `-H g` for the inverse-Hessian estimate held
/// in `memory`, scaled by `s'y / y'y` of the newest pair.
fn search_direction(g: &[f64], memory: &VecDeque<CurvaturePair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for pair in memory.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (pair, a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimises `problem` from `start`.
///
/// Returns the final point and a trace. Fails only if the objective is not
/// finite at the start point or the configuration is invalid.
pub fn minimize<P: Problem + ?Sized>(problem: &P, start: Vec<f64>, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    if start.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: start.len(),
        });
    }
    let mut x = start;
    let (mut f, mut g) = problem.value_and_gradient(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective is not finite at the start point".into()));
    }
    let mut history = vec![f];
    let mut memory: VecDeque<CurvaturePair> = VecDeque::with_capacity(cfg.memory_pairs);
    let mut iterations = 0;

    let termination = loop {
        if norm_inf(&g) <= cfg.grad_inf_tolerance {
            break Termination::GradTolerance;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let mut direction = search_direction(&g, &memory);
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            memory.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let accepted = loop {
            let first_step = if memory.is_empty() {
                cfg.initial_step / norm2(&direction).max(1.0)
            } else {
                cfg.initial_step
            };
            let mut alpha = first_step;
            let mut found = None;
            for _ in 0..=cfg.max_backtracks {
                let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + alpha * di).collect();
                let (ft, gt) = problem.value_and_gradient(&trial);
                if ft.is_finite() && ft <= f + cfg.armijo_c1 * alpha * slope && ft < f + 1e-15 {
                    found = Some((trial, ft, gt));
                    break;
                }
                alpha *= cfg.backtrack_factor;
            }
            match found {
                Some(step) => break Some(step),
                // retry once along steepest descent before giving up
                None if !memory.is_empty() => {
                    memory.clear();
                    direction = g.iter().map(|v| -v).collect();
                    slope = -dot(&g, &g);
                }
                None => break None,
            }
        };

        let Some((x_new, f_new, g_new)) = accepted else {
            break Termination::LineSearchFailure;
        };
        if g_new.iter().any(|v| !v.is_finite()) {
            break Termination::LineSearchFailure;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm2(&s) * norm2(&y) {
            if memory.len() == cfg.memory_pairs {
                memory.pop_front();
            }
            memory.push_back(CurvaturePair { s, y, rho: 1.0 / sy });
        }

        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        iterations += 1;

        if norm_inf(&g) <= cfg.grad_inf_tolerance {
            break Termination::GradTolerance;
        }
        if decrease <= cfg.rel_obj_tolerance * f.abs().max(f64::MIN_POSITIVE) {
            break Termination::ObjTolerance;
        }
    };

    let trace = SolveTrace {
        iterations,
        objective_history: history,
        final_grad_inf_norm: norm_inf(&g),
        termination,
    };
    Ok((x, trace))
}

/// [`minimize`] over a separate objective and gradient function.
pub fn minimize_fn<F, G>(objective: F, gradient: G, start: Vec<f64>, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveTrace)>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let problem = FnProblem::new(start.len(), objective, gradient);
    minimize(&problem, start, cfg)
}
