//! Monotone spectral projected gradient with Armijo backtracking.
//!
//! Shared by every smooth subproblem in the crate. Objectives carrying a
//! logarithmic barrier report `None` outside their domain; the line search
//! treats such trial points as rejected and keeps shrinking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SPECTRAL_STEP: f64 = 1e-12;
const MAX_SPECTRAL_STEP: f64 = 1e12;
const MIN_LINE_FRACTION: f64 = 1e-16;

pub(crate) trait Objective {
    /// Objective value, or `None` outside the domain.
    fn value(&self, x: &[f64]) -> Option<f64>;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    /// Euclidean projection onto the feasible set, in place.
    fn project(&self, x: &mut [f64]);
}

/// Backtracking line-search parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepRule {
    /// Trial step of the first iteration; later iterations use the spectral
    /// (Barzilai-Borwein) step.
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant.
    pub sufficient_decrease: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0)
            || !(self.shrink > 0.0 && self.shrink < 1.0)
            || !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0)
        {
            return Err(Error::InvalidConfig(format!("bad step rule {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub max_iterations: usize,
    /// Stop once `||P(x - grad) - x||_2` falls below this.
    pub tolerance: f64,
    pub step: StepRule,
    pub record_history: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
    /// Objective value after every accepted step, starting with the initial
    /// point. Empty unless requested.
    pub history: Vec<f64>,
}

fn projected_gradient_norm<O: Objective>(obj: &O, x: &[f64], grad: &[f64], buf: &mut [f64]) -> f64 {
    for ((b, &xi), &gi) in buf.iter_mut().zip(x).zip(grad) {
        *b = xi - gi;
    }
    obj.project(buf);
    buf.iter()
        .zip(x)
        .map(|(b, xi)| (b - xi) * (b - xi))
        .sum::<f64>()
        .sqrt()
}

/// Minimizes `obj` starting from the feasible point `x`, which is updated in
/// place. Fails only if the starting point lies outside the domain.
pub(crate) fn minimize<O: Objective>(obj: &O, x: &mut [f64], settings: &Settings) -> Result<Outcome> {
    let n = x.len();
    obj.project(x);
    let mut value = obj.value(x).ok_or(Error::Barrier {
        cp_gain: f64::NAN,
        cdn_gain: f64::NAN,
    })?;
    let mut grad = vec![0.0; n];
    obj.gradient(x, &mut grad);

    let mut history = Vec::new();
    if settings.record_history {
        history.push(value);
    }

    let mut trial = vec![0.0; n];
    let mut direction = vec![0.0; n];
    let mut new_grad = vec![0.0; n];
    let mut spectral = settings.step.initial_step;
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iterations {
        pg_norm = projected_gradient_norm(obj, x, &grad, &mut trial);
        if pg_norm < settings.tolerance {
            converged = true;
            break;
        }

        for ((t, &xi), &gi) in trial.iter_mut().zip(x.iter()).zip(&grad) {
            *t = xi - spectral * gi;
        }
        obj.project(&mut trial);
        let mut slope = 0.0;
        for ((d, &t), (&xi, &gi)) in direction.iter_mut().zip(&trial).zip(x.iter().zip(&grad)) {
            *d = t - xi;
            slope += gi * *d;
        }
        if !(slope < 0.0) {
            // No descent available at this resolution.
            break;
        }

        let mut fraction = 1.0;
        let accepted = loop {
            for ((t, &xi), &d) in trial.iter_mut().zip(x.iter()).zip(&direction) {
                *t = xi + fraction * d;
            }
            if let Some(v) = obj.value(&trial) {
                if v <= value + settings.step.sufficient_decrease * fraction * slope {
                    break Some(v);
                }
            }
            fraction *= settings.step.shrink;
            if fraction < MIN_LINE_FRACTION {
                break None;
            }
        };
        let Some(new_value) = accepted else { break };
        iterations += 1;

        obj.gradient(&trial, &mut new_grad);
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial[i] - x[i];
            ss += s * s;
            sy += s * (new_grad[i] - grad[i]);
        }
        spectral = if sy > 0.0 {
            (ss / sy).clamp(MIN_SPECTRAL_STEP, MAX_SPECTRAL_STEP)
        } else {
            MAX_SPECTRAL_STEP
        };

        x.copy_from_slice(&trial);
        std::mem::swap(&mut grad, &mut new_grad);
        value = new_value;
        if settings.record_history {
            history.push(value);
        }
    }
    if !converged && iterations == settings.max_iterations {
        pg_norm = projected_gradient_norm(obj, x, &grad, &mut trial);
        converged = pg_norm < settings.tolerance;
    }

    Ok(Outcome {
        iterations,
        converged,
        pg_norm,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `sum (x_i - c_i)^2` over the box [0, 1]^n.
    struct BoxQuadratic {
        center: Vec<f64>,
    }

    impl Objective for BoxQuadratic {
        fn value(&self, x: &[f64]) -> Option<f64> {
            Some(x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum())
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) {
            for ((g, a), c) in grad.iter_mut().zip(x).zip(&self.center) {
                *g = 2.0 * (a - c);
            }
        }
        fn project(&self, x: &mut [f64]) {
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
    }

    /// `-log(sum x)` over the box, undefined where the sum is not positive.
    struct LogBarrier;

    impl Objective for LogBarrier {
        fn value(&self, x: &[f64]) -> Option<f64> {
            let s: f64 = x.iter().sum();
            (s > 0.0).then(|| -s.ln())
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) {
            let s: f64 = x.iter().sum();
            grad.iter_mut().for_each(|g| *g = -1.0 / s);
        }
        fn project(&self, x: &mut [f64]) {
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
    }

    fn settings() -> Settings {
        Settings {
            max_iterations: 500,
            tolerance: 1e-10,
            step: StepRule::default(),
            record_history: true,
        }
    }

    #[test]
    fn box_quadratic_reaches_clipped_center() {
        let obj = BoxQuadratic {
            center: vec![-0.5, 0.25, 2.0],
        };
        let mut x = vec![0.5; 3];
        let out = minimize(&obj, &mut x, &settings()).unwrap();
        assert!(out.converged);
        assert!((x[0] - 0.0).abs() < 1e-12);
        assert!((x[1] - 0.25).abs() < 1e-10);
        assert!((x[2] - 1.0).abs() < 1e-12);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn barrier_start_outside_domain_is_rejected() {
        let mut x = vec![0.0; 2];
        assert!(matches!(
            minimize(&LogBarrier, &mut x, &settings()),
            Err(Error::Barrier { .. })
        ));
    }

    #[test]
    fn barrier_objective_descends_to_box_corner() {
        let mut x = vec![0.1, 0.2];
        let out = minimize(&LogBarrier, &mut x, &settings()).unwrap();
        assert!(out.converged);
        assert_eq!(x, vec![1.0, 1.0]);
    }
}
