//! Projected gradient descent over the PSD cone with adaptive step size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{project_psd, MetricMatrix};
use crate::scalar::Scalar;

/// Objective driven by [`projected_descent`].
///
/// Between refreshes the optimizer works on a cached surrogate (e.g. a frozen set of active
/// triplets); at every refresh boundary the exact loss decides whether the block of steps
/// is kept. `Eval` carries whatever the gradient can reuse from a loss evaluation.
pub(crate) trait Objective<T: Scalar> {
    type Eval;

    fn refresh(&mut self, m: &MetricMatrix<T>);
    fn evaluate(&self, m: &MetricMatrix<T>) -> (T, Self::Eval);
    fn gradient(&self, eval: &Self::Eval) -> DMatrix<T>;
    fn full_loss(&self, m: &MetricMatrix<T>) -> T;
    /// True when the surrogate equals the exact loss, so boundaries need no re-evaluation.
    /// Blocks still set the window over which `tol` is measured.
    fn surrogate_is_exact(&self) -> bool {
        false
    }
    /// Gradients are divided by this before stepping.
    fn normalizer(&self) -> T;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIterations,
    /// Step size fell below the floor without making progress.
    Stalled,
    ZeroGradient,
}

/// Loss history of a metric fit. `losses[0]` is the loss at the initial metric; each later
/// entry is the exact loss at an accepted refresh boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace<T: Scalar> {
    pub losses: Vec<T>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl<T: Scalar> FitTrace<T> {
    pub fn initial_loss(&self) -> T {
        self.losses[0]
    }

    pub fn final_loss(&self) -> T {
        *self.losses.last().expect("trace holds the initial loss")
    }
}

/// Step-size schedule and stopping rule shared by the learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DescentSettings {
    pub max_iters: usize,
    pub step_size: f64,
    pub step_decay: f64,
    pub step_growth: f64,
    pub tol: f64,
    pub refresh_every: usize,
    pub spectral: bool,
}

const STEP_FLOOR: f64 = 1e-14;

fn divergence<T: Scalar>(iteration: usize, m: &MetricMatrix<T>) -> Error {
    Error::Divergence {
        iteration,
        last_valid: m.entries().transpose().iter().map(|v| v.as_f64()).collect(),
    }
}

pub(crate) fn projected_descent<T: Scalar, O: Objective<T>>(
    objective: &mut O,
    m0: &MetricMatrix<T>,
    settings: &DescentSettings,
) -> Result<(MetricMatrix<T>, FitTrace<T>)> {
    let mut m = m0.clone();
    let mut full = objective.full_loss(&m);
    if !full.is_finite() {
        return Err(divergence(0, &m));
    }
    let mut trace = FitTrace { losses: vec![full], iterations: 0, stop: StopReason::MaxIterations };
    if settings.max_iters == 0 {
        return Ok((m, trace));
    }

    let norm = objective.normalizer().max(T::one());
    let decay = T::of(settings.step_decay);
    let growth = T::of(settings.step_growth);
    let floor = T::of(STEP_FLOOR);
    let tol = T::of(settings.tol);
    let exact = objective.surrogate_is_exact();
    let refresh_every = settings.refresh_every.max(1);
    let mut step = T::of(settings.step_size);
    let mut anchor = m.clone();
    objective.refresh(&m);
    let (mut current, eval) = objective.evaluate(&m);
    let mut grad = objective.gradient(&eval) / norm;
    let spectral = settings.spectral;

    while trace.iterations < settings.max_iters {
        let mut block = 0;
        let mut stuck = false;
        while block < refresh_every && trace.iterations < settings.max_iters {
            block += 1;
            trace.iterations += 1;
            if grad.iter().all(|g| *g == T::zero()) {
                stuck = true;
                break;
            }
            let candidate = project_psd(&(m.entries() - &grad * step))?;
            let (loss, candidate_eval) = objective.evaluate(&candidate);
            if !loss.is_finite() {
                return Err(divergence(trace.iterations, &anchor));
            }
            if loss <= current {
                let next_grad = objective.gradient(&candidate_eval) / norm;
                let bb = if spectral {
                    let s = candidate.entries() - m.entries();
                    let y = &next_grad - &grad;
                    let sy = s.dot(&y);
                    (sy > T::zero()).then(|| s.dot(&s) / sy)
                } else {
                    None
                };
                step = bb.unwrap_or(step * growth);
                m = candidate;
                current = loss;
                grad = next_grad;
            } else {
                step *= decay;
            }
            if step < floor {
                break;
            }
        }

        let next = if exact { current } else { objective.full_loss(&m) };
        if !next.is_finite() {
            return Err(divergence(trace.iterations, &anchor));
        }
        let moved = m != anchor;
        if next > full {
            // The block improved the surrogate but not the exact loss.
            m = anchor.clone();
            step *= decay;
        } else if moved {
            let rel = (full - next) / full.abs().max(T::of(1e-300));
            full = next;
            anchor = m.clone();
            trace.losses.push(full);
            if rel < tol {
                trace.stop = StopReason::Tolerance;
                return Ok((m, trace));
            }
        }
        if stuck && !moved {
            trace.stop = StopReason::ZeroGradient;
            return Ok((anchor, trace));
        }
        if step < floor {
            trace.stop = StopReason::Stalled;
            return Ok((anchor, trace));
        }
        if !exact {
            objective.refresh(&m);
            let (loss, eval) = objective.evaluate(&m);
            current = loss;
            grad = objective.gradient(&eval) / norm;
        }
    }
    Ok((anchor, trace))
}
