//! Two-phase incremental engine.
//!
//! Iteration `i` fixes the ball radius `b_i = min(i * g, max_bound) / max_bound
//! * gamma`. The violation phase assumes the restriction `delta <= b_i` and
//! looks for a grid point satisfying the literal; the completeness phase then
//! asks whether `b_i` already covers the whole `gamma` ball. A hit ends the
//! run as violated, a complete ball without hits ends it as safe.

use std::time::Instant;

use super::search::{Exhausted, GridSearch};
use super::{
    validate_counterexample, AdversarialProblem, Counterexample, IncrementalConfig, IterationRecord, Resource,
    Status, Verdict,
};
use crate::error::Result;
use crate::network::ImageVec;
use crate::scalar::Scalar;

/// Radius of iteration `i` (1-based).
pub fn schedule_bound(gamma: f64, config: &IncrementalConfig, i: usize) -> f64 {
    let steps = i.saturating_mul(config.granularity);
    if steps >= config.max_bound {
        gamma
    } else {
        gamma * steps as f64 / config.max_bound as f64
    }
}

/// The completeness check: the current bound covers the full ball.
pub fn completeness_phase<S: Scalar>(problem: &AdversarialProblem<S>, bound: f64) -> bool {
    bound >= problem.gamma
}

fn to_counterexample<S: Scalar>(
    problem: &AdversarialProblem<S>,
    pixels: Vec<S>,
    bound: usize,
) -> Result<Counterexample<S>> {
    let image = ImageVec::new(problem.reference.width(), problem.reference.height(), pixels)?;
    Counterexample::from_image(problem, image, bound)
}

/// First grid counterexample within `bound` in lexicographic order, if any.
pub fn violation_phase<S: Scalar>(
    problem: &AdversarialProblem<S>,
    bound: f64,
) -> Result<Option<Counterexample<S>>> {
    problem.validate()?;
    let search = GridSearch::new(problem);
    match search.first_hit(bound.min(problem.gamma), None, None) {
        Ok(Some(pixels)) => Ok(Some(to_counterexample(problem, pixels, 0)?)),
        Ok(None) => Ok(None),
        Err(Exhausted(_)) => unreachable!("no deadline was set"),
    }
}

pub fn incremental_verify<S: Scalar>(
    problem: &AdversarialProblem<S>,
    config: &IncrementalConfig,
) -> Result<Verdict<S>> {
    problem.validate()?;
    config.validate()?;
    let started = Instant::now();
    let deadline = config.time_limit.map(|t| started + t);
    let search = GridSearch::new(problem);
    let mut iterations = Vec::new();
    if config.memory_limit.is_some_and(|limit| search.memory_estimate() > limit) {
        return Ok(Verdict {
            status: Status::ResourceExhausted(Resource::Memory),
            iterations,
        });
    }
    let mut previous: Option<f64> = None;
    for i in 1.. {
        if config.step_limit.is_some_and(|limit| i > limit) {
            return Ok(Verdict {
                status: Status::BoundExhausted,
                iterations,
            });
        }
        let bound = schedule_bound(problem.gamma, config, i);
        let phase_start = Instant::now();
        let hit = search.first_hit(bound, previous, deadline);
        let mut record = IterationRecord {
            index: i,
            bound,
            violation_found: false,
            complete: None,
            elapsed: phase_start.elapsed(),
        };
        match hit {
            Err(Exhausted(resource)) => {
                iterations.push(record);
                return Ok(Verdict {
                    status: Status::ResourceExhausted(resource),
                    iterations,
                });
            }
            Ok(Some(pixels)) => {
                record.violation_found = true;
                iterations.push(record);
                let ce = to_counterexample(problem, pixels, i)?;
                assert!(
                    validate_counterexample(&problem.net, &ce, problem),
                    "engine produced a counterexample that does not re-validate"
                );
                return Ok(Verdict {
                    status: Status::Violated(ce),
                    iterations,
                });
            }
            Ok(None) => {
                let complete = completeness_phase(problem, bound);
                record.complete = Some(complete);
                record.elapsed = phase_start.elapsed();
                iterations.push(record);
                if complete {
                    return Ok(Verdict {
                        status: Status::Safe,
                        iterations,
                    });
                }
            }
        }
        previous = Some(bound);
    }
    unreachable!("the schedule reaches gamma after finitely many iterations")
}
