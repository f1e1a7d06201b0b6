//! Adversarial-input search inside a euclidean ball around a reference
//! image.
//!
//! The property under check is the negation of the misclassification
//! literal: no image `I` with `delta(I^d, I) <= gamma` drives the target
//! output below `V` while a competitor rises above it. The native engine
//! decides the property over a finite per-pixel grid; continuous-domain
//! questions go through [`crate::smt`].

mod engine;
mod report;
mod search;

use std::time::Duration;

use crate::error::{Error, Result};
use crate::network::{classify, ActivationTrace, ImageVec, Network};
use crate::scalar::Scalar;

pub use engine::{completeness_phase, incremental_verify, schedule_bound, violation_phase};
pub use report::{render_report, ReportOptions};
pub use search::{grid_levels, grid_size, Exhausted};

/// How the competitor clause of the literal is quantified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Quantifier {
    /// Some other output exceeds `V`.
    #[default]
    Exists,
    /// Every other output exceeds `V`.
    ForAll,
}

/// Which final-layer quantity the literal reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LiteralSource {
    /// Activation outputs `N(u)`; `V = 0.5` is the natural boundary.
    #[default]
    Outputs,
    /// Raw potentials `u`; pair with `V = 0`.
    Potentials,
}

/// The misclassification literal over one layer of values:
/// `values[target] < v` and some (or every) other value `> v`.
pub fn misclassified<S: Scalar>(values: &[S], target: usize, v: S, quantifier: Quantifier) -> bool {
    if values[target] >= v {
        return false;
    }
    let mut others = values.iter().enumerate().filter(|&(i, _)| i != target).map(|(_, &x)| x > v);
    match quantifier {
        Quantifier::Exists => others.any(|b| b),
        // A single-output network has no competitor to exceed V.
        Quantifier::ForAll => values.len() > 1 && others.all(|b| b),
    }
}

/// The default literal: outputs, existential competitor.
pub fn misclassification_literal<S: Scalar>(trace: &ActivationTrace<S>, target: usize, v: f64) -> bool {
    misclassified(trace.final_outputs(), target, S::from_f64(v), Quantifier::Exists)
}

/// Squared euclidean distance, summed in ascending pixel order. For Q16.16
/// pixels every term and partial sum is exact in `f64`.
pub(crate) fn squared_distance<S: Scalar>(p: &[S], q: &[S]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .fold(0.0, |acc, t| acc + t)
}

/// Ball membership: `delta(p, q) <= radius`, compared in squared form.
#[inline]
pub(crate) fn within(squared: f64, radius: f64) -> bool {
    squared <= radius * radius
}

pub fn euclidean_distance<S: Scalar>(p: &ImageVec<S>, q: &ImageVec<S>) -> Result<f64> {
    if p.width() != q.width() || p.height() != q.height() {
        return Err(Error::Shape(format!(
            "{}x{} image vs {}x{} image",
            p.width(),
            p.height(),
            q.width(),
            q.height()
        )));
    }
    Ok(squared_distance(p.pixels(), q.pixels()).sqrt())
}

/// Per-pixel perturbation grid: each pixel takes `levels` evenly spaced
/// values in `[p - radius, p + radius]`, clamped to `[0, 1]` and
/// deduplicated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub levels: usize,
    pub radius: f64,
}

impl GridSpec {
    pub const DEFAULT_LEVELS: usize = 5;

    /// `levels = 5`, `radius = gamma / sqrt(pixels)` capped at 1.
    pub fn default_for(gamma: f64, pixels: usize) -> GridSpec {
        GridSpec {
            levels: GridSpec::DEFAULT_LEVELS,
            radius: (gamma / (pixels.max(1) as f64).sqrt()).min(1.0),
        }
    }
}

/// One adversarial query against a network.
#[derive(Clone, Debug)]
pub struct AdversarialProblem<S> {
    pub net: Network<S>,
    pub reference: ImageVec<S>,
    /// Output index `D` the reference image should keep.
    pub target: usize,
    /// Proximity bound `gamma`.
    pub gamma: f64,
    /// Reference value `V`.
    pub reference_value: f64,
    pub grid: GridSpec,
    pub quantifier: Quantifier,
    pub source: LiteralSource,
}

impl<S: Scalar> AdversarialProblem<S> {
    /// A problem with the default literal (`V = 0.5` on outputs, existential)
    /// and the default grid.
    pub fn new(net: Network<S>, reference: ImageVec<S>, target: usize, gamma: f64) -> Result<AdversarialProblem<S>> {
        let grid = GridSpec::default_for(gamma, reference.len());
        let problem = AdversarialProblem {
            net,
            reference,
            target,
            gamma,
            reference_value: 0.5,
            grid,
            quantifier: Quantifier::Exists,
            source: LiteralSource::Outputs,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_grid(mut self, levels: usize, radius: f64) -> Result<Self> {
        self.grid = GridSpec { levels, radius };
        self.validate()?;
        Ok(self)
    }

    pub fn with_reference_value(mut self, v: f64) -> Result<Self> {
        self.reference_value = v;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quantifier(mut self, q: Quantifier) -> Self {
        self.quantifier = q;
        self
    }

    pub fn with_source(mut self, source: LiteralSource) -> Self {
        self.source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.target >= self.net.output_dim() {
            return Err(Error::Usage(format!(
                "target label {} but the network has {} outputs",
                self.target,
                self.net.output_dim()
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Usage(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.reference.len() != self.net.input_dim() {
            return Err(Error::Shape(format!(
                "reference image has {} pixels, network expects {}",
                self.reference.len(),
                self.net.input_dim()
            )));
        }
        if self.grid.levels < 2 {
            return Err(Error::Usage(format!("grid needs at least 2 levels, got {}", self.grid.levels)));
        }
        if !(0.0..=1.0).contains(&self.grid.radius) {
            return Err(Error::Usage(format!("grid radius must lie in [0, 1], got {}", self.grid.radius)));
        }
        if !self.reference_value.is_finite() {
            return Err(Error::Usage("reference value must be finite".into()));
        }
        Ok(())
    }

    /// The literal on a final layer given as (potentials, outputs).
    pub fn literal(&self, potentials: &[S], outputs: &[S]) -> bool {
        let values = match self.source {
            LiteralSource::Outputs => outputs,
            LiteralSource::Potentials => potentials,
        };
        misclassified(values, self.target, S::from_f64(self.reference_value), self.quantifier)
    }

    /// Number of grid points the native engine may enumerate.
    pub fn grid_points(&self) -> u128 {
        grid_size(&grid_levels(self.reference.pixels(), self.grid))
    }

    pub fn literal_on_trace(&self, trace: &ActivationTrace<S>) -> bool {
        self.literal(trace.final_potentials(), trace.final_outputs())
    }
}

/// A grid image inside the ball that satisfies the misclassification
/// literal.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample<S> {
    pub image: ImageVec<S>,
    pub distance: f64,
    pub trace: ActivationTrace<S>,
    /// Label the network assigns to `image`.
    pub label: usize,
    /// Iteration of the incremental schedule that found it; 0 when found
    /// by a standalone violation phase.
    pub bound: usize,
}

impl<S: Scalar> Counterexample<S> {
    /// Rebuilds a counterexample from an image, recomputing everything else.
    pub fn from_image(problem: &AdversarialProblem<S>, image: ImageVec<S>, bound: usize) -> Result<Counterexample<S>> {
        let trace = problem.net.forward_eval(&image)?;
        let distance = euclidean_distance(&problem.reference, &image)?;
        Ok(Counterexample {
            label: classify(&trace),
            image,
            distance,
            trace,
            bound,
        })
    }
}

/// Re-derives every claim of `ce` from its image alone: the trace, the
/// distance, ball membership and the literal.
pub fn validate_counterexample<S: Scalar>(
    net: &Network<S>,
    ce: &Counterexample<S>,
    problem: &AdversarialProblem<S>,
) -> bool {
    let Ok(trace) = net.forward_eval(&ce.image) else {
        return false;
    };
    let Ok(distance) = euclidean_distance(&problem.reference, &ce.image) else {
        return false;
    };
    trace == ce.trace
        && distance == ce.distance
        && within(squared_distance(problem.reference.pixels(), ce.image.pixels()), problem.gamma)
        && classify(&trace) == ce.label
        && problem.literal_on_trace(&trace)
}

/// Replays a counterexample through the decoded network with the exact
/// logistic. Disagreement is an artifact of the table approximation, not a
/// validation failure.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCheck {
    pub literal_holds: bool,
    pub outputs: Vec<f64>,
}

impl ReferenceCheck {
    pub fn lut_artifact(&self) -> bool {
        !self.literal_holds
    }
}

pub fn reference_check<S: Scalar>(problem: &AdversarialProblem<S>, ce: &Counterexample<S>) -> ReferenceCheck {
    let exact = problem.net.to_f64();
    let image: Vec<f64> = ce.image.pixels().iter().map(|p| p.to_f64()).collect();
    let trace = exact.forward_values(&image).expect("counterexample matches the network input");
    let values = match problem.source {
        LiteralSource::Outputs => trace.final_outputs(),
        LiteralSource::Potentials => trace.final_potentials(),
    };
    ReferenceCheck {
        literal_holds: misclassified(values, problem.target, problem.reference_value, problem.quantifier),
        outputs: trace.final_outputs().to_vec(),
    }
}

/// Engine limits. The bound schedule splits `gamma` into `max_bound` equal
/// steps and advances `granularity` steps per iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementalConfig {
    pub granularity: usize,
    pub max_bound: usize,
    pub time_limit: Option<Duration>,
    pub memory_limit: Option<u64>,
    /// Stop after this many iterations even if the ball is not covered.
    pub step_limit: Option<usize>,
}

impl Default for IncrementalConfig {
    fn default() -> IncrementalConfig {
        IncrementalConfig {
            granularity: 1,
            max_bound: 10,
            time_limit: None,
            memory_limit: None,
            step_limit: None,
        }
    }
}

impl IncrementalConfig {
    pub fn with_granularity(granularity: usize) -> IncrementalConfig {
        IncrementalConfig {
            granularity,
            ..IncrementalConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.granularity == 0 {
            return Err(Error::Usage("granularity must be at least 1".into()));
        }
        if self.max_bound == 0 {
            return Err(Error::Usage("max bound must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resource {
    Time,
    Memory,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status<S> {
    Violated(Counterexample<S>),
    /// No grid point in the full ball satisfies the literal.
    Safe,
    BoundExhausted,
    ResourceExhausted(Resource),
}

impl<S> Status<S> {
    pub fn keyword(&self) -> &'static str {
        match self {
            Status::Violated(_) => "violated",
            Status::Safe => "safe",
            Status::BoundExhausted => "bound_exhausted",
            Status::ResourceExhausted(_) => "resource_exhausted",
        }
    }

    pub fn counterexample(&self) -> Option<&Counterexample<S>> {
        match self {
            Status::Violated(ce) => Some(ce),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub index: usize,
    pub bound: f64,
    /// Whether the violation phase hit a counterexample.
    pub violation_found: bool,
    /// Completeness phase outcome; `None` when it did not run.
    pub complete: Option<bool>,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict<S> {
    pub status: Status<S>,
    pub iterations: Vec<IterationRecord>,
}
