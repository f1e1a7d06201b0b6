//! Neuron covering methods over pairs of activation traces.
//!
//! A neuron pair `alpha = (n_{k,l}, n_{k+1,j})` spans two adjacent layers.
//! Conditions are the neurons of layer `k`, decisions the neurons of layer
//! `k + 1`:
//!
//! * SS: exactly one sign change in layer `k` (at `alpha.0`) and a sign
//!   change at `alpha.1`.
//! * DS: a distance change over layer `k` and a sign change at `alpha.1`.
//! * SV: exactly one sign change in layer `k` (at `alpha.0`) and a value
//!   change at `alpha.1`.
//! * DV: a distance change over layer `k` and a value change at `alpha.1`.
//!
//! Predicates read activation potentials `u`, never outputs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::ActivationTrace;
use crate::scalar::Scalar;

/// Neuron `index` of layer `layer`, both 1-based. Displays as
/// `n_{index,layer}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NeuronRef {
    pub layer: usize,
    pub index: usize,
}

impl NeuronRef {
    pub const fn new(layer: usize, index: usize) -> NeuronRef {
        NeuronRef { layer, index }
    }
}

impl fmt::Display for NeuronRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n_{{{},{}}}", self.index, self.layer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    /// `|a / b| >= d`; for layer vectors the ratio of euclidean norms.
    Rate,
    /// `|a - b| >= d`; for layer vectors the euclidean distance.
    L2Distance,
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<MetricKind> {
        match s {
            "rate" => Ok(MetricKind::Rate),
            "l2" | "l2_distance" => Ok(MetricKind::L2Distance),
            other => Err(Error::Usage(format!("unknown metric `{other}` (expected rate or l2)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSpec {
    kind: MetricKind,
    threshold: f64,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, threshold: f64) -> Result<MetricSpec> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::Usage(format!("metric threshold must be positive, got {threshold}")));
        }
        Ok(MetricSpec { kind, threshold })
    }

    pub fn rate(threshold: f64) -> Result<MetricSpec> {
        MetricSpec::new(MetricKind::Rate, threshold)
    }

    pub fn l2(threshold: f64) -> Result<MetricSpec> {
        MetricSpec::new(MetricKind::L2Distance, threshold)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn scalar(&self, a: f64, b: f64) -> Change {
        match self.kind {
            MetricKind::Rate if b == 0.0 => Change::DEGENERATE,
            MetricKind::Rate => Change::holds((a / b).abs() >= self.threshold),
            MetricKind::L2Distance => Change::holds((a - b).abs() >= self.threshold),
        }
    }

    fn vector(&self, a: &[f64], b: &[f64]) -> Change {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self.kind {
            MetricKind::Rate => {
                let denominator = norm(b);
                if denominator == 0.0 {
                    Change::DEGENERATE
                } else {
                    Change::holds(norm(a) / denominator >= self.threshold)
                }
            }
            MetricKind::L2Distance => {
                let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                Change::holds(d >= self.threshold)
            }
        }
    }
}

/// Outcome of a metric-based predicate. `degenerate` is set when a rate
/// metric met a zero denominator; the predicate is then false.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Change {
    pub holds: bool,
    pub degenerate: bool,
}

impl Change {
    const NO: Change = Change {
        holds: false,
        degenerate: false,
    };
    const DEGENERATE: Change = Change {
        holds: false,
        degenerate: true,
    };

    fn holds(holds: bool) -> Change {
        Change {
            holds,
            degenerate: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoverMethod {
    SignSign,
    DistanceSign,
    SignValue,
    DistanceValue,
}

impl CoverMethod {
    pub const ALL: [CoverMethod; 4] = [
        CoverMethod::SignSign,
        CoverMethod::DistanceSign,
        CoverMethod::SignValue,
        CoverMethod::DistanceValue,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            CoverMethod::SignSign => "ss",
            CoverMethod::DistanceSign => "ds",
            CoverMethod::SignValue => "sv",
            CoverMethod::DistanceValue => "dv",
        }
    }

    pub fn needs_distance_metric(self) -> bool {
        matches!(self, CoverMethod::DistanceSign | CoverMethod::DistanceValue)
    }

    pub fn needs_value_metric(self) -> bool {
        matches!(self, CoverMethod::SignValue | CoverMethod::DistanceValue)
    }
}

impl FromStr for CoverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<CoverMethod> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(CoverMethod::SignSign),
            "ds" => Ok(CoverMethod::DistanceSign),
            "sv" => Ok(CoverMethod::SignValue),
            "dv" => Ok(CoverMethod::DistanceValue),
            other => Err(Error::Usage(format!("unknown covering method `{other}` (expected ss, ds, sv or dv)"))),
        }
    }
}

impl fmt::Display for CoverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short_name().to_ascii_uppercase())
    }
}

fn check_compatible<S: Scalar>(t1: &ActivationTrace<S>, t2: &ActivationTrace<S>) -> Result<()> {
    if t1.sizes() != t2.sizes() {
        return Err(Error::Shape(format!(
            "trace layer widths differ: {:?} vs {:?}",
            t1.sizes(),
            t2.sizes()
        )));
    }
    Ok(())
}

fn check_layer<S: Scalar>(t: &ActivationTrace<S>, k: usize) -> Result<()> {
    if k == 0 || k > t.layer_count() {
        return Err(Error::Index(format!("layer {k} (trace has layers 1..={})", t.layer_count())));
    }
    Ok(())
}

fn check_neuron<S: Scalar>(t: &ActivationTrace<S>, n: NeuronRef) -> Result<()> {
    check_layer(t, n.layer)?;
    let width = t.potentials(n.layer).len();
    if n.index == 0 || n.index > width {
        return Err(Error::Index(format!("{n} (layer {} has {width} neurons)", n.layer)));
    }
    Ok(())
}

fn potential<S: Scalar>(t: &ActivationTrace<S>, n: NeuronRef) -> S {
    t.potentials(n.layer)[n.index - 1]
}

fn sc_unchecked<S: Scalar>(t1: &ActivationTrace<S>, t2: &ActivationTrace<S>, n: NeuronRef) -> bool {
    potential(t1, n).sign_bit() != potential(t2, n).sign_bit()
}

/// `sc`: the sign of the potential differs between the two inputs.
pub fn sign_change<S: Scalar>(t1: &ActivationTrace<S>, t2: &ActivationTrace<S>, n: NeuronRef) -> Result<bool> {
    check_compatible(t1, t2)?;
    check_neuron(t1, n)?;
    Ok(sc_unchecked(t1, t2, n))
}

fn vc_unchecked<S: Scalar>(g: &MetricSpec, t1: &ActivationTrace<S>, t2: &ActivationTrace<S>, n: NeuronRef) -> Change {
    if sc_unchecked(t1, t2, n) {
        return Change::NO;
    }
    g.scalar(potential(t1, n).to_f64(), potential(t2, n).to_f64())
}

/// `vc`: no sign change at `n` and the metric `g` holds on its potentials.
pub fn value_change<S: Scalar>(
    g: &MetricSpec,
    t1: &ActivationTrace<S>,
    t2: &ActivationTrace<S>,
    n: NeuronRef,
) -> Result<Change> {
    check_compatible(t1, t2)?;
    check_neuron(t1, n)?;
    Ok(vc_unchecked(g, t1, t2, n))
}

fn sign_changes_in_layer<S: Scalar>(t1: &ActivationTrace<S>, t2: &ActivationTrace<S>, k: usize) -> Vec<usize> {
    t1.potentials(k)
        .iter()
        .zip(t2.potentials(k))
        .enumerate()
        .filter(|(_, (a, b))| a.sign_bit() != b.sign_bit())
        .map(|(i, _)| i + 1)
        .collect()
}

fn dc_unchecked<S: Scalar>(h: &MetricSpec, k: usize, t1: &ActivationTrace<S>, t2: &ActivationTrace<S>) -> Change {
    if !sign_changes_in_layer(t1, t2, k).is_empty() {
        return Change::NO;
    }
    let a: Vec<f64> = t1.potentials(k).iter().map(|v| v.to_f64()).collect();
    let b: Vec<f64> = t2.potentials(k).iter().map(|v| v.to_f64()).collect();
    h.vector(&a, &b)
}

/// `dc`: no neuron of layer `k` changes sign and the metric `h` over the
/// layer's potential vectors holds.
pub fn distance_change<S: Scalar>(
    h: &MetricSpec,
    k: usize,
    t1: &ActivationTrace<S>,
    t2: &ActivationTrace<S>,
) -> Result<Change> {
    check_compatible(t1, t2)?;
    check_layer(t1, k)?;
    Ok(dc_unchecked(h, k, t1, t2))
}

fn required<'a>(metric: Option<&'a MetricSpec>, method: CoverMethod, which: &str) -> Result<&'a MetricSpec> {
    metric.ok_or_else(|| Error::Usage(format!("{method} cover needs the {which} metric")))
}

fn check_metrics(method: CoverMethod, h: Option<&MetricSpec>, g: Option<&MetricSpec>) -> Result<()> {
    if method.needs_distance_metric() {
        required(h, method, "distance (h)")?;
    }
    if method.needs_value_metric() {
        required(g, method, "value (g)")?;
    }
    Ok(())
}

/// Whether `alpha` is covered by `method` for the two inputs.
pub fn cover_pair<S: Scalar>(
    method: CoverMethod,
    alpha: (NeuronRef, NeuronRef),
    t1: &ActivationTrace<S>,
    t2: &ActivationTrace<S>,
    h: Option<&MetricSpec>,
    g: Option<&MetricSpec>,
) -> Result<bool> {
    let (condition, decision) = alpha;
    if decision.layer != condition.layer + 1 {
        return Err(Error::Usage(format!(
            "pair ({condition}, {decision}) does not span adjacent layers"
        )));
    }
    check_metrics(method, h, g)?;
    check_compatible(t1, t2)?;
    check_neuron(t1, condition)?;
    check_neuron(t1, decision)?;
    let k = condition.layer;
    let only_condition_changes = || sign_changes_in_layer(t1, t2, k) == [condition.index];
    Ok(match method {
        CoverMethod::SignSign => only_condition_changes() && sc_unchecked(t1, t2, decision),
        CoverMethod::DistanceSign => {
            dc_unchecked(h.expect("checked"), k, t1, t2).holds && sc_unchecked(t1, t2, decision)
        }
        CoverMethod::SignValue => {
            only_condition_changes() && vc_unchecked(g.expect("checked"), t1, t2, decision).holds
        }
        CoverMethod::DistanceValue => {
            dc_unchecked(h.expect("checked"), k, t1, t2).holds
                && vc_unchecked(g.expect("checked"), t1, t2, decision).holds
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageResult {
    /// Neurons that take part in at least one covered pair.
    pub covered: BTreeSet<NeuronRef>,
    /// Distinct covered pairs across all trace pairs.
    pub covered_pairs: BTreeSet<(NeuronRef, NeuronRef)>,
    /// Neurons in layers `1..=L`.
    pub total: usize,
    pub ratio: f64,
    /// Rate-metric evaluations that hit a zero denominator.
    pub degenerate: usize,
}

/// Coverage of `method` over every trace pair. `layer_sizes` are the widths
/// of layers `1..=L`.
pub fn coverage_ratio<S: Scalar>(
    layer_sizes: &[usize],
    method: CoverMethod,
    pairs: &[(ActivationTrace<S>, ActivationTrace<S>)],
    h: Option<&MetricSpec>,
    g: Option<&MetricSpec>,
) -> Result<CoverageResult> {
    if pairs.is_empty() {
        return Err(Error::Usage("coverage needs at least one trace pair".into()));
    }
    check_metrics(method, h, g)?;
    for (i, (t1, t2)) in pairs.iter().enumerate() {
        for t in [t1, t2] {
            if t.sizes() != layer_sizes {
                return Err(Error::Shape(format!(
                    "trace pair {i} has layer widths {:?}, network has {layer_sizes:?}",
                    t.sizes()
                )));
            }
        }
    }
    let mut covered_pairs = BTreeSet::new();
    let mut degenerate = 0;
    for (t1, t2) in pairs {
        for k in 1..layer_sizes.len() {
            // Which conditions in layer k can pair with any decision.
            let conditions: Vec<usize> = match method {
                CoverMethod::SignSign | CoverMethod::SignValue => match sign_changes_in_layer(t1, t2, k).as_slice() {
                    [only] => vec![*only],
                    _ => Vec::new(),
                },
                CoverMethod::DistanceSign | CoverMethod::DistanceValue => {
                    let dc = dc_unchecked(h.expect("checked"), k, t1, t2);
                    degenerate += dc.degenerate as usize;
                    if dc.holds {
                        (1..=layer_sizes[k - 1]).collect()
                    } else {
                        Vec::new()
                    }
                }
            };
            if conditions.is_empty() {
                continue;
            }
            for j in 1..=layer_sizes[k] {
                let decision = NeuronRef::new(k + 1, j);
                let decided = match method {
                    CoverMethod::SignSign | CoverMethod::DistanceSign => sc_unchecked(t1, t2, decision),
                    CoverMethod::SignValue | CoverMethod::DistanceValue => {
                        let vc = vc_unchecked(g.expect("checked"), t1, t2, decision);
                        degenerate += vc.degenerate as usize;
                        vc.holds
                    }
                };
                if decided {
                    for &l in &conditions {
                        covered_pairs.insert((NeuronRef::new(k, l), decision));
                    }
                }
            }
        }
    }
    let covered: BTreeSet<NeuronRef> = covered_pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let total: usize = layer_sizes.iter().sum();
    Ok(CoverageResult {
        ratio: covered.len() as f64 / total as f64,
        covered,
        covered_pairs,
        total,
        degenerate,
    })
}

/// The coverage literal: holds iff `ratio >= threshold`.
pub fn coverage_property(ratio: f64, threshold: f64) -> bool {
    ratio >= threshold
}

/// One covering-method property over a set of trace pairs.
#[derive(Clone, Debug)]
pub struct CoverageQuery<S> {
    pub method: CoverMethod,
    pub h: Option<MetricSpec>,
    pub g: Option<MetricSpec>,
    /// Required coverage `P` in `(0, 1]`.
    pub threshold: f64,
    pub pairs: Vec<(ActivationTrace<S>, ActivationTrace<S>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageVerdict {
    pub result: CoverageResult,
    pub threshold: f64,
    pub holds: bool,
}

impl<S: Scalar> CoverageQuery<S> {
    pub fn check(&self, layer_sizes: &[usize]) -> Result<CoverageVerdict> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Usage(format!("coverage threshold must lie in (0, 1], got {}", self.threshold)));
        }
        let result = coverage_ratio(layer_sizes, self.method, &self.pairs, self.h.as_ref(), self.g.as_ref())?;
        Ok(CoverageVerdict {
            holds: coverage_property(result.ratio, self.threshold),
            threshold: self.threshold,
            result,
        })
    }
}
