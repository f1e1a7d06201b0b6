use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nnbmc_core::adversarial::{
    incremental_verify, reference_check, render_report, AdversarialProblem, Counterexample, IncrementalConfig,
    LiteralSource, Quantifier, ReportOptions, Status,
};
use nnbmc_core::covering::{CoverMethod, CoverageQuery, MetricKind, MetricSpec, NeuronRef};
use nnbmc_core::dataset::{dataset_pairs, generate_dataset, parse_dataset, serialize_dataset, Pairing};
use nnbmc_core::format::{parse_image, parse_network, parse_traces, render_trace, serialize_image};
use nnbmc_core::kernels::{conformance_suite, ConformanceOp};
use nnbmc_core::pgm::render_pgm;
use nnbmc_core::smt::{emit_smt_with, ingest_model as read_solver_output, Ingested, SmtArtifact, SmtOptions, SolverAnswer};
use nnbmc_core::{classify, ActivationTrace, Fx, FxImage, FxNetwork};

use crate::{
    ConformArgs, CoverArgs, EmitSmtArgs, EvalArgs, GenDatasetArgs, IngestArgs, ProblemArgs, VerifyArgs,
    EXIT_EXHAUSTED, EXIT_OK, EXIT_VIOLATED,
};

pub type Run = Result<u8, String>;

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn remove_stale(paths: &[PathBuf]) -> Result<(), String> {
    for p in paths {
        if p.exists() {
            fs::remove_file(p).map_err(|e| format!("cannot remove stale {}: {e}", p.display()))?;
        }
    }
    Ok(())
}

fn in_file<T>(path: &Path, r: nnbmc_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| format!("{}: {e}", path.display()))
}

fn load_net(path: &Path) -> Result<FxNetwork, String> {
    in_file(path, parse_network(&read(path)?))
}

fn load_image(path: &Path) -> Result<FxImage, String> {
    in_file(path, parse_image(&read(path)?))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), ToString::to_string)
}

fn header_text(header: &[String], prefix: &str) -> String {
    header.iter().map(|l| format!("{prefix}{l}\n")).collect()
}

pub fn eval(a: &EvalArgs) -> Run {
    let net = load_net(&a.net)?;
    let image = load_image(&a.image)?;
    let mut out = header_text(
        &[
            "eval".into(),
            format!("net {}", a.net.display()),
            format!("image {}", a.image.display()),
            format!("arithmetic {}", if a.real { "real" } else { "fixed" }),
        ],
        "# ",
    );
    if a.real {
        let trace = in_file(&a.image, net.to_f64().forward_eval(&image.map(|p| p.decode())))?;
        out.push_str(&render_trace(&trace));
        let _ = writeln!(out, "LABEL {}", classify(&trace));
    } else {
        let trace = in_file(&a.image, net.forward_eval(&image))?;
        out.push_str(&render_trace(&trace));
        let _ = writeln!(out, "LABEL {}", classify(&trace));
    }
    print!("{out}");
    Ok(EXIT_OK)
}

type TracePairs = Vec<(ActivationTrace<Fx>, ActivationTrace<Fx>)>;

fn cover_pairs(a: &CoverArgs, net: &FxNetwork) -> Result<TracePairs, String> {
    let text = read(&a.dataset)?;
    let magic = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .and_then(|l| l.split_whitespace().next())
        .unwrap_or("");
    match magic {
        "TRACES" => {
            let set = in_file(&a.dataset, parse_traces::<Fx>(&text))?;
            let traces: Vec<ActivationTrace<Fx>> = set.traces.into_iter().map(|(_, t)| t).collect();
            if a.all_pairs {
                Ok((0..traces.len())
                    .flat_map(|i| (i + 1..traces.len()).map(move |j| (i, j)))
                    .map(|(i, j)| (traces[i].clone(), traces[j].clone()))
                    .collect())
            } else {
                if traces.len() % 2 != 0 {
                    return Err(format!(
                        "{}: {} traces cannot be paired in file order",
                        a.dataset.display(),
                        traces.len()
                    ));
                }
                Ok(traces.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect())
            }
        }
        "DATASET" => {
            let dataset = in_file(&a.dataset, parse_dataset::<Fx>(&text))?;
            let pairing = if a.all_pairs { Pairing::AllPairs } else { Pairing::Default };
            dataset_pairs(&dataset, pairing)
                .iter()
                .map(|(x, y)| Ok((net.forward_eval(x)?, net.forward_eval(y)?)))
                .collect::<nnbmc_core::Result<_>>()
                .map_err(|e| format!("{}: {e}", a.dataset.display()))
        }
        other => Err(format!(
            "{}: expected a DATASET or TRACES file, found `{other}`",
            a.dataset.display()
        )),
    }
}

fn metric(
    needed: bool,
    kind: &str,
    threshold: Option<f64>,
    flag: &str,
    method: CoverMethod,
) -> Result<Option<MetricSpec>, String> {
    let kind: MetricKind = kind.parse().map_err(|e| format!("--{flag}-metric: {e}"))?;
    match (needed, threshold) {
        (false, _) => Ok(None),
        (true, None) => Err(format!("--d-{flag} is required for {method}")),
        (true, Some(t)) => MetricSpec::new(kind, t).map(Some).map_err(|e| format!("--d-{flag}: {e}")),
    }
}

pub fn cover(a: &CoverArgs) -> Run {
    let method: CoverMethod = a.method.parse().map_err(|e| format!("--method: {e}"))?;
    let h = metric(method.needs_distance_metric(), &a.h_metric, a.d_h, "h", method)?;
    let g = metric(method.needs_value_metric(), &a.g_metric, a.d_g, "g", method)?;
    let net = load_net(&a.net)?;
    let pairs = cover_pairs(a, &net)?;
    let pair_count = pairs.len();
    let query = CoverageQuery {
        method,
        h,
        g,
        threshold: a.threshold,
        pairs,
    };
    let layer_sizes = &net.sizes()[1..];
    let verdict = query.check(layer_sizes).map_err(|e| e.to_string())?;
    let r = &verdict.result;

    let mut out = header_text(
        &[
            "cover".into(),
            format!("net {}", a.net.display()),
            format!("dataset {}", a.dataset.display()),
            format!("method {method}"),
            format!("threshold {}", a.threshold),
            format!("d-h {}", opt(&a.d_h)),
            format!("h-metric {}", a.h_metric),
            format!("d-g {}", opt(&a.d_g)),
            format!("g-metric {}", a.g_metric),
            format!("pairing {}", if a.all_pairs { "all" } else { "default" }),
        ],
        "# ",
    );
    let _ = writeln!(
        out,
        "COVER method={method} pairs={pair_count} covered={} total={} degenerate={}",
        r.covered.len(),
        r.total,
        r.degenerate
    );
    let covered: Vec<String> = r.covered.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "COVERED {}", covered.join(" "));
    let _ = writeln!(
        out,
        "ratio {:.4} {} {:.2}",
        r.ratio,
        if verdict.holds { ">=" } else { "<" },
        a.threshold
    );
    let _ = writeln!(out, "PROPERTY {}", if verdict.holds { "holds" } else { "fails" });
    print!("{out}");

    if verdict.holds {
        if let Some(path) = &a.out {
            remove_stale(std::slice::from_ref(path))?;
        }
        return Ok(EXIT_OK);
    }
    if let Some(path) = &a.out {
        let mut uncovered = String::new();
        for (k, &n) in layer_sizes.iter().enumerate() {
            for j in 1..=n {
                let neuron = NeuronRef::new(k + 1, j);
                if !r.covered.contains(&neuron) {
                    let _ = writeln!(uncovered, "{neuron}");
                }
            }
        }
        write(path, &uncovered)?;
    }
    Ok(EXIT_VIOLATED)
}

fn build_problem(a: &ProblemArgs) -> Result<(AdversarialProblem<Fx>, Vec<String>), String> {
    let net = load_net(&a.net)?;
    let image = load_image(&a.image)?;
    let source = if a.potentials { LiteralSource::Potentials } else { LiteralSource::Outputs };
    let v = a.v.unwrap_or(match source {
        LiteralSource::Outputs => 0.5,
        LiteralSource::Potentials => 0.0,
    });
    let quantifier = if a.strict { Quantifier::ForAll } else { Quantifier::Exists };
    let problem = AdversarialProblem::new(net, image, a.target, a.gamma).map_err(|e| e.to_string())?;
    let radius = a.radius.unwrap_or(problem.grid.radius);
    let problem = problem
        .with_grid(a.levels, radius)
        .and_then(|p| p.with_reference_value(v))
        .map_err(|e| e.to_string())?
        .with_quantifier(quantifier)
        .with_source(source);
    let header = vec![
        format!("net {}", a.net.display()),
        format!("image {}", a.image.display()),
        format!("target {}", a.target),
        format!("gamma {}", a.gamma),
        format!("v {v}"),
        format!("levels {}", a.levels),
        format!("radius {radius}"),
        format!("quantifier {}", if a.strict { "forall" } else { "exists" }),
        format!("literal {}", if a.potentials { "potentials" } else { "outputs" }),
    ];
    Ok((problem, header))
}

fn write_counterexample(ce: &Counterexample<Fx>, prefix: &Path) -> Result<(PathBuf, PathBuf), String> {
    let img = with_suffix(prefix, ".img");
    let pgm = with_suffix(prefix, ".pgm");
    write(&img, &serialize_image(&ce.image))?;
    write(&pgm, &render_pgm(&ce.image))?;
    Ok((img, pgm))
}

fn counterexample_paths(prefix: &Path) -> Vec<PathBuf> {
    vec![with_suffix(prefix, ".img"), with_suffix(prefix, ".pgm")]
}

pub fn verify(a: &VerifyArgs) -> Run {
    let (problem, mut header) = build_problem(&a.problem)?;
    let time_limit = match a.time_limit {
        Some(t) if !(t >= 0.0 && t.is_finite()) => return Err(format!("--time-limit must be non-negative, got {t}")),
        Some(t) => Some(Duration::from_secs_f64(t)),
        None => None,
    };
    let config = IncrementalConfig {
        granularity: a.granularity,
        max_bound: a.max_bound,
        time_limit,
        memory_limit: a.memory_limit,
        step_limit: a.step_limit,
    };
    config.validate().map_err(|e| e.to_string())?;
    header.insert(0, "verify".into());
    header.extend([
        format!("granularity {}", a.granularity),
        format!("max-bound {}", a.max_bound),
        format!("time-limit {}", opt(&a.time_limit)),
        format!("memory-limit {}", opt(&a.memory_limit)),
        format!("step-limit {}", opt(&a.step_limit)),
        format!("out {}", a.out.display()),
    ]);
    let verdict = incremental_verify(&problem, &config).map_err(|e| e.to_string())?;
    let mut options = ReportOptions {
        header,
        timing: a.timing,
        pgm_path: None,
    };
    let code = match &verdict.status {
        Status::Violated(ce) => {
            let (_, pgm) = write_counterexample(ce, &a.out)?;
            options.pgm_path = Some(pgm.display().to_string());
            EXIT_VIOLATED
        }
        Status::Safe => EXIT_OK,
        Status::BoundExhausted | Status::ResourceExhausted(_) => EXIT_EXHAUSTED,
    };
    if code != EXIT_VIOLATED {
        remove_stale(&counterexample_paths(&a.out))?;
    }
    let mut report = render_report(&verdict, &options);
    if let Some(ce) = verdict.status.counterexample() {
        let check = reference_check(&problem, ce);
        let _ = writeln!(
            report,
            "CHECK exact_logistic={}",
            if check.lut_artifact() { "lut_artifact" } else { "agree" }
        );
    }
    print!("{report}");
    Ok(code)
}

pub fn emit_smt(a: &EmitSmtArgs) -> Run {
    let (problem, mut header) = build_problem(&a.problem)?;
    let options = SmtOptions {
        grid_restriction: a.grid_restrict,
        max_bytes: a.max_bytes.unwrap_or(SmtOptions::DEFAULT_MAX_BYTES),
    };
    header.insert(0, "emit-smt".into());
    header.extend([
        format!("grid-restrict {}", a.grid_restrict),
        format!("max-bytes {}", options.max_bytes),
    ]);
    let artifact = emit_smt_with(&problem, &options).map_err(|e| e.to_string())?;
    let text = header_text(&header, "; ") + &artifact.text;
    match &a.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn ingest_model(a: &IngestArgs) -> Run {
    let (problem, mut header) = build_problem(&a.problem)?;
    let artifact = in_file(&a.smt, SmtArtifact::from_text(problem, read(&a.smt)?))?;
    let transcript = fs::read(&a.model).map_err(|e| format!("cannot read {}: {e}", a.model.display()))?;
    let ingested = in_file(&a.model, read_solver_output(&artifact, &transcript))?;
    header.insert(0, "ingest-model".into());
    header.extend([
        format!("smt {}", a.smt.display()),
        format!("model {}", a.model.display()),
        format!("out {}", a.out.display()),
    ]);
    let mut out = header_text(&header, "# ");
    let code = match &ingested {
        Ingested::Model(ce) => {
            let (_, pgm) = write_counterexample(ce, &a.out)?;
            out.push_str("MODEL sat\n");
            let _ = writeln!(out, "COUNTEREXAMPLE distance={} label={}", ce.distance, ce.label);
            out.push_str(&serialize_image(&ce.image));
            let _ = writeln!(out, "PGM {}", pgm.display());
            EXIT_VIOLATED
        }
        Ingested::NoModel(SolverAnswer::Unsat) => {
            out.push_str("MODEL unsat\n");
            EXIT_OK
        }
        Ingested::NoModel(_) => {
            out.push_str("MODEL unknown\n");
            EXIT_EXHAUSTED
        }
    };
    if code != EXIT_VIOLATED {
        remove_stale(&counterexample_paths(&a.out))?;
    }
    print!("{out}");
    Ok(code)
}

pub fn gen_dataset(a: &GenDatasetArgs) -> Run {
    let text = serialize_dataset(&generate_dataset::<Fx>(a.seed));
    match &a.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn conform(a: &ConformArgs) -> Run {
    let op: ConformanceOp = a.op.parse().map_err(|e| format!("--op: {e}"))?;
    let report = conformance_suite(op, a.cases, a.seed);
    print!("{report}");
    Ok(if report.passed() { EXIT_OK } else { EXIT_VIOLATED })
}
