use std::fmt::Write as _;

use super::{Resource, Status, Verdict};
use crate::format::serialize_image;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default)]
pub struct ReportOptions {
    /// Provenance lines, written first with a `# ` prefix.
    pub header: Vec<String>,
    /// Print wall-clock time per iteration; otherwise `elapsed=-`.
    pub timing: bool,
    /// Where the PGM rendering of the counterexample was written.
    pub pgm_path: Option<String>,
}

/// Line-oriented verdict report:
///
/// ```text
/// VERDICT violated|safe|bound_exhausted|resource_exhausted
/// ITER <i> bound=<b_i> phase1=<hit|none> phase2=<done|pending> elapsed=<s>
/// COUNTEREXAMPLE distance=<d> label=<l> bound=<i>
/// IMG m n
/// ...
/// PGM <path>
/// ```
pub fn render_report<S: Scalar>(verdict: &Verdict<S>, options: &ReportOptions) -> String {
    let mut out = String::new();
    for line in &options.header {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "VERDICT {}", verdict.status.keyword());
    match &verdict.status {
        Status::Safe => out.push_str("SCOPE grid\n"),
        Status::ResourceExhausted(r) => {
            let _ = writeln!(
                out,
                "REASON {}",
                match r {
                    Resource::Time => "time",
                    Resource::Memory => "memory",
                }
            );
        }
        _ => {}
    }
    for it in &verdict.iterations {
        let elapsed = if options.timing {
            format!("{:.6}", it.elapsed.as_secs_f64())
        } else {
            "-".to_string()
        };
        let _ = writeln!(
            out,
            "ITER {} bound={} phase1={} phase2={} elapsed={elapsed}",
            it.index,
            it.bound,
            if it.violation_found { "hit" } else { "none" },
            if it.complete == Some(true) { "done" } else { "pending" },
        );
    }
    if let Some(ce) = verdict.status.counterexample() {
        let _ = writeln!(
            out,
            "COUNTEREXAMPLE distance={} label={} bound={}",
            ce.distance, ce.label, ce.bound
        );
        out.push_str(&serialize_image(&ce.image));
        if let Some(path) = &options.pgm_path {
            let _ = writeln!(out, "PGM {path}");
        }
    }
    out
}
