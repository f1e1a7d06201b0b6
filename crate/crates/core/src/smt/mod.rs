//! SMT-LIB2 bit-vector encoding of an adversarial problem.
//!
//! Every quantity is a 32-bit two's-complement Q16.16 word with the same
//! saturation and rounding as [`Fx`]. Products are formed in 64 bits and
//! rounded half-to-even back to 16 fractional bits; the sigmoid is the
//! interpolated lookup table written as if-then-else trees over the table
//! index. The distance restriction compares the integer sum of squared raw
//! pixel differences against `floor(gamma^2 * 2^32)`, which is the same test
//! the native engine performs.
//!
//! Solvers are not run from here. [`emit_smt`] produces text to hand to any
//! SMT-LIB2 solver and [`ingest_model`] reads its transcript back.

pub mod sexp;

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::adversarial::{grid_levels, validate_counterexample, AdversarialProblem, Counterexample, LiteralSource, Quantifier};
use crate::error::{Error, Result};
use crate::fixed::{Fx, ONE_RAW};
use crate::kernels::Activation;
use crate::network::ImageVec;
use crate::scalar::Scalar;
use crate::sigmoid::{SigmoidTable, DOMAIN_HI_RAW, DOMAIN_LO_RAW};
use sexp::{parse_all, Sexp};

pub const LOGIC: &str = "QF_BV";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmtOptions {
    /// Additionally restrict every pixel to its native grid levels, so the
    /// solver decides exactly the question the grid engine decides.
    pub grid_restriction: bool,
    /// Upper bound on the emitted text in bytes.
    pub max_bytes: usize,
}

impl SmtOptions {
    pub const DEFAULT_MAX_BYTES: usize = 64 << 20;
}

impl Default for SmtOptions {
    fn default() -> SmtOptions {
        SmtOptions {
            grid_restriction: false,
            max_bytes: SmtOptions::DEFAULT_MAX_BYTES,
        }
    }
}

/// Solver symbol of every pixel and every final-layer output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolMap {
    pub pixels: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SmtArtifact {
    pub logic: String,
    pub text: String,
    pub symbols: SymbolMap,
    /// The encoded problem, used to rebuild counterexamples from models.
    pub problem: AdversarialProblem<Fx>,
}

impl SmtArtifact {
    /// Re-attaches previously emitted text to its problem, reading the symbol
    /// map from the `; pixel` and `; output` comment lines.
    pub fn from_text(problem: AdversarialProblem<Fx>, text: String) -> Result<SmtArtifact> {
        let mut pixels = Vec::new();
        let mut outputs = Vec::new();
        let mut logic = None;
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let target = match fields.as_slice() {
                [";", "pixel", i, name] => Some((&mut pixels, i, name)),
                [";", "output", i, name] => Some((&mut outputs, i, name)),
                ["(set-logic", l] => {
                    logic = Some(l.trim_end_matches(')').to_string());
                    None
                }
                _ => None,
            };
            if let Some((list, i, name)) = target {
                if i.parse::<usize>().ok() != Some(list.len()) {
                    return Err(Error::parse(n + 1, 1, format!("symbol map entry out of order: {line}")));
                }
                list.push(name.to_string());
            }
        }
        if pixels.len() != problem.net.input_dim() || outputs.len() != problem.net.output_dim() {
            return Err(Error::Shape(format!(
                "artifact maps {} pixels and {} outputs, network has {} and {}",
                pixels.len(),
                outputs.len(),
                problem.net.input_dim(),
                problem.net.output_dim()
            )));
        }
        Ok(SmtArtifact {
            logic: logic.ok_or_else(|| Error::Usage("artifact has no set-logic command".into()))?,
            text,
            symbols: SymbolMap { pixels, outputs },
            problem,
        })
    }
}

fn bv32(raw: i32) -> String {
    format!("#x{:08x}", raw as u32)
}

fn bv64(v: u64) -> String {
    format!("#x{v:016x}")
}

const PRELUDE: &str = "\
(define-fun sat32 ((x (_ BitVec 64))) (_ BitVec 32)
  (ite (bvsgt x #x000000007fffffff) #x7fffffff
  (ite (bvslt x #xffffffff80000000) #x80000000
  ((_ extract 31 0) x))))
(define-fun rne16 ((x (_ BitVec 64))) (_ BitVec 64)
  (let ((q (bvashr x #x0000000000000010)) (r ((_ extract 15 0) x)))
  (ite (or (bvugt r #x8000) (and (= r #x8000) (= ((_ extract 0 0) q) #b1)))
    (bvadd q #x0000000000000001) q)))
(define-fun fx_add ((a (_ BitVec 32)) (b (_ BitVec 32))) (_ BitVec 32)
  (sat32 (bvadd ((_ sign_extend 32) a) ((_ sign_extend 32) b))))
(define-fun fx_mul ((a (_ BitVec 32)) (b (_ BitVec 32))) (_ BitVec 32)
  (sat32 (rne16 (bvmul ((_ sign_extend 32) a) ((_ sign_extend 32) b)))))
";

const RELU: &str = "\
(define-fun fx_act ((x (_ BitVec 32))) (_ BitVec 32)
  (ite (bvslt x #x00000000) #x00000000 x))
";

/// Balanced if-then-else tree over runs of equal values, indexed by a
/// 14-bit table index.
fn table_tree(out: &mut String, runs: &[(usize, i32)]) {
    if runs.len() == 1 {
        out.push_str(&bv32(runs[0].1));
        return;
    }
    let mid = runs.len() / 2;
    let _ = write!(out, "(ite (bvult i (_ bv{} 14)) ", runs[mid].0);
    table_tree(out, &runs[..mid]);
    out.push(' ');
    table_tree(out, &runs[mid..]);
    out.push(')');
}

fn runs(values: impl Iterator<Item = i32>) -> Vec<(usize, i32)> {
    let mut out: Vec<(usize, i32)> = Vec::new();
    for (i, v) in values.enumerate() {
        if out.last().map(|r| r.1) != Some(v) {
            out.push((i, v));
        }
    }
    out
}

fn sigmoid_definitions(out: &mut String) {
    let table = SigmoidTable::global();
    let n = table.entries().len();
    out.push_str("(define-fun sig_entry ((i (_ BitVec 14))) (_ BitVec 32)\n  ");
    table_tree(out, &runs(table.entries().iter().map(|e| e.raw())));
    out.push_str(")\n(define-fun sig_slope ((i (_ BitVec 14))) (_ BitVec 32)\n  ");
    table_tree(out, &runs((0..n).map(|i| table.slope(i))));
    out.push_str(")\n");
    let _ = write!(
        out,
        "\
(define-fun rne8 ((x (_ BitVec 32))) (_ BitVec 32)
  (let ((q (bvashr x #x00000008)) (r ((_ extract 7 0) x)))
  (ite (or (bvugt r #x80) (and (= r #x80) (= ((_ extract 0 0) q) #b1)))
    (bvadd q #x00000001) q)))
(define-fun fx_act ((x (_ BitVec 32))) (_ BitVec 32)
  (let ((c (ite (bvslt x {lo}) {lo} (ite (bvsgt x {hi}) {hi} x))))
  (let ((o (bvsub c {lo})))
  (let ((i ((_ extract 21 8) o)) (f ((_ zero_extend 24) ((_ extract 7 0) o))))
  (bvadd (sig_entry i) (rne8 (bvmul (sig_slope i) f)))))))
",
        lo = bv32(DOMAIN_LO_RAW),
        hi = bv32(DOMAIN_HI_RAW),
    );
}

fn check_cap(out: &str, options: &SmtOptions) -> Result<()> {
    if out.len() > options.max_bytes {
        return Err(Error::Capacity(format!(
            "formula exceeds the cap of {} bytes",
            options.max_bytes
        )));
    }
    Ok(())
}

pub fn potential_symbol(layer: usize, index: usize) -> String {
    format!("u_{layer}_{index}")
}

pub fn output_symbol(layer: usize, index: usize) -> String {
    format!("y_{layer}_{index}")
}

pub fn pixel_symbol(index: usize) -> String {
    format!("px_{index}")
}

pub fn emit_smt(problem: &AdversarialProblem<Fx>) -> Result<SmtArtifact> {
    emit_smt_with(problem, &SmtOptions::default())
}

pub fn emit_smt_with(problem: &AdversarialProblem<Fx>, options: &SmtOptions) -> Result<SmtArtifact> {
    problem.validate()?;
    let net = &problem.net;
    let depth = net.layer_count();
    let pixels: Vec<String> = (0..net.input_dim()).map(pixel_symbol).collect();
    let outputs: Vec<String> = (0..net.output_dim()).map(|i| output_symbol(depth, i)).collect();

    let mut out = String::new();
    out.push_str("; nnbmc adversarial query\n");
    for (i, s) in pixels.iter().enumerate() {
        let _ = writeln!(out, "; pixel {i} {s}");
    }
    for (i, s) in outputs.iter().enumerate() {
        let _ = writeln!(out, "; output {i} {s}");
    }
    let _ = writeln!(out, "(set-logic {LOGIC})\n(set-option :produce-models true)");
    out.push_str(PRELUDE);
    match net.activation() {
        Activation::Relu => out.push_str(RELU),
        Activation::Sigmoid => sigmoid_definitions(&mut out),
    }

    for s in &pixels {
        let _ = writeln!(out, "(declare-const {s} (_ BitVec 32))");
    }
    for s in &pixels {
        let _ = writeln!(out, "(assert (and (bvsle #x00000000 {s}) (bvsle {s} {})))", bv32(ONE_RAW));
    }

    // Squared raw differences are at most 2^32 each; the sum stays below
    // 2^64 for any realistic pixel count.
    let limit = problem.gamma * problem.gamma * 2f64.powi(32);
    let limit = if limit >= u64::MAX as f64 { u64::MAX } else { limit.floor() as u64 };
    out.push_str("(assert (bvule (bvadd #x0000000000000000");
    for (s, p) in pixels.iter().zip(problem.reference.pixels()) {
        let _ = write!(
            out,
            "\n  (let ((d (bvsub ((_ sign_extend 32) {s}) {}))) (bvmul d d))",
            bv64(p.raw() as i64 as u64)
        );
    }
    let _ = writeln!(out, ")\n  {}))", bv64(limit));

    if options.grid_restriction {
        for (s, levels) in pixels.iter().zip(grid_levels(problem.reference.pixels(), problem.grid)) {
            let _ = write!(out, "(assert (or");
            for l in levels {
                let _ = write!(out, " (= {s} {})", bv32(l.raw()));
            }
            out.push_str("))\n");
        }
    }
    check_cap(&out, options)?;

    let mut inputs = pixels.clone();
    for (k, layer) in net.layers().iter().enumerate() {
        let k = k + 1;
        let mut next = Vec::with_capacity(layer.bias.len());
        for (r, b) in layer.bias.iter().enumerate() {
            let u = potential_symbol(k, r);
            let y = output_symbol(k, r);
            // Left fold from zero; adding to zero is exact, so the first
            // product starts the chain.
            let mut sum = String::new();
            for (c, (w, x)) in layer.weights.row(r).iter().zip(&inputs).enumerate() {
                let term = format!("(fx_mul {} {x})", bv32(w.raw()));
                sum = if c == 0 { term } else { format!("(fx_add {sum} {term})") };
            }
            let _ = writeln!(out, "(define-fun {u} () (_ BitVec 32) (fx_add {sum} {}))", bv32(b.raw()));
            let _ = writeln!(out, "(define-fun {y} () (_ BitVec 32) (fx_act {u}))");
            check_cap(&out, options)?;
            next.push(y);
        }
        inputs = next;
    }

    let read = |i: usize| match problem.source {
        LiteralSource::Outputs => output_symbol(depth, i),
        LiteralSource::Potentials => potential_symbol(depth, i),
    };
    let v = bv32(Fx::from_f64(problem.reference_value).raw());
    let competitors: Vec<String> = (0..net.output_dim())
        .filter(|&i| i != problem.target)
        .map(|i| format!("(bvsgt {} {v})", read(i)))
        .collect();
    let clause = match (problem.quantifier, competitors.len()) {
        (Quantifier::Exists, 0) | (Quantifier::ForAll, 0) => "false".to_string(),
        (_, 1) => competitors[0].clone(),
        (Quantifier::Exists, _) => format!("(or {})", competitors.join(" ")),
        (Quantifier::ForAll, _) => format!("(and {})", competitors.join(" ")),
    };
    let _ = writeln!(out, "(assert (and (bvslt {} {v}) {clause}))", read(problem.target));
    let _ = writeln!(out, "(check-sat)\n(get-value ({}))", pixels.join(" "));
    check_cap(&out, options)?;

    Ok(SmtArtifact {
        logic: LOGIC.to_string(),
        text: out,
        symbols: SymbolMap { pixels, outputs },
        problem: problem.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ingested {
    Model(Counterexample<Fx>),
    /// The solver answered `unsat` or `unknown`.
    NoModel(SolverAnswer),
}

fn unquote(symbol: &str) -> &str {
    symbol
        .strip_prefix('|')
        .and_then(|s| s.strip_suffix('|'))
        .unwrap_or(symbol)
}

/// Decodes a 32-bit bit-vector constant: `#x`, `#b` or `(_ bvN 32)`.
pub fn decode_bv32(value: &Sexp) -> Option<u32> {
    match value {
        Sexp::Atom(a) => {
            if let Some(hex) = a.strip_prefix("#x") {
                (hex.len() == 8).then(|| u32::from_str_radix(hex, 16).ok()).flatten()
            } else if let Some(bin) = a.strip_prefix("#b") {
                (bin.len() == 32).then(|| u32::from_str_radix(bin, 2).ok()).flatten()
            } else {
                None
            }
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(n), Sexp::Atom(w)] if u == "_" && w == "32" => {
                n.strip_prefix("bv")?.parse::<u32>().ok()
            }
            _ => None,
        },
    }
}

/// Reads a solver transcript (`sat` followed by the `get-value` response).
pub fn ingest_model(artifact: &SmtArtifact, output: &[u8]) -> Result<Ingested> {
    let text = String::from_utf8_lossy(output);
    let items = parse_all(&text).map_err(|e| Error::Ingest(format!("unreadable solver output: {e}")))?;
    let mut items = items.into_iter();
    match items.next() {
        Some(Sexp::Atom(a)) if a == "sat" => {}
        Some(Sexp::Atom(a)) if a == "unsat" => return Ok(Ingested::NoModel(SolverAnswer::Unsat)),
        Some(Sexp::Atom(a)) if a == "unknown" => return Ok(Ingested::NoModel(SolverAnswer::Unknown)),
        Some(e) if e.head() == Some("error") => return Err(Error::Ingest(format!("solver reported {e}"))),
        Some(other) => return Err(Error::Ingest(format!("expected sat, unsat or unknown, got {other}"))),
        None => return Err(Error::Ingest("empty solver output".into())),
    }
    let mut bindings: HashMap<String, Sexp> = HashMap::new();
    for item in items {
        if item.head() == Some("error") {
            return Err(Error::Ingest(format!("solver reported {item}")));
        }
        for pair in item.list().unwrap_or_default() {
            if let Some([Sexp::Atom(name), value]) = pair.list() {
                bindings.insert(unquote(name).to_string(), value.clone());
            }
        }
    }
    let problem = &artifact.problem;
    let mut pixels = Vec::with_capacity(artifact.symbols.pixels.len());
    for symbol in &artifact.symbols.pixels {
        let value = bindings
            .get(symbol)
            .ok_or_else(|| Error::Ingest(format!("missing binding for {symbol}")))?;
        let raw = decode_bv32(value).ok_or_else(|| Error::Ingest(format!("malformed value for {symbol}: {value}")))?;
        let px = Fx::from_raw(raw as i32);
        if !(Fx::ZERO..=Fx::ONE).contains(&px) {
            return Err(Error::Ingest(format!("value for {symbol} outside [0, 1]: {px}")));
        }
        pixels.push(px);
    }
    let image = ImageVec::new(problem.reference.width(), problem.reference.height(), pixels)?;
    let ce = Counterexample::from_image(problem, image, 0)?;
    if !validate_counterexample(&problem.net, &ce, problem) {
        return Err(Error::Ingest(
            "model does not satisfy the distance restriction and the literal".into(),
        ));
    }
    Ok(Ingested::Model(ce))
}

#[cfg(test)]
mod tests;
