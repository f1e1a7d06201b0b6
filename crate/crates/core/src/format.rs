//! Line-oriented text formats: MLPNET networks, IMG images and TRACES
//! fixtures. `#` starts a comment that runs to the end of the line; blank
//! lines are ignored.
//!
//! ```text
//! MLPNET 1
//! layers 1
//! sizes 2 1
//! activation sigmoid
//! weights 1
//! 0.5 -1.25
//! bias 1
//! 0.1
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernels::{Activation, Matrix};
use crate::network::{ActivationTrace, ImageVec, Layer, Network};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Token<'a> {
    pub line: usize,
    pub column: usize,
    pub text: &'a str,
}

impl Token<'_> {
    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.column, message)
    }

    pub fn usize(&self) -> Result<usize> {
        self.text
            .parse()
            .map_err(|_| self.error(format!("expected a non-negative integer, found `{}`", self.text)))
    }

    pub fn scalar<S: Scalar>(&self) -> Result<S> {
        let r: f64 = self
            .text
            .parse()
            .map_err(|_| self.error(format!("expected a decimal number, found `{}`", self.text)))?;
        S::from_f64_checked(r)
            .ok_or_else(|| self.error(format!("`{}` is out of range for {}", self.text, S::NAME)))
    }
}

/// Significant lines of a text document, split into tokens with 1-based
/// line and column positions.
pub(crate) struct Lines<'a> {
    lines: Vec<(usize, Vec<Token<'a>>)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Lines<'a> {
        let mut lines = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            last_line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let mut tokens = Vec::new();
            let mut start = None;
            for (byte, ch) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
                match (ch.is_whitespace(), start) {
                    (false, None) => start = Some(byte),
                    (true, Some(s)) => {
                        tokens.push(Token {
                            line: i + 1,
                            column: content[..s].chars().count() + 1,
                            text: &content[s..byte],
                        });
                        start = None;
                    }
                    _ => {}
                }
            }
            if !tokens.is_empty() {
                lines.push((i + 1, tokens));
            }
        }
        Lines {
            lines,
            pos: 0,
            last_line,
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }

    fn eof(&self, what: &str) -> Error {
        Error::parse(self.last_line + 1, 1, format!("unexpected end of input, expected {what}"))
    }

    pub fn next_line(&mut self, what: &str) -> Result<Vec<Token<'a>>> {
        let line = self.lines.get(self.pos).ok_or_else(|| self.eof(what))?;
        self.pos += 1;
        Ok(line.1.clone())
    }

    /// A line of the form `keyword arg...`; returns the arguments.
    pub fn keyword(&mut self, keyword: &str, args: usize) -> Result<Vec<Token<'a>>> {
        let line = self.next_line(&format!("`{keyword}`"))?;
        if line[0].text != keyword {
            return Err(line[0].error(format!("expected `{keyword}`, found `{}`", line[0].text)));
        }
        if line.len() != args + 1 {
            let at = line.get(args + 1).unwrap_or(&line[line.len() - 1]);
            return Err(at.error(format!(
                "`{keyword}` takes {args} argument(s), found {}",
                line.len() - 1
            )));
        }
        Ok(line[1..].to_vec())
    }

    /// A line of exactly `count` scalars.
    pub fn scalar_row<S: Scalar>(&mut self, count: usize, what: &str) -> Result<Vec<S>> {
        let line = self.next_line(what)?;
        if line.len() != count {
            let at = line.get(count).unwrap_or(&line[line.len() - 1]);
            return Err(at.error(format!(
                "dimension mismatch: {what} has {} values, expected {count}",
                line.len()
            )));
        }
        line.iter().map(Token::scalar).collect()
    }

    /// `count` scalars spread over any number of lines.
    pub fn scalars<S: Scalar>(&mut self, count: usize, what: &str) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let line = self.next_line(what)?;
            if out.len() + line.len() > count {
                return Err(line[count - out.len()].error(format!("too many values for {what}, expected {count}")));
            }
            for t in &line {
                out.push(t.scalar()?);
            }
        }
        Ok(out)
    }

    pub fn expect_end(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            None => Ok(()),
            Some((_, t)) => Err(t[0].error(format!("unexpected trailing content `{}`", t[0].text))),
        }
    }
}

pub(crate) fn header(lines: &mut Lines<'_>, magic: &str) -> Result<()> {
    let args = lines.keyword(magic, 1)?;
    if args[0].text != "1" {
        return Err(args[0].error(format!("unsupported {magic} version `{}`", args[0].text)));
    }
    Ok(())
}

fn sizes_line(lines: &mut Lines<'_>, expected: Option<usize>) -> Result<Vec<usize>> {
    let line = lines.next_line("`sizes`")?;
    if line[0].text != "sizes" {
        return Err(line[0].error(format!("expected `sizes`, found `{}`", line[0].text)));
    }
    if let Some(n) = expected {
        if line.len() != n + 1 {
            return Err(line[0].error(format!("dimension mismatch: expected {n} sizes, found {}", line.len() - 1)));
        }
    }
    let sizes = line[1..].iter().map(Token::usize).collect::<Result<Vec<_>>>()?;
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(line[i + 1].error("layer size must be positive"));
    }
    Ok(sizes)
}

fn activation_line(lines: &mut Lines<'_>) -> Result<Activation> {
    let args = lines.keyword("activation", 1)?;
    args[0]
        .text
        .parse()
        .map_err(|_| args[0].error(format!("unknown activation `{}`", args[0].text)))
}

fn index_line(lines: &mut Lines<'_>, keyword: &str, expected: usize) -> Result<()> {
    let args = lines.keyword(keyword, 1)?;
    if args[0].usize()? != expected {
        return Err(args[0].error(format!("expected `{keyword} {expected}`")));
    }
    Ok(())
}

pub fn parse_network<S: Scalar>(text: &str) -> Result<Network<S>> {
    let mut lines = Lines::new(text);
    header(&mut lines, "MLPNET")?;
    let layers_arg = lines.keyword("layers", 1)?;
    let layer_count = layers_arg[0].usize()?;
    if layer_count == 0 {
        return Err(layers_arg[0].error("a network needs at least one layer"));
    }
    let sizes = sizes_line(&mut lines, Some(layer_count + 1))?;
    let activation = activation_line(&mut lines)?;
    let mut layers = Vec::with_capacity(layer_count);
    for k in 1..=layer_count {
        let (rows, cols) = (sizes[k], sizes[k - 1]);
        index_line(&mut lines, "weights", k)?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(lines.scalar_row::<S>(cols, &format!("weights {k} row {}", r + 1))?);
        }
        index_line(&mut lines, "bias", k)?;
        let bias = lines.scalar_row(rows, &format!("bias {k}"))?;
        layers.push(Layer {
            weights: Matrix::new(rows, cols, data)?,
            bias,
        });
    }
    lines.expect_end()?;
    Network::new(sizes, layers, activation)
}

fn join<S: Scalar>(values: &[S]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical MLPNET text. Values print as the shortest decimal that parses
/// back to the same bits.
pub fn serialize_network<S: Scalar>(net: &Network<S>) -> String {
    let mut out = String::new();
    out.push_str("MLPNET 1\n");
    let _ = writeln!(out, "layers {}", net.layer_count());
    let sizes: Vec<String> = net.sizes().iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "sizes {}", sizes.join(" "));
    let _ = writeln!(out, "activation {}", net.activation());
    for (k, layer) in net.layers().iter().enumerate() {
        let _ = writeln!(out, "weights {}", k + 1);
        for r in 0..layer.weights.rows() {
            let _ = writeln!(out, "{}", join(layer.weights.row(r)));
        }
        let _ = writeln!(out, "bias {}", k + 1);
        let _ = writeln!(out, "{}", join(&layer.bias));
    }
    out
}

fn parse_image_block<S: Scalar>(lines: &mut Lines<'_>) -> Result<ImageVec<S>> {
    let args = lines.keyword("IMG", 2)?;
    let (width, height) = (args[0].usize()?, args[1].usize()?);
    let pixels: Vec<S> = lines.scalars(width * height, "image pixels")?;
    if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(&p.to_f64())) {
        return Err(args[0].error(format!("pixel {i} = {} is outside [0, 1]", pixels[i])));
    }
    ImageVec::new(width, height, pixels)
}

pub fn parse_image<S: Scalar>(text: &str) -> Result<ImageVec<S>> {
    let mut lines = Lines::new(text);
    let img = parse_image_block(&mut lines)?;
    lines.expect_end()?;
    Ok(img)
}

/// Parses an `IMG` block at the current position of an enclosing document.
pub(crate) fn image_block<S: Scalar>(lines: &mut Lines<'_>) -> Result<ImageVec<S>> {
    parse_image_block(lines)
}

/// `IMG m n` followed by `n` rows of `m` values.
pub fn serialize_image<S: Scalar>(img: &ImageVec<S>) -> String {
    let mut out = format!("IMG {} {}\n", img.width(), img.height());
    for row in img.pixels().chunks(img.width().max(1)) {
        let _ = writeln!(out, "{}", join(row));
    }
    out
}

/// Named activation traces, paired in file order by the covering tools.
///
/// ```text
/// TRACES 1
/// sizes 3 2 1
/// activation sigmoid
/// trace Ex1
/// u 1 -1.3 -1.8 -0.5
/// u 2 -0.79 -1.37
/// u 3 -1.417
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet<S> {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub traces: Vec<(String, ActivationTrace<S>)>,
}

impl<S: Scalar> TraceSet<S> {
    pub fn get(&self, name: &str) -> Option<&ActivationTrace<S>> {
        self.traces.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn parse_traces<S: Scalar>(text: &str) -> Result<TraceSet<S>> {
    let mut lines = Lines::new(text);
    header(&mut lines, "TRACES")?;
    let sizes = sizes_line(&mut lines, None)?;
    let activation = activation_line(&mut lines)?;
    let mut traces = Vec::new();
    while !lines.at_end() {
        let name = lines.keyword("trace", 1)?[0].text.to_string();
        let mut potentials = Vec::with_capacity(sizes.len());
        for (k, &n) in sizes.iter().enumerate() {
            let line = lines.next_line("`u`")?;
            if line[0].text != "u" || line.len() < 2 || line[1].usize()? != k + 1 {
                return Err(line[0].error(format!("expected `u {}`", k + 1)));
            }
            if line.len() != n + 2 {
                return Err(line[0].error(format!(
                    "dimension mismatch: layer {} has {} potentials, expected {n}",
                    k + 1,
                    line.len() - 2
                )));
            }
            potentials.push(line[2..].iter().map(Token::scalar).collect::<Result<Vec<S>>>()?);
        }
        traces.push((name, ActivationTrace::from_potentials(potentials, activation)?));
    }
    Ok(TraceSet {
        sizes,
        activation,
        traces,
    })
}

pub fn serialize_traces<S: Scalar>(set: &TraceSet<S>) -> String {
    let sizes: Vec<String> = set.sizes.iter().map(ToString::to_string).collect();
    let mut out = format!("TRACES 1\nsizes {}\nactivation {}\n", sizes.join(" "), set.activation);
    for (name, trace) in &set.traces {
        let _ = writeln!(out, "trace {name}");
        for k in 1..=trace.layer_count() {
            let _ = writeln!(out, "u {k} {}", join(trace.potentials(k)));
        }
    }
    out
}

/// Human-readable trace listing used by `eval`.
pub fn render_trace<S: Scalar>(trace: &ActivationTrace<S>) -> String {
    let mut out = String::new();
    for k in 1..=trace.layer_count() {
        let _ = writeln!(out, "u {k} {}", join(trace.potentials(k)));
        let _ = writeln!(out, "y {k} {}", join(trace.outputs(k)));
    }
    out
}
