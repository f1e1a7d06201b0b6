//! Operational models of the linear-algebra kernels used by forward
//! evaluation: matrix multiply, bias add and activation forward.
//!
//! Accumulation always runs in ascending inner-index order starting from
//! zero; with saturating arithmetic the order is observable, so it is part of
//! the contract.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fixed::{saturate_i64, Fx};
use crate::scalar::Scalar;
use crate::sigmoid::{SigmoidTable, DOMAIN_HI_RAW, DOMAIN_LO_RAW, STEP_RAW};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Sigmoid => x.sigmoid(),
            Activation::Relu => x.relu(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Activation> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Usage(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Matrix<S>> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix<S> {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix<S> {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Matrix<S>> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {bad} has {} values, expected {cols}",
                rows[bad].len()
            )));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// A single-column matrix.
    pub fn column(values: &[S]) -> Matrix<S> {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `C = A * B`.
pub fn gemm<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Vec::with_capacity(a.rows * b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut sum = S::zero();
            for k in 0..a.cols {
                sum = sum + a.get(i, k) * b.get(k, j);
            }
            out.push(sum);
        }
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        data: out,
    })
}

/// Adds `bias[i]` to every element of row `i`.
pub fn bias_add<S: Scalar>(m: &Matrix<S>, bias: &[S]) -> Result<Matrix<S>> {
    if bias.len() != m.rows {
        return Err(Error::Shape(format!(
            "bias of length {} for {} rows",
            bias.len(),
            m.rows
        )));
    }
    let data = m
        .data
        .chunks(m.cols.max(1))
        .zip(bias)
        .flat_map(|(row, &b)| row.iter().map(move |&v| v + b))
        .collect();
    Ok(Matrix {
        rows: m.rows,
        cols: m.cols,
        data,
    })
}

pub fn activation_forward<S: Scalar>(v: &[S], kind: Activation) -> Vec<S> {
    v.iter().map(|&x| kind.apply(x)).collect()
}

/// Naive raw-integer reference implementations used by the conformance
/// harness. They share no code with the operational models above.
pub mod reference {
    use super::*;

    fn rne_div(num: i128, den: i128) -> i128 {
        let q = num.div_euclid(den);
        let r = num.rem_euclid(den);
        if 2 * r > den || (2 * r == den && q.rem_euclid(2) == 1) {
            q + 1
        } else {
            q
        }
    }

    fn add(a: i32, b: i32) -> i32 {
        saturate_i64(a as i64 + b as i64)
    }

    fn mul(a: i32, b: i32) -> i32 {
        rne_div(a as i128 * b as i128, 1 << 16).clamp(i32::MIN as i128, i32::MAX as i128) as i32
    }

    pub fn gemm(a: &[Vec<i32>], b: &[Vec<i32>]) -> Vec<Vec<i32>> {
        let inner = b.len();
        let cols = b.first().map_or(0, Vec::len);
        a.iter()
            .map(|row| {
                (0..cols)
                    .map(|j| (0..inner).fold(0, |acc, k| add(acc, mul(row[k], b[k][j]))))
                    .collect()
            })
            .collect()
    }

    pub fn bias_add(m: &[Vec<i32>], bias: &[i32]) -> Vec<Vec<i32>> {
        m.iter()
            .zip(bias)
            .map(|(row, &b)| row.iter().map(|&v| add(v, b)).collect())
            .collect()
    }

    pub fn relu(x: i32) -> i32 {
        x.max(0)
    }

    pub fn sigmoid(table: &SigmoidTable, x: i32) -> i32 {
        let x = x.clamp(DOMAIN_LO_RAW, DOMAIN_HI_RAW);
        let pos = (x - DOMAIN_LO_RAW) as i128;
        let i = (pos / STEP_RAW as i128) as usize;
        let e = table.entries();
        if i + 1 >= e.len() {
            return e[e.len() - 1].raw();
        }
        let lo = e[i].raw() as i128;
        let hi = e[i + 1].raw() as i128;
        let frac = pos - i as i128 * STEP_RAW as i128;
        (lo + rne_div((hi - lo) * frac, STEP_RAW as i128)) as i32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConformanceOp {
    Gemm,
    BiasAdd,
    Activation,
}

impl ConformanceOp {
    pub fn name(self) -> &'static str {
        match self {
            ConformanceOp::Gemm => "gemm",
            ConformanceOp::BiasAdd => "bias_add",
            ConformanceOp::Activation => "activation",
        }
    }
}

impl FromStr for ConformanceOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<ConformanceOp> {
        match s {
            "gemm" => Ok(ConformanceOp::Gemm),
            "bias_add" | "bias-add" => Ok(ConformanceOp::BiasAdd),
            "activation" => Ok(ConformanceOp::Activation),
            other => Err(Error::Usage(format!(
                "unknown conformance op `{other}` (expected gemm, bias_add or activation)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConformanceFailure {
    pub case: usize,
    pub position: (usize, usize),
    pub got: i32,
    pub expected: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConformanceReport {
    pub op: ConformanceOp,
    pub seed: u64,
    pub cases_run: usize,
    pub max_raw_diff: u64,
    pub failures: Vec<ConformanceFailure>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CONFORM op={} seed={}", self.op.name(), self.seed)?;
        writeln!(f, "cases_run {}", self.cases_run)?;
        writeln!(f, "max_raw_diff {}", self.max_raw_diff)?;
        writeln!(f, "failures {}", self.failures.len())?;
        for fail in &self.failures {
            writeln!(
                f,
                "FAIL case={} at=({},{}) got={} expected={}",
                fail.case, fail.position.0, fail.position.1, fail.got, fail.expected
            )?;
        }
        writeln!(f, "RESULT {}", if self.passed() { "pass" } else { "fail" })
    }
}

const BOUNDARY: [i32; 7] = [0, 1, -1, 1 << 16, -(1 << 16), i32::MAX, i32::MIN];

fn random_raw(rng: &mut ChaCha8Rng) -> i32 {
    match rng.gen_range(0..10) {
        0 => BOUNDARY[rng.gen_range(0..BOUNDARY.len())],
        1 => rng.gen(),
        _ => rng.gen_range(-(8 << 16)..=(8 << 16)),
    }
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fill: Option<i32>) -> Vec<Vec<i32>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| fill.unwrap_or_else(|| random_raw(rng)))
                .collect()
        })
        .collect()
}

fn to_matrix(rows: &[Vec<i32>]) -> Matrix<Fx> {
    let fx: Vec<Vec<Fx>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| Fx::from_raw(v)).collect())
        .collect();
    Matrix::from_rows(&fx).expect("generated rows are rectangular")
}

struct Tally {
    max_raw_diff: u64,
    failures: Vec<ConformanceFailure>,
}

impl Tally {
    fn compare(&mut self, case: usize, got: &[Vec<i32>], expected: &[Vec<i32>]) {
        for (r, (g_row, e_row)) in got.iter().zip(expected).enumerate() {
            for (c, (&g, &e)) in g_row.iter().zip(e_row).enumerate() {
                let diff = (g as i64 - e as i64).unsigned_abs();
                self.max_raw_diff = self.max_raw_diff.max(diff);
                if diff != 0 {
                    self.failures.push(ConformanceFailure {
                        case,
                        position: (r, c),
                        got: g,
                        expected: e,
                    });
                }
            }
        }
    }
}

fn raw_rows(m: &Matrix<Fx>) -> Vec<Vec<i32>> {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|v| v.raw()).collect())
        .collect()
}

/// Runs `cases` seeded cases of `op` through the operational model and the
/// raw-integer reference, comparing bit for bit. The first cases are fixed
/// boundary cases (all-max, all-min, zero, identity); the rest are random
/// shapes up to 8x8.
pub fn conformance_suite(op: ConformanceOp, cases: usize, seed: u64) -> ConformanceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = SigmoidTable::global();
    let mut tally = Tally {
        max_raw_diff: 0,
        failures: Vec::new(),
    };
    let boundary_fills = [Some(i32::MAX), Some(i32::MIN), Some(0), Some(1 << 16)];
    for case in 0..cases {
        let fill = boundary_fills.get(case).copied().flatten();
        let rows = rng.gen_range(1..=8);
        let inner = rng.gen_range(1..=8);
        let cols = rng.gen_range(1..=8);
        match op {
            ConformanceOp::Gemm => {
                let a = random_rows(&mut rng, rows, inner, fill);
                let b = random_rows(&mut rng, inner, cols, fill);
                let got = gemm(&to_matrix(&a), &to_matrix(&b)).expect("compatible shapes");
                tally.compare(case, &raw_rows(&got), &reference::gemm(&a, &b));
            }
            ConformanceOp::BiasAdd => {
                let m = random_rows(&mut rng, rows, cols, fill);
                let bias: Vec<i32> = (0..rows)
                    .map(|_| fill.unwrap_or_else(|| random_raw(&mut rng)))
                    .collect();
                let bias_fx: Vec<Fx> = bias.iter().map(|&v| Fx::from_raw(v)).collect();
                let got = bias_add(&to_matrix(&m), &bias_fx).expect("matching rows");
                tally.compare(case, &raw_rows(&got), &reference::bias_add(&m, &bias));
            }
            ConformanceOp::Activation => {
                let v = random_rows(&mut rng, 1, cols * rows, fill).remove(0);
                let fx: Vec<Fx> = v.iter().map(|&x| Fx::from_raw(x)).collect();
                for kind in [Activation::Sigmoid, Activation::Relu] {
                    let got: Vec<i32> = activation_forward(&fx, kind).iter().map(|x| x.raw()).collect();
                    let expected: Vec<i32> = v
                        .iter()
                        .map(|&x| match kind {
                            Activation::Sigmoid => reference::sigmoid(table, x),
                            Activation::Relu => reference::relu(x),
                        })
                        .collect();
                    tally.compare(case, &[got], &[expected]);
                }
            }
        }
    }
    ConformanceReport {
        op,
        seed,
        cases_run: cases,
        max_raw_diff: tally.max_raw_diff,
        failures: tally.failures,
    }
}
