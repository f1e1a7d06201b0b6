//! Exhaustive grid enumeration in lexicographic pixel order.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use super::{within, AdversarialProblem, GridSpec, Resource};
use crate::network::Scratch;
use crate::scalar::Scalar;

/// A limit was reached before the phase could finish.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exhausted(pub Resource);

/// Number of grid points, saturating.
pub fn grid_size<S>(levels: &[Vec<S>]) -> u128 {
    levels.iter().fold(1u128, |acc, l| acc.saturating_mul(l.len() as u128))
}

/// Candidate values for every pixel, ascending and deduplicated.
pub fn grid_levels<S: Scalar>(reference: &[S], grid: GridSpec) -> Vec<Vec<S>> {
    let steps = (grid.levels.max(2) - 1) as f64;
    reference
        .iter()
        .map(|&p| {
            let centre = p.to_f64();
            let mut out: Vec<S> = Vec::with_capacity(grid.levels);
            for j in 0..grid.levels {
                let v = centre - grid.radius + 2.0 * grid.radius * j as f64 / steps;
                let s = S::from_f64(v.clamp(0.0, 1.0));
                if out.last() != Some(&s) {
                    out.push(s);
                }
            }
            out
        })
        .collect()
}

const DEADLINE_POLL: usize = 1024;

pub(crate) struct GridSearch<'p, S> {
    problem: &'p AdversarialProblem<S>,
    levels: Vec<Vec<S>>,
    /// Squared offset of every level from the reference pixel.
    offsets: Vec<Vec<f64>>,
    /// Smallest / largest achievable squared distance of pixels `i..`.
    min_rest: Vec<f64>,
    max_rest: Vec<f64>,
}

struct Shared {
    deadline: Option<Instant>,
    aborted: AtomicBool,
    visited: AtomicUsize,
}

impl Shared {
    fn tick(&self) -> Result<(), Exhausted> {
        if self.aborted.load(Ordering::Relaxed) {
            return Err(Exhausted(Resource::Time));
        }
        let n = self.visited.fetch_add(1, Ordering::Relaxed);
        if n % DEADLINE_POLL == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.aborted.store(true, Ordering::Relaxed);
                    return Err(Exhausted(Resource::Time));
                }
            }
        }
        Ok(())
    }
}

impl<'p, S: Scalar> GridSearch<'p, S> {
    pub fn new(problem: &'p AdversarialProblem<S>) -> GridSearch<'p, S> {
        let reference = problem.reference.pixels();
        let levels = grid_levels(reference, problem.grid);
        let offsets: Vec<Vec<f64>> = levels
            .iter()
            .zip(reference)
            .map(|(ls, &p)| {
                ls.iter()
                    .map(|&l| {
                        let d = l.to_f64() - p.to_f64();
                        d * d
                    })
                    .collect()
            })
            .collect();
        let n = levels.len();
        let mut min_rest = vec![0.0; n + 1];
        let mut max_rest = vec![0.0; n + 1];
        for i in (0..n).rev() {
            min_rest[i] = min_rest[i + 1] + offsets[i].iter().cloned().fold(f64::INFINITY, f64::min);
            max_rest[i] = max_rest[i + 1] + offsets[i].iter().cloned().fold(0.0, f64::max);
        }
        GridSearch {
            problem,
            levels,
            offsets,
            min_rest,
            max_rest,
        }
    }

    /// Working-set estimate in bytes for the memory limit.
    pub fn memory_estimate(&self) -> u64 {
        let per_level = std::mem::size_of::<S>() + std::mem::size_of::<f64>();
        let table: usize = self.levels.iter().map(|l| l.len() * per_level).sum();
        let widest = self.problem.net.sizes().iter().copied().max().unwrap_or(0);
        let per_worker = (self.levels.len() + 2 * widest) * std::mem::size_of::<S>();
        (table + per_worker * rayon::current_num_threads()) as u64
    }

    /// First grid point in lexicographic order with
    /// `floor < delta <= radius` that satisfies the literal. Points inside
    /// `floor` are skipped; callers pass the previous bound when every point
    /// there is already known not to be a hit.
    pub fn first_hit(
        &self,
        radius: f64,
        floor: Option<f64>,
        deadline: Option<Instant>,
    ) -> Result<Option<Vec<S>>, Exhausted> {
        let shared = Shared {
            deadline,
            aborted: AtomicBool::new(false),
            visited: AtomicUsize::new(0),
        };
        let n = self.levels.len();
        let found = (0..self.levels[0].len()).into_par_iter().find_map_first(|j| {
            let mut pixels = self.problem.reference.pixels().to_vec();
            let mut scratch = Scratch::new();
            pixels[0] = self.levels[0][j];
            let partial = self.offsets[0][j];
            let walk = Walk {
                search: self,
                radius,
                floor,
                shared: &shared,
            };
            match walk.descend(1, partial, &mut pixels, &mut scratch) {
                Ok(true) => Some(Ok(pixels)),
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            }
        });
        debug_assert!(found.as_ref().map_or(true, |r| r.as_ref().map_or(true, |p| p.len() == n)));
        found.transpose()
    }
}

struct Walk<'a, 'p, S> {
    search: &'a GridSearch<'p, S>,
    radius: f64,
    floor: Option<f64>,
    shared: &'a Shared,
}

impl<S: Scalar> Walk<'_, '_, S> {
    // Pruning uses a small relative slack so that rounding in the bound
    // arithmetic never drops a point; membership is decided exactly at the
    // leaves.
    fn outside(&self, depth: usize, partial: f64) -> bool {
        let lowest = partial + self.search.min_rest[depth];
        lowest > self.radius * self.radius * (1.0 + 1e-12)
    }

    fn already_covered(&self, depth: usize, partial: f64) -> bool {
        match self.floor {
            Some(f) => partial + self.search.max_rest[depth] < f * f * (1.0 - 1e-12),
            None => false,
        }
    }

    fn descend(&self, depth: usize, partial: f64, pixels: &mut [S], scratch: &mut Scratch<S>) -> Result<bool, Exhausted> {
        if self.outside(depth, partial) || self.already_covered(depth, partial) {
            return Ok(false);
        }
        if depth == pixels.len() {
            return self.leaf(partial, pixels, scratch);
        }
        for (j, &level) in self.search.levels[depth].iter().enumerate() {
            pixels[depth] = level;
            if self.descend(depth + 1, partial + self.search.offsets[depth][j], pixels, scratch)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn leaf(&self, squared: f64, pixels: &[S], scratch: &mut Scratch<S>) -> Result<bool, Exhausted> {
        if !within(squared, self.radius) || self.floor.is_some_and(|f| within(squared, f)) {
            return Ok(false);
        }
        self.shared.tick()?;
        let problem = self.search.problem;
        problem
            .net
            .eval_into(pixels, scratch)
            .expect("grid points match the network input");
        Ok(problem.literal(scratch.potentials(), scratch.outputs()))
    }
}
