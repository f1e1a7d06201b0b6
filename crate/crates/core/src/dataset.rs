//! The 5x5 vowel benchmark: canonical bitmaps, a seeded noisy dataset, and
//! the pairing policy used for dataset-wide coverage.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::{header, image_block, serialize_image, Lines};
use crate::network::ImageVec;
use crate::scalar::Scalar;

pub const SIDE: usize = 5;
pub const PIXELS: usize = SIDE * SIDE;
pub const NOISY_COUNT: usize = 100;
pub const NON_VOCALIC_COUNT: usize = 100;
/// Minimum Hamming distance of a non-vocalic image from every vowel.
pub const MIN_NON_VOCALIC_HAMMING: usize = 4;

/// Canonical bitmaps, `#` = 1. A and O differ in exactly six pixels.
pub const VOWELS: [(char, [&str; SIDE]); 5] = [
    ('A', [".###.", "#...#", "#####", "#...#", "#...#"]),
    ('E', ["#####", "#....", "####.", "#....", "#####"]),
    ('I', [".###.", "..#..", "..#..", "..#..", ".###."]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#####"]),
    ('U', ["#...#", "#...#", "#...#", "#...#", ".###."]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Index into [`VOWELS`].
    Vowel(usize),
    NonVocalic,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Vowel(v) => write!(f, "{}", VOWELS[*v].0),
            Label::NonVocalic => f.write_str("none"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        if s == "none" {
            return Ok(Label::NonVocalic);
        }
        VOWELS
            .iter()
            .position(|(c, _)| s.len() == 1 && s.starts_with(*c))
            .map(Label::Vowel)
            .ok_or_else(|| Error::Usage(format!("unknown label `{s}`")))
    }
}

pub fn vowel_bits(v: usize) -> [bool; PIXELS] {
    let mut bits = [false; PIXELS];
    for (r, row) in VOWELS[v].1.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            bits[r * SIDE + c] = ch == '#';
        }
    }
    bits
}

pub fn bits_image<S: Scalar>(bits: &[bool; PIXELS]) -> ImageVec<S> {
    let pixels = bits.iter().map(|&b| if b { S::one() } else { S::zero() }).collect();
    ImageVec::new(SIDE, SIDE, pixels).expect("5x5 binary image")
}

pub fn vowel_image<S: Scalar>(v: usize) -> ImageVec<S> {
    bits_image(&vowel_bits(v))
}

pub fn hamming(a: &[bool; PIXELS], b: &[bool; PIXELS]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    pub seed: u64,
    pub items: Vec<(ImageVec<S>, Label)>,
}

/// 100 noisy vowels (vowel `i % 5`, 1 to 3 distinct pixels flipped) then
/// 100 random binary images far from every vowel. Same seed, same dataset.
pub fn generate_dataset<S: Scalar>(seed: u64) -> Dataset<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vowels: Vec<[bool; PIXELS]> = (0..VOWELS.len()).map(vowel_bits).collect();
    let mut items = Vec::with_capacity(NOISY_COUNT + NON_VOCALIC_COUNT);
    for i in 0..NOISY_COUNT {
        let v = i % VOWELS.len();
        let mut bits = vowels[v];
        let flips = rng.gen_range(1..=3);
        for p in sample(&mut rng, PIXELS, flips) {
            bits[p] = !bits[p];
        }
        items.push((bits_image(&bits), Label::Vowel(v)));
    }
    while items.len() < NOISY_COUNT + NON_VOCALIC_COUNT {
        let mut bits = [false; PIXELS];
        for b in &mut bits {
            *b = rng.gen_bool(0.5);
        }
        if vowels.iter().all(|v| hamming(v, &bits) >= MIN_NON_VOCALIC_HAMMING) {
            items.push((bits_image(&bits), Label::NonVocalic));
        }
    }
    Dataset { seed, items }
}

/// ```text
/// DATASET 1
/// seed 42
/// count 200
/// item 0 A
/// IMG 5 5
/// ...
/// ```
pub fn serialize_dataset<S: Scalar>(dataset: &Dataset<S>) -> String {
    let mut out = String::from("DATASET 1\n");
    let _ = writeln!(out, "seed {}", dataset.seed);
    let _ = writeln!(out, "count {}", dataset.items.len());
    for (i, (image, label)) in dataset.items.iter().enumerate() {
        let _ = writeln!(out, "item {i} {label}");
        out.push_str(&serialize_image(image));
    }
    out
}

pub fn parse_dataset<S: Scalar>(text: &str) -> Result<Dataset<S>> {
    let mut lines = Lines::new(text);
    header(&mut lines, "DATASET")?;
    let seed_arg = lines.keyword("seed", 1)?;
    let seed = seed_arg[0]
        .text
        .parse()
        .map_err(|_| seed_arg[0].error(format!("invalid seed `{}`", seed_arg[0].text)))?;
    let count = lines.keyword("count", 1)?[0].usize()?;
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let args = lines.keyword("item", 2)?;
        if args[0].usize()? != i {
            return Err(args[0].error(format!("expected item {i}")));
        }
        let label = args[1].text.parse().map_err(|e: Error| args[1].error(e.to_string()))?;
        items.push((image_block(&mut lines)?, label));
    }
    lines.expect_end()?;
    Ok(Dataset { seed, items })
}

/// Which image pairs a dataset-wide coverage run compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Each noisy vowel against its canonical vowel, plus consecutive items
    /// sharing a label.
    #[default]
    Default,
    /// Every unordered pair of dataset items.
    AllPairs,
}

pub fn dataset_pairs<S: Scalar>(dataset: &Dataset<S>, pairing: Pairing) -> Vec<(ImageVec<S>, ImageVec<S>)> {
    let items = &dataset.items;
    match pairing {
        Pairing::AllPairs => (0..items.len())
            .flat_map(|i| (i + 1..items.len()).map(move |j| (i, j)))
            .map(|(i, j)| (items[i].0.clone(), items[j].0.clone()))
            .collect(),
        Pairing::Default => {
            let mut pairs = Vec::new();
            for (image, label) in items {
                if let Label::Vowel(v) = label {
                    pairs.push((vowel_image(*v), image.clone()));
                }
            }
            let mut last: Vec<(Label, usize)> = Vec::new();
            for (i, (_, label)) in items.iter().enumerate() {
                match last.iter_mut().find(|(l, _)| l == label) {
                    Some(entry) => {
                        pairs.push((items[entry.1].0.clone(), items[i].0.clone()));
                        entry.1 = i;
                    }
                    None => last.push((*label, i)),
                }
            }
            pairs
        }
    }
}
