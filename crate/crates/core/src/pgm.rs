//! ASCII greymap rendering (`P2`, maxval 255).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::ImageVec;
use crate::scalar::Scalar;

pub const MAXVAL: u32 = 255;

/// One image row per line; grey level `round(value * 255)`.
pub fn render_pgm<S: Scalar>(image: &ImageVec<S>) -> String {
    let mut out = format!("P2\n{} {}\n{MAXVAL}\n", image.width(), image.height());
    for row in image.pixels().chunks(image.width().max(1)) {
        let levels: Vec<String> = row
            .iter()
            .map(|p| ((p.to_f64() * MAXVAL as f64).round() as u32).to_string())
            .collect();
        let _ = writeln!(out, "{}", levels.join(" "));
    }
    out
}

/// Reads a `P2` greymap back into `[0, 1]` values. `#` comments are
/// skipped.
pub fn parse_pgm<S: Scalar>(text: &str) -> Result<ImageVec<S>> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let bad = |m: String| Error::Usage(format!("malformed PGM: {m}"));
    if tokens.next() != Some("P2") {
        return Err(bad("missing P2 magic".into()));
    }
    let mut number = |what: &str| -> Result<u32> {
        let t = tokens.next().ok_or_else(|| bad(format!("missing {what}")))?;
        t.parse().map_err(|_| bad(format!("invalid {what} `{t}`")))
    };
    let width = number("width")? as usize;
    let height = number("height")? as usize;
    let maxval = number("maxval")?;
    if maxval == 0 {
        return Err(bad("maxval is zero".into()));
    }
    let mut values = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = number("pixel")?;
        if v > maxval {
            return Err(bad(format!("pixel {v} exceeds maxval {maxval}")));
        }
        values.push(v as f64 / maxval as f64);
    }
    if tokens.next().is_some() {
        return Err(bad("trailing data".into()));
    }
    ImageVec::from_f64(width, height, &values)
}
