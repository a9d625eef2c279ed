//! Plain-text serialization of [`TabularBMDP`].
//!
//! ```text
//! # comment lines start with '#'
//! bmdp 1
//! dims <n_states> <n_actions> <n_obs>
//! discount <gamma>
//! init
//! <n_states floats>
//! transition
//! <n_states * n_actions rows of n_states floats, row (s, a) at index s * n_actions + a>
//! emission
//! <n_states rows of n_obs floats>
//! ```
//!
//! Floats are written in shortest round-trip form, so write-then-read is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::TabularBMDP;
use crate::error::{Error, Result};

fn row(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
    out.push('\n');
}

/// Serializes a BMDP to the text format.
pub fn write_bmdp(bmdp: &TabularBMDP) -> String {
    let (s, a, o) = (bmdp.n_states(), bmdp.n_actions(), bmdp.n_obs());
    let mut out = String::new();
    out.push_str("# advsurprise tabular BMDP\nbmdp 1\n");
    writeln!(out, "dims {s} {a} {o}").unwrap();
    writeln!(out, "discount {}", bmdp.discount()).unwrap();
    out.push_str("init\n");
    row(&mut out, bmdp.init_dist());
    out.push_str("transition\n");
    for chunk in bmdp.raw_transition().chunks(s) {
        row(&mut out, chunk);
    }
    out.push_str("emission\n");
    for chunk in bmdp.raw_emission().chunks(o) {
        row(&mut out, chunk);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a str,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok((i + 1, line));
            }
        }
        Err(Error::parse(self.origin, "unexpected end of input"))
    }

    fn keyword(&mut self, kw: &str) -> Result<Vec<&'a str>> {
        let (n, line) = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(kw) {
            return Err(Error::parse(format!("{}:{n}", self.origin), format!("expected '{kw}'")));
        }
        Ok(parts.collect())
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next()?;
        let loc = || format!("{}:{n}", self.origin);
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::parse(loc(), format!("{t}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(Error::parse(loc(), format!("expected {count} values, found {}", values.len())));
        }
        Ok(values)
    }
}

fn parse_usize(origin: &str, tok: Option<&&str>) -> Result<usize> {
    tok.ok_or_else(|| Error::parse(origin, "missing dimension"))?
        .parse()
        .map_err(|e| Error::parse(origin, format!("{e}")))
}

/// Parses the text format. `origin` names the source in error messages.
pub fn read_bmdp(text: &str, origin: &str) -> Result<TabularBMDP> {
    let mut lines = Lines { inner: text.lines().enumerate(), origin };
    let version = lines.keyword("bmdp")?;
    if version.first() != Some(&"1") {
        return Err(Error::parse(origin, "unsupported format version"));
    }
    let dims = lines.keyword("dims")?;
    let (s, a, o) = (parse_usize(origin, dims.first())?, parse_usize(origin, dims.get(1))?, parse_usize(origin, dims.get(2))?);
    let discount = lines.keyword("discount")?;
    let discount: f64 = discount
        .first()
        .ok_or_else(|| Error::parse(origin, "missing discount"))?
        .parse()
        .map_err(|e| Error::parse(origin, format!("{e}")))?;
    lines.keyword("init")?;
    let init = lines.floats(s)?;
    lines.keyword("transition")?;
    let mut transition = Vec::with_capacity(s * a * s);
    for _ in 0..s * a {
        transition.extend(lines.floats(s)?);
    }
    lines.keyword("emission")?;
    let mut emission = Vec::with_capacity(s * o);
    for _ in 0..s {
        emission.extend(lines.floats(o)?);
    }
    TabularBMDP::new(s, a, o, transition, emission, init, discount)
}

/// Reads a BMDP from a file.
pub fn load_bmdp(path: &Path) -> Result<TabularBMDP> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_bmdp(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmdp::fixtures;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn fixture_text_is_stable() {
        let text = write_bmdp(&fixtures::dark_room_far_counterexample());
        assert!(text.starts_with("# advsurprise tabular BMDP\nbmdp 1\ndims 4 3 7\ndiscount 0.9\ninit\n1 0 0 0\n"));
    }

    #[test]
    fn reports_line_numbers() {
        let err = read_bmdp("bmdp 1\ndims 1 1 1\ndiscount 0.5\ninit\n1 2\n", "x").unwrap_err();
        assert!(err.to_string().contains("x:5"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b = fixtures::random_bmdp(&mut rng, 8, 4, 16);
            let back = read_bmdp(&write_bmdp(&b), "roundtrip").unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
