//! Plain-text checkpoint format for tensor trains.
//!
//! ```text
//! TT L=3 bonds=1,2,2,1
//! core 0 1 2 2
//! <left*phys rows of `right` values>
//! core 1 2 2 2
//! ...
//! ```
//!
//! MPO core headers carry the two physical dimensions separately
//! (`core k left 2 2 right`). Values use 17 significant digits.

use std::fmt::Write as _;

use super::{Mpo, Mps, Tensor3};
use crate::error::{Error, Result};

/// Either kind of train, as read back from text.
#[derive(Debug, Clone, PartialEq)]
pub enum TtText {
    Mps(Mps),
    Mpo(Mpo),
}

fn header(bonds: &[usize]) -> String {
    let list: Vec<String> = bonds.iter().map(usize::to_string).collect();
    format!("TT L={} bonds={}\n", bonds.len() - 1, list.join(","))
}

fn write_core(out: &mut String, k: usize, core: &Tensor3, phys_label: &str) {
    let _ = writeln!(
        out,
        "core {k} {} {phys_label} {}",
        core.left(),
        core.right()
    );
    for row in core.data().chunks(core.right()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn write_mps(mps: &Mps) -> String {
    let mut out = header(&mps.bond_dims());
    for (k, core) in mps.cores().iter().enumerate() {
        write_core(&mut out, k, core, "2");
    }
    out
}

pub fn write_mpo(mpo: &Mpo) -> String {
    let mut out = header(&mpo.bond_dims());
    for (k, core) in mpo.cores().iter().enumerate() {
        write_core(&mut out, k, core, "2 2");
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {}: {msg}", line + 1))
}

pub fn read_tt(text: &str) -> Result<TtText> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (n0, first) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty input".into()))?;
    let mut fields = first.split_whitespace();
    if fields.next() != Some("TT") {
        return Err(parse_err(n0, "expected `TT` header"));
    }
    let sites: usize = fields
        .next()
        .and_then(|f| f.strip_prefix("L="))
        .ok_or_else(|| parse_err(n0, "missing L="))?
        .parse()
        .map_err(|e| parse_err(n0, e))?;
    let bonds: Vec<usize> = fields
        .next()
        .and_then(|f| f.strip_prefix("bonds="))
        .ok_or_else(|| parse_err(n0, "missing bonds="))?
        .split(',')
        .map(|b| b.parse().map_err(|e| parse_err(n0, e)))
        .collect::<Result<_>>()?;
    if bonds.len() != sites + 1 {
        return Err(parse_err(
            n0,
            format!("{} bonds for L={sites}", bonds.len()),
        ));
    }

    let mut cores = Vec::with_capacity(sites);
    let mut phys_dims = None;
    for k in 0..sites {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing core {k}")))?;
        let dims: Vec<usize> = line
            .split_whitespace()
            .skip(1)
            .map(|d| d.parse().map_err(|e| parse_err(n, e)))
            .collect::<Result<_>>()?;
        if !line.starts_with("core") || dims.first() != Some(&k) {
            return Err(parse_err(n, format!("expected header for core {k}")));
        }
        let (left, phys, right, is_mpo) = match dims[1..] {
            [l, 2, r] => (l, 2, r, false),
            [l, 2, 2, r] => (l, 4, r, true),
            _ => return Err(parse_err(n, "unsupported core shape")),
        };
        if *phys_dims.get_or_insert(is_mpo) != is_mpo {
            return Err(parse_err(n, "mixed MPS and MPO cores"));
        }
        if left != bonds[k] || right != bonds[k + 1] {
            return Err(parse_err(n, "core shape disagrees with header bonds"));
        }
        let mut data = Vec::with_capacity(left * phys * right);
        for _ in 0..left * phys {
            let (n, row) = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("truncated core {k}")))?;
            let before = data.len();
            for v in row.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|e| parse_err(n, e))?);
            }
            if data.len() - before != right {
                return Err(parse_err(n, format!("expected {right} values")));
            }
        }
        cores.push(Tensor3::from_vec(left, phys, right, data)?);
    }
    match phys_dims {
        Some(true) => Ok(TtText::Mpo(Mpo::from_cores(cores)?)),
        _ => Ok(TtText::Mps(Mps::from_cores(cores)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::{derivative_mpos, encode_values, TruncationPolicy};
    use proptest::prelude::*;

    #[test]
    fn header_format() {
        let m = encode_values(
            &[1., 2., 3., 4., 5., 6., 7., 8.],
            &TruncationPolicy::default(),
        )
        .unwrap()
        .0;
        let text = write_mps(&m);
        assert!(text.starts_with("TT L=3 bonds=1,2,2,1\ncore 0 1 2 2\n"));
    }

    #[test]
    fn mpo_roundtrip() {
        let (d1, _) = derivative_mpos(4, 1.0 / 16.0).unwrap();
        let text = write_mpo(&d1);
        assert_eq!(read_tt(&text).unwrap(), TtText::Mpo(d1));
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_tt("").is_err());
        assert!(read_tt("TT L=1 bonds=1,1\ncore 0 1 2 1\n1.0\n").is_err());
        assert!(read_tt("TT L=1 bonds=1,2\ncore 0 1 2 1\n1.0\n2.0\n").is_err());
        assert!(read_tt("XX L=1 bonds=1,1\n").is_err());
    }

    proptest! {
        #[test]
        fn mps_text_roundtrip(values in prop::collection::vec(-1e3f64..1e3, 32)) {
            let m = encode_values(&values, &TruncationPolicy::default()).unwrap().0;
            let back = read_tt(&write_mps(&m)).unwrap();
            prop_assert_eq!(back, TtText::Mps(m));
        }
    }
}
