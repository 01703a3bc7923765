//! Flat text serialization of a lattice with its capacities.
//!
//! ```text
//! lattice M=4 N=4 family=v seed=0
//! layer,column,direction,capacity
//! 1,0,R,1
//! ...
//! 4,3,-,10
//! ```
//!
//! Layers are numbered from 1 at the top; bottom-layer sites carry `-` as
//! their direction.

use std::fmt::Write as _;
use std::path::Path;

use super::{compute_capacities, CapacityField, Direction, Family, Lattice, LatticeSpec};
use crate::error::{Error, Result};

const COLUMNS: &str = "layer,column,direction,capacity";

pub fn write_lattice_text(lattice: &Lattice, caps: &CapacityField) -> String {
    let spec = lattice.spec();
    let mut out = format!("lattice M={} N={} family={}", spec.width, spec.depth, spec.family.name());
    match spec.family {
        Family::Base { p } => write!(out, " p={p}").unwrap(),
        Family::PerturbedV { q } => write!(out, " q={q}").unwrap(),
        Family::V => {}
    }
    writeln!(out, " seed={}", spec.seed).unwrap();
    out.push_str(COLUMNS);
    out.push('\n');
    for site in 0..lattice.len() {
        let dir = lattice.direction(site).map_or('-', Direction::as_char);
        writeln!(
            out,
            "{},{},{},{}",
            lattice.layer_of(site) + 1,
            lattice.col_of(site),
            dir,
            caps.get(site)
        )
        .unwrap();
    }
    out
}

/// Parses the text form back. Capacities in the file must agree with the
/// ones implied by the connections.
pub fn parse_lattice_text(text: &str, origin: &Path) -> Result<(Lattice, CapacityField)> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (ln, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let spec = parse_header(header).map_err(|r| err(ln, r))?;

    match lines.next() {
        Some((_, l)) if l == COLUMNS => {}
        Some((ln, l)) => return Err(err(ln, format!("expected `{COLUMNS}`, found `{l}`"))),
        None => return Err(err(ln + 1, "missing column header".into())),
    }

    let n = spec.sites();
    let mut dirs = Vec::with_capacity(spec.width * (spec.depth - 1));
    let mut stated = Vec::with_capacity(n);
    let mut last_line = ln + 1;
    for (ln, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        last_line = ln;
        let idx = stated.len();
        if idx == n {
            return Err(err(ln, "more records than sites".into()));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(ln, format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| err(ln, format!("bad {what} `{s}`")))
        };
        let (layer, col) = (num(fields[0], "layer")?, num(fields[1], "column")?);
        let (want_layer, want_col) = (idx / spec.width + 1, idx % spec.width);
        if layer as usize != want_layer || col as usize != want_col {
            return Err(err(
                ln,
                format!("expected site {want_layer},{want_col}, found {layer},{col}"),
            ));
        }
        let bottom = want_layer == spec.depth;
        match (fields[2], bottom) {
            ("L", false) => dirs.push(Direction::Left),
            ("R", false) => dirs.push(Direction::Right),
            ("-", true) => {}
            (d, _) => return Err(err(ln, format!("bad direction `{d}`"))),
        }
        stated.push(num(fields[3], "capacity")?);
    }
    if stated.len() != n {
        return Err(err(
            last_line,
            format!("truncated: {} of {n} site records", stated.len()),
        ));
    }

    let lattice = Lattice::from_directions(spec, dirs).map_err(|e| err(1, e.to_string()))?;
    let caps = compute_capacities(&lattice);
    if let Some(site) = (0..n).find(|&s| caps.get(s) != stated[s]) {
        return Err(err(
            site + 3,
            format!("capacity {} disagrees with connections ({})", stated[site], caps.get(site)),
        ));
    }
    Ok((lattice, caps))
}

fn parse_header(line: &str) -> std::result::Result<LatticeSpec, String> {
    let mut words = line.split_whitespace();
    if words.next() != Some("lattice") {
        return Err("header must start with `lattice`".into());
    }
    let (mut m, mut n, mut family, mut p, mut q, mut seed) = (None, None, None, None, None, None);
    for word in words {
        let (key, value) = word
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, found `{word}`"))?;
        let bad = || format!("bad value for {key}: `{value}`");
        match key {
            "M" => m = Some(value.parse::<usize>().map_err(|_| bad())?),
            "N" => n = Some(value.parse::<usize>().map_err(|_| bad())?),
            "family" => family = Some(value.to_string()),
            "p" => p = Some(value.parse::<f64>().map_err(|_| bad())?),
            "q" => q = Some(value.parse::<f64>().map_err(|_| bad())?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad())?),
            _ => return Err(format!("unknown header key `{key}`")),
        }
    }
    let family = match family.as_deref() {
        Some("base") => Family::Base {
            p: p.ok_or("base family needs p")?,
        },
        Some("v") => Family::V,
        Some("perturbed-v") => Family::PerturbedV {
            q: q.ok_or("perturbed-v family needs q")?,
        },
        Some(other) => return Err(format!("unknown family `{other}`")),
        None => return Err("missing family".into()),
    };
    let spec = LatticeSpec::new(
        m.ok_or("missing M")?,
        n.ok_or("missing N")?,
        family,
        seed.ok_or("missing seed")?,
    );
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}
