//! Experiment configuration, dispatch and result files.
//!
//! A configuration is a flat `key = value` document, one experiment per file.
//! A result file repeats the configuration, then holds a wall-clock block, a
//! key-value summary and comma-separated tables:
//!
//! ```text
//! [config]
//! kind = avalanche
//! ...
//! [meta]
//! started_unix = 1760000000
//! elapsed_ms = 812
//! [summary]
//! successes = 996
//! [table records rows=1000]
//! index,sub_seed,...
//! ...
//! [end]
//! ```
//!
//! Only the `[meta]` block depends on when the run happened.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::avalanche::{avalanche_ensemble, successful_times, AvalancheStatus, EnsembleOptions};
use crate::error::{Error, Result};
use crate::lattice::{Family, LatticeSpec};
use crate::percolation::{
    density_sweep, jump_scaling, v_family, Connectivity, DepositRule, MotionRule, PercolationOptions,
};
use crate::stats::{fit_power_law, histogram, Binning};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "HIERLAT_WORKERS";

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Avalanche,
    PercolationSweep,
    JumpScaling,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Avalanche => "avalanche",
            ExperimentKind::PercolationSweep => "percolation-sweep",
            ExperimentKind::JumpScaling => "jump-scaling",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "avalanche" => Ok(Self::Avalanche),
            "percolation-sweep" => Ok(Self::PercolationSweep),
            "jump-scaling" => Ok(Self::JumpScaling),
            _ => Err(format!("unknown experiment kind `{s}`")),
        }
    }
}

fn motion_name(m: MotionRule) -> &'static str {
    match m {
        MotionRule::PassThrough => "pass-through",
        MotionRule::GreedyDescent => "greedy-descent",
    }
}

fn deposit_name(d: DepositRule) -> &'static str {
    match d {
        DepositRule::FixedSite => "fixed",
        DepositRule::Uniform => "uniform",
    }
}

fn connectivity_name(c: Connectivity) -> &'static str {
    match c {
        Connectivity::Links => "links",
        Connectivity::Grid => "grid",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub width: usize,
    pub depth: usize,
    pub family: Family,
    /// Test weight as a fraction of the trunk capacity.
    pub fraction: f64,
    pub mu_grid: Vec<f64>,
    pub sizes: Vec<usize>,
    pub q_list: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub percolation: PercolationOptions,
    pub avalanche: EnsembleOptions,
    pub log_base: f64,
    /// Power-law fit window attached to avalanche results.
    pub fit_window: Option<(f64, f64)>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            width: 100,
            depth: 100,
            family: Family::V,
            fraction: 0.05,
            mu_grid: Vec::new(),
            sizes: Vec::new(),
            q_list: Vec::new(),
            realizations: 100,
            seed: 0,
            output: None,
            percolation: PercolationOptions::default(),
            avalanche: EnsembleOptions::default(),
            log_base: Binning::DEFAULT_LOG_BASE,
            fit_window: None,
        }
    }

    pub fn lattice_spec(&self) -> LatticeSpec {
        LatticeSpec::new(self.width, self.depth, self.family, 0)
    }

    /// Checks every precondition of the experiment before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        if !(self.log_base > 1.0 && self.log_base.is_finite()) {
            return Err(Error::config("log_base", format!("{} must exceed 1", self.log_base)));
        }
        if let Some((lo, hi)) = self.fit_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::config("fit_window", format!("[{lo}, {hi}] is not a positive range")));
            }
        }
        match self.kind {
            ExperimentKind::Avalanche => {
                self.lattice_spec().validate()?;
                if !(self.fraction > 0.0 && self.fraction.is_finite()) {
                    return Err(Error::config("fraction", format!("{} must be positive", self.fraction)));
                }
                if self.avalanche.max_cycles == Some(0) {
                    return Err(Error::config("max_cycles", "must be at least 1"));
                }
            }
            ExperimentKind::PercolationSweep => {
                self.lattice_spec().validate()?;
                crate::percolation::validate_grid(&self.lattice_spec(), &self.mu_grid)?;
            }
            ExperimentKind::JumpScaling => {
                if self.sizes.len() < 3 {
                    return Err(Error::config(
                        "sizes",
                        format!("need at least 3 sizes, got {}", self.sizes.len()),
                    ));
                }
                if self.q_list.is_empty() {
                    return Err(Error::config("q_list", "need at least one q"));
                }
                for &q in &self.q_list {
                    for &side in &self.sizes {
                        LatticeSpec::square(side, v_family(q), 0).validate()?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Key-value text; parsing it back gives the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.settings() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    fn settings(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = vec![("kind", self.kind.name().to_string())];
        match self.kind {
            ExperimentKind::JumpScaling => {
                let sizes: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
                s.push(("sizes", sizes.join(",")));
                s.push(("q_list", list(&self.q_list)));
            }
            _ => {
                s.push(("width", self.width.to_string()));
                s.push(("depth", self.depth.to_string()));
                s.push(("family", self.family.name().to_string()));
                match self.family {
                    Family::Base { p } => s.push(("p", p.to_string())),
                    Family::PerturbedV { q } => s.push(("q", q.to_string())),
                    Family::V => {}
                }
            }
        }
        match self.kind {
            ExperimentKind::Avalanche => {
                s.push(("fraction", self.fraction.to_string()));
                s.push(("strict_failure", self.avalanche.strict_failure.to_string()));
                if let Some(m) = self.avalanche.max_cycles {
                    s.push(("max_cycles", m.to_string()));
                }
                s.push(("log_base", self.log_base.to_string()));
                if let Some((lo, hi)) = self.fit_window {
                    s.push(("fit_window", format!("{lo},{hi}")));
                }
            }
            ExperimentKind::PercolationSweep | ExperimentKind::JumpScaling => {
                if self.kind == ExperimentKind::PercolationSweep {
                    s.push(("mu_grid", list(&self.mu_grid)));
                }
                s.push(("motion", motion_name(self.percolation.motion).into()));
                s.push(("deposit", deposit_name(self.percolation.deposit).into()));
                s.push(("connectivity", connectivity_name(self.percolation.connectivity).into()));
            }
        }
        s.push(("realizations", self.realizations.to_string()));
        s.push(("seed", self.seed.to_string()));
        if let Some(p) = &self.output {
            s.push(("output", p.display().to_string()));
        }
        s
    }

    /// Parses a configuration document. Blank lines and `#` comments are
    /// skipped; unknown or repeated keys are rejected.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        Self::from_settings(&parse_settings(text, origin)?, origin)
    }

    /// Builds a configuration from settings; later settings override earlier
    /// ones, so flags can be appended after file values.
    pub fn from_settings(settings: &[Setting], origin: &Path) -> Result<Self> {
        let mut map: BTreeMap<&'static str, &Setting> = BTreeMap::new();
        for s in settings {
            let key = known_key(&s.key).ok_or_else(|| match s.line {
                Some(line) => Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    reason: format!("unknown key `{}`", s.key),
                },
                None => Error::config("config", format!("unknown key `{}`", s.key)),
            })?;
            map.insert(key, s);
        }
        let fail = |key: &'static str, reason: String| match map.get(key).and_then(|s| s.line) {
            Some(line) => Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: format!("{key}: {reason}"),
            },
            None => Error::config(key, reason),
        };
        fn get<T: FromStr>(
            map: &BTreeMap<&'static str, &Setting>,
            key: &'static str,
            fail: &dyn Fn(&'static str, String) -> Error,
        ) -> Result<Option<T>> {
            match map.get(key) {
                None => Ok(None),
                Some(s) => s
                    .value
                    .parse()
                    .map(Some)
                    .map_err(|_| fail(key, format!("cannot parse `{}`", s.value))),
            }
        }
        fn list<T: FromStr>(
            map: &BTreeMap<&'static str, &Setting>,
            key: &'static str,
            fail: &dyn Fn(&'static str, String) -> Error,
        ) -> Result<Option<Vec<T>>> {
            match map.get(key) {
                None => Ok(None),
                Some(s) if s.value.trim().is_empty() => Ok(Some(Vec::new())),
                Some(s) => s
                    .value
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse()
                            .map_err(|_| fail(key, format!("cannot parse `{}`", v.trim())))
                    })
                    .collect::<Result<Vec<T>>>()
                    .map(Some),
            }
        }

        let kind: ExperimentKind = match map.get("kind") {
            None => return Err(Error::config("kind", "missing experiment kind")),
            Some(s) => s.value.parse().map_err(|e| fail("kind", e))?,
        };
        let mut c = Self::new(kind);
        if let Some(size) = get::<usize>(&map, "size", &fail)? {
            c.width = size;
            c.depth = size;
        }
        c.width = get(&map, "width", &fail)?.unwrap_or(c.width);
        c.depth = get(&map, "depth", &fail)?.unwrap_or(c.depth);
        let p: Option<f64> = get(&map, "p", &fail)?;
        let q: Option<f64> = get(&map, "q", &fail)?;
        c.family = match map.get("family").map(|s| s.value.as_str()) {
            None | Some("v") => Family::V,
            Some("base") => Family::Base { p: p.unwrap_or(0.5) },
            Some("perturbed-v") => Family::PerturbedV {
                q: q.ok_or_else(|| Error::config("q", "perturbed-v needs q"))?,
            },
            Some(other) => return Err(fail("family", format!("unknown family `{other}`"))),
        };
        c.fraction = get(&map, "fraction", &fail)?.unwrap_or(c.fraction);
        c.mu_grid = list(&map, "mu_grid", &fail)?.unwrap_or_default();
        c.sizes = list(&map, "sizes", &fail)?.unwrap_or_default();
        c.q_list = list(&map, "q_list", &fail)?.unwrap_or_default();
        c.realizations = get(&map, "realizations", &fail)?.unwrap_or(c.realizations);
        c.seed = get(&map, "seed", &fail)?.unwrap_or(c.seed);
        c.output = map.get("output").map(|s| PathBuf::from(&s.value));
        c.log_base = get(&map, "log_base", &fail)?.unwrap_or(c.log_base);
        c.avalanche.strict_failure = get(&map, "strict_failure", &fail)?.unwrap_or(false);
        c.avalanche.max_cycles = get(&map, "max_cycles", &fail)?;
        if let Some(w) = list::<f64>(&map, "fit_window", &fail)? {
            match w[..] {
                [lo, hi] => c.fit_window = Some((lo, hi)),
                _ => return Err(fail("fit_window", "expected `lo,hi`".into())),
            }
        }
        if let Some(s) = map.get("motion") {
            c.percolation.motion = match s.value.as_str() {
                "pass-through" => MotionRule::PassThrough,
                "greedy-descent" => MotionRule::GreedyDescent,
                v => return Err(fail("motion", format!("unknown rule `{v}`"))),
            };
        }
        if let Some(s) = map.get("deposit") {
            c.percolation.deposit = match s.value.as_str() {
                "fixed" => DepositRule::FixedSite,
                "uniform" => DepositRule::Uniform,
                v => return Err(fail("deposit", format!("unknown rule `{v}`"))),
            };
        }
        if let Some(s) = map.get("connectivity") {
            c.percolation.connectivity = match s.value.as_str() {
                "links" => Connectivity::Links,
                "grid" => Connectivity::Grid,
                v => return Err(fail("connectivity", format!("unknown rule `{v}`"))),
            };
        }
        Ok(c)
    }
}

/// One `key = value` entry, with its line when read from a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub line: Option<usize>,
}

impl Setting {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
            line: None,
        }
    }
}

const KEYS: &[&str] = &[
    "kind",
    "size",
    "width",
    "depth",
    "family",
    "p",
    "q",
    "fraction",
    "mu_grid",
    "sizes",
    "q_list",
    "realizations",
    "seed",
    "output",
    "motion",
    "deposit",
    "connectivity",
    "strict_failure",
    "max_cycles",
    "log_base",
    "fit_window",
];

fn known_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|&k| k == key)
}

pub fn parse_settings(text: &str, origin: &Path) -> Result<Vec<Setting>> {
    let mut out: Vec<Setting> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            reason,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if known_key(k).is_none() {
            return Err(err(format!("unknown key `{k}`")));
        }
        if out.iter().any(|s| s.key == k) {
            return Err(err(format!("repeated key `{k}`")));
        }
        out.push(Setting {
            key: k.to_string(),
            value: v.to_string(),
            line: Some(i + 1),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of one column parsed as numbers.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::Fit(format!("table `{}` has no column `{name}`", self.name)))?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse()
                    .map_err(|_| Error::Fit(format!("`{}` in column `{name}` is not a number", r[i])))
            })
            .collect()
    }
}

/// Wall-clock information; not part of the simulation output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WallClock {
    pub started_unix: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ResultSet {
    pub config: ExperimentConfig,
    pub wall_clock: WallClock,
    /// Aggregates and fit reports, in insertion order.
    pub summary: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

/// Equality of everything the simulation produced; wall-clock data is ignored.
impl PartialEq for ResultSet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.summary == other.summary && self.tables == other.tables
    }
}

impl ResultSet {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[config]\n");
        out.push_str(&self.config.to_text());
        writeln!(
            out,
            "[meta]\nstarted_unix = {}\nelapsed_ms = {}",
            self.wall_clock.started_unix, self.wall_clock.elapsed_ms
        )
        .unwrap();
        out.push_str("[summary]\n");
        for (k, v) in &self.summary {
            writeln!(out, "{k} = {v}").unwrap();
        }
        for t in &self.tables {
            writeln!(out, "[table {} rows={}]", t.name, t.rows.len()).unwrap();
            writeln!(out, "{}", t.columns.join(",")).unwrap();
            for r in &t.rows {
                writeln!(out, "{}", r.join(",")).unwrap();
            }
        }
        out.push_str("[end]\n");
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let lines: Vec<&str> = text.lines().collect();
        let mut i = 0;
        let expect = |i: usize, want: &str| -> Result<()> {
            match lines.get(i) {
                Some(l) if l.trim() == want => Ok(()),
                Some(l) => Err(err(i + 1, format!("expected `{want}`, found `{l}`"))),
                None => Err(err(i.max(1), format!("truncated: missing `{want}`"))),
            }
        };
        let section = |i: &mut usize| -> Vec<(usize, &str)> {
            let mut body = Vec::new();
            while *i < lines.len() && !lines[*i].starts_with('[') {
                body.push((*i + 1, lines[*i]));
                *i += 1;
            }
            body
        };

        expect(i, "[config]")?;
        i += 1;
        let config_start = i;
        let body = section(&mut i);
        let config_text: String = body.iter().map(|(_, l)| format!("{l}\n")).collect();
        let mut settings = parse_settings(&config_text, origin)?;
        for s in &mut settings {
            s.line = s.line.map(|l| l + config_start);
        }
        let config = ExperimentConfig::from_settings(&settings, origin)?;

        expect(i, "[meta]")?;
        i += 1;
        let mut wall_clock = WallClock::default();
        for (ln, l) in section(&mut i) {
            let (k, v) = split_kv(l).ok_or_else(|| err(ln, format!("expected `key = value`, found `{l}`")))?;
            let v: u64 = v.parse().map_err(|_| err(ln, format!("bad number `{v}`")))?;
            match k {
                "started_unix" => wall_clock.started_unix = v,
                "elapsed_ms" => wall_clock.elapsed_ms = v,
                _ => return Err(err(ln, format!("unknown meta key `{k}`"))),
            }
        }

        expect(i, "[summary]")?;
        i += 1;
        let mut summary = Vec::new();
        for (ln, l) in section(&mut i) {
            let (k, v) = split_kv(l).ok_or_else(|| err(ln, format!("expected `key = value`, found `{l}`")))?;
            summary.push((k.to_string(), v.to_string()));
        }

        let mut tables = Vec::new();
        loop {
            let Some(head) = lines.get(i) else {
                return Err(err(lines.len().max(1), "truncated: missing `[end]`".into()));
            };
            let ln = i + 1;
            if head.trim() == "[end]" {
                if let Some(extra) = lines[i + 1..].iter().position(|l| !l.trim().is_empty()) {
                    return Err(err(i + 2 + extra, "content after `[end]`".into()));
                }
                break;
            }
            let inner = head
                .trim()
                .strip_prefix("[table ")
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| err(ln, format!("expected a table header, found `{head}`")))?;
            let (name, rows) = inner
                .split_once(" rows=")
                .ok_or_else(|| err(ln, "table header lacks `rows=`".into()))?;
            let rows: usize = rows.parse().map_err(|_| err(ln, format!("bad row count `{rows}`")))?;
            i += 1;
            let columns: Vec<String> = match lines.get(i) {
                Some(l) if !l.starts_with('[') => l.split(',').map(str::to_string).collect(),
                _ => return Err(err(i.min(lines.len()).max(1), format!("table `{name}` lacks a column row"))),
            };
            i += 1;
            let body = section(&mut i);
            if body.len() != rows {
                let at = body.last().map_or(i, |(l, _)| *l);
                return Err(err(
                    at,
                    format!("truncated: table `{name}` has {} of {rows} rows", body.len()),
                ));
            }
            let mut table = Table {
                name: name.to_string(),
                columns,
                rows: Vec::with_capacity(rows),
            };
            for (ln, l) in body {
                let cells: Vec<String> = l.split(',').map(str::to_string).collect();
                if cells.len() != table.columns.len() {
                    return Err(err(
                        ln,
                        format!("expected {} cells, found {}", table.columns.len(), cells.len()),
                    ));
                }
                table.rows.push(cells);
            }
            tables.push(table);
        }
        Ok(ResultSet {
            config,
            wall_clock,
            summary,
            tables,
        })
    }
}

fn split_kv(line: &str) -> Option<(&str, &str)> {
    line.split_once('=').map(|(k, v)| (k.trim(), v.trim()))
}

pub fn write_results(results: &ResultSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, results.to_text())?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<ResultSet> {
    ResultSet::parse(&std::fs::read_to_string(path)?, path)
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn cells<const N: usize>(values: [String; N]) -> Vec<String> {
    values.into()
}

/// Validates `config`, runs it and gathers aggregates and fits.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultSet> {
    config.validate()?;
    let started = Instant::now();
    let mut rs = ResultSet {
        config: config.clone(),
        wall_clock: WallClock {
            started_unix: now_unix(),
            elapsed_ms: 0,
        },
        summary: Vec::new(),
        tables: Vec::new(),
    };
    match config.kind {
        ExperimentKind::Avalanche => run_avalanche_experiment(config, &mut rs)?,
        ExperimentKind::PercolationSweep => run_sweep_experiment(config, &mut rs)?,
        ExperimentKind::JumpScaling => run_scaling_experiment(config, &mut rs)?,
    }
    rs.wall_clock.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(rs)
}

fn run_avalanche_experiment(config: &ExperimentConfig, rs: &mut ResultSet) -> Result<()> {
    let records = avalanche_ensemble(
        &config.lattice_spec(),
        config.fraction,
        config.realizations,
        config.seed,
        &config.avalanche,
    )?;
    let mut table = Table::new(
        "records",
        &["index", "sub_seed", "trunk_capacity", "test_weight", "status", "failed_site", "time", "cycles"],
    );
    for r in &records {
        let site = match r.status {
            AvalancheStatus::Failed { site } => site.to_string(),
            _ => "-".into(),
        };
        table.push(cells([
            r.index.to_string(),
            r.sub_seed.to_string(),
            r.trunk_capacity.to_string(),
            r.test_weight.to_string(),
            r.status.label().to_string(),
            site,
            r.time.to_string(),
            r.cycles.to_string(),
        ]));
    }
    let count = |label: &str| records.iter().filter(|r| r.status.label() == label).count();
    rs.put("realizations", records.len());
    rs.put("successes", count("success"));
    rs.put("failures", count("failed"));
    rs.put("aborted", count("aborted"));
    let times = successful_times(&records);
    let (mean, sd) = crate::percolation::mean_sd(times.iter().copied());
    rs.put("mean_time", mean);
    rs.put("sd_time", sd);
    if let (Some(window), false) = (config.fit_window, times.is_empty()) {
        let hist = histogram(&times, Binning::Logarithmic { base: config.log_base })?;
        let fit = fit_power_law(&hist, window)?;
        rs.put("powerlaw_alpha", fit.alpha);
        rs.put("powerlaw_amplitude", fit.amplitude);
        rs.put("powerlaw_chi2", fit.chi2);
        rs.put("powerlaw_window", format!("{},{}", window.0, window.1));
        rs.put("powerlaw_points", fit.points);
    }
    rs.tables.push(table);
    Ok(())
}

fn run_sweep_experiment(config: &ExperimentConfig, rs: &mut ResultSet) -> Result<()> {
    let sweep = density_sweep(
        &config.lattice_spec(),
        &config.mu_grid,
        config.realizations,
        config.seed,
        &config.percolation,
    )?;
    let mut points = Table::new("points", &["mu", "mean_s", "sd_s", "mean_s1", "sd_s1"]);
    for p in &sweep.points {
        points.push(cells([
            p.mu.to_string(),
            p.mean_s.to_string(),
            p.sd_s.to_string(),
            p.mean_s1.to_string(),
            p.sd_s1.to_string(),
        ]));
    }
    let mut records = Table::new("records", &["index", "sub_seed", "delta_s1", "n_star", "mu_c"]);
    for r in &sweep.records {
        records.push(cells([
            r.index.to_string(),
            r.sub_seed.to_string(),
            r.jump.delta.to_string(),
            r.jump.n_star.to_string(),
            r.jump.mu_c.to_string(),
        ]));
    }
    let (mean, sd) = crate::percolation::mean_sd(sweep.records.iter().map(|r| r.jump.delta));
    rs.put("mean_jump", mean);
    rs.put("sd_jump", sd);
    let drop = sweep
        .points
        .windows(2)
        .map(|p| p[0].mean_s - p[1].mean_s)
        .fold(0.0, f64::max);
    rs.put("max_mean_s_drop", drop);
    rs.tables.push(points);
    rs.tables.push(records);
    Ok(())
}

fn run_scaling_experiment(config: &ExperimentConfig, rs: &mut ResultSet) -> Result<()> {
    let families: Vec<Family> = config.q_list.iter().map(|&q| v_family(q)).collect();
    let table = jump_scaling(
        &families,
        &config.sizes,
        config.realizations,
        config.seed,
        &config.percolation,
    )?;
    let q_of = |f: Family| match f {
        Family::PerturbedV { q } => q,
        _ => 0.0,
    };
    let mut sizes = Table::new("sizes", &["q", "side", "sites", "mean_jump", "sd_jump"]);
    for r in &table.rows {
        sizes.push(cells([
            q_of(r.family).to_string(),
            r.side.to_string(),
            r.sites.to_string(),
            r.mean_jump.to_string(),
            r.sd_jump.to_string(),
        ]));
    }
    let mut fits = Table::new("fits", &["q", "phi", "phi_se", "amplitude", "chi2", "weakly_discontinuous"]);
    for f in &table.fits {
        fits.push(cells([
            q_of(f.family).to_string(),
            f.fit.phi.to_string(),
            f.fit.phi_se.to_string(),
            f.fit.amplitude.to_string(),
            f.fit.chi2.to_string(),
            f.fit.weakly_discontinuous().to_string(),
        ]));
    }
    let mut jumps = Table::new("jumps", &["q", "side", "index", "sub_seed", "delta_s1"]);
    for (row, group) in table.rows.iter().zip(&table.jumps) {
        for (i, d) in group.iter().enumerate() {
            jumps.push(cells([
                q_of(row.family).to_string(),
                row.side.to_string(),
                i.to_string(),
                crate::seed::seed_stream(config.seed, i as u64).to_string(),
                d.to_string(),
            ]));
        }
    }
    rs.tables.extend([sizes, fits, jumps]);
    Ok(())
}
