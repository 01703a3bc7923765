//! `fit`: models applied to an existing result file or plain table.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hierlat::ensemble::{ResultSet, Table};
use hierlat::stats::{best_window, fit_gaussian, fit_power_law, fit_size_scaling, histogram, window_scan, Binning};
use hierlat::{Error, Result};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Model {
    PowerLaw,
    Gaussian,
    Scaling,
}

#[derive(Args)]
pub struct FitArgs {
    /// Result file written by this tool, or a comma- or space-separated table
    input: PathBuf,
    /// Model to fit
    #[arg(long, value_enum, default_value_t = Model::PowerLaw)]
    model: Model,
    /// Table inside a result file [default: records, or sizes for scaling]
    #[arg(long)]
    table: Option<String>,
    /// Sample column for power-law and gaussian fits [default: time]
    #[arg(long)]
    column: Option<String>,
    /// Power-law window on bin centers, `lo,hi`
    #[arg(long)]
    window: Option<String>,
    /// Logarithmic bin base for power-law fits
    #[arg(long, default_value_t = Binning::DEFAULT_LOG_BASE)]
    log_base: f64,
    /// Also report the best window among runs of at least this many bins
    #[arg(long)]
    scan: Option<usize>,
    /// Size column for scaling fits [default: sites]
    #[arg(long)]
    x: Option<String>,
    /// Jump column for scaling fits [default: mean_jump]
    #[arg(long)]
    y: Option<String>,
}

/// Reads a result file, or failing that a plain table with a header row.
pub fn load_table(path: &Path, name: &str) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    if text.starts_with("[config]") {
        let rs = ResultSet::parse(&text, path)?;
        return rs.table(name).cloned().ok_or_else(|| Error::Config {
            field: "table",
            reason: format!("{} has no table `{name}`", path.display()),
        });
    }
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().trim_start_matches('#').trim()))
        .filter(|(_, l)| !l.is_empty());
    let split = |l: &str| -> Vec<String> {
        l.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect()
    };
    let (_, header) = rows.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        reason: "empty table".into(),
    })?;
    let columns = split(header);
    let mut table = Table {
        name: name.to_string(),
        columns,
        rows: Vec::new(),
    };
    for (ln, l) in rows {
        let cells = split(l);
        if cells.len() != table.columns.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: ln,
                reason: format!("expected {} cells, found {}", table.columns.len(), cells.len()),
            });
        }
        table.rows.push(cells);
    }
    Ok(table)
}

pub fn parse_window(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config {
        field: "window",
        reason: format!("expected `lo,hi`, found `{text}`"),
    };
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Samples of `column`; avalanche times are restricted to successful runs.
fn samples(table: &Table, column: &str) -> Result<Vec<f64>> {
    let values = table.numbers(column)?;
    match table.column_index("status") {
        Some(s) => Ok(values
            .into_iter()
            .zip(&table.rows)
            .filter(|(_, r)| r[s] == "success")
            .map(|(v, _)| v)
            .collect()),
        None => Ok(values),
    }
}

pub fn run(a: FitArgs) -> Result<()> {
    match a.model {
        Model::PowerLaw => {
            let table = load_table(&a.input, a.table.as_deref().unwrap_or("records"))?;
            let xs = samples(&table, a.column.as_deref().unwrap_or("time"))?;
            let hist = histogram(&xs, Binning::Logarithmic { base: a.log_base })?;
            if a.window.is_none() && a.scan.is_none() {
                return Err(Error::Config {
                    field: "window",
                    reason: "give --window lo,hi or --scan".into(),
                });
            }
            println!("samples = {}", xs.len());
            if let Some(w) = &a.window {
                let fit = fit_power_law(&hist, parse_window(w)?)?;
                println!("alpha = {}", fit.alpha);
                println!("amplitude = {}", fit.amplitude);
                println!("chi2 = {}", fit.chi2);
                println!("reduced_chi2 = {}", fit.reduced_chi2());
                println!("window = {},{}", fit.window.0, fit.window.1);
                println!("points = {}", fit.points);
            }
            if let Some(min_bins) = a.scan {
                let scan = window_scan(&hist, min_bins);
                match best_window(&scan) {
                    Some(b) => {
                        println!("scan_windows = {}", scan.len());
                        println!("best_window = {},{}", b.fit.window.0, b.fit.window.1);
                        println!("best_alpha = {}", b.fit.alpha);
                        println!("best_reduced_chi2 = {}", b.reduced_chi2);
                    }
                    None => println!("scan_windows = 0"),
                }
            }
        }
        Model::Gaussian => {
            let table = load_table(&a.input, a.table.as_deref().unwrap_or("records"))?;
            let xs = samples(&table, a.column.as_deref().unwrap_or("time"))?;
            let g = fit_gaussian(&xs)?;
            println!("samples = {}", xs.len());
            println!("mean = {}", g.mean);
            println!("sd = {}", g.sd);
            println!("skewness = {}", g.skewness);
            println!("excess_kurtosis = {}", g.excess_kurtosis);
            println!("reduced_chi2 = {}", g.reduced_chi2);
            println!("unimodal = {}", g.unimodal);
            println!("gaussian = {}", g.is_gaussian());
        }
        Model::Scaling => {
            let table = load_table(&a.input, a.table.as_deref().unwrap_or("sizes"))?;
            let x = table.numbers(a.x.as_deref().unwrap_or("sites"))?;
            let y = table.numbers(a.y.as_deref().unwrap_or("mean_jump"))?;
            // One fit per q when the table carries several families.
            let groups: Vec<String> = match table.column_index("q") {
                Some(i) => table.rows.iter().map(|r| r[i].clone()).collect(),
                None => vec![String::new(); table.rows.len()],
            };
            let mut seen: Vec<&String> = Vec::new();
            for g in &groups {
                if !seen.contains(&g) {
                    seen.push(g);
                }
            }
            for g in seen {
                let pts: Vec<(f64, f64)> = (0..x.len())
                    .filter(|&i| &groups[i] == g)
                    .map(|i| (x[i], y[i]))
                    .collect();
                let fit = fit_size_scaling(&pts)?;
                let tag = if g.is_empty() { String::new() } else { format!("q={g} ") };
                println!(
                    "{tag}phi = {} se = {} chi2 = {} weakly_discontinuous = {}",
                    fit.phi,
                    fit.phi_se,
                    fit.chi2,
                    fit.weakly_discontinuous()
                );
            }
        }
    }
    Ok(())
}
