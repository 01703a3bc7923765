//! `reproduce`: reruns the experiment behind a figure at its published
//! parameters, writes results and plot data, and compares with the numbers
//! quoted in the captions.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hierlat::ensemble::{
    run_experiment, with_workers, workers_from_env, write_results, ExperimentConfig, ExperimentKind,
    ResultSet,
};
use hierlat::lattice::Family;
use hierlat::percolation::total_capacity;
use hierlat::stats::{best_window, fit_gaussian, fit_power_law, histogram, window_scan, Binning};
use hierlat::{Error, Result};

use crate::plot::write_columns;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2a,
    Fig2b,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

impl Figure {
    fn id(self) -> &'static str {
        match self {
            Figure::Fig2a => "fig2a",
            Figure::Fig2b => "fig2b",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }
}

#[derive(Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    figure: Figure,
    /// Master seed [default: 0, with a warning]
    #[arg(long)]
    seed: Option<u64>,
    /// Shrinks realizations and lattice area by this factor, in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Directory for result and plot-data files
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Print the experiment configurations without running them
    #[arg(long)]
    dry_run: bool,
}

/// Minimum number of bins in a power-law window scan.
const SCAN_MIN_BINS: usize = 5;
const SIDE: usize = 100;
/// Small-t windows, on bin centers, at side 100.
const WINDOW_F005: (f64, f64) = (30.0, 80.0);
const WINDOW_F02: (f64, f64) = (50.0, 110.0);
const FIG7_Q: [f64; 6] = [0.05, 0.15, 0.25, 0.35, 0.45, 0.50];
const FIG7_PHI: [f64; 6] = [0.0019, 0.0023, 0.0029, 0.0059, 0.0079, 0.011];
const FIG7_SIDES: [usize; 4] = [50, 75, 100, 150];

struct Scale(f64);

impl Scale {
    fn realizations(&self, r: usize) -> usize {
        ((r as f64 * self.0).ceil() as usize).max(1)
    }

    /// Area shrinks by the factor, so sides by its square root.
    fn side(&self, side: usize) -> usize {
        ((side as f64 * self.0.sqrt()).round() as usize).max(8)
    }

    fn window(&self, w: (f64, f64)) -> (f64, f64) {
        let k = self.side(SIDE) as f64 / SIDE as f64;
        (w.0 * k, w.1 * k)
    }

    /// Tolerances widen with the sampling error of a smaller ensemble.
    fn widen(&self, half_width: f64) -> f64 {
        half_width / self.0.sqrt()
    }
}

fn avalanche_config(family: Family, fraction: f64, seed: u64, s: &Scale) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::Avalanche);
    c.width = s.side(SIDE);
    c.depth = c.width;
    c.family = family;
    c.fraction = fraction;
    c.realizations = s.realizations(1000);
    c.seed = seed;
    c
}

fn sweep_config(family: Family, seed: u64, s: &Scale) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::PercolationSweep);
    c.width = s.side(SIDE);
    c.depth = c.width;
    c.family = family;
    c.realizations = s.realizations(500);
    c.seed = seed;
    c.mu_grid = unit_grid(&c);
    c
}

/// Whole packets per site, from 0 to the total capacity per site.
pub fn unit_grid(c: &ExperimentConfig) -> Vec<f64> {
    let spec = c.lattice_spec();
    let max = total_capacity(&spec) / spec.sites() as u64;
    (0..=max).map(|k| k as f64).collect()
}

/// Configurations behind a figure, in the order they are run.
pub fn figure_configs(fig: Figure, seed: u64, scale: f64) -> Vec<ExperimentConfig> {
    let s = Scale(scale);
    let with_window = |mut c: ExperimentConfig, w| {
        c.fit_window = Some(s.window(w));
        c
    };
    match fig {
        Figure::Fig2a => vec![with_window(avalanche_config(Family::V, 0.05, seed, &s), WINDOW_F005)],
        Figure::Fig2b => vec![with_window(avalanche_config(Family::V, 0.2, seed, &s), WINDOW_F02)],
        Figure::Fig3 => vec![
            with_window(avalanche_config(Family::V, 0.05, seed, &s), WINDOW_F005),
            avalanche_config(Family::V, 0.5, seed, &s),
            avalanche_config(Family::V, 0.9, seed, &s),
        ],
        Figure::Fig4 => [0.1, 0.2]
            .iter()
            .map(|&f| avalanche_config(Family::Base { p: 0.5 }, f, seed, &s))
            .collect(),
        Figure::Fig5 => vec![sweep_config(Family::V, seed, &s)],
        Figure::Fig6 => std::iter::once(with_window(avalanche_config(Family::V, 0.05, seed, &s), WINDOW_F005))
            .chain([0.1, 0.2, 0.3, 0.4].iter().map(|&q| {
                avalanche_config(Family::PerturbedV { q }, 0.05, seed, &s)
            }))
            .collect(),
        Figure::Fig7 => {
            let mut c = ExperimentConfig::new(ExperimentKind::JumpScaling);
            c.sizes = FIG7_SIDES.iter().map(|&side| s.side(side)).collect();
            c.sizes.dedup();
            c.q_list = FIG7_Q.to_vec();
            c.realizations = s.realizations(200);
            c.seed = seed;
            vec![c]
        }
        Figure::Fig8 => vec![sweep_config(Family::Base { p: 0.5 }, seed, &s)],
    }
}

fn family_tag(f: Family) -> String {
    match f {
        Family::Base { p } => format!("base_p{p}"),
        Family::V => "v".into(),
        Family::PerturbedV { q } => format!("pv_q{q}"),
    }
}

fn stem(c: &ExperimentConfig) -> String {
    match c.kind {
        ExperimentKind::Avalanche => format!("{}_f{}", family_tag(c.family), c.fraction),
        ExperimentKind::PercolationSweep => format!("{}_sweep", family_tag(c.family)),
        ExperimentKind::JumpScaling => "jumpscale".into(),
    }
}

struct Report {
    passes: usize,
    warnings: usize,
}

impl Report {
    fn check(&mut self, ok: bool, text: String) {
        if ok {
            self.passes += 1;
            println!("PASS {text}");
        } else {
            self.warnings += 1;
            println!("WARN {text}");
        }
    }
}

pub fn run(a: ReproduceArgs) -> Result<()> {
    if !(a.scale > 0.0 && a.scale <= 1.0) {
        return Err(Error::Config {
            field: "scale",
            reason: format!("{} is not in (0, 1]", a.scale),
        });
    }
    let seed = a.seed.unwrap_or_else(|| {
        eprintln!("warning: no seed given; using master seed 0");
        0
    });
    let configs = figure_configs(a.figure, seed, a.scale);
    if a.dry_run {
        for c in &configs {
            println!("{}", c.to_text());
        }
        return Ok(());
    }
    let dir = a.out_dir.join(a.figure.id());
    std::fs::create_dir_all(&dir)?;
    let mut results = Vec::new();
    for c in &configs {
        let mut c = c.clone();
        c.output = Some(dir.join(format!("{}.txt", stem(&c))));
        c.validate()?;
        let rs = with_workers(workers_from_env(), || run_experiment(&c))??;
        write_results(&rs, c.output.as_ref().unwrap())?;
        results.push(rs);
    }
    let s = Scale(a.scale);
    let mut report = Report {
        passes: 0,
        warnings: 0,
    };
    match a.figure {
        Figure::Fig2a => power_law_figure(&results[0], &dir, 1.18, (0.98, 1.38), 0.0009, &s, &mut report)?,
        Figure::Fig2b => power_law_figure(&results[0], &dir, 2.96, (2.4, 3.5), 52.197, &s, &mut report)?,
        Figure::Fig3 => no_power_law_figure(&results, &dir, &mut report)?,
        Figure::Fig4 => gaussian_figure(&results, &dir, &mut report)?,
        Figure::Fig5 => sweep_figure(&results[0], &dir, true, &mut report)?,
        Figure::Fig6 => no_power_law_figure(&results, &dir, &mut report)?,
        Figure::Fig7 => scaling_figure(&results[0], &dir, &mut report)?,
        Figure::Fig8 => sweep_figure(&results[0], &dir, false, &mut report)?,
    }
    println!(
        "{}: {} pass, {} warn; files in {}",
        a.figure.id(),
        report.passes,
        report.warnings,
        dir.display()
    );
    Ok(())
}

fn times(rs: &ResultSet) -> Result<Vec<f64>> {
    let t = rs.table("records").expect("avalanche records");
    let time = t.numbers("time")?;
    let status = t.column_index("status").expect("status column");
    Ok(time
        .into_iter()
        .zip(&t.rows)
        .filter(|(_, r)| r[status] == "success")
        .map(|(v, _)| v)
        .collect())
}

fn write_distribution(rs: &ResultSet, dir: &Path, base: f64) -> Result<Vec<f64>> {
    let ts = times(rs)?;
    if ts.is_empty() {
        return Err(Error::Fit(format!("no successful avalanches for {}", stem(&rs.config))));
    }
    let hist = histogram(&ts, Binning::Logarithmic { base })?;
    let rows: Vec<Vec<f64>> = hist.nonempty_points().into_iter().map(|(x, y)| vec![x, y]).collect();
    write_columns(&dir.join(format!("{}_pt.dat", stem(&rs.config))), &["t", "P(t)"], &rows)?;
    Ok(ts)
}

fn power_law_figure(
    rs: &ResultSet,
    dir: &Path,
    paper_alpha: f64,
    band: (f64, f64),
    paper_chi2: f64,
    s: &Scale,
    report: &mut Report,
) -> Result<()> {
    let c = &rs.config;
    let ts = write_distribution(rs, dir, c.log_base)?;
    let hist = histogram(&ts, Binning::Logarithmic { base: c.log_base })?;
    let window = c.fit_window.expect("figure window");
    let fit = fit_power_law(&hist, window)?;
    let rows: Vec<Vec<f64>> = hist
        .nonempty_points()
        .into_iter()
        .filter(|&(x, _)| x >= window.0 && x <= window.1)
        .map(|(x, _)| vec![x, fit.amplitude * x.powf(-fit.alpha)])
        .collect();
    write_columns(&dir.join(format!("{}_fit.dat", stem(c))), &["t", "fit"], &rows)?;
    let lo = paper_alpha - s.widen(paper_alpha - band.0);
    let hi = paper_alpha + s.widen(band.1 - paper_alpha);
    report.check(
        (lo..=hi).contains(&fit.alpha),
        format!(
            "alpha = {:.3} over t in [{}, {}] ({} bins); paper {paper_alpha}, accepted [{lo:.2}, {hi:.2}]",
            fit.alpha, window.0, window.1, fit.points
        ),
    );
    println!(
        "INFO chi2 = {:.4} (sum of squared log residuals); paper quotes {paper_chi2} with an undefined statistic",
        fit.chi2
    );
    Ok(())
}

/// The first result sets the reduced chi-square threshold with its fit
/// window; the others should have no window that fits as well.
fn no_power_law_figure(results: &[ResultSet], dir: &Path, report: &mut Report) -> Result<()> {
    let reference = &results[0];
    let c = &reference.config;
    let ts = write_distribution(reference, dir, c.log_base)?;
    let hist = histogram(&ts, Binning::Logarithmic { base: c.log_base })?;
    let threshold = fit_power_law(&hist, c.fit_window.expect("reference window"))?.reduced_chi2();
    println!(
        "INFO threshold: reduced chi2 {threshold:.4} of the {} power-law fit",
        stem(c)
    );
    for rs in &results[1..] {
        let ts = write_distribution(rs, dir, rs.config.log_base)?;
        let hist = histogram(&ts, Binning::Logarithmic { base: rs.config.log_base })?;
        let scan = window_scan(&hist, SCAN_MIN_BINS);
        let best = best_window(&scan);
        let (ok, detail) = match best {
            None => (true, "too few bins for any window".to_string()),
            Some(b) => (
                b.reduced_chi2 > threshold,
                format!(
                    "best reduced chi2 {:.4} over [{:.1}, {:.1}] (alpha {:.2})",
                    b.reduced_chi2, b.fit.window.0, b.fit.window.1, b.fit.alpha
                ),
            ),
        };
        report.check(ok, format!("{}: no power-law window; {detail}", stem(&rs.config)));
    }
    Ok(())
}

fn gaussian_figure(results: &[ResultSet], dir: &Path, report: &mut Report) -> Result<()> {
    for rs in results {
        let ts = times(rs)?;
        let g = fit_gaussian(&ts)?;
        let h = &g.histogram;
        let rows: Vec<Vec<f64>> = (0..h.len()).map(|b| vec![h.center(b), h.density[b]]).collect();
        let name = stem(&rs.config);
        write_columns(&dir.join(format!("{name}_hist.dat")), &["t", "P(t)"], &rows)?;
        let pdf = |x: f64| {
            (-(x - g.mean).powi(2) / (2.0 * g.sd * g.sd)).exp() / (g.sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let (lo, hi) = (h.edges[0], h.edges[h.len()]);
        let curve: Vec<Vec<f64>> = (0..=200)
            .map(|k| lo + (hi - lo) * k as f64 / 200.0)
            .map(|x| vec![x, pdf(x)])
            .collect();
        write_columns(&dir.join(format!("{name}_normal.dat")), &["t", "normal"], &curve)?;
        report.check(
            g.is_gaussian(),
            format!(
                "{name}: mean {:.2}, sd {:.2}, skewness {:.3} (< 0.5), reduced chi2 {:.2} (< 5), unimodal {}",
                g.mean, g.sd, g.skewness, g.reduced_chi2, g.unimodal
            ),
        );
    }
    Ok(())
}

fn sweep_figure(rs: &ResultSet, dir: &Path, explosive: bool, report: &mut Report) -> Result<()> {
    let points = rs.table("points").expect("sweep points");
    let cols = |names: [&str; 3]| -> Result<Vec<Vec<f64>>> {
        let c: Vec<Vec<f64>> = names.iter().map(|n| points.numbers(n)).collect::<Result<_>>()?;
        Ok((0..c[0].len()).map(|i| vec![c[0][i], c[1][i], c[2][i]]).collect())
    };
    let name = stem(&rs.config);
    write_columns(&dir.join(format!("{name}_s.dat")), &["mu", "S", "sd"], &cols(["mu", "mean_s", "sd_s"])?)?;
    write_columns(&dir.join(format!("{name}_s1.dat")), &["mu", "S1", "sd"], &cols(["mu", "mean_s1", "sd_s1"])?)?;
    let num = |k: &str| -> f64 { rs.summary_value(k).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN) };
    let (jump, drop) = (num("mean_jump"), num("max_mean_s_drop"));
    if explosive {
        report.check(jump >= 0.1, format!("{name}: mean largest jump {jump:.4} (>= 0.1)"));
        report.check(drop >= 0.1, format!("{name}: largest drop of mean S between grid points {drop:.4} (>= 0.1)"));
    } else {
        report.check(jump < 0.02, format!("{name}: mean largest jump {jump:.4} (< 0.02)"));
    }
    Ok(())
}

fn scaling_figure(rs: &ResultSet, dir: &Path, report: &mut Report) -> Result<()> {
    let sizes = rs.table("sizes").expect("size table");
    let fits = rs.table("fits").expect("fit table");
    let (q, sites, mean, sd) = (
        sizes.numbers("q")?,
        sizes.numbers("sites")?,
        sizes.numbers("mean_jump")?,
        sizes.numbers("sd_jump")?,
    );
    let (fq, phi) = (fits.numbers("q")?, fits.numbers("phi")?);
    for &qv in &fq {
        let rows: Vec<Vec<f64>> = (0..q.len())
            .filter(|&i| q[i] == qv)
            .map(|i| vec![sites[i], mean[i], sd[i]])
            .collect();
        write_columns(&dir.join(format!("jump_q{qv}.dat")), &["L", "mean_jump", "sd"], &rows)?;
    }
    let mut table = Vec::new();
    for (i, &qv) in fq.iter().enumerate() {
        let paper = FIG7_Q.iter().position(|&x| x == qv).map(|k| FIG7_PHI[k]);
        table.push(vec![qv, phi[i], paper.unwrap_or(f64::NAN)]);
        if let Some(p) = paper {
            report.check(
                phi[i] > 0.0 && phi[i] >= p / 3.0 && phi[i] <= 3.0 * p,
                format!("q = {qv}: phi = {:.4}; paper {p}, accepted [{:.4}, {:.4}]", phi[i], p / 3.0, 3.0 * p),
            );
        }
    }
    write_columns(&dir.join("phi.dat"), &["q", "phi", "paper_phi"], &table)?;
    let monotone = phi.windows(2).all(|w| w[1] >= w[0]);
    report.check(monotone, "phi nondecreasing in q".to_string());
    Ok(())
}
