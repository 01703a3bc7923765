//! Histograms and least-squares fits: power laws on log-log axes, a normal
//! shape check, and the finite-size exponent of the largest jump.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Equal widths, first edge at the smallest sample.
    Linear { width: f64 },
    /// Edges at integer powers of `base`.
    Logarithmic { base: f64 },
}

impl Binning {
    pub const DEFAULT_LOG_BASE: f64 = 1.3;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub binning: Binning,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `count / (total * width)` per bin.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// Midpoint for linear bins, geometric mean for logarithmic ones.
    pub fn center(&self, bin: usize) -> f64 {
        let (lo, hi) = (self.edges[bin], self.edges[bin + 1]);
        match self.binning {
            Binning::Linear { .. } => 0.5 * (lo + hi),
            Binning::Logarithmic { .. } => (lo * hi).sqrt(),
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|b| self.center(b)).collect()
    }

    /// `(center, density)` of every nonempty bin.
    pub fn nonempty_points(&self) -> Vec<(f64, f64)> {
        (0..self.len())
            .filter(|&b| self.counts[b] > 0)
            .map(|b| (self.center(b), self.density[b]))
            .collect()
    }
}

pub fn histogram(samples: &[f64], binning: Binning) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::Fit("histogram of an empty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("histogram of non-finite samples".into()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (edges, index): (Vec<f64>, Box<dyn Fn(f64) -> usize>) = match binning {
        Binning::Linear { width } => {
            if !(width > 0.0 && width.is_finite()) {
                return Err(Error::Fit(format!("bin width {width} must be positive")));
            }
            let bins = ((max - min) / width).floor() as usize + 1;
            let edges = (0..=bins).map(|k| min + k as f64 * width).collect();
            let idx = move |x: f64| (((x - min) / width).floor() as usize).min(bins - 1);
            (edges, Box::new(idx))
        }
        Binning::Logarithmic { base } => {
            if !(base > 1.0 && base.is_finite()) {
                return Err(Error::Fit(format!("log base {base} must exceed 1")));
            }
            if min <= 0.0 {
                return Err(Error::Fit("logarithmic bins need positive samples".into()));
            }
            let power = move |x: f64| {
                let mut k = (x.ln() / base.ln()).floor() as i32;
                // Guard against rounding in the logarithm.
                if base.powi(k) > x {
                    k -= 1;
                } else if base.powi(k + 1) <= x {
                    k += 1;
                }
                k
            };
            let (k0, k1) = (power(min), power(max));
            let edges = (k0..=k1 + 1).map(|k| base.powi(k)).collect();
            let idx = move |x: f64| (power(x) - k0) as usize;
            (edges, Box::new(idx))
        }
    };
    let mut counts = vec![0u64; edges.len() - 1];
    for &x in samples {
        counts[index(x)] += 1;
    }
    let n = samples.len() as f64;
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, e)| c as f64 / (n * (e[1] - e[0])))
        .collect();
    Ok(Histogram {
        binning,
        edges,
        counts,
        density,
    })
}

/// Ordinary least squares of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LineFit {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    ssr: f64,
}

fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if x.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_se,
        ssr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub amplitude: f64,
    /// Sum of squared residuals of log density.
    pub chi2: f64,
    pub window: (f64, f64),
    pub points: usize,
}

impl PowerLawFit {
    /// `chi2` per degree of freedom.
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / (self.points as f64 - 2.0)
    }
}

/// Fits `density = amplitude * x^-alpha` to the points with `x` inside the
/// closed window.
pub fn fit_power_law_points(points: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let inside: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, y)| x >= window.0 && x <= window.1 && y > 0.0)
        .collect();
    if inside.len() < 3 {
        return Err(Error::Fit(format!(
            "window [{}, {}] holds {} nonempty bins, need 3",
            window.0,
            window.1,
            inside.len()
        )));
    }
    let lx: Vec<f64> = inside.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = inside.iter().map(|p| p.1.ln()).collect();
    let line = fit_line(&lx, &ly);
    Ok(PowerLawFit {
        alpha: -line.slope,
        amplitude: line.intercept.exp(),
        chi2: line.ssr,
        window,
        points: inside.len(),
    })
}

pub fn fit_power_law(hist: &Histogram, window: (f64, f64)) -> Result<PowerLawFit> {
    fit_power_law_points(&hist.nonempty_points(), window)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFit {
    /// Positions in the list of nonempty bins, end exclusive.
    pub start: usize,
    pub end: usize,
    pub fit: PowerLawFit,
    pub reduced_chi2: f64,
}

/// Power-law fits over every run of at least `min_bins` consecutive nonempty
/// bins, in order of start then end.
pub fn window_scan(hist: &Histogram, min_bins: usize) -> Vec<WindowFit> {
    let pts = hist.nonempty_points();
    let min_bins = min_bins.max(3);
    let mut out = Vec::new();
    for start in 0..pts.len() {
        for end in start + min_bins..=pts.len() {
            let window = (pts[start].0, pts[end - 1].0);
            let fit = fit_power_law_points(&pts[start..end], window)
                .expect("window holds enough points");
            out.push(WindowFit {
                start,
                end,
                fit,
                reduced_chi2: fit.reduced_chi2(),
            });
        }
    }
    out
}

/// Window with the smallest reduced chi-square, if any window fits.
pub fn best_window(scan: &[WindowFit]) -> Option<&WindowFit> {
    scan.iter()
        .min_by(|a, b| a.reduced_chi2.total_cmp(&b.reduced_chi2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Pearson chi-square per degree of freedom against the fitted normal.
    pub reduced_chi2: f64,
    pub dof: usize,
    pub unimodal: bool,
    /// The histogram the shape checks used.
    pub histogram: Histogram,
}

impl GaussianFit {
    pub const MAX_SKEWNESS: f64 = 0.5;
    pub const MAX_REDUCED_CHI2: f64 = 5.0;

    pub fn is_gaussian(&self) -> bool {
        self.skewness.abs() < Self::MAX_SKEWNESS
            && self.unimodal
            && self.reduced_chi2 < Self::MAX_REDUCED_CHI2
    }
}

/// Smallest expected count a merged bin may have in the chi-square sum.
const MIN_EXPECTED: f64 = 5.0;
/// A dip between two higher bins counts when it is this many Poisson
/// standard deviations deep.
const DIP_SIGMAS: f64 = 3.0;

/// No bin sits significantly below a higher bin on each side.
pub fn is_unimodal(counts: &[u64]) -> bool {
    let n = counts.len();
    let mut left = vec![0u64; n];
    let mut right = vec![0u64; n];
    for i in 1..n {
        left[i] = left[i - 1].max(counts[i - 1]);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        right[i] = right[i + 1].max(counts[i + 1]);
    }
    (0..n).all(|i| {
        let rim = left[i].min(right[i]) as f64;
        let c = counts[i] as f64;
        rim <= c || (rim - c) <= DIP_SIGMAS * (rim + c).sqrt()
    })
}

/// Scott's rule; for integer-valued samples the width is a whole number and
/// the edges sit halfway between integers.
fn gaussian_binning(samples: &[f64], sd: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let width = 3.49 * sd * n.powf(-1.0 / 3.0);
    if samples.iter().all(|x| x.fract() == 0.0) {
        (width.round().max(1.0), min - 0.5)
    } else {
        (width, min)
    }
}

pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianFit> {
    if samples.len() < 8 {
        return Err(Error::Fit(format!(
            "Gaussian fit needs at least 8 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 || !m2.is_finite() {
        return Err(Error::Fit("degenerate sample: all values equal".into()));
    }
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let sd = (m2 * n / (n - 1.0)).sqrt();

    let (width, anchor) = gaussian_binning(samples, sd);
    let hist = anchored_histogram(samples, anchor, width);

    let cdf = |x: f64| 0.5 * libm::erfc((mean - x) / (sd * std::f64::consts::SQRT_2));
    let bins = hist.len();
    // Expected counts with open outer bins.
    let expected: Vec<f64> = (0..bins)
        .map(|b| {
            let lo = if b == 0 { 0.0 } else { cdf(hist.edges[b]) };
            let hi = if b + 1 == bins { 1.0 } else { cdf(hist.edges[b + 1]) };
            n * (hi - lo)
        })
        .collect();
    let merged = merge_tails(&hist.counts, &expected);
    let chi2: f64 = merged.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    let dof = merged.len().saturating_sub(3).max(1);

    Ok(GaussianFit {
        mean,
        sd,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        reduced_chi2: chi2 / dof as f64,
        dof,
        unimodal: is_unimodal(&hist.counts),
        histogram: hist,
    })
}

/// Linear histogram whose edges are `anchor + k * width`.
fn anchored_histogram(samples: &[f64], anchor: f64, width: f64) -> Histogram {
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = ((max - anchor) / width).floor() as usize + 1;
    let edges: Vec<f64> = (0..=bins).map(|k| anchor + k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        counts[(((x - anchor) / width).floor() as usize).min(bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    Histogram {
        binning: Binning::Linear { width },
        edges,
        counts,
        density,
    }
}

/// Merges bins inward from both tails until every merged bin expects at
/// least `MIN_EXPECTED` counts.
fn merge_tails(observed: &[u64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64, e))
        .collect();
    while pairs.len() > 1 && pairs[0].1 < MIN_EXPECTED {
        let (o, e) = pairs.remove(0);
        pairs[0].0 += o;
        pairs[0].1 += e;
    }
    while pairs.len() > 1 && pairs[pairs.len() - 1].1 < MIN_EXPECTED {
        let (o, e) = pairs.pop().unwrap();
        let last = pairs.len() - 1;
        pairs[last].0 += o;
        pairs[last].1 += e;
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeScalingFit {
    pub phi: f64,
    pub phi_se: f64,
    pub amplitude: f64,
    /// Sum of squared log residuals.
    pub chi2: f64,
    pub points: usize,
}

impl SizeScalingFit {
    /// The jump vanishes with size, by more than one standard error.
    pub fn weakly_discontinuous(&self) -> bool {
        self.phi - self.phi_se > 0.0
    }
}

/// Fits `jump = amplitude * L^-phi` to `(L, jump)` points.
pub fn fit_size_scaling(points: &[(f64, f64)]) -> Result<SizeScalingFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "size scaling needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(l, j)) = points.iter().find(|&&(l, j)| !(l > 0.0 && j > 0.0)) {
        return Err(Error::Fit(format!("cannot take logs of point ({l}, {j})")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    if lx.iter().all(|&x| x == lx[0]) {
        return Err(Error::Fit("size scaling needs at least two distinct sizes".into()));
    }
    let line = fit_line(&lx, &ly);
    Ok(SizeScalingFit {
        phi: -line.slope,
        phi_se: line.slope_se,
        amplitude: line.intercept.exp(),
        chi2: line.ssr,
        points: points.len(),
    })
}
