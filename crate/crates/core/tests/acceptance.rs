//! Acceptance suite: every criterion runs at its stated size, tolerance and
//! time budget, and prints one PASS or FAIL line. The process exits nonzero
//! if any criterion fails.
//!
//! Run with `cargo test -p hierlat --test acceptance`.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hierlat::avalanche::{avalanche_ensemble, successful_times, EnsembleOptions};
use hierlat::ensemble::{run_experiment, with_workers, ExperimentConfig, ExperimentKind, ResultSet};
use hierlat::lattice::{
    compute_capacities, find_trunk, generate, label_clusters, CapacityField, Direction, Family, Lattice,
    LatticeSpec,
};
use hierlat::percolation::{
    density_sweep, free_cluster_history, jump_scaling, order_parameter, total_capacity, v_family,
    Connectivity, Insertion, MotionRule, OccupancyState, PercolationOptions,
};
use hierlat::stats::{best_window, fit_gaussian, fit_power_law, histogram, window_scan, Binning, PowerLawFit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Master seed shared by every stochastic criterion.
const SEED: u64 = 1;
const SIDE: usize = 100;
const LOG_BINS: Binning = Binning::Logarithmic { base: 1.3 };
const SCAN_MIN_BINS: usize = 5;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "V-lattice closed forms", budget: secs(1), run: c1_closed_forms },
        Criterion { id: 2, name: "capacity reachability oracle", budget: secs(10), run: c2_capacity_oracle },
        Criterion { id: 3, name: "f=0.05 power law", budget: secs(120), run: c3_small_weight_power_law },
        Criterion { id: 4, name: "f=0.2 power law", budget: secs(120), run: c4_larger_weight_power_law },
        Criterion { id: 5, name: "f=0.5, 0.9 no power law", budget: secs(120), run: c5_heavy_weights_no_power_law },
        Criterion { id: 6, name: "base lattice Gaussian times", budget: secs(120), run: c6_base_gaussian },
        Criterion { id: 7, name: "explosive jump on V lattice", budget: secs(15 * 60), run: c7_explosive_jump },
        Criterion { id: 8, name: "jump scaling exponents", budget: secs(45 * 60), run: c8_jump_scaling },
        Criterion { id: 9, name: "perturbation destroys power law", budget: secs(120), run: c9_perturbed_no_power_law },
        Criterion { id: 10, name: "determinism and worker independence", budget: secs(600), run: c10_determinism },
        Criterion { id: 11, name: "percolation micro-oracle", budget: secs(30), run: c11_micro_oracle },
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| only.is_none_or(|o| o == c.id)) {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_message(&e))));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.budget => Err(format!("{detail}; over the {:?} budget", c.budget)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {:>2} {} [{:.1}s]: {detail}", c.id, c.name, took.as_secs_f64());
        if outcome.is_err() {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1 --------------------------------------------------------------------------

fn c1_closed_forms() -> Outcome {
    let mut notes = Vec::new();
    for m in [4u64, 8, 16, 100] {
        let lat = generate(&LatticeSpec::square(m as usize, Family::V, 0)).map_err(|e| e.to_string())?;
        let caps = compute_capacities(&lat);
        let trunk = find_trunk(&lat, &caps, &label_clusters(&lat));
        for (d, &site) in trunk.sites.iter().enumerate() {
            let d = d as u64 + 1;
            if caps.get(site) != d * (d + 1) / 2 {
                return Err(format!("M={m}: trunk capacity {} at layer {d}", caps.get(site)));
            }
        }
        let want = m * (m + 1) * (m + 2) / 6;
        if trunk.capacity != want {
            return Err(format!("M={m}: W_T = {} but closed form {want}", trunk.capacity));
        }
        notes.push(format!("M={m} W_T={}", trunk.capacity));
    }
    Ok(notes.join(", "))
}

// 2 --------------------------------------------------------------------------

/// Number of sites whose downward path passes through `target`, by walking
/// every path; independent of the capacity recursion.
fn reach_count(m: usize, n: usize, dirs: &[Direction], target: usize) -> u64 {
    let child = |s: usize| -> Option<usize> {
        let (d, j) = (s / m, s % m);
        (d + 1 < n).then(|| {
            (d + 1) * m
                + match dirs[s] {
                    Direction::Left => j,
                    Direction::Right => (j + 1) % m,
                }
        })
    };
    (0..m * n)
        .filter(|&s| s != target)
        .filter(|&s| {
            let mut cur = s;
            while let Some(c) = child(cur) {
                if c == target {
                    return true;
                }
                cur = c;
            }
            false
        })
        .count() as u64
}

fn c2_capacity_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut sites = 0;
    for _ in 0..200 {
        let (m, n) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let p: f64 = rng.gen_range(0.05..0.95);
        let dirs: Vec<Direction> = (0..m * (n - 1))
            .map(|_| if rng.gen::<f64>() < p { Direction::Left } else { Direction::Right })
            .collect();
        let spec = LatticeSpec::new(m, n, Family::Base { p: 0.5 }, 0);
        let lat = Lattice::from_directions(spec, dirs.clone()).map_err(|e| e.to_string())?;
        let caps = compute_capacities(&lat);
        for s in 0..m * n {
            let want = reach_count(m, n, &dirs, s) + 1;
            if caps.get(s) != want {
                return Err(format!("{m}x{n}: site {s} capacity {} but oracle {want}", caps.get(s)));
            }
        }
        for d in 0..n {
            let sum: u64 = caps.layer(d).iter().sum();
            if sum != (m * (d + 1)) as u64 {
                return Err(format!("{m}x{n}: layer {} sums to {sum}", d + 1));
            }
        }
        sites += m * n;
    }
    Ok(format!("200 lattices, {sites} sites, capacities and layer sums exact"))
}

// 3, 4, 5, 9 -----------------------------------------------------------------

fn avalanche_times(family: Family, fraction: f64) -> Vec<f64> {
    let spec = LatticeSpec::square(SIDE, family, 0);
    let records = avalanche_ensemble(&spec, fraction, 1000, SEED, &EnsembleOptions::default())
        .expect("avalanche ensemble");
    successful_times(&records)
}

/// The f=0.05 V-lattice run, its fit on the small-t window, and the best
/// window of its scan; shared by criteria 3, 5 and 9.
struct Reference {
    fit: PowerLawFit,
    scan_best: f64,
    samples: usize,
}

fn reference() -> &'static Reference {
    static REF: OnceLock<Reference> = OnceLock::new();
    REF.get_or_init(|| {
        let ts = avalanche_times(Family::V, 0.05);
        let hist = histogram(&ts, LOG_BINS).expect("histogram");
        let fit = fit_power_law(&hist, (30.0, 80.0)).expect("fit");
        let scan = window_scan(&hist, SCAN_MIN_BINS);
        Reference {
            fit,
            scan_best: best_window(&scan).map_or(f64::INFINITY, |w| w.reduced_chi2),
            samples: ts.len(),
        }
    })
}

fn c3_small_weight_power_law() -> Outcome {
    let r = reference();
    ensure(
        (0.98..=1.38).contains(&r.fit.alpha),
        format!(
            "alpha {:.3} on t in [30, 80] ({} bins, {} successes), needs [0.98, 1.38]; chi2 {:.4}",
            r.fit.alpha, r.fit.points, r.samples, r.fit.chi2
        ),
    )
}

fn c4_larger_weight_power_law() -> Outcome {
    let ts = avalanche_times(Family::V, 0.2);
    let hist = histogram(&ts, LOG_BINS).map_err(|e| e.to_string())?;
    let fit = fit_power_law(&hist, (50.0, 110.0)).map_err(|e| e.to_string())?;
    ensure(
        (2.4..=3.5).contains(&fit.alpha),
        format!(
            "alpha {:.3} on t in [50, 110] ({} bins), needs [2.4, 3.5]; chi2 {:.4}",
            fit.alpha, fit.points, fit.chi2
        ),
    )
}

/// Best reduced chi-square over all windows of at least five nonempty bins.
fn scan_best(family: Family, fraction: f64) -> Result<(f64, usize), String> {
    let ts = avalanche_times(family, fraction);
    let hist = histogram(&ts, LOG_BINS).map_err(|e| e.to_string())?;
    let scan = window_scan(&hist, SCAN_MIN_BINS);
    Ok((best_window(&scan).map_or(f64::INFINITY, |w| w.reduced_chi2), scan.len()))
}

fn c5_heavy_weights_no_power_law() -> Outcome {
    let threshold = reference().fit.reduced_chi2();
    let mut ok = true;
    let mut notes = vec![format!("threshold {threshold:.4}")];
    for f in [0.5, 0.9] {
        let (best, windows) = scan_best(Family::V, f)?;
        ok &= best > threshold;
        notes.push(format!("f={f} best {best:.4} over {windows} windows"));
    }
    ensure(ok, notes.join(", "))
}

fn c9_perturbed_no_power_law() -> Outcome {
    let r = reference();
    let threshold = r.fit.reduced_chi2();
    let (best, windows) = scan_best(Family::PerturbedV { q: 0.1 }, 0.05)?;
    let v_passes = r.scan_best <= threshold;
    ensure(
        v_passes && best > threshold,
        format!(
            "threshold {threshold:.4}; V best {:.4} ({}), q=0.1 best {best:.4} over {windows} windows ({})",
            r.scan_best,
            if v_passes { "fits" } else { "does not fit" },
            if best > threshold { "no power law" } else { "fits" }
        ),
    )
}

// 6 --------------------------------------------------------------------------

fn c6_base_gaussian() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for f in [0.1, 0.2] {
        let ts = avalanche_times(Family::Base { p: 0.5 }, f);
        let g = fit_gaussian(&ts).map_err(|e| e.to_string())?;
        ok &= g.unimodal && g.skewness.abs() < 0.5 && g.reduced_chi2 < 5.0;
        notes.push(format!(
            "f={f}: unimodal {}, skewness {:.3}, reduced chi2 {:.2}",
            g.unimodal, g.skewness, g.reduced_chi2
        ));
    }
    ensure(ok, notes.join("; "))
}

// 7 --------------------------------------------------------------------------

/// Whole packets per site up to the total capacity per site.
fn unit_grid(spec: &LatticeSpec) -> Vec<f64> {
    let max = total_capacity(spec) / spec.sites() as u64;
    (0..=max).map(|k| k as f64).collect()
}

fn c7_explosive_jump() -> Outcome {
    let opts = PercolationOptions::default();
    let v = LatticeSpec::square(SIDE, Family::V, 0);
    let sweep = density_sweep(&v, &unit_grid(&v), 500, SEED, &opts).map_err(|e| e.to_string())?;
    let mean_jump = sweep.records.iter().map(|r| r.jump.delta).sum::<f64>() / 500.0;
    let drop = sweep
        .points
        .windows(2)
        .map(|p| p[0].mean_s - p[1].mean_s)
        .fold(0.0, f64::max);
    let base = LatticeSpec::square(SIDE, Family::Base { p: 0.5 }, 0);
    let control = density_sweep(&base, &unit_grid(&base), 500, SEED, &opts).map_err(|e| e.to_string())?;
    let base_jump = control.records.iter().map(|r| r.jump.delta).sum::<f64>() / 500.0;
    ensure(
        mean_jump >= 0.1 && drop >= 0.1 && base_jump < 0.02,
        format!(
            "V mean largest jump {mean_jump:.4} (>= 0.1), largest mean-S drop {drop:.4} (>= 0.1); \
             base mean largest jump {base_jump:.4} (< 0.02)"
        ),
    )
}

// 8 --------------------------------------------------------------------------

fn c8_jump_scaling() -> Outcome {
    const Q: [f64; 6] = [0.05, 0.15, 0.25, 0.35, 0.45, 0.50];
    const PAPER: [f64; 6] = [0.0019, 0.0023, 0.0029, 0.0059, 0.0079, 0.011];
    let families: Vec<Family> = Q.iter().map(|&q| v_family(q)).collect();
    let table = jump_scaling(&families, &[50, 75, 100, 150], 200, SEED, &PercolationOptions::default())
        .map_err(|e| e.to_string())?;
    let phi: Vec<f64> = table.fits.iter().map(|f| f.fit.phi).collect();
    let monotone = phi.windows(2).all(|w| w[1] >= w[0]);
    let mut ok = monotone;
    let mut notes = Vec::new();
    for ((&q, &p), &got) in Q.iter().zip(&PAPER).zip(&phi) {
        let good = got > 0.0 && got >= p / 3.0 && got <= 3.0 * p;
        ok &= good;
        notes.push(format!("q={q}: {got:.4} vs {p}{}", if good { "" } else { " x" }));
    }
    notes.push(format!("nondecreasing {monotone}"));
    ensure(ok, notes.join(", "))
}

// 10 -------------------------------------------------------------------------

/// Result text with the wall-clock block removed.
fn simulation_text(rs: &ResultSet) -> String {
    let text = rs.to_text();
    let start = text.find("[meta]\n").unwrap();
    let end = text.find("[summary]\n").unwrap();
    format!("{}{}", &text[..start], &text[end..])
}

fn c10_determinism() -> Outcome {
    let mut configs = Vec::new();
    for (family, f) in [(Family::V, 0.05), (Family::Base { p: 0.5 }, 0.1), (Family::PerturbedV { q: 0.1 }, 0.2)] {
        let mut c = ExperimentConfig::new(ExperimentKind::Avalanche);
        (c.width, c.depth, c.family, c.fraction, c.realizations, c.seed) = (40, 40, family, f, 300, SEED);
        c.fit_window = Some((5.0, 40.0));
        configs.push(c);
    }
    for deposit in [hierlat::percolation::DepositRule::FixedSite, hierlat::percolation::DepositRule::Uniform] {
        let mut c = ExperimentConfig::new(ExperimentKind::PercolationSweep);
        (c.width, c.depth, c.family, c.realizations, c.seed) = (30, 30, Family::V, 60, SEED);
        c.mu_grid = (0..=15).map(|k| k as f64).collect();
        c.percolation.deposit = deposit;
        configs.push(c);
    }
    let mut c = ExperimentConfig::new(ExperimentKind::JumpScaling);
    (c.sizes, c.q_list, c.realizations, c.seed) = (vec![12, 18, 24], vec![0.0, 0.25], 30, SEED);
    configs.push(c);

    let dir = tempdir();
    for (i, c) in configs.iter().enumerate() {
        let reference = with_workers(Some(1), || run_experiment(c)).unwrap().map_err(|e| e.to_string())?;
        let want = simulation_text(&reference);
        for workers in [1, 4, 8] {
            let again = with_workers(Some(workers), || run_experiment(c)).unwrap().map_err(|e| e.to_string())?;
            if simulation_text(&again) != want {
                return Err(format!("{} differs with {workers} workers", c.kind.name()));
            }
        }
        let path = dir.join(format!("run{i}.txt"));
        hierlat::ensemble::write_results(&reference, &path).map_err(|e| e.to_string())?;
        let back = hierlat::ensemble::read_results(&path).map_err(|e| e.to_string())?;
        if back != reference {
            return Err(format!("{} does not round-trip through {}", c.kind.name(), path.display()));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} experiments identical for 1, 4 and 8 workers and across reruns; files round-trip", configs.len()))
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("hierlat-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

// 11 -------------------------------------------------------------------------

/// Packet counts with a direct transcription of the settling rules.
#[derive(Clone)]
struct Oracle<'a> {
    m: usize,
    n: usize,
    dirs: &'a [Direction],
    caps: &'a [u64],
    counts: Vec<u64>,
}

impl Oracle<'_> {
    fn child(&self, s: usize) -> Option<usize> {
        let (d, j) = (s / self.m, s % self.m);
        if d + 1 == self.n {
            return None;
        }
        Some(
            (d + 1) * self.m
                + match self.dirs[s] {
                    Direction::Left => j,
                    Direction::Right => (j + 1) % self.m,
                },
        )
    }

    fn full(&self, s: usize) -> bool {
        self.counts[s] == self.caps[s]
    }

    /// Settled site, or `None` for a discard.
    fn drop_packet(&mut self, col: usize, motion: MotionRule) -> Option<usize> {
        let mut s = col;
        let target = match motion {
            MotionRule::PassThrough => loop {
                if !self.full(s) {
                    break Some(s);
                }
                match self.child(s) {
                    Some(c) => s = c,
                    None => break None,
                }
            },
            MotionRule::GreedyDescent => {
                while let Some(c) = self.child(s).filter(|&c| !self.full(c)) {
                    s = c;
                }
                (!self.full(s)).then_some(s)
            }
        };
        if let Some(t) = target {
            self.counts[t] += 1;
        }
        target
    }

    fn neighbours(&self, s: usize, conn: Connectivity) -> Vec<usize> {
        let mut out = Vec::new();
        match conn {
            Connectivity::Links => {
                out.extend(self.child(s));
                out.extend((0..self.m * self.n).filter(|&p| self.child(p) == Some(s)));
            }
            Connectivity::Grid => {
                let (d, j, m) = (s / self.m, s % self.m, self.m);
                if d + 1 < self.n {
                    out.push((d + 1) * m + j);
                    out.push((d + 1) * m + (j + 1) % m);
                }
                if d > 0 {
                    out.push((d - 1) * m + j);
                    out.push((d - 1) * m + (j + m - 1) % m);
                }
            }
        }
        out.retain(|&x| x != s);
        out
    }

    /// Largest cluster of sites with `full(s) == occupied`.
    fn largest(&self, conn: Connectivity, occupied: bool) -> usize {
        let len = self.m * self.n;
        let mut seen = vec![false; len];
        let mut best = 0;
        for start in 0..len {
            if seen[start] || self.full(start) != occupied {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut size = 0;
            while let Some(s) = stack.pop() {
                size += 1;
                for nb in self.neighbours(s, conn) {
                    if !seen[nb] && self.full(nb) == occupied {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
            best = best.max(size);
        }
        best
    }
}

struct Walk<'a> {
    lat: &'a Lattice,
    caps: &'a CapacityField,
    motion: MotionRule,
    conn: Connectivity,
    /// Below this depth every sequence is enumerated; deeper, each packet
    /// count state is expanded once.
    full_depth: usize,
    expanded: HashMap<Vec<u64>, ()>,
    nodes: u64,
}

impl Walk<'_> {
    fn visit(&mut self, state: &OccupancyState, oracle: &Oracle, free_history: &mut Vec<u32>, depth: usize) -> Result<(), String> {
        let m = self.lat.width();
        let all_blocked = (0..m).all(|c| oracle.clone().drop_packet(c, self.motion).is_none());
        if depth >= self.full_depth && self.expanded.insert(oracle.counts.clone(), ()).is_some() {
            return Ok(());
        }
        for col in 0..m {
            self.nodes += 1;
            let mut st = state.clone();
            let mut or = oracle.clone();
            let got = st.insert(self.lat, self.caps, col);
            let want = or.drop_packet(col, self.motion);
            let want_ins = match want {
                Some(site) => Insertion::Settled { site, saturated: or.full(site) },
                None => Insertion::Discarded,
            };
            if got != want_ins {
                return Err(format!("insert at column {col}: {got:?} but oracle {want_ins:?}"));
            }
            if st.counts() != &or.counts[..] {
                return Err("packet counts diverge".into());
            }
            if st.settled() + st.discarded() != st.deposited() {
                return Err("packet conservation broken".into());
            }
            let free = or.largest(self.conn, false);
            let l = (m * self.lat.depth()) as f64;
            let (s, s1) = order_parameter(&st, self.lat);
            if s != free as f64 / l || s1 != 1.0 - free as f64 / l {
                return Err(format!("order parameter ({s}, {s1}) but oracle free cluster {free}"));
            }
            if st.largest_occupied() != or.largest(self.conn, true) {
                return Err("largest occupied cluster diverges".into());
            }
            free_history.push(free as u32);
            let history = free_cluster_history(self.lat, &st, st.deposited());
            if history != *free_history {
                return Err(format!("free-cluster history {history:?} but oracle {free_history:?}"));
            }
            if !(all_blocked && want.is_none()) {
                self.visit(&st, &or, free_history, depth + 1)?;
            }
            free_history.pop();
        }
        Ok(())
    }
}

fn c11_micro_oracle() -> Outcome {
    let mut lattices = 0;
    let mut nodes = 0u64;
    for m in 1..=3 {
        for n in 1..=3 {
            let links = m * (n - 1);
            for mask in 0..1u32 << links {
                let dirs: Vec<Direction> = (0..links)
                    .map(|i| if mask >> i & 1 == 0 { Direction::Left } else { Direction::Right })
                    .collect();
                let spec = LatticeSpec::new(m, n, Family::Base { p: 0.5 }, 0);
                let lat = Lattice::from_directions(spec, dirs.clone()).map_err(|e| e.to_string())?;
                let caps = compute_capacities(&lat);
                lattices += 1;
                for motion in [MotionRule::PassThrough, MotionRule::GreedyDescent] {
                    for conn in [Connectivity::Links, Connectivity::Grid] {
                        let oracle = Oracle { m, n, dirs: &dirs, caps: caps.values(), counts: vec![0; m * n] };
                        let state = OccupancyState::new(&lat, motion, conn);
                        let mut walk = Walk {
                            lat: &lat,
                            caps: &caps,
                            motion,
                            conn,
                            full_depth: 8,
                            expanded: HashMap::new(),
                            nodes: 0,
                        };
                        let mut history = vec![oracle.largest(conn, false) as u32];
                        walk.visit(&state, &oracle, &mut history, 0)
                            .map_err(|e| format!("{m}x{n} mask {mask:b} {motion:?} {conn:?}: {e}"))?;
                        nodes += walk.nodes;
                    }
                }
            }
        }
    }
    Ok(format!("{lattices} lattices x 2 motion rules x 2 adjacencies, {nodes} insertions checked"))
}
