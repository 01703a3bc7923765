//! Packet percolation.
//!
//! Packets are dropped on the top layer one at a time and come to rest on a
//! site with spare capacity. A site is occupied once its packet count reaches
//! its capacity. The order parameter `S` is the size of the largest cluster of
//! free (not yet saturated) sites divided by the number of sites `L`, and
//! `S1 = 1 - S`.
//!
//! Free-cluster sizes are recovered for every insertion count at once by
//! replaying the saturation times backwards through a union-find: in reverse
//! the free set only grows.

use std::cmp::Reverse;
use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dsu::DisjointSets;
use crate::error::{Error, Result};
use crate::lattice::{self, CapacityField, Family, Lattice, LatticeSpec};
use crate::seed::{purpose_seed, seed_stream, Purpose};
use crate::stats::{fit_size_scaling, SizeScalingFit};

const NO_SITE: u32 = u32::MAX;
const FREE: u64 = u64::MAX;

/// Where a packet comes to rest along its downward path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionRule {
    /// Saturated sites pass packets on; the packet settles at the first site
    /// with spare capacity, so paths fill from the top.
    #[default]
    PassThrough,
    /// The packet keeps moving while the next site is not saturated and
    /// settles on the last site it reaches, so paths fill from the bottom.
    GreedyDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepositRule {
    /// One top-layer site, drawn once per realization, receives every packet.
    #[default]
    FixedSite,
    /// Every packet lands on an independently drawn top-layer site.
    Uniform,
}

/// Adjacency used when measuring clusters of free or occupied sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Only the lattice's connection links.
    #[default]
    Links,
    /// All four diagonal lattice neighbours, connected or not.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PercolationOptions {
    pub motion: MotionRule,
    pub deposit: DepositRule,
    pub connectivity: Connectivity,
}

/// Neighbours of `site` under `conn`, without duplicates.
fn neighbours(lattice: &Lattice, site: usize, conn: Connectivity) -> impl Iterator<Item = usize> {
    let mut out = [usize::MAX; 4];
    let mut n = 0;
    let mut push = |s: usize| {
        if s != site && !out[..n].contains(&s) {
            out[n] = s;
            n += 1;
        }
    };
    match conn {
        Connectivity::Links => {
            if let Some(c) = lattice.child(site) {
                push(c);
            }
            for p in lattice.parents(site) {
                push(p);
            }
        }
        Connectivity::Grid => {
            let w = lattice.width();
            let (layer, col) = (lattice.layer_of(site), lattice.col_of(site));
            if layer + 1 < lattice.depth() {
                push(lattice.site(layer + 1, col));
                push(lattice.site(layer + 1, (col + 1) % w));
            }
            if layer > 0 {
                push(lattice.site(layer - 1, col));
                push(lattice.site(layer - 1, (col + w - 1) % w));
            }
        }
    }
    out.into_iter().take(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Settled { site: usize, saturated: bool },
    Discarded,
}

/// Packet counts and the occupied (saturated) sub-network.
#[derive(Debug, Clone)]
pub struct OccupancyState {
    motion: MotionRule,
    connectivity: Connectivity,
    counts: Vec<u64>,
    /// Insertion number at which each site saturated, `FREE` otherwise.
    saturated_at: Vec<u64>,
    deposited: u64,
    settled: u64,
    discarded: u64,
    occupied: DisjointSets,
    largest_occupied: usize,
    saturated_count: usize,
    /// Pass-through: next site with spare capacity along the path.
    vacancy: Vec<u32>,
    /// Greedy descent: the path of each top column, `depth` entries per column.
    paths: Vec<u32>,
}

impl OccupancyState {
    pub fn new(lattice: &Lattice, motion: MotionRule, connectivity: Connectivity) -> Self {
        let n = lattice.len();
        let (vacancy, paths) = match motion {
            MotionRule::PassThrough => ((0..n as u32).collect(), Vec::new()),
            MotionRule::GreedyDescent => {
                let mut paths = Vec::with_capacity(n);
                for col in 0..lattice.width() {
                    let mut site = Some(lattice.site(0, col));
                    while let Some(s) = site {
                        paths.push(s as u32);
                        site = lattice.child(s);
                    }
                }
                (Vec::new(), paths)
            }
        };
        Self {
            motion,
            connectivity,
            counts: vec![0; n],
            saturated_at: vec![FREE; n],
            deposited: 0,
            settled: 0,
            discarded: 0,
            occupied: DisjointSets::new(n),
            largest_occupied: 0,
            saturated_count: 0,
            vacancy,
            paths,
        }
    }

    pub fn count(&self, site: usize) -> u64 {
        self.counts[site]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn is_saturated(&self, site: usize) -> bool {
        self.saturated_at[site] != FREE
    }

    /// Insertion number at which `site` saturated.
    pub fn saturated_at(&self, site: usize) -> Option<u64> {
        Some(self.saturated_at[site]).filter(|&t| t != FREE)
    }

    pub fn deposited(&self) -> u64 {
        self.deposited
    }

    pub fn settled(&self) -> u64 {
        self.settled
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    pub fn saturated_count(&self) -> usize {
        self.saturated_count
    }

    /// Size of the largest cluster of saturated sites.
    pub fn largest_occupied(&self) -> usize {
        self.largest_occupied
    }

    pub fn motion(&self) -> MotionRule {
        self.motion
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    fn first_vacancy(&mut self, mut x: u32) -> Option<usize> {
        while x != NO_SITE && self.vacancy[x as usize] != x {
            let next = self.vacancy[x as usize];
            if next != NO_SITE {
                self.vacancy[x as usize] = self.vacancy[next as usize];
            }
            x = next;
        }
        (x != NO_SITE).then_some(x as usize)
    }

    /// Last unsaturated site above the saturated tail of the column's path.
    /// Under greedy descent the saturated sites of any path form its tail.
    fn descent_target(&self, depth: usize, col: usize) -> Option<usize> {
        let path = &self.paths[col * depth..(col + 1) * depth];
        let first_saturated = path.partition_point(|&s| !self.is_saturated(s as usize));
        first_saturated.checked_sub(1).map(|i| path[i] as usize)
    }

    /// Drops one packet on top-layer column `col`.
    pub fn insert(&mut self, lattice: &Lattice, caps: &CapacityField, col: usize) -> Insertion {
        self.deposited += 1;
        let target = match self.motion {
            MotionRule::PassThrough => self.first_vacancy(lattice.site(0, col) as u32),
            MotionRule::GreedyDescent => self.descent_target(lattice.depth(), col),
        };
        let Some(site) = target else {
            self.discarded += 1;
            return Insertion::Discarded;
        };
        self.settled += 1;
        self.counts[site] += 1;
        let saturated = self.counts[site] == caps.get(site);
        if saturated {
            self.mark_saturated(lattice, site);
        }
        Insertion::Settled { site, saturated }
    }

    fn mark_saturated(&mut self, lattice: &Lattice, site: usize) {
        self.saturated_at[site] = self.deposited;
        self.saturated_count += 1;
        if self.motion == MotionRule::PassThrough {
            self.vacancy[site] = lattice.child(site).map_or(NO_SITE, |c| c as u32);
        }
        let mut size = 1;
        for nb in neighbours(lattice, site, self.connectivity) {
            if self.is_saturated(nb) {
                size = self.occupied.union(site, nb);
            }
        }
        self.largest_occupied = self.largest_occupied.max(size);
    }
}

pub fn insert_packet(
    state: &mut OccupancyState,
    lattice: &Lattice,
    caps: &CapacityField,
    col: usize,
) -> Insertion {
    state.insert(lattice, caps, col)
}

/// Largest cluster of sites selected by `keep`, by breadth-first search.
pub fn largest_cluster(lattice: &Lattice, conn: Connectivity, keep: impl Fn(usize) -> bool) -> usize {
    let mut seen = vec![false; lattice.len()];
    let mut queue = VecDeque::new();
    let mut best = 0;
    for start in 0..lattice.len() {
        if seen[start] || !keep(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(s) = queue.pop_front() {
            size += 1;
            for nb in neighbours(lattice, s, conn) {
                if !seen[nb] && keep(nb) {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        best = best.max(size);
    }
    best
}

/// `(S, S1)` of the current state, recomputed from scratch.
pub fn order_parameter(state: &OccupancyState, lattice: &Lattice) -> (f64, f64) {
    let free = largest_cluster(lattice, state.connectivity, |s| !state.is_saturated(s));
    let s = free as f64 / lattice.len() as f64;
    (s, 1.0 - s)
}

/// Order parameter after every insertion `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillTrajectory {
    sites: usize,
    n_max: u64,
    /// Largest free cluster after `n` insertions, up to the last insertion
    /// that could still change the state.
    largest_free: Vec<u32>,
}

impl FillTrajectory {
    pub fn from_largest_free(sites: usize, n_max: u64, largest_free: Vec<u32>) -> Self {
        assert!(!largest_free.is_empty() && largest_free.len() as u64 <= n_max + 1);
        Self {
            sites,
            n_max,
            largest_free,
        }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn largest_free(&self, n: u64) -> u32 {
        let last = self.largest_free.len() - 1;
        self.largest_free[(n as usize).min(last)]
    }

    pub fn s(&self, n: u64) -> f64 {
        self.largest_free(n) as f64 / self.sites as f64
    }

    pub fn s1(&self, n: u64) -> f64 {
        1.0 - self.s(n)
    }

    pub fn mu(&self, n: u64) -> f64 {
        n as f64 / self.sites as f64
    }

    /// Insertion count after which nothing changes any more.
    pub fn settled_at(&self) -> u64 {
        self.largest_free.len() as u64 - 1
    }

    /// Records `(n, mu, S, S1)` for every insertion count.
    pub fn records(&self) -> impl Iterator<Item = (u64, f64, f64, f64)> + '_ {
        (0..=self.n_max).map(|n| (n, self.mu(n), self.s(n), self.s1(n)))
    }
}

/// Replays saturation times backwards to get the largest free cluster after
/// each insertion `0..=n_end`.
pub fn free_cluster_history(lattice: &Lattice, state: &OccupancyState, n_end: u64) -> Vec<u32> {
    let n = lattice.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by_key(|&s| Reverse(state.saturated_at[s as usize]));
    let mut dsu = DisjointSets::new(n);
    let mut active = vec![false; n];
    let mut out = vec![0u32; n_end as usize + 1];
    let mut best = 0usize;
    let mut next = 0usize;
    for t in (0..=n_end).rev() {
        while next < n && state.saturated_at[order[next] as usize] > t {
            let s = order[next] as usize;
            next += 1;
            active[s] = true;
            let mut size = 1;
            for nb in neighbours(lattice, s, state.connectivity) {
                if active[nb] {
                    size = dsu.union(s, nb);
                }
            }
            best = best.max(size);
        }
        out[t as usize] = best as u32;
    }
    out
}

/// Fills the lattice with up to `n_max` packets and records `S` after each.
pub fn fill_trajectory(
    lattice: &Lattice,
    caps: &CapacityField,
    n_max: u64,
    seed: u64,
    options: &PercolationOptions,
) -> FillTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OccupancyState::new(lattice, options.motion, options.connectivity);
    let width = lattice.width();
    let fixed = match options.deposit {
        DepositRule::FixedSite => Some(rng.gen_range(0..width)),
        DepositRule::Uniform => None,
    };
    // A column that discarded once discards forever.
    let mut dead = vec![false; width];
    let mut alive = width;
    while state.deposited < n_max {
        let col = fixed.unwrap_or_else(|| rng.gen_range(0..width));
        if state.insert(lattice, caps, col) == Insertion::Discarded {
            if fixed.is_some() {
                break;
            }
            if !dead[col] {
                dead[col] = true;
                alive -= 1;
                if alive == 0 {
                    break;
                }
            }
        }
    }
    let history = free_cluster_history(lattice, &state, state.deposited);
    FillTrajectory::from_largest_free(lattice.len(), n_max, history)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    /// Largest single-insertion increase of `S1`.
    pub delta: f64,
    /// Insertion count right after that increase.
    pub n_star: u64,
    pub mu_c: f64,
}

pub fn largest_jump(trajectory: &FillTrajectory) -> JumpRecord {
    let free = &trajectory.largest_free;
    let (mut best, mut at) = (0u32, 0usize);
    for (i, pair) in free.windows(2).enumerate() {
        let drop = pair[0] - pair[1];
        if i == 0 || drop > best {
            best = drop;
            at = i + 1;
        }
    }
    let l = trajectory.sites as f64;
    JumpRecord {
        delta: best as f64 / l,
        n_star: at as u64,
        mu_c: at as f64 / l,
    }
}

/// Largest increase in a plain `S1` series; ties go to the earliest step.
pub fn largest_jump_series(s1: &[f64], sites: usize) -> JumpRecord {
    let mut best = (0.0f64, 0usize);
    for (i, pair) in s1.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if i == 0 || step > best.0 {
            best = (step.max(0.0), i + 1);
        }
    }
    JumpRecord {
        delta: best.0,
        n_star: best.1 as u64,
        mu_c: best.1 as f64 / sites as f64,
    }
}

/// Per-realization outcome of a percolation run.
#[derive(Debug, Clone, PartialEq)]
pub struct PercolationRecord {
    pub index: u64,
    pub sub_seed: u64,
    pub jump: JumpRecord,
    /// `S` at each requested grid point.
    pub grid_s: Vec<f64>,
}

fn realization_trajectory(
    spec: &LatticeSpec,
    n_max: u64,
    sub_seed: u64,
    options: &PercolationOptions,
) -> Result<FillTrajectory> {
    let spec = LatticeSpec {
        seed: purpose_seed(sub_seed, Purpose::Lattice),
        ..*spec
    };
    let lattice = lattice::generate(&spec)?;
    let caps = lattice::compute_capacities(&lattice);
    Ok(fill_trajectory(
        &lattice,
        &caps,
        n_max,
        purpose_seed(sub_seed, Purpose::Dynamics),
        options,
    ))
}

/// Total capacity of any lattice of this shape: layer `d` (from 1) sums to `M d`.
pub fn total_capacity(spec: &LatticeSpec) -> u64 {
    let (m, n) = (spec.width as u64, spec.depth as u64);
    m * n * (n + 1) / 2
}

fn grid_insertions(grid: &[f64], sites: usize) -> Vec<u64> {
    grid.iter()
        .map(|&mu| (mu * sites as f64).round() as u64)
        .collect()
}

/// One trajectory; returns its largest jump and `S` read off at each grid point.
pub fn percolation_realization(
    spec: &LatticeSpec,
    grid: &[f64],
    n_max: u64,
    master_seed: u64,
    index: u64,
    options: &PercolationOptions,
) -> Result<PercolationRecord> {
    let sub_seed = seed_stream(master_seed, index);
    let traj = realization_trajectory(spec, n_max, sub_seed, options)?;
    let grid_s = grid_insertions(grid, spec.sites())
        .into_iter()
        .map(|n| traj.s(n))
        .collect();
    Ok(PercolationRecord {
        index,
        sub_seed,
        jump: largest_jump(&traj),
        grid_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    pub mean_s: f64,
    pub sd_s: f64,
    pub mean_s1: f64,
    pub sd_s1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub records: Vec<PercolationRecord>,
}

pub(crate) fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn validate_grid(spec: &LatticeSpec, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("mu_grid", "must not be empty"));
    }
    let max_mu = total_capacity(spec) as f64 / spec.sites() as f64;
    if grid.iter().any(|&mu| !(0.0..=max_mu).contains(&mu)) {
        return Err(Error::config("mu_grid", format!("values must lie in [0, {max_mu}]")));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::config("mu_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Ensemble mean and spread of `S` and `S1` over a packet-density grid.
pub fn density_sweep(
    spec: &LatticeSpec,
    grid: &[f64],
    realizations: usize,
    master_seed: u64,
    options: &PercolationOptions,
) -> Result<SweepResult> {
    spec.validate()?;
    validate_grid(spec, grid)?;
    if realizations == 0 {
        return Err(Error::config("realizations", "must be at least 1"));
    }
    let n_max = *grid_insertions(grid, spec.sites()).last().unwrap();
    let records: Vec<PercolationRecord> = (0..realizations as u64)
        .into_par_iter()
        .map(|i| percolation_realization(spec, grid, n_max, master_seed, i, options))
        .collect::<Result<_>>()?;
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &mu)| {
            let s = records.iter().map(move |r| r.grid_s[k]);
            let (mean_s, sd_s) = mean_sd(s.clone());
            let (mean_s1, sd_s1) = mean_sd(s.map(|v| 1.0 - v));
            SweepPoint {
                mu,
                mean_s,
                sd_s,
                mean_s1,
                sd_s1,
            }
        })
        .collect();
    Ok(SweepResult { points, records })
}

/// Mean largest jump for one family at one size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSizeRow {
    pub family: Family,
    pub side: usize,
    pub sites: usize,
    pub mean_jump: f64,
    pub sd_jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpScalingFit {
    pub family: Family,
    pub fit: SizeScalingFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpScalingTable {
    pub rows: Vec<JumpSizeRow>,
    pub fits: Vec<JumpScalingFit>,
    /// Per-realization jumps, grouped like `rows`.
    pub jumps: Vec<Vec<f64>>,
}

/// Family used for perturbation strength `q`; zero gives the plain V lattice.
pub fn v_family(q: f64) -> Family {
    if q == 0.0 {
        Family::V
    } else {
        Family::PerturbedV { q }
    }
}

/// Mean largest jump versus system size for each family, with the exponent
/// of `mean jump ~ L^-phi` fitted per family. Square lattices of the given
/// sides are used; realization `r` shares its sub-seed across families and
/// sizes.
pub fn jump_scaling(
    families: &[Family],
    sides: &[usize],
    realizations: usize,
    master_seed: u64,
    options: &PercolationOptions,
) -> Result<JumpScalingTable> {
    if sides.len() < 3 {
        return Err(Error::config(
            "sizes",
            format!("need at least 3 sizes, got {}", sides.len()),
        ));
    }
    if realizations == 0 {
        return Err(Error::config("realizations", "must be at least 1"));
    }
    if families.is_empty() {
        return Err(Error::config("q", "need at least one family"));
    }
    for &family in families {
        for &side in sides {
            LatticeSpec::square(side, family, 0).validate()?;
        }
    }
    let tasks: Vec<(usize, usize, u64)> = (0..families.len())
        .flat_map(|f| (0..sides.len()).flat_map(move |s| (0..realizations as u64).map(move |r| (f, s, r))))
        .collect();
    let deltas: Vec<f64> = tasks
        .par_iter()
        .map(|&(f, s, r)| {
            let spec = LatticeSpec::square(sides[s], families[f], 0);
            let sub_seed = seed_stream(master_seed, r);
            let traj = realization_trajectory(&spec, total_capacity(&spec), sub_seed, options)?;
            Ok(largest_jump(&traj).delta)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut jumps = Vec::new();
    let mut fits = Vec::new();
    for (f, &family) in families.iter().enumerate() {
        let mut points = Vec::new();
        for (s, &side) in sides.iter().enumerate() {
            let start = (f * sides.len() + s) * realizations;
            let group = deltas[start..start + realizations].to_vec();
            let (mean_jump, sd_jump) = mean_sd(group.iter().copied());
            let sites = side * side;
            rows.push(JumpSizeRow {
                family,
                side,
                sites,
                mean_jump,
                sd_jump,
            });
            points.push((sites as f64, mean_jump));
            jumps.push(group);
        }
        fits.push(JumpScalingFit {
            family,
            fit: fit_size_scaling(&points)?,
        });
    }
    Ok(JumpScalingTable { rows, fits, jumps })
}
