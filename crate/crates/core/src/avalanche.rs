//! Weight-transmission avalanches.
//!
//! A test weight is dropped on a random top-layer site. Each site on the
//! downward path absorbs what it can and forwards the excess to its child.
//! Excess reaching the bottom starts a new cycle at a fresh random top-layer
//! site; the avalanche fails when a cycle lands on a site that has no spare
//! capacity left.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{self, CapacityField, Lattice, LatticeSpec};
use crate::seed::{purpose_seed, seed_stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvalancheConfig {
    pub test_weight: u64,
    /// Upper bound on cycles before the run is aborted.
    pub max_cycles: usize,
    /// Fail at any saturated site on the path, not only at the deposit site.
    pub strict_failure: bool,
}

impl AvalancheConfig {
    /// Default guard of ten cycles per layer.
    pub fn new(test_weight: u64, depth: usize) -> Self {
        Self {
            test_weight,
            max_cycles: 10 * depth.max(1),
            strict_failure: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvalancheStatus {
    Success,
    Failed { site: usize },
    /// The cycle guard tripped before the weight was absorbed.
    Aborted,
}

impl AvalancheStatus {
    pub fn label(&self) -> &'static str {
        match self {
            AvalancheStatus::Success => "success",
            AvalancheStatus::Failed { .. } => "failed",
            AvalancheStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvalancheOutcome {
    pub status: AvalancheStatus,
    /// Layers visited over all successful cycles; the deposit site counts.
    pub time: u64,
    pub cycles: usize,
    pub residual: u64,
    /// Weight absorbed per site, nonzero entries only.
    pub absorbed: BTreeMap<usize, u64>,
}

impl AvalancheOutcome {
    pub fn success(&self) -> bool {
        self.status == AvalancheStatus::Success
    }
}

pub fn run_avalanche<R: Rng + ?Sized>(
    lattice: &Lattice,
    caps: &CapacityField,
    config: &AvalancheConfig,
    rng: &mut R,
) -> AvalancheOutcome {
    let width = lattice.width();
    run_avalanche_with(lattice, caps, config, || rng.gen_range(0..width))
}

/// Runs one avalanche, taking each cycle's deposit column from `pick`.
pub fn run_avalanche_with(
    lattice: &Lattice,
    caps: &CapacityField,
    config: &AvalancheConfig,
    mut pick: impl FnMut() -> usize,
) -> AvalancheOutcome {
    let mut load = vec![0u64; lattice.len()];
    let mut remaining = config.test_weight;
    let mut time = 0u64;
    let mut cycles = 0usize;

    let status = 'run: loop {
        if remaining == 0 {
            break AvalancheStatus::Success;
        }
        if cycles >= config.max_cycles {
            break AvalancheStatus::Aborted;
        }
        let mut site = lattice.site(0, pick());
        if load[site] == caps.get(site) {
            break AvalancheStatus::Failed { site };
        }
        // Layers traversed in this cycle; discarded if the cycle fails.
        let mut visited = 0u64;
        loop {
            let spare = caps.get(site) - load[site];
            if spare == 0 && config.strict_failure {
                break 'run AvalancheStatus::Failed { site };
            }
            let take = spare.min(remaining);
            load[site] += take;
            remaining -= take;
            visited += 1;
            if remaining == 0 {
                break;
            }
            match lattice.child(site) {
                Some(child) => site = child,
                None => break,
            }
        }
        time += visited;
        cycles += 1;
    };

    let absorbed = load
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0)
        .map(|(s, &v)| (s, v))
        .collect();
    AvalancheOutcome {
        status,
        time,
        cycles,
        residual: remaining,
        absorbed,
    }
}

/// Rounds `fraction * trunk_capacity` half-up to a whole weight.
pub fn test_weight(fraction: f64, trunk_capacity: u64) -> u64 {
    (fraction * trunk_capacity as f64 + 0.5).floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvalancheRecord {
    pub index: u64,
    pub sub_seed: u64,
    pub trunk_capacity: u64,
    pub test_weight: u64,
    pub status: AvalancheStatus,
    pub time: u64,
    pub cycles: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnsembleOptions {
    pub strict_failure: bool,
    /// Overrides the default cycle guard.
    pub max_cycles: Option<usize>,
}

/// One avalanche on a fresh lattice per realization.
pub fn avalanche_realization(
    spec: &LatticeSpec,
    fraction: f64,
    master_seed: u64,
    index: u64,
    options: &EnsembleOptions,
) -> Result<AvalancheRecord> {
    let sub_seed = seed_stream(master_seed, index);
    let spec = LatticeSpec {
        seed: purpose_seed(sub_seed, Purpose::Lattice),
        ..*spec
    };
    let lattice = lattice::generate(&spec)?;
    let caps = lattice::compute_capacities(&lattice);
    let trunk = lattice::find_trunk(&lattice, &caps, &lattice::label_clusters(&lattice));
    let weight = test_weight(fraction, trunk.capacity);
    let mut config = AvalancheConfig::new(weight, spec.depth);
    config.strict_failure = options.strict_failure;
    if let Some(m) = options.max_cycles {
        config.max_cycles = m;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(purpose_seed(sub_seed, Purpose::Dynamics));
    let outcome = run_avalanche(&lattice, &caps, &config, &mut rng);
    Ok(AvalancheRecord {
        index,
        sub_seed,
        trunk_capacity: trunk.capacity,
        test_weight: weight,
        status: outcome.status,
        time: outcome.time,
        cycles: outcome.cycles,
    })
}

/// Runs `realizations` independent avalanches; records are ordered by index.
pub fn avalanche_ensemble(
    spec: &LatticeSpec,
    fraction: f64,
    realizations: usize,
    master_seed: u64,
    options: &EnsembleOptions,
) -> Result<Vec<AvalancheRecord>> {
    spec.validate()?;
    if realizations == 0 {
        return Err(Error::config("realizations", "must be at least 1"));
    }
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Error::config("fraction", format!("{fraction} must be positive")));
    }
    (0..realizations as u64)
        .into_par_iter()
        .map(|i| avalanche_realization(spec, fraction, master_seed, i, options))
        .collect()
}

/// Avalanche times of the successful records.
pub fn successful_times(records: &[AvalancheRecord]) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.status == AvalancheStatus::Success)
        .map(|r| r.time as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{compute_capacities, generate, Direction, Family};

    fn all_left(width: usize, depth: usize) -> Lattice {
        let spec = LatticeSpec::new(width, depth, Family::Base { p: 0.5 }, 0);
        Lattice::from_directions(spec, vec![Direction::Left; width * (depth - 1)]).unwrap()
    }

    #[test]
    fn zero_weight_succeeds_immediately() {
        let lat = all_left(3, 3);
        let caps = compute_capacities(&lat);
        let out = run_avalanche_with(&lat, &caps, &AvalancheConfig::new(0, 3), || unreachable!());
        assert_eq!(out.status, AvalancheStatus::Success);
        assert_eq!((out.time, out.cycles, out.residual), (0, 0, 0));
        assert!(out.absorbed.is_empty());
    }

    #[test]
    fn weight_within_deposit_capacity_takes_one_layer() {
        let lat = generate(&LatticeSpec::new(5, 5, Family::Base { p: 0.5 }, 3)).unwrap();
        let caps = compute_capacities(&lat);
        let out = run_avalanche_with(&lat, &caps, &AvalancheConfig::new(1, 5), || 2);
        assert!(out.success());
        assert_eq!((out.time, out.cycles), (1, 1));
    }

    #[test]
    fn two_by_two_all_left_hand_enumerated() {
        // Columns are independent chains with capacities 1 (top) and 2.
        let lat = all_left(2, 2);
        let caps = compute_capacities(&lat);
        let run = |w: u64, picks: &[usize]| {
            let mut it = picks.iter().copied();
            run_avalanche_with(&lat, &caps, &AvalancheConfig::new(w, 2), || it.next().unwrap())
        };
        let out = run(3, &[0]);
        assert_eq!((out.status, out.time, out.cycles), (AvalancheStatus::Success, 2, 1));
        // 4 overflows column 0 by one; landing on column 0 again fails.
        let out = run(4, &[0, 0]);
        assert_eq!(out.status, AvalancheStatus::Failed { site: 0 });
        assert_eq!((out.time, out.cycles, out.residual), (2, 1, 1));
        let out = run(4, &[0, 1]);
        assert_eq!((out.status, out.time, out.cycles), (AvalancheStatus::Success, 3, 2));
        let out = run(6, &[1, 0]);
        assert_eq!((out.status, out.time, out.cycles, out.residual), (AvalancheStatus::Success, 4, 2, 0));
        let out = run(7, &[1, 0, 0]);
        assert_eq!(out.status, AvalancheStatus::Failed { site: 0 });
        assert_eq!((out.time, out.cycles, out.residual), (4, 2, 1));
    }

    #[test]
    fn strict_rule_fails_mid_path() {
        // Width 2: both top sites feed bottom column 0 when connected left
        // from column 0 and right from column 1.
        let spec = LatticeSpec::new(2, 2, Family::Base { p: 0.5 }, 0);
        let lat = Lattice::from_directions(spec, vec![Direction::Left, Direction::Right]).unwrap();
        let caps = compute_capacities(&lat);
        assert_eq!(caps.values(), &[1, 1, 3, 1]);
        let picks = [0usize, 1, 0];
        for strict in [false, true] {
            let mut it = picks.iter().copied();
            let config = AvalancheConfig {
                strict_failure: strict,
                ..AvalancheConfig::new(6, 2)
            };
            let out = run_avalanche_with(&lat, &caps, &config, || it.next().unwrap());
            // Cycle 1 saturates sites 0 and 2 and carries 2 to the bottom.
            if strict {
                assert_eq!(out.status, AvalancheStatus::Failed { site: 2 });
                assert_eq!(out.time, 2);
            } else {
                assert_eq!(out.status, AvalancheStatus::Failed { site: 0 });
                assert_eq!(out.time, 4);
                assert_eq!(out.residual, 1);
            }
        }
    }

    #[test]
    fn guard_aborts() {
        let lat = all_left(4, 2);
        let caps = compute_capacities(&lat);
        let config = AvalancheConfig {
            max_cycles: 2,
            ..AvalancheConfig::new(100, 2)
        };
        let mut col = 0;
        let out = run_avalanche_with(&lat, &caps, &config, || {
            col += 1;
            col - 1
        });
        assert_eq!(out.status, AvalancheStatus::Aborted);
        assert_eq!(out.cycles, 2);
        assert_eq!(out.residual, 100 - 6);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(test_weight(0.05, 171_700), 8585);
        assert_eq!(test_weight(0.5, 3), 2);
        assert_eq!(test_weight(0.2, 12), 2);
    }
}
