use hierlat::avalanche::{avalanche_ensemble, EnsembleOptions};
use hierlat::dsu::DisjointSets;
use hierlat::lattice::{compute_capacities, generate, Direction, Family, Lattice, LatticeSpec};
use hierlat::percolation::{
    fill_trajectory, largest_cluster, Connectivity, DepositRule, Insertion, MotionRule, OccupancyState,
    PercolationOptions,
};
use hierlat::stats::{histogram, Binning};
use proptest::prelude::*;

fn lattice_strategy(max: usize) -> impl Strategy<Value = Lattice> {
    (1..=max, 1..=max).prop_flat_map(|(m, n)| {
        prop::collection::vec(any::<bool>(), m * (n - 1)).prop_map(move |bits| {
            let dirs = bits
                .into_iter()
                .map(|b| if b { Direction::Left } else { Direction::Right })
                .collect();
            Lattice::from_directions(LatticeSpec::new(m, n, Family::Base { p: 0.5 }, 0), dirs).unwrap()
        })
    })
}

fn options() -> impl Strategy<Value = PercolationOptions> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(g, u, grid)| PercolationOptions {
        motion: if g { MotionRule::GreedyDescent } else { MotionRule::PassThrough },
        deposit: if u { DepositRule::Uniform } else { DepositRule::FixedSite },
        connectivity: if grid { Connectivity::Grid } else { Connectivity::Links },
    })
}

proptest! {
    #[test]
    fn capacity_is_one_plus_parents(lat in lattice_strategy(12)) {
        let caps = compute_capacities(&lat);
        for s in 0..lat.len() {
            let parents: u64 = lat.parents(s).map(|p| caps.get(p)).sum();
            prop_assert_eq!(caps.get(s), 1 + parents);
        }
        for d in 0..lat.depth() {
            prop_assert_eq!(caps.layer(d).iter().sum::<u64>(), (lat.width() * (d + 1)) as u64);
        }
    }

    #[test]
    fn generated_lattices_are_reproducible(side in 2usize..20, seed in any::<u64>(), q in 0.0f64..=0.5) {
        for family in [Family::Base { p: 0.5 }, Family::V, Family::PerturbedV { q }] {
            let spec = LatticeSpec::square(side, family, seed);
            prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn packets_are_conserved_and_bounded(lat in lattice_strategy(8), opts in options(), cols in prop::collection::vec(0usize..8, 0..200)) {
        let caps = compute_capacities(&lat);
        let mut st = OccupancyState::new(&lat, opts.motion, opts.connectivity);
        for c in cols {
            let col = c % lat.width();
            if let Insertion::Settled { site, saturated } = st.insert(&lat, &caps, col) {
                prop_assert_eq!(saturated, st.count(site) == caps.get(site));
            }
            prop_assert_eq!(st.settled() + st.discarded(), st.deposited());
        }
        prop_assert_eq!(st.counts().iter().sum::<u64>(), st.settled());
        for s in 0..lat.len() {
            prop_assert!(st.count(s) <= caps.get(s));
            prop_assert_eq!(st.is_saturated(s), st.count(s) == caps.get(s));
        }
    }

    #[test]
    fn free_cluster_never_grows(lat in lattice_strategy(10), opts in options(), seed in any::<u64>()) {
        let caps = compute_capacities(&lat);
        let n_max = caps.total();
        let traj = fill_trajectory(&lat, &caps, n_max, seed, &opts);
        let mut prev = traj.s(0);
        let empty = largest_cluster(&lat, opts.connectivity, |_| true);
        prop_assert_eq!(prev, empty as f64 / lat.len() as f64);
        for n in 1..=n_max {
            let s = traj.s(n);
            prop_assert!(s <= prev);
            prop_assert!((s + traj.s1(n) - 1.0).abs() < 1e-12);
            prev = s;
        }
    }

    #[test]
    fn histogram_density_integrates_to_one(samples in prop::collection::vec(1.0f64..1e4, 1..300), log in any::<bool>()) {
        let binning = if log { Binning::Logarithmic { base: 1.3 } } else { Binning::Linear { width: 7.0 } };
        let h = histogram(&samples, binning).unwrap();
        prop_assert_eq!(h.total(), samples.len() as u64);
        let area: f64 = (0..h.len()).map(|i| h.density[i] * h.width(i)).sum();
        prop_assert!((area - 1.0).abs() < 1e-9);
        for w in h.edges.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn power_law_exponent_ignores_amplitude(alpha in 0.5f64..4.0, scale in 0.01f64..100.0, noise in prop::collection::vec(-0.2f64..0.2, 8)) {
        let points: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let x = 2f64.powi(i);
                (x, x.powf(-alpha) * noise[i as usize].exp())
            })
            .collect();
        let scaled: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, y * scale)).collect();
        let a = hierlat::stats::fit_power_law_points(&points, (1.0, 200.0)).unwrap();
        let b = hierlat::stats::fit_power_law_points(&scaled, (1.0, 200.0)).unwrap();
        prop_assert!((a.alpha - b.alpha).abs() < 1e-9);
        prop_assert!((a.chi2 - b.chi2).abs() < 1e-9);
        prop_assert!((b.amplitude / a.amplitude - scale).abs() < 1e-6 * scale);
    }

    #[test]
    fn union_find_matches_flood_fill(cells in prop::collection::vec(any::<bool>(), 256)) {
        let lat = Lattice::from_directions(
            LatticeSpec::new(16, 16, Family::Base { p: 0.5 }, 0),
            (0..16 * 15).map(|i| if i % 3 == 0 { Direction::Right } else { Direction::Left }).collect(),
        ).unwrap();
        let mut dsu = DisjointSets::new(256);
        let mut best = 0;
        for s in 0..256 {
            if !cells[s] {
                continue;
            }
            best = best.max(dsu.set_size(s));
            if let Some(c) = lat.child(s).filter(|&c| cells[c]) {
                best = best.max(dsu.union(s, c));
            }
        }
        prop_assert_eq!(best, largest_cluster(&lat, Connectivity::Links, |s| cells[s]));
    }
}

#[test]
fn avalanche_ensembles_are_seed_deterministic() {
    let spec = LatticeSpec::square(30, Family::V, 0);
    let a = avalanche_ensemble(&spec, 0.1, 50, 9, &EnsembleOptions::default()).unwrap();
    let b = avalanche_ensemble(&spec, 0.1, 50, 9, &EnsembleOptions::default()).unwrap();
    assert_eq!(a, b);
    let c = avalanche_ensemble(&spec, 0.1, 50, 10, &EnsembleOptions::default()).unwrap();
    assert_ne!(a, c);
}
