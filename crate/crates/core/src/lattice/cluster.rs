use std::ops::RangeInclusive;

use super::{CapacityField, Lattice};
use crate::dsu::DisjointSets;

/// Connected components of the undirected connection graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    /// Label per site. Labels are numbered by first appearance in site order.
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Label of the largest cluster; ties go to the lowest label.
    pub largest: u32,
}

impl ClusterLabeling {
    pub fn largest_size(&self) -> usize {
        self.sizes[self.largest as usize]
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn label_clusters(lattice: &Lattice) -> ClusterLabeling {
    let mut dsu = DisjointSets::new(lattice.len());
    for site in 0..lattice.len() {
        if let Some(child) = lattice.child(site) {
            dsu.union(site, child);
        }
    }

    let mut root_label = vec![u32::MAX; lattice.len()];
    let mut labels = Vec::with_capacity(lattice.len());
    let mut sizes = Vec::new();
    for site in 0..lattice.len() {
        let root = dsu.find(site);
        if root_label[root] == u32::MAX {
            root_label[root] = sizes.len() as u32;
            sizes.push(0);
        }
        let label = root_label[root];
        sizes[label as usize] += 1;
        labels.push(label);
    }
    let largest = sizes
        .iter()
        .enumerate()
        .fold((0usize, 0usize), |best, (i, &s)| if s > best.1 { (i, s) } else { best })
        .0 as u32;
    ClusterLabeling {
        labels,
        sizes,
        largest,
    }
}

/// Maximal-capacity backbone of the largest cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trunk {
    /// One site per layer in `layers`, top to bottom.
    pub sites: Vec<usize>,
    /// Zero-based layers spanned by the largest cluster.
    pub layers: RangeInclusive<usize>,
    /// Sum of the capacities along the trunk.
    pub capacity: u64,
    /// Whether every trunk site connects to the next one.
    pub linked: bool,
}

/// Picks, in each layer the largest cluster reaches, its site of highest
/// capacity (lowest column on ties).
pub fn find_trunk(lattice: &Lattice, caps: &CapacityField, labels: &ClusterLabeling) -> Trunk {
    let w = lattice.width();
    let mut sites = Vec::new();
    let mut first = None;
    for layer in 0..lattice.depth() {
        let best = (0..w)
            .map(|col| lattice.site(layer, col))
            .filter(|&s| labels.labels[s] == labels.largest)
            .fold(None, |best: Option<usize>, s| match best {
                Some(b) if caps.get(b) >= caps.get(s) => Some(b),
                _ => Some(s),
            });
        if let Some(s) = best {
            first.get_or_insert(layer);
            sites.push(s);
        }
    }
    let first = first.expect("largest cluster is non-empty");
    let linked = sites.windows(2).all(|p| lattice.child(p[0]) == Some(p[1]));
    let capacity = sites.iter().map(|&s| caps.get(s)).sum();
    Trunk {
        layers: first..=first + sites.len() - 1,
        sites,
        capacity,
        linked,
    }
}
