use super::Lattice;

/// Weight-bearing capacity of every site: one plus the capacities of the
/// sites connected to it from the layer above.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityField {
    width: usize,
    values: Vec<u64>,
}

impl CapacityField {
    #[inline]
    pub fn get(&self, site: usize) -> u64 {
        self.values[site]
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn layer(&self, layer: usize) -> &[u64] {
        &self.values[layer * self.width..(layer + 1) * self.width]
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }
}

pub fn compute_capacities(lattice: &Lattice) -> CapacityField {
    let mut values = vec![1u64; lattice.len()];
    let upper = lattice.len() - lattice.width();
    for site in 0..upper {
        // Layers are processed top-down, so `site` is final before it feeds its child.
        let child = lattice.child(site).expect("non-bottom site has a child");
        values[child] += values[site];
    }
    CapacityField {
        width: lattice.width(),
        values,
    }
}
