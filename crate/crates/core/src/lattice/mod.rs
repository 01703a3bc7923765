//! Layered branching lattices.
//!
//! A lattice has `depth` layers of `width` sites. Layer index 0 is the top
//! (deposition) layer and connections point downward, so the site at layer
//! `d` feeds exactly one site at layer `d + 1`. Text output and user-facing
//! messages number layers from 1.
//!
//! The two candidate lower neighbours of a site sit half a column to either
//! side of it. Columns are stored in skewed coordinates: the lower-left
//! neighbour of column `j` is column `j` of the next layer and the lower-right
//! neighbour is column `j + 1`, wrapped periodically (see [`child_column`]).

mod capacity;
mod cluster;
mod text;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use capacity::{compute_capacities, CapacityField};
pub use cluster::{find_trunk, label_clusters, ClusterLabeling, Trunk};
pub use text::{parse_lattice_text, write_lattice_text};

/// Connection from a site to one of its two lower neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Direction::Left => 'L',
            Direction::Right => 'R',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Random lattice; each connection goes left with probability `p`.
    Base { p: f64 },
    /// The deterministic V lattice.
    V,
    /// V lattice whose non-trunk left connections were flipped with
    /// probability `q`.
    PerturbedV { q: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Base { .. } => "base",
            Family::V => "v",
            Family::PerturbedV { .. } => "perturbed-v",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub width: usize,
    pub depth: usize,
    pub family: Family,
    pub seed: u64,
}

impl LatticeSpec {
    pub fn new(width: usize, depth: usize, family: Family, seed: u64) -> Self {
        Self {
            width,
            depth,
            family,
            seed,
        }
    }

    pub fn square(side: usize, family: Family, seed: u64) -> Self {
        Self::new(side, side, family, seed)
    }

    pub fn sites(&self) -> usize {
        self.width * self.depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::config("width", "must be at least 1"));
        }
        if self.depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        if self.sites() > u32::MAX as usize {
            return Err(Error::config("width", "lattice too large"));
        }
        match self.family {
            Family::Base { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::config("p", format!("{p} is not in (0, 1)")));
                }
            }
            Family::V => self.check_v_depth()?,
            Family::PerturbedV { q } => {
                self.check_v_depth()?;
                check_perturbation(q)?;
            }
        }
        Ok(())
    }

    fn check_v_depth(&self) -> Result<()> {
        if self.depth > self.width {
            return Err(Error::config(
                "depth",
                format!(
                    "V lattices need depth <= width (got {} > {})",
                    self.depth, self.width
                ),
            ));
        }
        Ok(())
    }
}

/// Accepts `q` in `[0, 0.5]`; zero is the identity perturbation and 0.5
/// makes every non-trunk connection a fair coin.
fn check_perturbation(q: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&q) {
        return Err(Error::config("q", format!("{q} is not in [0, 0.5]")));
    }
    Ok(())
}

/// Column reached in the next layer from column `col` along `dir`.
///
/// This is the only place the horizontal boundary convention lives: the
/// boundary is periodic, so every site keeps exactly one child.
#[inline]
pub fn child_column(col: usize, dir: Direction, width: usize) -> usize {
    match dir {
        Direction::Left => col,
        Direction::Right => {
            if col + 1 == width {
                0
            } else {
                col + 1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    spec: LatticeSpec,
    /// Direction of every site above the bottom layer, row-major by layer.
    dirs: Vec<Direction>,
    /// Trunk column per layer for the V families.
    trunk_trace: Option<Vec<usize>>,
}

impl Lattice {
    /// Builds a lattice from explicit directions for layers `0..depth-1`.
    pub fn from_directions(spec: LatticeSpec, dirs: Vec<Direction>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.width * (spec.depth - 1);
        if dirs.len() != expected {
            return Err(Error::config(
                "directions",
                format!("expected {expected} connections, got {}", dirs.len()),
            ));
        }
        let trunk_trace = match spec.family {
            Family::V | Family::PerturbedV { .. } => Some(v_trunk_trace(&spec)),
            Family::Base { .. } => None,
        };
        Ok(Self {
            spec,
            dirs,
            trunk_trace,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn depth(&self) -> usize {
        self.spec.depth
    }

    pub fn len(&self) -> usize {
        self.spec.sites()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn site(&self, layer: usize, col: usize) -> usize {
        layer * self.spec.width + col
    }

    #[inline]
    pub fn layer_of(&self, site: usize) -> usize {
        site / self.spec.width
    }

    #[inline]
    pub fn col_of(&self, site: usize) -> usize {
        site % self.spec.width
    }

    /// Connection direction of `site`, `None` on the bottom layer.
    #[inline]
    pub fn direction(&self, site: usize) -> Option<Direction> {
        self.dirs.get(site).copied()
    }

    #[inline]
    pub fn child(&self, site: usize) -> Option<usize> {
        let dir = self.direction(site)?;
        let w = self.spec.width;
        let (layer, col) = (site / w, site % w);
        Some((layer + 1) * w + child_column(col, dir, w))
    }

    /// Sites in the previous layer connected to `site` (at most two).
    pub fn parents(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        let w = self.spec.width;
        let (layer, col) = (site / w, site % w);
        let candidates = if layer == 0 {
            [None, None]
        } else {
            let above = layer - 1;
            let left_of = (col + w - 1) % w;
            let a = self.site(above, col);
            let b = self.site(above, left_of);
            // Width 1 and 2 make both candidates coincide or wrap onto each other.
            [Some(a), if b != a { Some(b) } else { None }]
        };
        candidates
            .into_iter()
            .flatten()
            .filter(move |&p| self.child(p) == Some(site))
    }

    pub fn directions(&self) -> &[Direction] {
        &self.dirs
    }

    pub fn trunk_trace(&self) -> Option<&[usize]> {
        self.trunk_trace.as_deref()
    }

    fn is_trunk_site(&self, site: usize) -> bool {
        match &self.trunk_trace {
            Some(trace) => trace[self.layer_of(site)] == self.col_of(site),
            None => false,
        }
    }
}

fn v_trunk_trace(spec: &LatticeSpec) -> Vec<usize> {
    (0..spec.depth).map(|d| d % spec.width).collect()
}

/// Builds the lattice described by `spec`, dispatching on its family.
pub fn generate(spec: &LatticeSpec) -> Result<Lattice> {
    match spec.family {
        Family::Base { .. } => generate_base(spec),
        Family::V => generate_v(spec),
        Family::PerturbedV { q } => {
            let v = generate_v(&LatticeSpec {
                family: Family::V,
                ..*spec
            })?;
            perturb_v(&v, q, spec.seed)
        }
    }
}

pub fn generate_base(spec: &LatticeSpec) -> Result<Lattice> {
    spec.validate()?;
    let Family::Base { p } = spec.family else {
        return Err(Error::config("family", "generate_base needs a base spec"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dirs = (0..spec.width * (spec.depth - 1))
        .map(|_| {
            if rng.gen::<f64>() < p {
                Direction::Left
            } else {
                Direction::Right
            }
        })
        .collect();
    Lattice::from_directions(*spec, dirs)
}

/// The V lattice: the trunk runs down-right from column 0 and every other
/// site connects left, parallel to the opposite arm of the V.
pub fn generate_v(spec: &LatticeSpec) -> Result<Lattice> {
    if !matches!(spec.family, Family::V) {
        return Err(Error::config("family", "generate_v needs a V spec"));
    }
    spec.validate()?;
    let trace = v_trunk_trace(spec);
    let w = spec.width;
    let dirs = (0..w * (spec.depth - 1))
        .map(|s| {
            if trace[s / w] == s % w {
                Direction::Right
            } else {
                Direction::Left
            }
        })
        .collect();
    Lattice::from_directions(*spec, dirs)
}

/// Flips every non-trunk left connection of a V lattice to the right with
/// probability `q`, leaving the trunk untouched.
pub fn perturb_v(vlattice: &Lattice, q: f64, seed: u64) -> Result<Lattice> {
    if !matches!(vlattice.spec.family, Family::V) {
        return Err(Error::config("family", "perturb_v needs a V lattice"));
    }
    check_perturbation(q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = vlattice.dirs.clone();
    for (site, dir) in dirs.iter_mut().enumerate() {
        if vlattice.is_trunk_site(site) || *dir != Direction::Left {
            continue;
        }
        // One draw per candidate keeps the stream aligned whatever q is.
        if rng.gen::<f64>() < q {
            *dir = Direction::Right;
        }
    }
    let spec = LatticeSpec {
        family: Family::PerturbedV { q },
        seed,
        ..vlattice.spec
    };
    Lattice::from_directions(spec, dirs)
}
