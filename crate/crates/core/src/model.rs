//! Agent parameters, system parameters and configurations.
//!
//! Positions and velocities live in two contiguous row-major `N × d` blocks.
//! The stacked first-order state used by the integrators is only built at
//! the integrator boundary (see [`Configuration::to_state`]).

use crate::error::{Error, Result};

/// Per-agent physical parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentParams {
    pub mass: f64,
    pub damping: f64,
    pub radius: f64,
}

impl AgentParams {
    pub fn new(mass: f64, damping: f64, radius: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        if !(damping >= 0.0 && damping.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "damping must be nonnegative, got {damping}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { mass, damping, radius })
    }
}

/// Validated system description: agents, well depth and spatial dimension.
///
/// The pairwise collision distances are precomputed into a symmetric table.
/// `sigma(i, j) = q_i + q_j` is the center distance at which two bubbles of
/// radii `q_i` and `q_j` touch; radius 0.25 gives `sigma = 0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    agents: Vec<AgentParams>,
    well_depth: f64,
    dimension: usize,
    sigma: Vec<f64>,
}

/// Builds a [`SystemParams`] from `(mass, damping, radius)` triples.
pub fn build_system(
    agent_specs: &[(f64, f64, f64)],
    well_depth: f64,
    dimension: usize,
) -> Result<SystemParams> {
    let agents = agent_specs
        .iter()
        .map(|&(m, c, q)| AgentParams::new(m, c, q))
        .collect::<Result<Vec<_>>>()?;
    SystemParams::new(agents, well_depth, dimension)
}

impl SystemParams {
    pub fn new(agents: Vec<AgentParams>, well_depth: f64, dimension: usize) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "at least two agents are required, got {}",
                agents.len()
            )));
        }
        if !(well_depth > 0.0 && well_depth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "well depth must be positive, got {well_depth}"
            )));
        }
        if dimension != 2 && dimension != 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {dimension}"
            )));
        }
        for a in &agents {
            AgentParams::new(a.mass, a.damping, a.radius)?;
        }
        let n = agents.len();
        let mut sigma = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // Same operand order for (i, j) and (j, i) keeps the table exactly symmetric.
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                sigma[i * n + j] = agents[lo].radius + agents[hi].radius;
            }
        }
        Ok(Self { agents, well_depth, dimension, sigma })
    }

    /// `n` identical agents.
    pub fn uniform(
        n: usize,
        mass: f64,
        damping: f64,
        radius: f64,
        well_depth: f64,
        dimension: usize,
    ) -> Result<Self> {
        build_system(&vec![(mass, damping, radius); n], well_depth, dimension)
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentParams {
        &self.agents[i]
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn well_depth(&self) -> f64 {
        self.well_depth
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn sigma(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.agents.len() + j]
    }

    /// Smallest collision distance over all pairs `i < j`.
    pub fn sigma_min(&self) -> f64 {
        self.pairs().map(|(i, j)| self.sigma(i, j)).fold(f64::INFINITY, f64::min)
    }

    /// Number of interacting pairs, `N choose 2`.
    pub fn pair_count(&self) -> usize {
        let n = self.agents.len();
        n * (n - 1) / 2
    }

    /// Pairs `(i, j)` with `i < j`, in the fixed order used by every kernel.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.agents.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Returns the common damping value if every agent shares it.
    pub fn uniform_damping(&self) -> Option<f64> {
        let c = self.agents[0].damping;
        self.agents.iter().all(|a| a.damping == c).then_some(c)
    }

    /// Returns the common mass if every agent shares it.
    pub fn uniform_mass(&self) -> Option<f64> {
        let m = self.agents[0].mass;
        self.agents.iter().all(|a| a.mass == m).then_some(m)
    }

    /// Checks that a configuration has the shape this system expects.
    pub fn check_shape(&self, config: &Configuration) -> Result<()> {
        if config.len() != self.len() || config.dimension() != self.dimension {
            return Err(Error::ShapeMismatch {
                expected: (self.len(), self.dimension),
                found: (config.len(), config.dimension()),
            });
        }
        Ok(())
    }
}

/// Positions and velocities of `N` agents in `d` dimensions at one instant.
///
/// Construction rejects coincident agents: a configuration is always outside
/// the collision set.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    n: usize,
    dimension: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    time: f64,
}

impl Configuration {
    pub fn new(
        dimension: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        time: f64,
    ) -> Result<Self> {
        if dimension == 0 || positions.len() % dimension != 0 {
            return Err(Error::InvalidParameter(format!(
                "position block of length {} does not split into rows of {dimension}",
                positions.len()
            )));
        }
        if velocities.len() != positions.len() {
            return Err(Error::InvalidParameter(format!(
                "velocity block has length {}, positions have {}",
                velocities.len(),
                positions.len()
            )));
        }
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::InvalidParameter(format!("time must be nonnegative, got {time}")));
        }
        if positions.iter().chain(&velocities).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state contains non-finite values".into()));
        }
        let n = positions.len() / dimension;
        let config = Self { n, dimension, positions, velocities, time };
        config.check_collision_free()?;
        Ok(config)
    }

    /// Configuration at rest.
    pub fn at_rest(dimension: usize, positions: Vec<f64>) -> Result<Self> {
        let velocities = vec![0.0; positions.len()];
        Self::new(dimension, positions, velocities, 0.0)
    }

    /// Builds a configuration from rows of points, e.g. `&[[0.0, 0.0], [1.0, 0.0]]`.
    pub fn from_points<const D: usize>(points: &[[f64; D]]) -> Result<Self> {
        Self::at_rest(D, points.iter().flatten().copied().collect())
    }

    /// Rebuilds a configuration from a stacked `[x; v]` state vector.
    pub fn from_state(dimension: usize, state: &[f64], time: f64) -> Result<Self> {
        let half = state.len() / 2;
        Self::new(dimension, state[..half].to_vec(), state[half..].to_vec(), time)
    }

    fn check_collision_free(&self) -> Result<()> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.distance(i, j) == 0.0 {
                    return Err(Error::Collision { i, j });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.position(i), self.position(j))
    }

    /// Smallest pairwise distance.
    pub fn min_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.n {
            for j in i + 1..self.n {
                min = min.min(self.distance(i, j));
            }
        }
        min
    }

    /// All pairwise distances in `i < j` order.
    pub fn pair_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n.saturating_sub(1)) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.distance(i, j));
            }
        }
        out
    }

    /// Arithmetic mean of the agent positions.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dimension];
        for i in 0..self.n {
            for (ck, xk) in c.iter_mut().zip(self.position(i)) {
                *ck += xk;
            }
        }
        c.iter_mut().for_each(|ck| *ck /= self.n as f64);
        c
    }

    /// Largest per-agent speed `max_i ‖v_i‖`.
    pub fn max_speed(&self) -> f64 {
        (0..self.n).map(|i| norm(self.velocity(i))).fold(0.0, f64::max)
    }

    /// Stacked `[x; v]` state of length `2dN`.
    pub fn to_state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.positions.len());
        s.extend_from_slice(&self.positions);
        s.extend_from_slice(&self.velocities);
        s
    }

    /// Copy with every agent shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        assert_eq!(offset.len(), self.dimension);
        let positions = self
            .positions
            .chunks(self.dimension)
            .flat_map(|row| row.iter().zip(offset).map(|(x, c)| x + c))
            .collect();
        Self::new(self.dimension, positions, self.velocities.clone(), self.time)
    }

    /// Copy with positions and velocities rotated by `angle` in the first two coordinates.
    pub fn rotated_xy(&self, angle: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        let rot = |block: &[f64]| -> Vec<f64> {
            block
                .chunks(self.dimension)
                .flat_map(|row| {
                    let mut out = row.to_vec();
                    out[0] = c * row[0] - s * row[1];
                    out[1] = s * row[0] + c * row[1];
                    out
                })
                .collect()
        };
        Self::new(self.dimension, rot(&self.positions), rot(&self.velocities), self.time)
    }

    /// Copy with the time stamp replaced.
    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

/// Geometry of one ordered pair of agents.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGeometry {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub sigma: f64,
    /// `distance / sigma`.
    pub scaled: f64,
    /// Unit vector pointing from agent `j` toward agent `i`.
    pub unit_vector: Vec<f64>,
}

/// Distance, collision distance, scaled distance and unit vector of pair `(i, j)`.
pub fn pair_geometry(
    config: &Configuration,
    params: &SystemParams,
    i: usize,
    j: usize,
) -> Result<PairGeometry> {
    params.check_shape(config)?;
    if i == j {
        return Err(Error::InvalidParameter(format!("pair indices must differ, got ({i}, {i})")));
    }
    if i >= config.len() || j >= config.len() {
        return Err(Error::InvalidParameter(format!(
            "pair ({i}, {j}) out of range for {} agents",
            config.len()
        )));
    }
    let diff: Vec<f64> = config.position(i).iter().zip(config.position(j)).map(|(a, b)| a - b).collect();
    let r = norm(&diff);
    if r == 0.0 {
        return Err(Error::Collision { i, j });
    }
    let sigma = params.sigma(i, j);
    Ok(PairGeometry {
        i,
        j,
        distance: r,
        sigma,
        scaled: r / sigma,
        unit_vector: diff.iter().map(|d| d / r).collect(),
    })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
