//! Random placement of user groups (hotspots) on the macrocell disk and the
//! three small-cell deployment laws.
//!
//! Groups are uniform in area on the annulus `R_excl <= r <= R_mc`. Small
//! cells are then attached to `N_f` of them. The interior and edge laws target
//! the selected-distance CDFs `r / R_mc` and `r^3 / R_mc^3`, renormalized to
//! the annulus because no group exists inside the exclusion ball.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Simulation parameters. Defaults reproduce the reference parameter table;
/// antenna counts and scattering radius are free choices with `M >> L >> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Number of user groups `N_u`.
    pub n_groups: usize,
    /// Number of small cells `N_f`.
    pub n_small_cells: usize,
    /// Macrocell radius in meters.
    pub cell_radius: f64,
    /// Exclusion radius around the macrocell in meters.
    pub exclusion_radius: f64,
    /// Path-loss cutoff distance `d_0` in meters.
    pub cutoff_distance: f64,
    pub pathloss_exponent: f64,
    pub wall_loss_db: f64,
    /// Loading factor `beta`, streams per effective rank.
    #[serde(alias = "beta")]
    pub loading: f64,
    pub macro_antennas: usize,
    pub sc_antennas: usize,
    /// Radius of the scattering ring around every group, in meters.
    pub scatter_radius: f64,
    pub cell_edge_snr_db: f64,
    /// Small-cell power relative to the macrocell power, in dB.
    pub sc_power_offset_db: f64,
    /// Maximum number of groups the macrocell serves per slot (`G`).
    pub max_groups: usize,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub gamma: f64,
    pub slots_per_drop: usize,
    pub n_drops: usize,
    /// Fraction of covariance trace allowed outside the dominant eigenspace.
    pub rank_threshold: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_groups: 500,
            n_small_cells: 50,
            cell_radius: 1000.0,
            exclusion_radius: 100.0,
            cutoff_distance: 50.0,
            pathloss_exponent: 3.5,
            wall_loss_db: 5.0,
            loading: 0.8,
            macro_antennas: 100,
            sc_antennas: 10,
            scatter_radius: 30.0,
            cell_edge_snr_db: 10.0,
            sc_power_offset_db: -20.0,
            max_groups: 5,
            epsilon1: 0.1,
            epsilon2: 0.1,
            gamma: 1.0,
            slots_per_drop: 200,
            n_drops: 100,
            rank_threshold: 1e-3,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_radius", self.cell_radius),
            ("exclusion_radius", self.exclusion_radius),
            ("cutoff_distance", self.cutoff_distance),
            ("pathloss_exponent", self.pathloss_exponent),
            ("scatter_radius", self.scatter_radius),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be positive and finite, got {v}")));
            }
        }
        if self.n_groups == 0 {
            return Err(invalid("n_groups", "must be positive"));
        }
        if self.n_small_cells > self.n_groups {
            return Err(invalid(
                "n_small_cells",
                format!("{} exceeds n_groups = {}", self.n_small_cells, self.n_groups),
            ));
        }
        if self.exclusion_radius >= self.cell_radius {
            return Err(invalid("exclusion_radius", "must be smaller than cell_radius"));
        }
        if self.scatter_radius >= self.exclusion_radius {
            return Err(invalid(
                "scatter_radius",
                "must be smaller than exclusion_radius so every group sees a ring",
            ));
        }
        if !(self.loading > 0.0 && self.loading < 1.0) {
            return Err(invalid("loading", format!("must lie in (0, 1), got {}", self.loading)));
        }
        if self.macro_antennas == 0 {
            return Err(invalid("macro_antennas", "must be positive"));
        }
        if self.sc_antennas == 0 {
            return Err(invalid("sc_antennas", "must be positive"));
        }
        if self.sc_streams() == 0 {
            return Err(invalid(
                "sc_antennas",
                "floor(loading * sc_antennas) must be at least one stream",
            ));
        }
        if self.max_groups == 0 {
            return Err(invalid("max_groups", "must be positive"));
        }
        for (field, v) in [
            ("epsilon1", self.epsilon1),
            ("epsilon2", self.epsilon2),
            ("gamma", self.gamma),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(invalid(field, "must be nonnegative"));
            }
        }
        if !(self.rank_threshold > 0.0 && self.rank_threshold < 1.0) {
            return Err(invalid("rank_threshold", "must lie in (0, 1)"));
        }
        if !self.wall_loss_db.is_finite() || self.wall_loss_db < 0.0 {
            return Err(invalid("wall_loss_db", "must be nonnegative"));
        }
        if !self.cell_edge_snr_db.is_finite() || !self.sc_power_offset_db.is_finite() {
            return Err(invalid("cell_edge_snr_db", "powers must be finite"));
        }
        if self.slots_per_drop == 0 {
            return Err(invalid("slots_per_drop", "must be positive"));
        }
        if self.n_drops == 0 {
            return Err(invalid("n_drops", "must be positive"));
        }
        Ok(())
    }

    /// Macrocell power with unit noise, chosen so that a lone stream at the
    /// cell edge sees `cell_edge_snr_db`.
    pub fn macro_power(&self) -> f64 {
        db_to_linear(self.cell_edge_snr_db)
            * (1.0 + (self.cell_radius / self.cutoff_distance).powf(self.pathloss_exponent))
    }

    pub fn sc_power(&self) -> f64 {
        self.macro_power() * db_to_linear(self.sc_power_offset_db)
    }

    /// Streams per small cell, `floor(beta * L)`.
    pub fn sc_streams(&self) -> usize {
        (self.loading * self.sc_antennas as f64).floor() as usize
    }

    /// Stable hex digest of the parameter set.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("parameters serialize");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Small-cell deployment law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deployment {
    Uniform,
    Interior,
    Edge,
}

impl Deployment {
    pub const ALL: [Deployment; 3] = [Deployment::Interior, Deployment::Uniform, Deployment::Edge];

    /// Selection weight relative to the uniform-in-area population density.
    fn weight(self, r: f64) -> f64 {
        match self {
            Deployment::Uniform => 1.0,
            // target density flat in r, population density ~ r
            Deployment::Interior => 1.0 / r,
            // target density ~ r^2, population density ~ r
            Deployment::Edge => r,
        }
    }

    /// Target CDF of selected-group distances on `[r_min, r_max]`.
    pub fn target_cdf(self, r: f64, r_min: f64, r_max: f64) -> f64 {
        let r = r.clamp(r_min, r_max);
        match self {
            Deployment::Uniform => (r * r - r_min * r_min) / (r_max * r_max - r_min * r_min),
            Deployment::Interior => (r - r_min) / (r_max - r_min),
            Deployment::Edge => (r.powi(3) - r_min.powi(3)) / (r_max.powi(3) - r_min.powi(3)),
        }
    }
}

impl fmt::Display for Deployment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Deployment::Uniform => "uniform",
            Deployment::Interior => "interior",
            Deployment::Edge => "edge",
        })
    }
}

impl FromStr for Deployment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Deployment::Uniform),
            "interior" => Ok(Deployment::Interior),
            "edge" => Ok(Deployment::Edge),
            other => Err(format!("unknown deployment `{other}` (uniform|interior|edge)")),
        }
    }
}

/// Positions and angular data of all user groups plus the small-cell set.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub positions: Vec<[f64; 2]>,
    /// Angle of arrival seen from the macrocell, in `[-pi, pi)`.
    pub theta: Vec<f64>,
    pub dist_macro: Vec<f64>,
    /// Angular spread of each group's scattering ring.
    pub delta: Vec<f64>,
    small_cells: Vec<usize>,
    is_small: Vec<bool>,
}

impl Layout {
    /// Builds a layout from explicit coordinates (macrocell at the origin).
    pub fn from_positions(positions: Vec<[f64; 2]>, small_cells: &[usize], scatter_radius: f64) -> Result<Self> {
        let mut theta = Vec::with_capacity(positions.len());
        let mut dist_macro = Vec::with_capacity(positions.len());
        let mut delta = Vec::with_capacity(positions.len());
        for p in &positions {
            let d = p[0].hypot(p[1]);
            let mut t = p[1].atan2(p[0]);
            if t >= PI {
                t -= 2.0 * PI;
            }
            theta.push(t);
            dist_macro.push(d);
            delta.push(angular_spread(d, scatter_radius)?);
        }
        let mut layout = Self {
            is_small: vec![false; positions.len()],
            positions,
            theta,
            dist_macro,
            delta,
            small_cells: Vec::new(),
        };
        layout.set_small_cells(small_cells.to_vec())?;
        Ok(layout)
    }

    fn set_small_cells(&mut self, mut set: Vec<usize>) -> Result<()> {
        set.sort_unstable();
        set.dedup();
        if set.last().is_some_and(|&g| g >= self.len()) {
            return Err(Error::TooManySmallCells {
                requested: set.len(),
                groups: self.len(),
            });
        }
        self.is_small = vec![false; self.len()];
        for &g in &set {
            self.is_small[g] = true;
        }
        self.small_cells = set;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Groups hosting a small cell (the set `S`), ascending.
    pub fn small_cells(&self) -> &[usize] {
        &self.small_cells
    }

    /// Groups without a small cell (the set `M`), ascending.
    pub fn macro_groups(&self) -> Vec<usize> {
        (0..self.len()).filter(|&g| !self.is_small[g]).collect()
    }

    pub fn is_small_cell(&self, g: usize) -> bool {
        self.is_small[g]
    }

    pub fn distance(&self, g: usize, f: usize) -> f64 {
        let (a, b) = (self.positions[g], self.positions[f]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Draws `N_u` group positions uniform in area on the annulus; no small cells yet.
pub fn sample_layout<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> Result<Layout> {
    params.validate()?;
    let (r0, r1) = (params.exclusion_radius, params.cell_radius);
    let positions = (0..params.n_groups)
        .map(|_| {
            let u: f64 = rng.random();
            let r = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
            let phi = rng.random_range(-PI..PI);
            [r * phi.cos(), r * phi.sin()]
        })
        .collect();
    let mut layout = Layout::from_positions(positions, &[], params.scatter_radius)?;
    // guard against cos/sin round-off pushing a radius across the annulus boundary
    for d in &mut layout.dist_macro {
        *d = d.clamp(r0, r1);
    }
    Ok(layout)
}

/// Attaches `n_f` small cells to distinct groups following `mode`.
///
/// Biased modes use sequential weighted sampling without replacement with
/// weights `f_target(r) / r`, which tilts the uniform-in-area population
/// toward the target distance law.
pub fn assign_small_cells<R: Rng + ?Sized>(
    layout: &Layout,
    mode: Deployment,
    n_f: usize,
    rng: &mut R,
) -> Result<Layout> {
    let n = layout.len();
    if n_f > n {
        return Err(Error::TooManySmallCells {
            requested: n_f,
            groups: n,
        });
    }
    let chosen: Vec<usize> = if n_f == n {
        (0..n).collect()
    } else if mode == Deployment::Uniform {
        index::sample(rng, n, n_f).into_vec()
    } else {
        let weights: Vec<f64> = layout.dist_macro.iter().map(|&r| mode.weight(r)).collect();
        index::sample_weighted(rng, n, |i| weights[i], n_f)
            .map_err(|e| Error::InvalidParam {
                field: "n_small_cells",
                reason: e.to_string(),
            })?
            .into_vec()
    };
    let mut out = layout.clone();
    out.set_small_cells(chosen)?;
    Ok(out)
}

/// Angular spread of a scattering ring of radius `ring` seen from `distance`.
pub fn angular_spread(distance: f64, ring: f64) -> Result<f64> {
    if distance <= ring {
        return Err(Error::InsideScatteringRing { distance, ring });
    }
    Ok((ring / distance).atan())
}
