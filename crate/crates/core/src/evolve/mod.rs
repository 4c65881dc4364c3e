//! Latent variable evolution: CMA-ES over the latent space with
//! target-matching and tile-maximizing fitness functions.

mod cma;

use std::fmt;
use std::str::FromStr;

use nalgebra::RealField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cma::{
    cma_minimize, cma_minimize_batch, default_lambda, CmaError, CmaOptions, CmaParams, CmaResult, CmaState, Generation,
    Termination, EIGEN_FLOOR, SIGMA_FLOOR,
};

use crate::corpus::{TileGrid, NUM_TILES};
use crate::latent::{decode_all, LatentError, LatentVector};
use crate::metrics::{tile_fraction, Metric, SegmentMetrics};
use crate::models::Model;
use crate::Scalar;

/// Fitness assigned when SMB proportion is undefined (no non-background tiles).
pub const UNDEFINED_PROPORTION_PENALTY: f64 = 100.0;
pub const DEFAULT_BUDGET: usize = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 0.5;
pub const DEFAULT_SIGMA0: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    Density,
    Difficulty,
    Nonlinearity,
    SmbProportion,
    MaxTile,
}

impl Objective {
    pub const TARGETED: [Objective; 4] =
        [Objective::Density, Objective::Difficulty, Objective::Nonlinearity, Objective::SmbProportion];

    /// The metric matched against a target; `None` for `MaxTile`.
    pub fn metric(self) -> Option<Metric> {
        match self {
            Objective::Density => Some(Metric::Density),
            Objective::Difficulty => Some(Metric::Difficulty),
            Objective::Nonlinearity => Some(Metric::Nonlinearity),
            Objective::SmbProportion => Some(Metric::SmbProportion),
            Objective::MaxTile => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Density => "DENSITY",
            Objective::Difficulty => "DIFFICULTY",
            Objective::Nonlinearity => "NONLINEARITY",
            Objective::SmbProportion => "SMB_PROPORTION",
            Objective::MaxTile => "MAX_TILE",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = EvolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace(['-', ' '], "_");
        Objective::TARGETED
            .into_iter()
            .chain([Objective::MaxTile])
            .find(|o| o.as_str() == norm)
            .ok_or_else(|| EvolveError::InvalidSpec(format!("unknown objective `{s}`")))
    }
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub objective: Objective,
    /// Required for target objectives, ignored for `MaxTile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pct: Option<f64>,
    /// Required for `MaxTile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_id: Option<u8>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Target objectives stop once `|metric - target| <= tolerance`;
    /// `MaxTile` stops once the tile covers `100 - tolerance` percent.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EvolutionSpec {
    pub fn target(objective: Objective, target_pct: f64, seed: u64) -> Self {
        EvolutionSpec { objective, target_pct: Some(target_pct), tile_id: None, budget: DEFAULT_BUDGET, tolerance: DEFAULT_TOLERANCE, seed }
    }

    pub fn max_tile(tile_id: u8, seed: u64) -> Self {
        EvolutionSpec { objective: Objective::MaxTile, target_pct: None, tile_id: Some(tile_id), budget: DEFAULT_BUDGET, tolerance: DEFAULT_TOLERANCE, seed }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: String| Err(EvolveError::InvalidSpec(m));
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return bad(format!("tolerance must be a non-negative number, got {}", self.tolerance));
        }
        match self.objective {
            Objective::MaxTile => match self.tile_id {
                Some(id) if (id as usize) < NUM_TILES => Ok(()),
                Some(id) => bad(format!("tile_id {id} is outside 0..=16")),
                None => bad("MAX_TILE needs a tile_id".into()),
            },
            o => match self.target_pct {
                Some(t) if (0.0..=100.0).contains(&t) => Ok(()),
                Some(t) => bad(format!("target_pct {t} is outside [0, 100]")),
                None => bad(format!("{o} needs a target_pct")),
            },
        }
    }

    /// Fitness of a decoded segment (lower is better).
    pub fn fitness(&self, grid: &TileGrid) -> f64 {
        match (self.objective.metric(), self.tile_id) {
            (Some(metric), _) => {
                let target = self.target_pct.expect("validated spec");
                match SegmentMetrics::of(grid).value(metric) {
                    Some(v) => (v - target).abs(),
                    None => UNDEFINED_PROPORTION_PENALTY,
                }
            }
            (None, Some(id)) => -tile_fraction(grid, id as i64).expect("validated tile id"),
            (None, None) => unreachable!("validated spec"),
        }
    }

    /// Objective value actually reached by `grid`: the targeted metric, or
    /// the tile fraction for `MaxTile`.
    pub fn achieved(&self, grid: &TileGrid) -> Option<f64> {
        match self.objective.metric() {
            Some(m) => SegmentMetrics::of(grid).value(m),
            None => self.tile_id.map(|id| tile_fraction(grid, id as i64).expect("validated tile id")),
        }
    }

    fn stop_fitness(&self) -> f64 {
        match self.objective {
            Objective::MaxTile => self.tolerance - 100.0,
            _ => self.tolerance,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("invalid evolution spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Latent(#[from] LatentError),
}

/// Fitness over latent vectors: decode, then score with [`EvolutionSpec::fitness`].
pub fn make_fitness<'a, T: Scalar>(
    model: &'a Model<T>,
    spec: &EvolutionSpec,
) -> Result<impl Fn(&[T]) -> Result<f64, LatentError> + 'a, EvolveError> {
    spec.validate()?;
    let spec = spec.clone();
    Ok(move |z: &[T]| {
        let z = LatentVector::new(z.to_vec())?;
        let grid = decode_all(model, std::slice::from_ref(&z))?.remove(0);
        Ok(spec.fitness(&grid))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct EvolutionResult<T: Scalar> {
    pub spec: EvolutionSpec,
    pub grid: TileGrid,
    pub metrics: SegmentMetrics,
    pub achieved: Option<f64>,
    pub fitness: f64,
    pub latent: LatentVector<T>,
    pub evaluations: usize,
    pub termination: Termination,
    pub flat_fitness: bool,
    pub history: Vec<Generation>,
}

/// Run CMA-ES from the latent origin with step size 0.5 and return the best
/// segment found.
pub fn evolve_segment<T: Scalar + RealField>(model: &Model<T>, spec: &EvolutionSpec) -> Result<EvolutionResult<T>, EvolveError> {
    spec.validate()?;
    let opts = CmaOptions {
        budget: spec.budget,
        seed: spec.seed,
        sigma0: DEFAULT_SIGMA0,
        mean0: None,
        stop_fitness: Some(spec.stop_fitness()),
        lambda: None,
    };
    let mut decode_error = None;
    let result = cma_minimize_batch::<T, _>(
        model.latent_dim(),
        |xs: &[Vec<T>]| {
            let zs: Result<Vec<_>, _> = xs.iter().map(|x| LatentVector::new(x.clone())).collect();
            match zs.and_then(|zs| decode_all(model, &zs)) {
                Ok(grids) => grids.iter().map(|g| T::of(spec.fitness(g))).collect(),
                Err(e) => {
                    decode_error.get_or_insert(e);
                    vec![T::nan(); xs.len()]
                }
            }
        },
        &opts,
    );
    if let Some(e) = decode_error {
        return Err(e.into());
    }
    let result = result?;
    let latent = LatentVector::new(result.best)?;
    let grid = decode_all(model, std::slice::from_ref(&latent))?.remove(0);
    Ok(EvolutionResult {
        spec: spec.clone(),
        metrics: SegmentMetrics::of(&grid),
        achieved: spec.achieved(&grid),
        fitness: spec.fitness(&grid),
        grid,
        latent,
        evaluations: result.evaluations,
        termination: result.termination,
        flat_fitness: result.flat_fitness,
        history: result.history,
    })
}
