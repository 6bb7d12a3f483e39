//! Autoregressive conditional sampling of full molecules.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{elements, Molecule};
use crate::geom::{self, Vec3};
use crate::model::conditioning::{ConditionValue, Conditions};
use crate::model::heads::{predict_distances, predict_type, DistanceGrid};
use crate::model::{Model, ModelError, PartialMolecule, TypeVocabulary};
use crate::nn::Tensor;
use crate::rng::{indexed_rng, sample_weighted};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid grid spec: {0}")]
    BadGrid(String),
}

/// Lattice shell of candidate offsets around the focus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lattice spacing in Å.
    pub spacing: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            spacing: 0.05,
            d_min: 0.9,
            d_max: 1.7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateGrid {
    pub points: Vec<Vec3>,
    pub spec: GridSpec,
}

/// Enumerates exactly the lattice points of the closed shell
/// d_min <= |p| <= d_max.
pub fn build_grid(spec: &GridSpec) -> Result<CandidateGrid, GenerateError> {
    if !(0.0 < spec.d_min && spec.d_min < spec.d_max) || spec.spacing <= 0.0 {
        return Err(GenerateError::BadGrid(format!("{spec:?}")));
    }
    let s = spec.spacing;
    // Work on squared integer radii; the epsilon absorbs decimal-to-binary
    // rounding of the config values.
    let lo = ((spec.d_min / s) * (spec.d_min / s) - 1e-9).ceil() as i64;
    let hi = ((spec.d_max / s) * (spec.d_max / s) + 1e-9).floor() as i64;
    let reach = (spec.d_max / s + 1e-9).floor() as i64;
    let mut points = Vec::new();
    for x in -reach..=reach {
        for y in -reach..=reach {
            for z in -reach..=reach {
                let k = x * x + y * y + z * z;
                if k >= lo && k <= hi {
                    points.push([x as f64 * s, y as f64 * s, z as f64 * s]);
                }
            }
        }
    }
    Ok(CandidateGrid { points, spec: *spec })
}

/// One-dimensional first-atom grid: (spacing * x, 0, 0) for x = 0.. with
/// |p| staying below the distance-grid coverage.
pub fn first_atom_grid(grid: &DistanceGrid) -> Vec<Vec3> {
    let max = grid.max_distance();
    let mut points = Vec::new();
    let mut x = 0usize;
    loop {
        let r = x as f64 * 0.05;
        if r >= max {
            break;
        }
        points.push([r, 0.0, 0.0]);
        x += 1;
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Grid-distribution temperature for placements after the first atom.
    pub temperature: f64,
    pub max_atoms: usize,
    pub seed: u64,
    pub grid: GridSpec,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 0.1,
            max_atoms: 35,
            seed: 0,
            grid: GridSpec::default(),
        }
    }
}

/// Temperature-controlled categorical over candidate offsets: the log
/// probabilities of the predicted distance bins to every preceding
/// atom/token are summed, scaled by 1/T and normalized over the grid.
///
/// `rows` must align with `anchor_positions`; offsets are relative to
/// `focus`. Returns None when every candidate has zero support.
pub fn position_field(
    points: &[Vec3],
    focus: Vec3,
    anchor_positions: &[Vec3],
    rows: &Tensor,
    grid: &DistanceGrid,
    temperature: f64,
) -> Option<Vec<f64>> {
    debug_assert_eq!(rows.rows, anchor_positions.len());
    let ln_rows: Vec<Vec<f64>> = (0..rows.rows)
        .map(|j| rows.row(j).iter().map(|&p| p.ln()).collect())
        .collect();
    let mut scores = Vec::with_capacity(points.len());
    let mut max_score = f64::NEG_INFINITY;
    for &offset in points {
        let candidate = geom::add(focus, offset);
        let mut score = 0.0;
        for (anchor, ln_row) in anchor_positions.iter().zip(&ln_rows) {
            let d = geom::dist(*anchor, candidate);
            let bin = unchecked_bin(d, grid);
            score += ln_row[bin - 1];
        }
        score /= temperature;
        max_score = max_score.max(score);
        scores.push(score);
    }
    if !max_score.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for score in &mut scores {
        *score = (*score - max_score).exp();
        total += *score;
    }
    for score in &mut scores {
        *score /= total;
    }
    Some(scores)
}

fn unchecked_bin(d: f64, grid: &DistanceGrid) -> usize {
    if d > (grid.bins as f64 - 1.0) * grid.spacing {
        grid.bins
    } else {
        ((d + 0.5 * grid.spacing) / grid.spacing).ceil().max(1.0) as usize
    }
}

/// The model surface the sampler needs; implemented by [`Model`] and by
/// test stubs.
pub trait StepPredictor {
    fn vocabulary(&self) -> TypeVocabulary;
    fn distance_grid(&self) -> DistanceGrid;
    fn type_probs(
        &self,
        pm: &PartialMolecule,
        conditions: &Conditions,
    ) -> Result<Vec<f64>, ModelError>;
    fn distance_rows(
        &self,
        pm: &PartialMolecule,
        conditions: &Conditions,
        element_index: usize,
    ) -> Result<Tensor, ModelError>;
}

impl StepPredictor for Model {
    fn vocabulary(&self) -> TypeVocabulary {
        self.config.vocabulary()
    }

    fn distance_grid(&self) -> DistanceGrid {
        self.config.grid
    }

    fn type_probs(
        &self,
        pm: &PartialMolecule,
        conditions: &Conditions,
    ) -> Result<Vec<f64>, ModelError> {
        predict_type(self, pm, conditions)
    }

    fn distance_rows(
        &self,
        pm: &PartialMolecule,
        conditions: &Conditions,
        element_index: usize,
    ) -> Result<Tensor, ModelError> {
        Ok(predict_distances(self, pm, conditions, element_index)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleStatus {
    Ok,
    MaxAtoms,
    Degenerate,
    Empty,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub status: SampleStatus,
    pub elements: Vec<u8>,
    pub positions: Vec<Vec3>,
    /// Model-step evaluations performed (2n for a completed molecule).
    pub steps: usize,
}

impl SampleOutcome {
    pub fn molecule(&self) -> Option<Molecule> {
        if self.status == SampleStatus::Ok {
            Molecule::new(self.elements.clone(), self.positions.clone()).ok()
        } else {
            None
        }
    }
}

/// Samples one molecule autoregressively: uniform-random unfinished focus,
/// type from the type head, position from the grid distribution; 2n steps
/// for an n-atom result.
pub fn sample_molecule<M: StepPredictor, R: Rng>(
    model: &M,
    conditions: &Conditions,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SampleOutcome, GenerateError> {
    let vocab = model.vocabulary();
    let grid = model.distance_grid();
    let shell = build_grid(&cfg.grid)?;
    let first_grid = first_atom_grid(&grid);
    let origin: Vec3 = [0.0, 0.0, 0.0];

    let mut elements: Vec<u8> = Vec::new();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut finished: Vec<bool> = Vec::new();
    let mut steps = 0usize;

    let outcome = |status, elements: &Vec<u8>, positions: &Vec<Vec3>, steps| SampleOutcome {
        status,
        elements: elements.clone(),
        positions: positions.clone(),
        steps,
    };

    loop {
        let focus_atom: Option<usize> = if elements.is_empty() {
            None
        } else {
            let unfinished: Vec<usize> = (0..elements.len()).filter(|&i| !finished[i]).collect();
            if unfinished.is_empty() {
                return Ok(outcome(SampleStatus::Ok, &elements, &positions, steps));
            }
            Some(unfinished[rng.gen_range(0..unfinished.len())])
        };
        let focus_pos = focus_atom.map(|i| positions[i]).unwrap_or(origin);

        let pm = PartialMolecule::assemble(&vocab, origin, focus_pos, &elements, &positions)?;
        let probs = model.type_probs(&pm, conditions)?;
        steps += 1;
        let sampled_class = sample_weighted(rng, &probs);

        if sampled_class == vocab.stop_class() {
            match focus_atom {
                Some(atom) => {
                    finished[atom] = true;
                    continue;
                }
                None => return Ok(outcome(SampleStatus::Empty, &elements, &positions, steps)),
            }
        }

        if elements.len() >= cfg.max_atoms {
            return Ok(outcome(SampleStatus::MaxAtoms, &elements, &positions, steps));
        }

        let rows = model.distance_rows(&pm, conditions, sampled_class)?;
        let (points, anchors, row_subset, temperature): (&[Vec3], Vec<Vec3>, Tensor, f64) =
            if elements.is_empty() {
                // First placement: origin row only, flat temperature.
                let mut first_rows = Tensor::zeros(1, rows.cols);
                first_rows.row_mut(0).copy_from_slice(rows.row(0));
                (&first_grid, vec![origin], first_rows, 1.0)
            } else {
                (&shell.points, pm.positions.clone(), rows, cfg.temperature)
            };

        let field = match position_field(points, focus_pos, &anchors, &row_subset, &grid, temperature)
        {
            Some(field) => field,
            None => return Ok(outcome(SampleStatus::Degenerate, &elements, &positions, steps)),
        };
        let choice = sample_weighted(rng, &field);
        let new_pos = geom::add(focus_pos, points[choice]);
        let z = vocab.element_at(sampled_class).expect("element class");
        elements.push(z);
        positions.push(new_pos);
        finished.push(false);
    }
}

/// One line of the sample log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub status: SampleStatus,
    pub atom_count: usize,
    pub elements: Vec<String>,
    pub positions: Vec<Vec3>,
    pub conditions: serde_json::Map<String, serde_json::Value>,
}

/// Condition tuple serialized by schema name for the sample log.
pub fn conditions_echo(
    names: &[String],
    conditions: &Conditions,
) -> serde_json::Map<String, serde_json::Value> {
    let mut map = serde_json::Map::new();
    for (name, value) in names.iter().zip(conditions) {
        let v = match value {
            ConditionValue::Scalar(s) => serde_json::json!(s),
            ConditionValue::Bits(bits) => serde_json::Value::String(
                bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            ),
            ConditionValue::Composition(c) => serde_json::Value::String(c.to_string()),
        };
        map.insert(name.clone(), v);
    }
    map
}

impl SampleRecord {
    pub fn from_outcome(
        outcome: &SampleOutcome,
        index: usize,
        seed: u64,
        conditions: serde_json::Map<String, serde_json::Value>,
    ) -> SampleRecord {
        SampleRecord {
            index,
            seed,
            status: outcome.status,
            atom_count: outcome.elements.len(),
            elements: outcome
                .elements
                .iter()
                .map(|&z| elements::symbol(z).unwrap_or("?").to_string())
                .collect(),
            positions: outcome.positions.clone(),
            conditions,
        }
    }

    pub fn to_molecule(&self) -> Option<Molecule> {
        if self.status != SampleStatus::Ok {
            return None;
        }
        let numbers: Option<Vec<u8>> = self
            .elements
            .iter()
            .map(|s| elements::atomic_number(s))
            .collect();
        Molecule::new(numbers?, self.positions.clone()).ok()
    }
}

/// Samples `count` molecules with per-sample seeds derived from the base
/// seed, in parallel; failures are recorded, never dropped. Output order
/// and content are independent of the worker count.
pub fn sample_batch<M: StepPredictor + Sync>(
    model: &M,
    conditions: &Conditions,
    count: usize,
    cfg: &SamplerConfig,
    workers: usize,
) -> Result<Vec<(u64, SampleOutcome)>, GenerateError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|index| {
                let mut rng = indexed_rng(cfg.seed, "sample", index as u64);
                let seed = cfg.seed.wrapping_add(index as u64);
                sample_molecule(model, conditions, cfg, &mut rng).map(|o| (seed, o))
            })
            .collect()
    })
}
