//! Losses, optimization schedule and checkpointing.

mod checkpoint;

pub use checkpoint::{Checkpoint, EpochStats, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{Dataset, Molecule};
use crate::model::conditioning::{conditions_on_tape, ConditionSpec, ConditionValue, Conditions};
use crate::model::encoder::encode_on_tape;
use crate::model::heads::{
    distance_scores_on_tape, type_distribution_on_tape, DistanceGrid,
};
use crate::model::{Model, ModelConfig, ModelError, PartialMolecule};
use crate::nn::{Adam, ParamGrads, Tape, Tensor, VarId};
use crate::rng::{indexed_rng, stream_rng};
use crate::traj::{self, StepAction, Trajectory};

/// Probability floor inside logarithms.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("molecule {index}: property `{name}` is missing or has the wrong kind")]
    MissingProperty { index: usize, name: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Traj(#[from] traj::TrajError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Molecules per mini-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before the rate decays.
    pub patience: usize,
    pub decay_factor: f64,
    /// Training stops once the learning rate falls to this value or below.
    pub stop_lr: f64,
    /// Gaussian sharpness of distance targets as a multiple of 1/spacing.
    pub gamma_factor: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Break closest-to-center ties by lowest index instead of randomly.
    pub deterministic_ties: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 5,
            learning_rate: 1e-4,
            patience: 10,
            decay_factor: 0.5,
            stop_lr: 1e-6,
            gamma_factor: 10.0,
            seed: 0,
            max_epochs: 10_000,
            deterministic_ties: false,
        }
    }
}

impl TrainConfig {
    /// Gaussian sharpness of the distance targets for a grid.
    pub fn gamma(&self, grid: &DistanceGrid) -> f64 {
        self.gamma_factor / grid.spacing
    }
}

/// Cross-entropy of a predicted type categorical against the true class.
pub fn type_loss(pred: &[f64], truth: usize) -> f64 {
    -pred[truth].max(LOG_EPS).ln()
}

/// Gaussian-expanded target rows, one per preceding atom/token; each row
/// sums to 1.
pub fn distance_targets(
    r_next: crate::geom::Vec3,
    partial_positions: &[crate::geom::Vec3],
    grid: &DistanceGrid,
    gamma: f64,
) -> Tensor {
    let n = partial_positions.len();
    let mut out = Tensor::zeros(n, grid.bins);
    for (j, &pos) in partial_positions.iter().enumerate() {
        let d = crate::geom::dist(r_next, pos);
        let row = out.row_mut(j);
        let mut max_exp = f64::NEG_INFINITY;
        for (l, slot) in row.iter_mut().enumerate() {
            let center = l as f64 * grid.spacing;
            *slot = -gamma * (d - center) * (d - center);
            max_exp = max_exp.max(*slot);
        }
        let mut sum = 0.0;
        for slot in row.iter_mut() {
            *slot = (*slot - max_exp).exp();
            sum += *slot;
        }
        for slot in row.iter_mut() {
            *slot /= sum;
        }
    }
    out
}

/// Average cross-entropy between predicted distance rows and targets.
pub fn distance_loss(pred: &Tensor, target: &Tensor) -> f64 {
    debug_assert_eq!((pred.rows, pred.cols), (target.rows, target.cols));
    let mut total = 0.0;
    for (p, q) in pred.data.iter().zip(&target.data) {
        total -= q * p.max(LOG_EPS).ln();
    }
    total / pred.rows as f64
}

/// Conditions for a training molecule per the model schema: scalars and
/// bit-vectors come from properties, compositions from the structure.
pub fn conditions_for(
    config: &ModelConfig,
    molecule: &Molecule,
    index: usize,
) -> Result<Conditions, TrainError> {
    let mut values = Vec::with_capacity(config.conditions.len());
    for spec in &config.conditions {
        let value = match spec {
            ConditionSpec::Scalar { name, .. } => {
                let v = molecule
                    .properties
                    .get(name)
                    .and_then(|p| p.as_scalar())
                    .ok_or_else(|| TrainError::MissingProperty {
                        index,
                        name: name.clone(),
                    })?;
                ConditionValue::Scalar(v)
            }
            ConditionSpec::BitVector { name, length, .. } => {
                match molecule.properties.get(name).and_then(|p| p.as_bits()) {
                    Some(bits) => ConditionValue::Bits(bits.to_vec()),
                    // The path fingerprint is derivable from the structure.
                    None if name == "fingerprint" && *length == crate::analysis::FINGERPRINT_BITS => {
                        let fp = crate::analysis::fingerprint(&crate::analysis::assign_bonds(molecule));
                        ConditionValue::Bits(fp.to_bools())
                    }
                    None => {
                        return Err(TrainError::MissingProperty {
                            index,
                            name: name.clone(),
                        })
                    }
                }
            }
            ConditionSpec::Composition { .. } => ConditionValue::Composition(molecule.composition()),
        };
        values.push(value);
    }
    Ok(values)
}

/// Builds the per-molecule loss on a tape:
/// sum over steps of type_loss/|A| + dist_loss/(0.5 |A|).
fn molecule_loss_on_tape(
    tape: &mut Tape,
    model: &Model,
    molecule: &Molecule,
    trajectory: &Trajectory,
    conditions: &Conditions,
    gamma: f64,
) -> Result<VarId, ModelError> {
    let vocab = model.config.vocabulary();
    let grid = &model.config.grid;
    let y = conditions_on_tape(tape, model, conditions)?;
    let n_steps = trajectory.steps.len();
    let type_weight = 1.0 / n_steps as f64;
    let dist_weight = 1.0 / (0.5 * n_steps as f64);

    let mut total: Option<VarId> = None;
    for step in &trajectory.steps {
        let pm = PartialMolecule::assemble(
            &vocab,
            trajectory.origin,
            trajectory.focus_position(molecule, step),
            &trajectory.partial_elements(molecule, step),
            &trajectory.partial_positions(molecule, step),
        )?;
        let x = encode_on_tape(tape, model, &pm)?;
        let type_dist = type_distribution_on_tape(tape, model, x, y);
        let truth = match step.action {
            StepAction::Place(atom) => vocab
                .element_index(molecule.elements[atom])
                .ok_or(ModelError::ElementNotInVocabulary(molecule.elements[atom]))?,
            StepAction::Stop => vocab.stop_class(),
        };
        let picked = tape.select_entry(type_dist, 0, truth);
        let ln = tape.ln_eps(picked, LOG_EPS);
        let mut step_loss = tape.scale(ln, -type_weight);

        if let StepAction::Place(atom) = step.action {
            let targets = distance_targets(
                molecule.positions[atom],
                &pm.positions,
                grid,
                gamma,
            );
            let q = tape.input(targets);
            let truth_idx = truth;
            let scores = distance_scores_on_tape(tape, model, x, y, truth_idx)?;
            let log_probs = tape.log_softmax_rows(scores);
            let weighted = tape.mul(log_probs, q);
            let sum = tape.sum_all(weighted);
            // -(1/(i-1)) * sum, then the batch-formula weight.
            let dist = tape.scale(sum, -dist_weight / pm.len() as f64);
            step_loss = tape.add(step_loss, dist);
        }
        total = Some(match total {
            Some(acc) => tape.add(acc, step_loss),
            None => step_loss,
        });
    }
    Ok(total.expect("trajectory has steps"))
}

/// Mean per-molecule loss over a batch; optionally accumulates parameter
/// gradients of the mean.
pub fn batch_loss(
    model: &Model,
    batch: &[(&Molecule, &Trajectory, &Conditions)],
    gamma: f64,
    mut grads: Option<&mut ParamGrads>,
) -> Result<f64, ModelError> {
    let m = batch.len() as f64;
    let mut total = 0.0;
    for (molecule, trajectory, conditions) in batch {
        let mut tape = Tape::new(&model.params);
        let loss = molecule_loss_on_tape(&mut tape, model, molecule, trajectory, conditions, gamma)?;
        total += tape.value(loss).item();
        if let Some(g) = grads.as_deref_mut() {
            tape.backward(loss, 1.0 / m, g);
        }
    }
    Ok(total / m)
}

/// Mean per-step type loss of a model over freshly sampled trajectories;
/// a convergence diagnostic.
pub fn mean_type_loss(
    model: &Model,
    dataset: &Dataset,
    seed: u64,
    deterministic_ties: bool,
) -> Result<f64, TrainError> {
    let vocab = model.config.vocabulary();
    let mut total = 0.0;
    let mut steps = 0usize;
    for (idx, molecule) in dataset.records.iter().enumerate() {
        let adjacency = traj::default_neighbors(molecule);
        let mut rng = indexed_rng(seed, "type-loss", idx as u64);
        let trajectory = traj::sample_trajectory(molecule, &adjacency, &mut rng, deterministic_ties)?;
        let conditions = conditions_for(&model.config, molecule, idx)?;
        let mut tape = Tape::new(&model.params);
        let y = conditions_on_tape(&mut tape, model, &conditions)?;
        for step in &trajectory.steps {
            let pm = PartialMolecule::assemble(
                &vocab,
                trajectory.origin,
                trajectory.focus_position(molecule, step),
                &trajectory.partial_elements(molecule, step),
                &trajectory.partial_positions(molecule, step),
            )?;
            let x = encode_on_tape(&mut tape, model, &pm)?;
            let dist = type_distribution_on_tape(&mut tape, model, x, y);
            let truth = match step.action {
                StepAction::Place(atom) => vocab.element_index(molecule.elements[atom]).unwrap(),
                StepAction::Stop => vocab.stop_class(),
            };
            total += type_loss(tape.value(dist).row(0), truth);
            steps += 1;
        }
    }
    Ok(total / steps as f64)
}

struct MoleculeTask {
    molecule: Molecule,
    conditions: Conditions,
    adjacency: Vec<Vec<usize>>,
}

/// Full training loop: per-epoch trajectory resampling, ADAM updates,
/// plateau-driven learning-rate decay and best-validation checkpointing.
pub fn train_loop(
    train: &Dataset,
    val: &Dataset,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<Checkpoint, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit { split: "train" });
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit { split: "val" });
    }
    let mut model = Model::init(model_config, crate::rng::stream_seed(config.seed, "model-init"))?;
    let gamma = config.gamma(&model.config.grid);

    let prepare = |dataset: &Dataset| -> Result<Vec<MoleculeTask>, TrainError> {
        dataset
            .records
            .iter()
            .enumerate()
            .map(|(idx, molecule)| {
                Ok(MoleculeTask {
                    molecule: molecule.clone(),
                    conditions: conditions_for(&model.config, molecule, idx)?,
                    adjacency: traj::default_neighbors(molecule),
                })
            })
            .collect()
    };
    let train_tasks = prepare(train)?;
    let val_tasks = prepare(val)?;

    let mut optimizer = Adam::new(&model.params);
    let mut lr = config.learning_rate;
    let mut best_val = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut stagnant = 0usize;
    let mut curve: Vec<EpochStats> = Vec::new();

    for epoch in 0..config.max_epochs {
        // Fresh placement sequences for every molecule this epoch.
        let trajectories: Vec<Trajectory> = train_tasks
            .iter()
            .enumerate()
            .map(|(idx, task)| {
                let mut rng = indexed_rng(config.seed, &format!("traj-{epoch}"), idx as u64);
                traj::sample_trajectory(
                    &task.molecule,
                    &task.adjacency,
                    &mut rng,
                    config.deterministic_ties,
                )
            })
            .collect::<Result<_, _>>()?;

        let mut order: Vec<usize> = (0..train_tasks.len()).collect();
        {
            use rand::seq::SliceRandom;
            let mut rng = stream_rng(config.seed, &format!("shuffle-{epoch}"));
            order.shuffle(&mut rng);
        }

        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&Molecule, &Trajectory, &Conditions)> = chunk
                .iter()
                .map(|&i| {
                    (
                        &train_tasks[i].molecule,
                        &trajectories[i],
                        &train_tasks[i].conditions,
                    )
                })
                .collect();
            let mut grads = ParamGrads::zeros_like(&model.params);
            let loss = batch_loss(&model, &batch, gamma, Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            optimizer.step(&mut model.params, &grads, lr);
            epoch_loss += loss;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches as f64;

        // Validation trajectories come from a fixed stream so epochs stay
        // comparable.
        let mut val_loss = 0.0;
        let mut val_batches = 0usize;
        let val_trajectories: Vec<Trajectory> = val_tasks
            .iter()
            .enumerate()
            .map(|(idx, task)| {
                let mut rng = indexed_rng(config.seed, "val-traj", idx as u64);
                traj::sample_trajectory(
                    &task.molecule,
                    &task.adjacency,
                    &mut rng,
                    config.deterministic_ties,
                )
            })
            .collect::<Result<_, _>>()?;
        for chunk in (0..val_tasks.len()).collect::<Vec<_>>().chunks(config.batch_size) {
            let batch: Vec<(&Molecule, &Trajectory, &Conditions)> = chunk
                .iter()
                .map(|&i| {
                    (
                        &val_tasks[i].molecule,
                        &val_trajectories[i],
                        &val_tasks[i].conditions,
                    )
                })
                .collect();
            val_loss += batch_loss(&model, &batch, gamma, None)?;
            val_batches += 1;
        }
        let val_loss = val_loss / val_batches as f64;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: 0 });
        }

        curve.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_params = model.params.clone();
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.patience {
                lr *= config.decay_factor;
                stagnant = 0;
                if lr <= config.stop_lr {
                    break;
                }
            }
        }
    }

    model.params = best_params;
    Ok(Checkpoint {
        format_version: CHECKPOINT_VERSION,
        model,
        train_config: Some(config.clone()),
        curve,
        optimizer: Some(optimizer),
    })
}
