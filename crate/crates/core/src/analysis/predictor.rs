//! Reduced-scale scalar property regressor sharing the invariant encoder:
//! atom features are sum-pooled and mapped to the target by an MLP,
//! trained with squared error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{Dataset, Molecule};
use crate::model::encoder::encode_sequence_on_tape;
use crate::model::{add_mlp, mlp_on_tape, EncoderConfig};
use crate::nn::{normal_init, Adam, ParamGrads, ParamStore, Tape};
use crate::rng::{stream_rng, stream_seed};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("property `{0}` is not in the dataset schema")]
    UnknownProperty(String),
    #[error("molecule {index}: property `{name}` missing or not a scalar")]
    MissingValue { index: usize, name: String },
    #[error("element {0} is not in the predictor vocabulary")]
    UnknownElement(u8),
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub elements: Vec<u8>,
    pub encoder: EncoderConfig,
    /// Hidden widths of the output network; a final scalar layer is implied.
    pub output_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            elements: vec![1, 6, 7, 8, 9],
            encoder: EncoderConfig {
                features: 16,
                interaction_blocks: 2,
                cutoff: 10.0,
                rbf_centers: 9,
            },
            output_hidden: vec![16],
            learning_rate: 3e-3,
            epochs: 40,
            batch_size: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyPredictor {
    pub config: PredictorConfig,
    pub property: String,
    pub params: ParamStore,
    target_mean: f64,
    target_std: f64,
}

fn init_params(cfg: &PredictorConfig) -> ParamStore {
    let mut rng = stream_rng(stream_seed(cfg.seed, "predictor-init"), "init");
    let mut params = ParamStore::new();
    let f = cfg.encoder.features;
    params.add("embed", normal_init(cfg.elements.len(), f, &mut rng));
    for b in 0..cfg.encoder.interaction_blocks {
        let p = format!("enc.{b}");
        params.add(
            &format!("{p}.in2f.w"),
            crate::nn::xavier_uniform(f, f, &mut rng),
        );
        params.add(
            &format!("{p}.filt.w1"),
            crate::nn::xavier_uniform(cfg.encoder.rbf_centers, f, &mut rng),
        );
        params.add(&format!("{p}.filt.b1"), crate::nn::Tensor::zeros(1, f));
        params.add(
            &format!("{p}.filt.w2"),
            crate::nn::xavier_uniform(f, f, &mut rng),
        );
        params.add(&format!("{p}.filt.b2"), crate::nn::Tensor::zeros(1, f));
        params.add(
            &format!("{p}.f2out.w"),
            crate::nn::xavier_uniform(f, f, &mut rng),
        );
        params.add(&format!("{p}.f2out.b"), crate::nn::Tensor::zeros(1, f));
        params.add(
            &format!("{p}.out.w"),
            crate::nn::xavier_uniform(f, f, &mut rng),
        );
        params.add(&format!("{p}.out.b"), crate::nn::Tensor::zeros(1, f));
    }
    let mut widths = cfg.output_hidden.clone();
    widths.push(1);
    add_mlp(&mut params, "out", f, &widths, &mut rng);
    params
}

fn types_of(cfg: &PredictorConfig, molecule: &Molecule) -> Result<Vec<usize>, PredictorError> {
    molecule
        .elements
        .iter()
        .map(|&z| {
            cfg.elements
                .iter()
                .position(|&e| e == z)
                .ok_or(PredictorError::UnknownElement(z))
        })
        .collect()
}

fn forward_standardized(
    predictor_params: &ParamStore,
    cfg: &PredictorConfig,
    types: &[usize],
    positions: &[crate::geom::Vec3],
    tape: &mut Tape,
) -> crate::nn::VarId {
    let x = encode_sequence_on_tape(tape, predictor_params, &cfg.encoder, types, positions);
    let pooled = tape.sum_rows(x);
    let n_layers = cfg.output_hidden.len() + 1;
    mlp_on_tape(tape, predictor_params, "out", pooled, n_layers)
}

/// Trains the reduced-scale property regressor on a labelled dataset.
pub fn train_property_regressor(
    dataset: &Dataset,
    property: &str,
    config: &PredictorConfig,
) -> Result<PropertyPredictor, PredictorError> {
    if dataset.is_empty() {
        return Err(PredictorError::Empty);
    }
    if dataset.property_spec(property).is_none() {
        return Err(PredictorError::UnknownProperty(property.to_string()));
    }
    let targets: Vec<f64> = dataset
        .records
        .iter()
        .enumerate()
        .map(|(index, m)| {
            m.properties
                .get(property)
                .and_then(|p| p.as_scalar())
                .ok_or_else(|| PredictorError::MissingValue {
                    index,
                    name: property.to_string(),
                })
        })
        .collect::<Result<_, _>>()?;
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / targets.len() as f64;
    let std = var.sqrt();
    let denominator = std.max(1e-12);

    let typed: Vec<Vec<usize>> = dataset
        .records
        .iter()
        .map(|m| types_of(config, m))
        .collect::<Result<_, _>>()?;

    let mut params = init_params(config);
    let mut optimizer = Adam::new(&params);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream_rng(config.seed, &format!("pred-shuffle-{epoch}")));
        for chunk in order.chunks(config.batch_size) {
            let mut grads = ParamGrads::zeros_like(&params);
            for &i in chunk {
                let mut tape = Tape::new(&params);
                let pred = forward_standardized(
                    &params,
                    config,
                    &typed[i],
                    &dataset.records[i].positions,
                    &mut tape,
                );
                let standardized = (targets[i] - mean) / denominator;
                let diff = tape.add_const(pred, -standardized);
                let sq = tape.mul(diff, diff);
                let loss = tape.sum_all(sq);
                tape.backward(loss, 1.0 / chunk.len() as f64, &mut grads);
            }
            optimizer.step(&mut params, &grads, config.learning_rate);
        }
    }

    Ok(PropertyPredictor {
        config: config.clone(),
        property: property.to_string(),
        params,
        target_mean: mean,
        target_std: std,
    })
}

/// Predicts the scalar property of one molecule.
pub fn predict_property(
    predictor: &PropertyPredictor,
    molecule: &Molecule,
) -> Result<f64, PredictorError> {
    let types = types_of(&predictor.config, molecule)?;
    let mut tape = Tape::new(&predictor.params);
    let pred = forward_standardized(
        &predictor.params,
        &predictor.config,
        &types,
        &molecule.positions,
        &mut tape,
    );
    Ok(tape.value(pred).item() * predictor.target_std + predictor.target_mean)
}
