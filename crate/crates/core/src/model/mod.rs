//! Model assembly: type vocabulary, partial molecules, parameters.

pub mod conditioning;
pub mod encoder;
pub mod heads;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::elements;
use crate::geom::Vec3;
use crate::nn::{normal_init, xavier_uniform, ParamStore, Tensor};
use crate::rng::stream_rng;

use conditioning::{ConditionSchema, ConditionSpec};
use heads::DistanceGrid;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite coordinate in partial molecule")]
    NonFiniteInput,
    #[error("element {0} is not in the model vocabulary")]
    ElementNotInVocabulary(u8),
    #[error("distance head cannot be evaluated for the stop type")]
    StopHasNoDistances,
    #[error("condition mismatch: {0}")]
    ConditionMismatch(String),
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

/// Element type-ids plus the stop marker; the stop marker is last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeVocabulary {
    pub elements: Vec<u8>,
}

impl TypeVocabulary {
    pub fn new(elements: Vec<u8>) -> TypeVocabulary {
        TypeVocabulary { elements }
    }

    /// Number of classes predicted by the type head (elements + stop).
    pub fn n_classes(&self) -> usize {
        self.elements.len() + 1
    }

    pub fn stop_class(&self) -> usize {
        self.elements.len()
    }

    /// Embedding rows: elements, then the origin and focus tokens.
    pub fn n_embeddings(&self) -> usize {
        self.elements.len() + 2
    }

    pub fn origin_type(&self) -> usize {
        self.elements.len()
    }

    pub fn focus_type(&self) -> usize {
        self.elements.len() + 1
    }

    pub fn element_index(&self, z: u8) -> Option<usize> {
        self.elements.iter().position(|&e| e == z)
    }

    pub fn element_at(&self, index: usize) -> Option<u8> {
        self.elements.get(index).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Atom feature width F.
    pub features: usize,
    pub interaction_blocks: usize,
    /// Message-passing cutoff in Å.
    pub cutoff: f64,
    /// Number of radial basis centers on [0, cutoff].
    pub rbf_centers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            features: 128,
            interaction_blocks: 9,
            cutoff: 10.0,
            rbf_centers: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Element vocabulary in fixed order (atomic numbers).
    pub elements: Vec<u8>,
    pub encoder: EncoderConfig,
    pub conditions: ConditionSchema,
    /// Widths of the condition-aggregation MLP; the last entry is D.
    pub aggregation_widths: Vec<usize>,
    /// Hidden widths of the type head; the output layer (|Z_all|) is implied.
    pub type_head_hidden: Vec<usize>,
    /// Hidden widths of the distance head; the output layer (L) is implied.
    pub dist_head_hidden: Vec<usize>,
    pub grid: DistanceGrid,
}

impl ModelConfig {
    /// Table-default widths for the QM9-scale model.
    pub fn with_defaults(elements: Vec<u8>, conditions: ConditionSchema) -> ModelConfig {
        ModelConfig {
            elements,
            encoder: EncoderConfig::default(),
            conditions,
            aggregation_widths: vec![128, 128, 128, 128, 128],
            type_head_hidden: vec![205, 155, 105, 55],
            dist_head_hidden: vec![264, 273, 282, 291],
            grid: DistanceGrid::default(),
        }
    }

    pub fn vocabulary(&self) -> TypeVocabulary {
        TypeVocabulary::new(self.elements.clone())
    }

    /// Width D of the conditional feature vector.
    pub fn condition_dim(&self) -> usize {
        *self.aggregation_widths.last().expect("non-empty aggregation")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.elements.is_empty() {
            return Err(ModelError::BadConfig("empty element vocabulary".into()));
        }
        for &z in &self.elements {
            if !elements::is_known(z) {
                return Err(ModelError::BadConfig(format!("unknown element {z}")));
            }
        }
        if self.aggregation_widths.is_empty() {
            return Err(ModelError::BadConfig("empty aggregation widths".into()));
        }
        if self.encoder.features == 0
            || self.encoder.interaction_blocks == 0
            || self.encoder.rbf_centers < 2
            || self.encoder.cutoff <= 0.0
        {
            return Err(ModelError::BadConfig("bad encoder config".into()));
        }
        if self.grid.bins < 2 || self.grid.spacing <= 0.0 {
            return Err(ModelError::BadConfig("bad distance grid".into()));
        }
        if self.conditions.is_empty() {
            return Err(ModelError::BadConfig("at least one condition required".into()));
        }
        for spec in &self.conditions {
            spec.validate().map_err(ModelError::BadConfig)?;
        }
        Ok(())
    }
}

/// A molecule prefix: the origin and focus tokens occupy the first two
/// slots, placed atoms follow in placement order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMolecule {
    /// Internal type-ids (element index, origin or focus token id).
    pub types: Vec<usize>,
    pub positions: Vec<Vec3>,
}

impl PartialMolecule {
    /// Builds the model input for one placement step.
    pub fn assemble(
        vocab: &TypeVocabulary,
        origin: Vec3,
        focus: Vec3,
        placed_elements: &[u8],
        placed_positions: &[Vec3],
    ) -> Result<PartialMolecule, ModelError> {
        let mut types = Vec::with_capacity(placed_elements.len() + 2);
        let mut positions = Vec::with_capacity(placed_elements.len() + 2);
        types.push(vocab.origin_type());
        positions.push(origin);
        types.push(vocab.focus_type());
        positions.push(focus);
        for (&z, &p) in placed_elements.iter().zip(placed_positions) {
            let idx = vocab
                .element_index(z)
                .ok_or(ModelError::ElementNotInVocabulary(z))?;
            types.push(idx);
            positions.push(p);
        }
        let pm = PartialMolecule { types, positions };
        pm.check_finite()?;
        Ok(pm)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        for p in &self.positions {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(ModelError::NonFiniteInput);
            }
        }
        Ok(())
    }
}

/// All learned state plus the config that shaped it.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Initializes parameters from a seed: Glorot-uniform weights, zero
    /// biases, standard-normal embeddings.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = stream_rng(seed, "init");
        let mut params = ParamStore::new();
        let vocab = config.vocabulary();
        let f = config.encoder.features;

        params.add("embed", normal_init(vocab.n_embeddings(), f, &mut rng));
        for b in 0..config.encoder.interaction_blocks {
            let p = format!("enc.{b}");
            params.add(&format!("{p}.in2f.w"), xavier_uniform(f, f, &mut rng));
            params.add(
                &format!("{p}.filt.w1"),
                xavier_uniform(config.encoder.rbf_centers, f, &mut rng),
            );
            params.add(&format!("{p}.filt.b1"), Tensor::zeros(1, f));
            params.add(&format!("{p}.filt.w2"), xavier_uniform(f, f, &mut rng));
            params.add(&format!("{p}.filt.b2"), Tensor::zeros(1, f));
            params.add(&format!("{p}.f2out.w"), xavier_uniform(f, f, &mut rng));
            params.add(&format!("{p}.f2out.b"), Tensor::zeros(1, f));
            params.add(&format!("{p}.out.w"), xavier_uniform(f, f, &mut rng));
            params.add(&format!("{p}.out.b"), Tensor::zeros(1, f));
        }

        for (i, spec) in config.conditions.iter().enumerate() {
            let prefix = format!("cond.{i}");
            match spec {
                ConditionSpec::Scalar { spec, .. } => {
                    add_mlp(&mut params, &prefix, spec.n_centers(), &spec.mlp, &mut rng);
                }
                ConditionSpec::BitVector { length, mlp, .. } => {
                    add_mlp(&mut params, &prefix, *length, mlp, &mut rng);
                }
                ConditionSpec::Composition {
                    embed_dim,
                    mlp,
                    count,
                    ..
                } => {
                    params.add(
                        &format!("{prefix}.comp_embed"),
                        normal_init(config.elements.len(), *embed_dim, &mut rng),
                    );
                    add_mlp(
                        &mut params,
                        &prefix,
                        config.elements.len() * embed_dim,
                        mlp,
                        &mut rng,
                    );
                    add_mlp(
                        &mut params,
                        &format!("{prefix}.count"),
                        count.n_centers(),
                        &count.mlp,
                        &mut rng,
                    );
                }
            }
        }

        let concat_width: usize = config
            .conditions
            .iter()
            .map(|spec| spec.feature_width())
            .sum();
        add_mlp(&mut params, "agg", concat_width, &config.aggregation_widths, &mut rng);

        let d = config.condition_dim();
        let mut type_widths = config.type_head_hidden.clone();
        type_widths.push(vocab.n_classes());
        add_mlp(&mut params, "type", f + d, &type_widths, &mut rng);

        params.add("gnext", normal_init(config.elements.len(), f, &mut rng));
        let mut dist_widths = config.dist_head_hidden.clone();
        dist_widths.push(config.grid.bins);
        add_mlp(&mut params, "dist", f + d, &dist_widths, &mut rng);

        Ok(Model { config, params })
    }
}

pub(crate) fn add_mlp(
    params: &mut ParamStore,
    prefix: &str,
    input_width: usize,
    widths: &[usize],
    rng: &mut rand_chacha::ChaCha8Rng,
) {
    let mut prev = input_width;
    for (l, &width) in widths.iter().enumerate() {
        params.add(&format!("{prefix}.mlp.{l}.w"), xavier_uniform(prev, width, rng));
        params.add(&format!("{prefix}.mlp.{l}.b"), Tensor::zeros(1, width));
        prev = width;
    }
}

/// Applies the MLP registered under `prefix`: linear layers with shifted
/// softplus between them and none after the last.
pub fn mlp_on_tape(
    tape: &mut crate::nn::Tape,
    params: &ParamStore,
    prefix: &str,
    input: crate::nn::VarId,
    n_layers: usize,
) -> crate::nn::VarId {
    let mut h = input;
    for l in 0..n_layers {
        let w = tape.param(params.slot(&format!("{prefix}.mlp.{l}.w")));
        let b = tape.param(params.slot(&format!("{prefix}.mlp.{l}.b")));
        h = tape.dense(h, w, Some(b));
        if l + 1 < n_layers {
            h = tape.ssp(h);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::conditioning::ScalarSpec;
    use super::*;

    pub(crate) fn tiny_schema() -> ConditionSchema {
        vec![ConditionSpec::Scalar {
            name: "gap".into(),
            unit: Some("eV".into()),
            spec: ScalarSpec {
                min: 2.0,
                max: 11.0,
                delta: 2.25,
                mlp: vec![8, 8],
            },
        }]
    }

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            elements: vec![1, 6, 7, 8, 9],
            encoder: EncoderConfig {
                features: 8,
                interaction_blocks: 2,
                cutoff: 10.0,
                rbf_centers: 5,
            },
            conditions: tiny_schema(),
            aggregation_widths: vec![8, 8],
            type_head_hidden: vec![10],
            dist_head_hidden: vec![10],
            grid: DistanceGrid {
                bins: 12,
                spacing: 0.25,
            },
        }
    }

    #[test]
    fn vocabulary_layout() {
        let vocab = TypeVocabulary::new(vec![1, 6, 7, 8, 9]);
        assert_eq!(vocab.n_classes(), 6);
        assert_eq!(vocab.stop_class(), 5);
        assert_eq!(vocab.n_embeddings(), 7);
        assert_eq!(vocab.origin_type(), 5);
        assert_eq!(vocab.focus_type(), 6);
        assert_eq!(vocab.element_index(6), Some(1));
        assert_eq!(vocab.element_index(17), None);
    }

    #[test]
    fn init_builds_expected_shapes() {
        let model = Model::init(tiny_config(), 0).unwrap();
        let embed = model.params.by_name("embed");
        assert_eq!((embed.rows, embed.cols), (7, 8));
        // Final type layer outputs |Z_all| = 6 classes.
        let w_last = model.params.by_name("type.mlp.1.w");
        assert_eq!(w_last.cols, 6);
        // Final distance layer outputs L bins.
        let d_last = model.params.by_name("dist.mlp.1.w");
        assert_eq!(d_last.cols, 12);
        let gnext = model.params.by_name("gnext");
        assert_eq!((gnext.rows, gnext.cols), (5, 8));
    }

    #[test]
    fn partial_molecule_assembly() {
        let vocab = TypeVocabulary::new(vec![1, 6]);
        let pm = PartialMolecule::assemble(
            &vocab,
            [0.0; 3],
            [1.0, 0.0, 0.0],
            &[6, 1],
            &[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(pm.len(), 4);
        assert_eq!(pm.types, vec![2, 3, 1, 0]);
        assert!(PartialMolecule::assemble(
            &vocab,
            [0.0; 3],
            [0.0; 3],
            &[8],
            &[[0.0; 3]]
        )
        .is_err());
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let mut config = tiny_config();
        config.elements.clear();
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.conditions.clear();
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.grid.bins = 1;
        assert!(config.validate().is_err());
    }
}
