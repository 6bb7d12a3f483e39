//! Embedding of target properties into the conditional feature vector y.

use serde::{Deserialize, Serialize};

use crate::chem::Composition;
use crate::nn::{Tape, Tensor, VarId};

use super::{mlp_on_tape, Model, ModelError};

/// Gaussian-expansion spec for a scalar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSpec {
    pub min: f64,
    pub max: f64,
    pub delta: f64,
    pub mlp: Vec<usize>,
}

impl ScalarSpec {
    /// Number of expansion centers: floor((max - min) / delta) + 1.
    pub fn n_centers(&self) -> usize {
        ((self.max - self.min) / self.delta).floor() as usize + 1
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_centers())
            .map(|l| self.min + l as f64 * self.delta)
            .collect()
    }

    /// Gaussian expansion of a value; out-of-range values are permitted.
    pub fn expand(&self, value: f64) -> Vec<f64> {
        let two_delta_sq = 2.0 * self.delta * self.delta;
        self.centers()
            .iter()
            .map(|c| (-(value - c) * (value - c) / two_delta_sq).exp())
            .collect()
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.min < self.max) {
            return Err(format!("scalar spec needs min < max ({} vs {})", self.min, self.max));
        }
        if self.delta <= 0.0 {
            return Err("scalar spec needs delta > 0".into());
        }
        if self.mlp.is_empty() {
            return Err("scalar spec needs at least one MLP layer".into());
        }
        Ok(())
    }
}

/// One condition in the model schema; the declaration order fixes the
/// concatenation order and is persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionSpec {
    Scalar {
        name: String,
        unit: Option<String>,
        spec: ScalarSpec,
    },
    BitVector {
        name: String,
        length: usize,
        mlp: Vec<usize>,
    },
    /// Two feature channels: fraction-weighted type embeddings and the atom
    /// count embedded as a scalar.
    Composition {
        name: String,
        embed_dim: usize,
        mlp: Vec<usize>,
        count: ScalarSpec,
    },
}

pub type ConditionSchema = Vec<ConditionSpec>;

impl ConditionSpec {
    pub fn name(&self) -> &str {
        match self {
            ConditionSpec::Scalar { name, .. } => name,
            ConditionSpec::BitVector { name, .. } => name,
            ConditionSpec::Composition { name, .. } => name,
        }
    }

    /// Width this condition contributes to the aggregation input.
    pub fn feature_width(&self) -> usize {
        match self {
            ConditionSpec::Scalar { spec, .. } => *spec.mlp.last().unwrap(),
            ConditionSpec::BitVector { mlp, .. } => *mlp.last().unwrap(),
            ConditionSpec::Composition { mlp, count, .. } => {
                mlp.last().unwrap() + count.mlp.last().unwrap()
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            ConditionSpec::Scalar { spec, .. } => spec.validate(),
            ConditionSpec::BitVector { length, mlp, .. } => {
                if *length == 0 {
                    return Err("bit-vector length must be positive".into());
                }
                if mlp.is_empty() {
                    return Err("bit-vector spec needs at least one MLP layer".into());
                }
                Ok(())
            }
            ConditionSpec::Composition {
                embed_dim,
                mlp,
                count,
                ..
            } => {
                if *embed_dim == 0 {
                    return Err("composition embedding dim must be positive".into());
                }
                if mlp.is_empty() {
                    return Err("composition spec needs at least one MLP layer".into());
                }
                count.validate()
            }
        }
    }

    /// Standard specs: scalar embeddings use 64,64,64 MLPs, the fingerprint
    /// embedding uses 725,426,128, the composition embedding 16 features.
    pub fn scalar(name: &str, unit: Option<&str>, min: f64, max: f64, delta: f64) -> ConditionSpec {
        ConditionSpec::Scalar {
            name: name.into(),
            unit: unit.map(|u| u.into()),
            spec: ScalarSpec {
                min,
                max,
                delta,
                mlp: vec![64, 64, 64],
            },
        }
    }

    pub fn fingerprint(name: &str) -> ConditionSpec {
        ConditionSpec::BitVector {
            name: name.into(),
            length: 1024,
            mlp: vec![725, 426, 128],
        }
    }

    pub fn composition(name: &str) -> ConditionSpec {
        ConditionSpec::Composition {
            name: name.into(),
            embed_dim: 16,
            mlp: vec![64, 64, 64],
            count: ScalarSpec {
                min: 0.0,
                max: 35.0,
                delta: 8.75,
                mlp: vec![64, 64, 64],
            },
        }
    }
}

/// A condition value; the tuple must match the schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionValue {
    Scalar(f64),
    Bits(Vec<bool>),
    Composition(Composition),
}

pub type Conditions = Vec<ConditionValue>;

fn expand_input(tape: &mut Tape, spec: &ScalarSpec, value: f64) -> VarId {
    tape.input(Tensor::row_vector(spec.expand(value)))
}

/// Embeds one scalar condition: Gaussian expansion followed by its MLP.
pub fn embed_scalar_on_tape(
    tape: &mut Tape,
    model: &Model,
    prefix: &str,
    spec: &ScalarSpec,
    value: f64,
) -> VarId {
    let x = expand_input(tape, spec, value);
    mlp_on_tape(tape, &model.params, prefix, x, spec.mlp.len())
}

/// Builds the conditional feature vector y for a condition tuple.
pub fn conditions_on_tape(
    tape: &mut Tape,
    model: &Model,
    values: &Conditions,
) -> Result<VarId, ModelError> {
    let schema = &model.config.conditions;
    if values.len() != schema.len() {
        return Err(ModelError::ConditionMismatch(format!(
            "expected {} condition values, got {}",
            schema.len(),
            values.len()
        )));
    }
    let mut features: Vec<VarId> = Vec::new();
    for (i, (spec, value)) in schema.iter().zip(values).enumerate() {
        let prefix = format!("cond.{i}");
        match (spec, value) {
            (ConditionSpec::Scalar { spec, .. }, ConditionValue::Scalar(v)) => {
                features.push(embed_scalar_on_tape(tape, model, &prefix, spec, *v));
            }
            (ConditionSpec::BitVector { length, mlp, .. }, ConditionValue::Bits(bits)) => {
                if bits.len() != *length {
                    return Err(ModelError::ConditionMismatch(format!(
                        "condition `{}` expects {} bits, got {}",
                        spec.name(),
                        length,
                        bits.len()
                    )));
                }
                let x = tape.input(Tensor::row_vector(
                    bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
                ));
                features.push(mlp_on_tape(tape, &model.params, &prefix, x, mlp.len()));
            }
            (
                ConditionSpec::Composition {
                    mlp,
                    count,
                    embed_dim,
                    ..
                },
                ConditionValue::Composition(comp),
            ) => {
                for &z in comp.counts.keys() {
                    if model.config.vocabulary().element_index(z).is_none() {
                        return Err(ModelError::ElementNotInVocabulary(z));
                    }
                }
                let fractions: Vec<f64> = model
                    .config
                    .elements
                    .iter()
                    .map(|&z| comp.fraction(z))
                    .collect();
                let n_elem = fractions.len();
                let embed = tape.param(model.params.slot(&format!("{prefix}.comp_embed")));
                let indices: Vec<usize> = (0..n_elem).collect();
                let rows = tape.gather_rows(embed, &indices);
                let frac = tape.input(Tensor::from_vec(n_elem, 1, fractions));
                let weighted = tape.mul_col(rows, frac);
                let flat = tape.reshape(weighted, 1, n_elem * embed_dim);
                features.push(mlp_on_tape(tape, &model.params, &prefix, flat, mlp.len()));
                features.push(embed_scalar_on_tape(
                    tape,
                    model,
                    &format!("{prefix}.count"),
                    count,
                    comp.total as f64,
                ));
            }
            (spec, _) => {
                return Err(ModelError::ConditionMismatch(format!(
                    "condition `{}` got a value of the wrong kind",
                    spec.name()
                )));
            }
        }
    }
    let mut cat = features[0];
    for &f in &features[1..] {
        cat = tape.concat_cols(cat, f);
    }
    Ok(mlp_on_tape(
        tape,
        &model.params,
        "agg",
        cat,
        model.config.aggregation_widths.len(),
    ))
}

/// Convenience wrapper returning y as a plain row vector.
pub fn condition_features(model: &Model, values: &Conditions) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new(&model.params);
    let y = conditions_on_tape(&mut tape, model, values)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{tiny_config, tiny_schema};
    use crate::model::{Model, ModelConfig};
    use rand::Rng;

    #[test]
    fn gap_spec_centers_match_table() {
        let spec = ScalarSpec {
            min: 2.0,
            max: 11.0,
            delta: 2.25,
            mlp: vec![64],
        };
        assert_eq!(spec.n_centers(), 5);
        assert_eq!(spec.centers(), vec![2.0, 4.25, 6.5, 8.75, 11.0]);
    }

    #[test]
    fn energy_spec_centers_match_table() {
        let spec = ScalarSpec {
            min: -0.2,
            max: 0.2,
            delta: 0.1,
            mlp: vec![64],
        };
        assert_eq!(spec.n_centers(), 5);
        assert_eq!(spec.centers().len(), 5);
    }

    #[test]
    fn count_spec_centers_match_table() {
        let spec = ScalarSpec {
            min: 0.0,
            max: 35.0,
            delta: 8.75,
            mlp: vec![64],
        };
        assert_eq!(spec.n_centers(), 5);
    }

    #[test]
    fn center_count_matches_loop_oracle() {
        // Oracle: count centers min + l*delta while they stay <= max.
        let mut rng = crate::rng::stream_rng(6, "centers");
        for _ in 0..1000 {
            let min: f64 = rng.gen_range(-10.0..10.0);
            let max: f64 = min + rng.gen_range(0.1..20.0);
            let delta: f64 = rng.gen_range(0.05..5.0);
            let spec = ScalarSpec {
                min,
                max,
                delta,
                mlp: vec![4],
            };
            let mut oracle = 0usize;
            let mut l = 0usize;
            while min + l as f64 * delta <= max {
                oracle += 1;
                l += 1;
            }
            assert_eq!(spec.n_centers(), oracle, "min={min} max={max} delta={delta}");
        }
    }

    #[test]
    fn expansion_peaks_at_min() {
        let spec = ScalarSpec {
            min: 2.0,
            max: 11.0,
            delta: 2.25,
            mlp: vec![8],
        };
        let e = spec.expand(2.0);
        assert_eq!(e[0], 1.0);
        assert!(e[1] < 1.0);
    }

    #[test]
    fn scalar_embedding_is_smooth() {
        // Finite-difference derivative of each output of y w.r.t. the scalar
        // target matches a second-order stencil comparison.
        let model = Model::init(tiny_config(), 33).unwrap();
        let value = 5.3;
        let h = 1e-5;
        let f = |v: f64| condition_features(&model, &vec![ConditionValue::Scalar(v)]).unwrap();
        let up = f(value + h);
        let down = f(value - h);
        let up2 = f(value + 2.0 * h);
        let down2 = f(value - 2.0 * h);
        for k in 0..up.data.len() {
            let d1 = (up.data[k] - down.data[k]) / (2.0 * h);
            // Richardson-style higher-order estimate as the reference.
            let d2 = (8.0 * (up.data[k] - down.data[k]) - (up2.data[k] - down2.data[k])) / (12.0 * h);
            let denom = d1.abs().max(d2.abs()).max(1e-8);
            assert!(((d1 - d2) / denom).abs() < 1e-4, "component {k}");
        }
    }

    #[test]
    fn aggregation_width_is_d() {
        let model = Model::init(tiny_config(), 34).unwrap();
        let y = condition_features(&model, &vec![ConditionValue::Scalar(4.0)]).unwrap();
        assert_eq!(y.cols, model.config.condition_dim());
        assert_eq!(y.rows, 1);
        assert!(y.is_finite());
    }

    #[test]
    fn bitvector_embedding_separates_patterns() {
        let mut config = tiny_config();
        config.conditions = vec![ConditionSpec::BitVector {
            name: "fp".into(),
            length: 64,
            mlp: vec![16, 8],
        }];
        let model = Model::init(config, 35).unwrap();
        let mut rng = crate::rng::stream_rng(7, "bits");
        let mut outputs = Vec::new();
        for _ in 0..1000 {
            let bits: Vec<bool> = (0..64).map(|_| rng.gen::<bool>()).collect();
            let y = condition_features(&model, &vec![ConditionValue::Bits(bits)]).unwrap();
            outputs.push(y.data);
        }
        outputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        outputs.dedup();
        assert_eq!(outputs.len(), 1000, "collision among random bit patterns");
    }

    #[test]
    fn bitvector_length_mismatch_is_error() {
        let mut config = tiny_config();
        config.conditions = vec![ConditionSpec::BitVector {
            name: "fp".into(),
            length: 16,
            mlp: vec![8],
        }];
        let model = Model::init(config, 36).unwrap();
        let err = condition_features(&model, &vec![ConditionValue::Bits(vec![true; 8])]);
        assert!(err.is_err());
    }

    #[test]
    fn composition_fraction_channel_ignores_scale() {
        // C1H4 and C2H8 share fractions; only the count channel changes.
        let mut config = tiny_config();
        config.conditions = vec![ConditionSpec::Composition {
            name: "composition".into(),
            embed_dim: 4,
            mlp: vec![8, 8],
            count: ScalarSpec {
                min: 0.0,
                max: 35.0,
                delta: 8.75,
                mlp: vec![8, 8],
            },
        }];
        let model = Model::init(config, 37).unwrap();
        let small = Composition::parse("CH4").unwrap();
        let large = Composition::parse("C2H8").unwrap();

        // Inspect the fraction-channel inputs directly: same fractions.
        for &z in &model.config.elements {
            assert!((small.fraction(z) - large.fraction(z)).abs() < 1e-15);
        }
        // Full features differ only because of the count channel; check by
        // also comparing against a composition with different fractions.
        let y_small = condition_features(&model, &vec![ConditionValue::Composition(small)]).unwrap();
        let y_large = condition_features(&model, &vec![ConditionValue::Composition(large.clone())]).unwrap();
        assert_ne!(y_small.data, y_large.data);
        let water = Composition::parse("OH2").unwrap();
        let y_water = condition_features(&model, &vec![ConditionValue::Composition(water)]).unwrap();
        assert_ne!(y_large.data, y_water.data);
    }

    #[test]
    fn unknown_element_in_composition_is_error() {
        let mut config = tiny_config();
        config.elements = vec![1, 6];
        config.conditions = vec![ConditionSpec::composition("composition")];
        let model = Model::init(config, 38).unwrap();
        let comp = Composition::parse("NH3").unwrap();
        assert!(condition_features(&model, &vec![ConditionValue::Composition(comp)]).is_err());
    }

    #[test]
    fn schema_order_is_semantic() {
        // Two scalar conditions; swapping the value order changes y.
        let mut config = tiny_config();
        let mut schema = tiny_schema();
        schema.push(ConditionSpec::Scalar {
            name: "rel_energy".into(),
            unit: Some("eV".into()),
            spec: ScalarSpec {
                min: -0.2,
                max: 0.2,
                delta: 0.1,
                mlp: vec![8, 8],
            },
        });
        config.conditions = schema;
        let model = Model::init(config, 39).unwrap();
        let a = condition_features(
            &model,
            &vec![ConditionValue::Scalar(3.0), ConditionValue::Scalar(0.1)],
        )
        .unwrap();
        let b = condition_features(
            &model,
            &vec![ConditionValue::Scalar(0.1), ConditionValue::Scalar(3.0)],
        )
        .unwrap();
        assert_ne!(a.data, b.data);
    }

    #[test]
    fn default_fingerprint_spec_output_width() {
        let spec = ConditionSpec::fingerprint("fp");
        assert_eq!(spec.feature_width(), 128);
        let ModelConfig { .. } = tiny_config();
    }
}
