//! Output heads: next-atom type distribution and per-preceding-atom
//! distance distributions.

use serde::{Deserialize, Serialize};

use crate::nn::{Tape, Tensor, VarId};

use super::{mlp_on_tape, Model, ModelError, PartialMolecule};

/// Discretization of pairwise distances: L bins of width spacing; bin k
/// (1-based) is centered at (k-1) * spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGrid {
    pub bins: usize,
    /// Bin width in Å.
    pub spacing: f64,
}

impl Default for DistanceGrid {
    fn default() -> Self {
        DistanceGrid {
            bins: 300,
            spacing: 0.05,
        }
    }
}

impl DistanceGrid {
    /// Maximum distance covered by the grid.
    pub fn max_distance(&self) -> f64 {
        self.bins as f64 * self.spacing
    }

    /// 1-based bin of a non-negative distance; distances beyond
    /// (L-1) * spacing land in the overflow bin L.
    pub fn bin_index(&self, d: f64) -> Result<usize, ModelError> {
        if d < 0.0 || !d.is_finite() {
            return Err(ModelError::NonFiniteInput);
        }
        if d > (self.bins as f64 - 1.0) * self.spacing {
            return Ok(self.bins);
        }
        Ok(((d + 0.5 * self.spacing) / self.spacing).ceil() as usize)
    }

    /// Center of the 1-based bin k.
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 - 1.0) * self.spacing
    }
}

/// Raw type scores s_j = mlp([x_j ⊕ y]) for every preceding atom/token.
pub fn type_scores_on_tape(tape: &mut Tape, model: &Model, x: VarId, y: VarId) -> VarId {
    let n = tape.value(x).rows;
    let y_rows = tape.repeat_row(y, n);
    let input = tape.concat_cols(x, y_rows);
    let n_layers = model.config.type_head_hidden.len() + 1;
    mlp_on_tape(tape, &model.params, "type", input, n_layers)
}

/// Next-type categorical: softmax per atom row, then the mean over rows.
pub fn type_distribution_on_tape(tape: &mut Tape, model: &Model, x: VarId, y: VarId) -> VarId {
    let scores = type_scores_on_tape(tape, model, x, y);
    let softmaxed = tape.softmax_rows(scores);
    tape.mean_rows(softmaxed)
}

/// Distance-bin scores u_j = mlp([(x_j ⊙ g_next) ⊕ y]) for an element class.
pub fn distance_scores_on_tape(
    tape: &mut Tape,
    model: &Model,
    x: VarId,
    y: VarId,
    next_element_index: usize,
) -> Result<VarId, ModelError> {
    let vocab = model.config.vocabulary();
    if next_element_index >= vocab.stop_class() {
        return Err(ModelError::StopHasNoDistances);
    }
    let n = tape.value(x).rows;
    let gnext = tape.param(model.params.slot("gnext"));
    let g_row = tape.gather_rows(gnext, &[next_element_index]);
    let g_rows = tape.repeat_row(g_row, n);
    let gated = tape.mul(x, g_rows);
    let y_rows = tape.repeat_row(y, n);
    let input = tape.concat_cols(gated, y_rows);
    let n_layers = model.config.dist_head_hidden.len() + 1;
    Ok(mlp_on_tape(tape, &model.params, "dist", input, n_layers))
}

/// Per-row distance categoricals (softmax over bins).
pub fn distance_distributions_on_tape(
    tape: &mut Tape,
    model: &Model,
    x: VarId,
    y: VarId,
    next_element_index: usize,
) -> Result<VarId, ModelError> {
    let scores = distance_scores_on_tape(tape, model, x, y, next_element_index)?;
    Ok(tape.softmax_rows(scores))
}

/// Convenience: next-type probabilities for a partial molecule.
pub fn predict_type(
    model: &Model,
    pm: &PartialMolecule,
    conditions: &super::conditioning::Conditions,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new(&model.params);
    let x = super::encoder::encode_on_tape(&mut tape, model, pm)?;
    let y = super::conditioning::conditions_on_tape(&mut tape, model, conditions)?;
    let dist = type_distribution_on_tape(&mut tape, model, x, y);
    Ok(tape.value(dist).data.clone())
}

/// Convenience: distance categoricals, one row per preceding atom/token.
pub fn predict_distances(
    model: &Model,
    pm: &PartialMolecule,
    conditions: &super::conditioning::Conditions,
    next_element_index: usize,
) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new(&model.params);
    let x = super::encoder::encode_on_tape(&mut tape, model, pm)?;
    let y = super::conditioning::conditions_on_tape(&mut tape, model, conditions)?;
    let rows = distance_distributions_on_tape(&mut tape, model, x, y, next_element_index)?;
    Ok(tape.value(rows).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{add, mat_apply, rotation};
    use crate::model::conditioning::ConditionValue;
    use crate::model::tests::tiny_config;
    use crate::model::{Model, TypeVocabulary};
    use rand::Rng;

    fn gap(v: f64) -> Vec<ConditionValue> {
        vec![ConditionValue::Scalar(v)]
    }

    fn random_pm(seed: u64, n_atoms: usize) -> PartialMolecule {
        let mut rng = crate::rng::stream_rng(seed, "headspm");
        let vocab = TypeVocabulary::new(vec![1, 6, 7, 8, 9]);
        let elements: Vec<u8> = (0..n_atoms)
            .map(|_| [1u8, 6, 7, 8, 9][rng.gen_range(0..5)])
            .collect();
        let positions: Vec<[f64; 3]> = (0..n_atoms)
            .map(|_| {
                [
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                ]
            })
            .collect();
        PartialMolecule::assemble(&vocab, [0.0; 3], positions[0], &elements, &positions).unwrap()
    }

    #[test]
    fn bin_index_basics() {
        let grid = DistanceGrid::default();
        assert_eq!(grid.bin_index(0.0).unwrap(), 1);
        assert_eq!(grid.bin_index(0.05).unwrap(), 2);
        assert_eq!(grid.bin_index(15.2).unwrap(), 300);
        assert!(grid.bin_index(-0.1).is_err());
        assert!((grid.max_distance() - 15.0).abs() < 1e-12);
        assert_eq!(grid.center(1), 0.0);
        assert!((grid.center(300) - 14.95).abs() < 1e-12);
    }

    #[test]
    fn bin_index_matches_scan_oracle() {
        // Oracle: smallest bin k whose upper edge (k - 1/2) * spacing
        // reaches d, else the overflow bin.
        let grid = DistanceGrid::default();
        let mut rng = crate::rng::stream_rng(8, "bins");
        for _ in 0..10_000 {
            let d: f64 = rng.gen_range(0.0..20.0);
            let mut oracle = grid.bins;
            for k in 1..grid.bins {
                if d <= (k as f64 - 0.5) * grid.spacing {
                    oracle = k;
                    break;
                }
            }
            assert_eq!(grid.bin_index(d).unwrap(), oracle, "d={d}");
        }
    }

    #[test]
    fn type_distribution_is_normalized_mean_of_softmaxes() {
        let model = Model::init(tiny_config(), 50).unwrap();
        let pm = random_pm(1, 4);
        let p = predict_type(&model, &pm, &gap(5.0)).unwrap();
        assert_eq!(p.len(), 6);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_row_type_distribution_is_softmax() {
        // With hand-set weights producing known scores the mean over a
        // single row is that row's softmax; verified via a 2-row case
        // against a by-hand mean of two softmaxes.
        let model = Model::init(tiny_config(), 51).unwrap();
        let pm = random_pm(2, 3);
        let mut tape = Tape::new(&model.params);
        let x = super::super::encoder::encode_on_tape(&mut tape, &model, &pm).unwrap();
        let y = super::super::conditioning::conditions_on_tape(&mut tape, &model, &gap(4.0)).unwrap();
        let scores_id = type_scores_on_tape(&mut tape, &model, x, y);
        let scores = tape.value(scores_id).clone();
        let dist_id = type_distribution_on_tape(&mut tape, &model, x, y);
        let dist = tape.value(dist_id).clone();

        // Hand computation: softmax each row, average.
        let mut expect = vec![0.0; scores.cols];
        for i in 0..scores.rows {
            let row = scores.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (e, x) in expect.iter_mut().zip(&exps) {
                *e += x / sum / scores.rows as f64;
            }
        }
        for (a, b) in dist.data.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_rows_are_normalized_with_expected_shape() {
        let model = Model::init(tiny_config(), 52).unwrap();
        let pm = random_pm(3, 5);
        let rows = predict_distances(&model, &pm, &gap(6.0), 1).unwrap();
        assert_eq!(rows.rows, pm.len());
        assert_eq!(rows.cols, model.config.grid.bins);
        for i in 0..rows.rows {
            let sum: f64 = rows.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stop_type_has_no_distance_rows() {
        let model = Model::init(tiny_config(), 53).unwrap();
        let pm = random_pm(4, 3);
        let stop = model.config.vocabulary().stop_class();
        assert!(predict_distances(&model, &pm, &gap(3.0), stop).is_err());
    }

    #[test]
    fn gnext_gates_the_distance_rows() {
        // With g_next rows forced to all-ones the rows equal a type
        // independent baseline; distinct embeddings then separate types.
        let mut model = Model::init(tiny_config(), 54).unwrap();
        let pm = random_pm(5, 4);
        let slot = model.params.slot("gnext");
        let original = model.params.get(slot).clone();
        for v in &mut model.params.get_mut(slot).data {
            *v = 1.0;
        }
        let a = predict_distances(&model, &pm, &gap(5.0), 0).unwrap();
        let b = predict_distances(&model, &pm, &gap(5.0), 1).unwrap();
        assert_eq!(a.data, b.data, "all-ones gating must be type independent");
        *model.params.get_mut(slot) = original;
        let c = predict_distances(&model, &pm, &gap(5.0), 0).unwrap();
        let d = predict_distances(&model, &pm, &gap(5.0), 1).unwrap();
        assert_ne!(c.data, d.data);
    }

    #[test]
    fn heads_inherit_rigid_motion_invariance() {
        let model = Model::init(tiny_config(), 55).unwrap();
        let pm = random_pm(6, 5);
        let rot = rotation([1.0, 0.4, -0.3], 0.77);
        let shift = [0.4, 1.2, -2.0];
        let moved = PartialMolecule {
            types: pm.types.clone(),
            positions: pm
                .positions
                .iter()
                .map(|&p| add(mat_apply(&rot, p), shift))
                .collect(),
        };
        let pa = predict_type(&model, &pm, &gap(4.0)).unwrap();
        let pb = predict_type(&model, &moved, &gap(4.0)).unwrap();
        for (a, b) in pa.iter().zip(&pb) {
            assert!((a - b).abs() < 1e-5);
        }
        let da = predict_distances(&model, &pm, &gap(4.0), 2).unwrap();
        let db = predict_distances(&model, &moved, &gap(4.0), 2).unwrap();
        let max = da
            .data
            .iter()
            .zip(&db.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-5);
    }

    #[test]
    fn permuting_atoms_permutes_rows_and_fixes_type_dist() {
        let model = Model::init(tiny_config(), 56).unwrap();
        let pm = random_pm(7, 5);
        let mut permuted = pm.clone();
        permuted.types.swap(2, 4);
        permuted.positions.swap(2, 4);
        let pa = predict_type(&model, &pm, &gap(4.0)).unwrap();
        let pb = predict_type(&model, &permuted, &gap(4.0)).unwrap();
        for (a, b) in pa.iter().zip(&pb) {
            assert!((a - b).abs() < 1e-12);
        }
        let da = predict_distances(&model, &pm, &gap(4.0), 1).unwrap();
        let db = predict_distances(&model, &permuted, &gap(4.0), 1).unwrap();
        // Summation order differs under permutation, so compare to rounding.
        let close = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
        };
        assert!(close(da.row(2), db.row(4)));
        assert!(close(da.row(4), db.row(2)));
        assert!(close(da.row(3), db.row(3)));
    }
}
