//! Rotation- and translation-invariant atom features via continuous-filter
//! convolutions over interatomic distances.
//!
//! Pinned variant per interaction block: the filter generator is two dense
//! layers (shifted softplus after the first) on the radial basis expansion,
//! smoothed by a cosine cutoff; atom features go through a bias-free dense
//! layer, are aggregated with the filters over all pairs within the cutoff,
//! then pass a dense+ssp layer and a linear layer before the residual add.

use crate::geom;
use crate::nn::{Tape, Tensor, VarId};

use super::{Model, ModelError, PartialMolecule};

/// Gaussian radial basis expansion spec: `centers` evenly spaced on
/// [0, cutoff], width tied to the center spacing.
#[derive(Debug, Clone, Copy)]
pub struct RbfSpec {
    pub centers: usize,
    pub cutoff: f64,
}

impl RbfSpec {
    pub fn spacing(&self) -> f64 {
        self.cutoff / (self.centers - 1) as f64
    }

    pub fn gamma(&self) -> f64 {
        0.5 / (self.spacing() * self.spacing())
    }
}

/// Expands a distance into `spec.centers` Gaussian bumps in (0, 1]; the
/// component whose center equals `d` is exactly 1.
pub fn rbf_expand(d: f64, spec: &RbfSpec) -> Vec<f64> {
    let gamma = spec.gamma();
    let spacing = spec.spacing();
    (0..spec.centers)
        .map(|k| {
            let mu = k as f64 * spacing;
            (-gamma * (d - mu) * (d - mu)).exp()
        })
        .collect()
}

/// Cosine cutoff smoothing: 1 at d = 0, 0 at and beyond the cutoff.
pub fn cosine_cutoff(d: f64, cutoff: f64) -> f64 {
    if d >= cutoff {
        0.0
    } else {
        0.5 * ((std::f64::consts::PI * d / cutoff).cos() + 1.0)
    }
}

/// Pairwise constants: rbf rows for every ordered pair and the
/// cutoff/self-pair mask column.
fn pair_constants(positions: &[crate::geom::Vec3], spec: &RbfSpec) -> (Tensor, Tensor) {
    let n = positions.len();
    let mut rbf = Tensor::zeros(n * n, spec.centers);
    let mut mask = Tensor::zeros(n * n, 1);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = geom::dist(positions[i], positions[j]);
            let fc = cosine_cutoff(d, spec.cutoff);
            if fc == 0.0 {
                continue;
            }
            mask.data[i * n + j] = fc;
            rbf.row_mut(i * n + j).copy_from_slice(&rbf_expand(d, spec));
        }
    }
    (rbf, mask)
}

/// Core encoder over any typed point sequence; parameters must follow the
/// `embed` / `enc.{block}.*` naming convention.
pub(crate) fn encode_sequence_on_tape(
    tape: &mut Tape,
    params: &crate::nn::ParamStore,
    cfg: &super::EncoderConfig,
    types: &[usize],
    positions: &[crate::geom::Vec3],
) -> VarId {
    let spec = RbfSpec {
        centers: cfg.rbf_centers,
        cutoff: cfg.cutoff,
    };
    let (rbf, mask) = pair_constants(positions, &spec);
    let rbf = tape.input(rbf);
    let mask = tape.input(mask);

    let embed = tape.param(params.slot("embed"));
    let mut x = tape.gather_rows(embed, types);

    for b in 0..cfg.interaction_blocks {
        let p = |name: &str| params.slot(&format!("enc.{b}.{name}"));
        let in2f = tape.param(p("in2f.w"));
        let v = tape.matmul(x, in2f);

        let w1 = tape.param(p("filt.w1"));
        let b1 = tape.param(p("filt.b1"));
        let w2 = tape.param(p("filt.w2"));
        let b2 = tape.param(p("filt.b2"));
        let h = tape.dense(rbf, w1, Some(b1));
        let h = tape.ssp(h);
        let filters = tape.dense(h, w2, Some(b2));
        let filters = tape.mul_col(filters, mask);

        let messages = tape.pair_aggregate(filters, v);

        let fw = tape.param(p("f2out.w"));
        let fb = tape.param(p("f2out.b"));
        let h = tape.dense(messages, fw, Some(fb));
        let h = tape.ssp(h);
        let ow = tape.param(p("out.w"));
        let ob = tape.param(p("out.b"));
        let update = tape.dense(h, ow, Some(ob));

        x = tape.add(x, update);
    }
    x
}

/// Runs the encoder on a tape, returning the (i-1) x F feature matrix id.
pub fn encode_on_tape(
    tape: &mut Tape,
    model: &Model,
    pm: &PartialMolecule,
) -> Result<VarId, ModelError> {
    pm.check_finite()?;
    Ok(encode_sequence_on_tape(
        tape,
        &model.params,
        &model.config.encoder,
        &pm.types,
        &pm.positions,
    ))
}

/// Convenience wrapper: encodes a partial molecule to a plain matrix.
pub fn encode(model: &Model, pm: &PartialMolecule) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new(&model.params);
    let x = encode_on_tape(&mut tape, model, pm)?;
    Ok(tape.value(x).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{mat_apply, rotation};
    use crate::model::tests::tiny_config;
    use crate::model::TypeVocabulary;
    use rand::Rng;

    fn random_partial(seed: u64, n_atoms: usize) -> PartialMolecule {
        let mut rng = crate::rng::stream_rng(seed, "pm");
        let vocab = TypeVocabulary::new(vec![1, 6, 7, 8, 9]);
        let elements: Vec<u8> = (0..n_atoms)
            .map(|_| [1u8, 6, 7, 8, 9][rng.gen_range(0..5)])
            .collect();
        let positions: Vec<[f64; 3]> = (0..n_atoms)
            .map(|_| {
                [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ]
            })
            .collect();
        let com = positions
            .iter()
            .fold([0.0; 3], |acc, p| crate::geom::add(acc, *p));
        let com = crate::geom::scale(com, 1.0 / n_atoms as f64);
        PartialMolecule::assemble(&vocab, com, positions[0], &elements, &positions).unwrap()
    }

    #[test]
    fn rbf_peaks_at_centers() {
        let spec = RbfSpec {
            centers: 25,
            cutoff: 10.0,
        };
        let spacing = spec.spacing();
        for k in [0usize, 7, 24] {
            let values = rbf_expand(k as f64 * spacing, &spec);
            assert!((values[k] - 1.0).abs() < 1e-12);
            assert!(values.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        // d = 0 peaks the first component.
        let at_zero = rbf_expand(0.0, &spec);
        assert_eq!(at_zero[0], 1.0);
    }

    #[test]
    fn rbf_matches_scalar_formula() {
        // Independent oracle: direct evaluation of exp(-gamma (d - mu_k)^2).
        let spec = RbfSpec {
            centers: 25,
            cutoff: 10.0,
        };
        let mut rng = crate::rng::stream_rng(4, "rbf");
        for _ in 0..100 {
            let d: f64 = rng.gen_range(0.0..12.0);
            let values = rbf_expand(d, &spec);
            for (k, &v) in values.iter().enumerate() {
                let mu = k as f64 * spec.spacing();
                let expect = f64::exp(-spec.gamma() * (d - mu) * (d - mu));
                assert!((v - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn encode_is_rigid_motion_invariant() {
        let model = Model::init(tiny_config(), 17).unwrap();
        for seed in 0..10 {
            let pm = random_partial(seed, 5);
            let rot = rotation([0.3, -1.0, 0.8], 0.9 + seed as f64);
            let shift = [1.0, -2.0, 0.5];
            let moved = PartialMolecule {
                types: pm.types.clone(),
                positions: pm
                    .positions
                    .iter()
                    .map(|&p| crate::geom::add(mat_apply(&rot, p), shift))
                    .collect(),
            };
            let a = encode(&model, &pm).unwrap();
            let b = encode(&model, &moved).unwrap();
            let max_diff = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-5, "seed {seed}: {max_diff}");
        }
    }

    #[test]
    fn encode_is_permutation_equivariant() {
        let model = Model::init(tiny_config(), 18).unwrap();
        let pm = random_partial(99, 6);
        // Swap two non-token atoms (slots 2.. are atoms).
        let mut permuted = pm.clone();
        permuted.types.swap(3, 5);
        permuted.positions.swap(3, 5);
        let a = encode(&model, &pm).unwrap();
        let b = encode(&model, &permuted).unwrap();
        for col in 0..a.cols {
            assert!((a.at(3, col) - b.at(5, col)).abs() < 1e-12);
            assert!((a.at(5, col) - b.at(3, col)).abs() < 1e-12);
            assert!((a.at(2, col) - b.at(2, col)).abs() < 1e-12);
        }
    }

    #[test]
    fn atoms_beyond_cutoff_exchange_no_messages() {
        // Deletion oracle: with two atoms 12 Å apart (cutoff 10 Å), each
        // atom's features equal those computed with the other atom deleted.
        let model = Model::init(tiny_config(), 19).unwrap();
        let vocab = model.config.vocabulary();
        let both = PartialMolecule::assemble(
            &vocab,
            [0.0; 3],
            [0.0; 3],
            &[6, 8],
            &[[0.0, 0.0, 0.0], [12.0, 0.0, 0.0]],
        )
        .unwrap();
        // Tokens sit at the first atom, so only the far atom is isolated.
        let without_far = PartialMolecule::assemble(
            &vocab,
            [0.0; 3],
            [0.0; 3],
            &[6],
            &[[0.0, 0.0, 0.0]],
        )
        .unwrap();
        let a = encode(&model, &both).unwrap();
        let b = encode(&model, &without_far).unwrap();
        for col in 0..a.cols {
            // Near atom (slot 2) unaffected by deleting the far atom.
            assert!((a.at(2, col) - b.at(2, col)).abs() < 1e-6);
        }
    }

    #[test]
    fn encode_rejects_non_finite() {
        let model = Model::init(tiny_config(), 20).unwrap();
        let vocab = model.config.vocabulary();
        let mut pm = PartialMolecule::assemble(&vocab, [0.0; 3], [0.0; 3], &[6], &[[0.0; 3]]).unwrap();
        pm.positions[2][1] = f64::INFINITY;
        assert!(encode(&model, &pm).is_err());
    }

    #[test]
    fn encode_is_bitwise_deterministic() {
        let model = Model::init(tiny_config(), 21).unwrap();
        let pm = random_partial(5, 4);
        let a = encode(&model, &pm).unwrap();
        let b = encode(&model, &pm).unwrap();
        assert_eq!(a.data, b.data);
    }
}
