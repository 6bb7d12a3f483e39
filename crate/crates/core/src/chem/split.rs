//! Deterministic train/validation/test partitioning.

use rand::seq::SliceRandom;

use super::{ChemError, Dataset, Molecule};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, ChemError> {
        let sum = train + val + test;
        if (sum - 1.0).abs() > 1e-9 || train < 0.0 || val < 0.0 || test < 0.0 {
            return Err(ChemError::BadFractions(sum));
        }
        Ok(SplitFractions { train, val, test })
    }
}

/// Splits a dataset into train/val/test. Deterministic for a fixed seed.
///
/// Records matched by the optional `exclude` predicate are kept out of the
/// train and val partitions and routed to test, so the three partitions
/// always cover the input exactly.
pub fn split_dataset(
    dataset: &Dataset,
    seed: u64,
    fractions: SplitFractions,
    exclude: Option<&dyn Fn(&Molecule) -> bool>,
) -> Result<(Dataset, Dataset, Dataset), ChemError> {
    let mut eligible: Vec<usize> = Vec::new();
    let mut excluded: Vec<usize> = Vec::new();
    for (i, record) in dataset.records.iter().enumerate() {
        if exclude.map(|f| f(record)).unwrap_or(false) {
            excluded.push(i);
        } else {
            eligible.push(i);
        }
    }

    let mut rng = rng::stream_rng(seed, "split");
    eligible.shuffle(&mut rng);

    let n = eligible.len();
    let n_train = (n as f64 * fractions.train).floor() as usize;
    let n_val = ((n as f64 * fractions.val).floor() as usize).min(n - n_train);

    let make = |indices: &[usize]| Dataset {
        records: indices.iter().map(|&i| dataset.records[i].clone()).collect(),
        schema: dataset.schema.clone(),
    };

    let train = make(&eligible[..n_train]);
    let val = make(&eligible[n_train..n_train + n_val]);
    let mut test_idx: Vec<usize> = eligible[n_train + n_val..].to_vec();
    test_idx.extend(&excluded);
    let test = make(&test_idx);

    if fractions.train > 0.0 && train.is_empty() {
        return Err(ChemError::EmptySplit("train"));
    }
    if fractions.val > 0.0 && val.is_empty() {
        return Err(ChemError::EmptySplit("val"));
    }
    if fractions.test > 0.0 && test.is_empty() {
        return Err(ChemError::EmptySplit("test"));
    }
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::Composition;

    fn toy_dataset(n: usize) -> Dataset {
        let mut records = Vec::new();
        for i in 0..n {
            let x = i as f64;
            let elements = if i % 3 == 0 { vec![6, 8] } else { vec![7, 7] };
            let m = Molecule::new(elements, vec![[x, 0.0, 0.0], [x, 1.1, 0.0]]).unwrap();
            records.push(m);
        }
        Dataset {
            records,
            schema: vec![],
        }
    }

    #[test]
    fn sizes_and_determinism() {
        let ds = toy_dataset(10);
        let fr = SplitFractions::new(0.8, 0.1, 0.1).unwrap();
        let (tr1, va1, te1) = split_dataset(&ds, 7, fr, None).unwrap();
        assert_eq!((tr1.len(), va1.len(), te1.len()), (8, 1, 1));
        let (tr2, va2, te2) = split_dataset(&ds, 7, fr, None).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(te1, te2);
        // A different seed permutes differently for this size.
        let (tr3, ..) = split_dataset(&ds, 8, fr, None).unwrap();
        assert_ne!(tr1, tr3);
    }

    #[test]
    fn union_covers_input_multiset() {
        let ds = toy_dataset(23);
        let fr = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        let (tr, va, te) = split_dataset(&ds, 3, fr, None).unwrap();
        assert_eq!(tr.len() + va.len() + te.len(), ds.len());
        let mut seen: Vec<&Molecule> = tr.records.iter().chain(&va.records).chain(&te.records).collect();
        let key = |m: &Molecule| (m.positions[0][0] * 1000.0) as i64;
        seen.sort_by_key(|m| key(m));
        let mut expect: Vec<&Molecule> = ds.records.iter().collect();
        expect.sort_by_key(|m| key(m));
        assert_eq!(seen, expect);
    }

    #[test]
    fn exclusion_keeps_targets_out_of_train_and_val() {
        let ds = toy_dataset(30);
        let fr = SplitFractions::new(0.7, 0.15, 0.15).unwrap();
        let target = Composition::parse("CO").unwrap();
        let pred = move |m: &Molecule| m.composition() == target;
        let (tr, va, te) = split_dataset(&ds, 11, fr, Some(&pred)).unwrap();
        let check = Composition::parse("CO").unwrap();
        assert!(tr.records.iter().all(|m| m.composition() != check));
        assert!(va.records.iter().all(|m| m.composition() != check));
        assert!(te.records.iter().any(|m| m.composition() == check));
        assert_eq!(tr.len() + va.len() + te.len(), 30);
    }

    #[test]
    fn empty_partition_is_an_error() {
        let ds = toy_dataset(2);
        let fr = SplitFractions::new(0.5, 0.4, 0.1).unwrap();
        // 2 * 0.4 floors to 0 records for val.
        let err = split_dataset(&ds, 1, fr, None).unwrap_err();
        assert!(err.to_string().contains("val"), "{err}");
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(SplitFractions::new(0.5, 0.4, 0.2).is_err());
    }
}
