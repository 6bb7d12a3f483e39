//! Command implementations behind the `molgen` binary: train, generate,
//! analyze, fingerprint and split.

mod plot;

pub use plot::histogram_svg;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::{
    assign_bonds, canonical_key, check_valid, fingerprint, predict_property, relative_atomic_energy,
    structure_stats, tanimoto, train_property_regressor, EnergyRegressor, Fingerprint,
    PredictorConfig, Validity,
};
use crate::chem::{
    parse_extended_xyz, serialize_extended_xyz, split_dataset, Composition, Dataset, Molecule,
    PropertyKind, PropertySpec, PropertyValue, SplitFractions,
};
use crate::config::RunConfig;
use crate::generate::{conditions_echo, sample_batch, SampleRecord, SampleStatus, SamplerConfig};
use crate::model::conditioning::{ConditionSpec, ConditionValue, Conditions};
use crate::model::Model;
use crate::train::{train_loop, Checkpoint};

/// Errors mapped to process exit codes: usage/input problems exit 2,
/// training aborts exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("training aborted: {0}")]
    TrainAbort(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::TrainAbort(_) => 3,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read dataset `{}`: {e}", path.display())))?;
    parse_extended_xyz(&text).map_err(usage)
}

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| usage(format!("cannot create output dir `{}`: {e}", path.display())))
}

/// Derives the rel_energy property for every record from a total-energy
/// property, using a regressor fitted on the training split only.
fn derive_rel_energy(
    splits: &mut [&mut Dataset],
    train_index: usize,
    energy_key: &str,
    vocabulary: &[u8],
) -> Result<(), CliError> {
    let regressor = EnergyRegressor::fit_from_dataset(splits[train_index], energy_key, vocabulary)
        .map_err(usage)?;
    for dataset in splits.iter_mut() {
        for (index, record) in dataset.records.iter_mut().enumerate() {
            let total = record
                .properties
                .get(energy_key)
                .and_then(|p| p.as_scalar())
                .ok_or_else(|| {
                    usage(format!("molecule {index}: missing energy `{energy_key}`"))
                })?;
            let per_atom = total / record.len() as f64;
            let rel = relative_atomic_energy(record, per_atom, &regressor).map_err(usage)?;
            record
                .properties
                .insert("rel_energy".into(), PropertyValue::Scalar(rel));
        }
        if dataset.property_spec("rel_energy").is_none() {
            dataset.schema.push(PropertySpec {
                name: "rel_energy".into(),
                kind: PropertyKind::Scalar,
                unit: Some("eV".into()),
            });
        }
    }
    Ok(())
}

/// `train`: loads the config, splits the dataset, trains and writes the
/// checkpoint plus the CSV training log.
pub fn cmd_train(config: &RunConfig) -> Result<PathBuf, CliError> {
    let mut dataset = read_dataset(&config.dataset_path)?;
    if config.validity_filter {
        dataset.records.retain(|m| check_valid(m).is_valid());
        if dataset.is_empty() {
            return Err(usage("validity filter removed every record"));
        }
    }
    let exclude = config.exclude_composition.clone();
    let predicate = exclude.map(|target| {
        move |m: &Molecule| m.composition() == target
    });
    let predicate_ref: Option<&dyn Fn(&Molecule) -> bool> = match &predicate {
        Some(p) => Some(p),
        None => None,
    };
    let (mut train, mut val, mut test) =
        split_dataset(&dataset, config.seed, config.fractions, predicate_ref).map_err(usage)?;

    if let Some(energy_key) = &config.derive_rel_energy_from {
        derive_rel_energy(&mut [&mut train, &mut val, &mut test], 0, energy_key, &config.model.elements)?;
    }

    ensure_out_dir(&config.out)?;
    let mut checkpoint = train_loop(&train, &val, config.model.clone(), &config.train)
        .map_err(|e| match e {
            crate::train::TrainError::NonFiniteLoss { .. } => CliError::TrainAbort(e.to_string()),
            other => usage(other),
        })?;
    checkpoint.train_config = Some(config.train.clone());

    let ckpt_path = config.out.join("checkpoint.json");
    checkpoint.save(&ckpt_path).map_err(usage)?;
    fs::write(config.out.join("training_log.csv"), checkpoint.curve_csv())
        .map_err(|e| usage(format!("cannot write training log: {e}")))?;
    fs::write(config.out.join("config_snapshot.txt"), &config.snapshot)
        .map_err(|e| usage(format!("cannot write config snapshot: {e}")))?;
    Ok(ckpt_path)
}

/// Parses `--name value` condition arguments against a checkpoint schema.
pub fn parse_condition_args(
    model: &Model,
    args: &BTreeMap<String, String>,
) -> Result<Conditions, CliError> {
    let schema = &model.config.conditions;
    let known: Vec<String> = schema.iter().map(|s| s.name().to_string()).collect();
    for key in args.keys() {
        if !known.contains(key) {
            return Err(usage(format!(
                "unknown condition `--{}`; the checkpoint schema expects: {}",
                key.replace('_', "-"),
                known.join(", ")
            )));
        }
    }
    let mut values = Vec::with_capacity(schema.len());
    for spec in schema {
        let raw = args.get(spec.name()).ok_or_else(|| {
            usage(format!(
                "missing condition `--{}`; the checkpoint schema expects: {}",
                spec.name().replace('_', "-"),
                known.join(", ")
            ))
        })?;
        let value = match spec {
            ConditionSpec::Scalar { .. } => ConditionValue::Scalar(
                raw.parse()
                    .map_err(|_| usage(format!("condition `{}`: bad scalar `{raw}`", spec.name())))?,
            ),
            ConditionSpec::BitVector { length, .. } => {
                if raw.len() != *length || !raw.chars().all(|c| c == '0' || c == '1') {
                    return Err(usage(format!(
                        "condition `{}` expects a {length}-character bit string",
                        spec.name()
                    )));
                }
                ConditionValue::Bits(raw.chars().map(|c| c == '1').collect())
            }
            ConditionSpec::Composition { .. } => {
                ConditionValue::Composition(Composition::parse(raw).map_err(usage)?)
            }
        };
        values.push(value);
    }
    Ok(values)
}

pub struct GenerateArgs {
    pub checkpoint: PathBuf,
    pub conditions: BTreeMap<String, String>,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub temperature: Option<f64>,
    pub max_atoms: Option<usize>,
}

/// `generate`: samples molecules and writes the JSON-lines log plus an
/// extended-XYZ file of the successful samples. Returns (ok, failed).
pub fn cmd_generate(args: &GenerateArgs) -> Result<(usize, usize), CliError> {
    let checkpoint = Checkpoint::load(&args.checkpoint).map_err(usage)?;
    let model = checkpoint.model;
    if args.count == 0 {
        return Err(usage("--count must be positive"));
    }
    let conditions = parse_condition_args(&model, &args.conditions)?;

    let mut sampler = SamplerConfig {
        seed: args.seed,
        ..SamplerConfig::default()
    };
    if let Some(t) = args.temperature {
        if t <= 0.0 {
            return Err(usage("--temperature must be positive"));
        }
        sampler.temperature = t;
    }
    if let Some(m) = args.max_atoms {
        sampler.max_atoms = m;
    }

    let results = sample_batch(&model, &conditions, args.count, &sampler, args.workers)
        .map_err(usage)?;

    ensure_out_dir(&args.out)?;
    let names: Vec<String> = model
        .config
        .conditions
        .iter()
        .map(|s| s.name().to_string())
        .collect();
    let echo = conditions_echo(&names, &conditions);

    let mut jsonl = String::new();
    let mut ok_dataset = Dataset::default();
    let mut n_ok = 0;
    for (index, (seed, outcome)) in results.iter().enumerate() {
        let record = SampleRecord::from_outcome(outcome, index, *seed, echo.clone());
        jsonl.push_str(&serde_json::to_string(&record).map_err(usage)?);
        jsonl.push('\n');
        if let Some(molecule) = outcome.molecule() {
            ok_dataset.records.push(molecule);
            n_ok += 1;
        }
    }
    fs::write(args.out.join("samples.jsonl"), jsonl)
        .map_err(|e| usage(format!("cannot write samples.jsonl: {e}")))?;
    fs::write(
        args.out.join("samples.xyz"),
        serialize_extended_xyz(&ok_dataset),
    )
    .map_err(|e| usage(format!("cannot write samples.xyz: {e}")))?;
    Ok((n_ok, results.len() - n_ok))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeepPolicy {
    First,
    LowestEnergy,
}

pub struct AnalyzeArgs {
    pub samples: PathBuf,
    pub reference: PathBuf,
    pub out: PathBuf,
    /// Properties to predict for the samples with a reference-trained
    /// reduced-scale regressor (histograms are emitted per property).
    pub predict: Vec<String>,
    pub keep: KeepPolicy,
    /// Total-energy property in the reference dataset used for relative
    /// atomic energies.
    pub energy_key: Option<String>,
}

#[derive(serde::Serialize)]
struct AnalyzeReport {
    n_samples: usize,
    n_ok: usize,
    n_failed: BTreeMap<String, usize>,
    n_valid: usize,
    validity_rate: f64,
    n_unique: usize,
    uniqueness_rate: f64,
    n_novel: usize,
    novelty_rate: f64,
    n_novel_stereoisomers: usize,
    n_known: usize,
}

/// `analyze`: validity/uniqueness/novelty rates, dedup report, structure
/// statistics, optional property histograms and Tanimoto summaries.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(&args.samples)
        .map_err(|e| usage(format!("cannot read samples `{}`: {e}", args.samples.display())))?;
    let mut records: Vec<SampleRecord> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(line)
            .map_err(|e| usage(format!("samples line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    let reference = read_dataset(&args.reference)?;
    ensure_out_dir(&args.out)?;

    let n_samples = records.len();
    let mut n_failed: BTreeMap<String, usize> = BTreeMap::new();
    let mut molecules: Vec<(usize, Molecule)> = Vec::new();
    for record in &records {
        match record.status {
            SampleStatus::Ok => {
                if let Some(m) = record.to_molecule() {
                    molecules.push((record.index, m));
                }
            }
            other => {
                let key = serde_json::to_value(other)
                    .ok()
                    .and_then(|v| v.as_str().map(|s| s.to_string()))
                    .unwrap_or_else(|| format!("{other:?}"));
                *n_failed.entry(key).or_insert(0) += 1;
            }
        }
    }
    let n_ok = molecules.len();

    let valid: Vec<(usize, Molecule)> = molecules
        .into_iter()
        .filter(|(_, m)| matches!(check_valid(m), Validity::Valid))
        .collect();
    let n_valid = valid.len();

    // Histograms default to the scalar properties the samples were
    // conditioned on, when the reference carries them.
    let predict_list: Vec<String> = if args.predict.is_empty() {
        records
            .first()
            .map(|record| {
                record
                    .conditions
                    .iter()
                    .filter(|(name, value)| {
                        value.is_number() && reference.property_spec(name).is_some()
                    })
                    .map(|(name, _)| name.clone())
                    .collect()
            })
            .unwrap_or_default()
    } else {
        args.predict.clone()
    };

    // Property prediction on the valid samples.
    let mut predicted: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for property in &predict_list {
        if reference.property_spec(property).is_none() {
            return Err(usage(format!(
                "reference dataset has no property `{property}`"
            )));
        }
        let predictor = train_property_regressor(&reference, property, &PredictorConfig::default())
            .map_err(usage)?;
        let values: Vec<(usize, f64)> = valid
            .iter()
            .map(|(idx, m)| Ok((*idx, predict_property(&predictor, m).map_err(usage)?)))
            .collect::<Result<_, CliError>>()?;
        let histogram = histogram_svg(
            &values.iter().map(|(_, v)| *v).collect::<Vec<f64>>(),
            24,
            &format!("predicted {property} of valid samples"),
            property,
        );
        fs::write(args.out.join(format!("hist_{property}.svg")), histogram)
            .map_err(|e| usage(format!("cannot write histogram: {e}")))?;
        predicted.insert(property.clone(), values);
    }

    // Relative energies when requested (for keep policy and reporting).
    let wants_energy = args.energy_key.is_some() || args.keep == KeepPolicy::LowestEnergy;
    let rel_energy: Option<BTreeMap<usize, f64>> = if !wants_energy {
        None
    } else {
        {
            let energy_key = match &args.energy_key {
                Some(k) => k.clone(),
                None => {
                    return Err(usage(
                        "--keep lowest-energy needs --energy-key <property> on the reference",
                    ))
                }
            };
            let regressor =
                EnergyRegressor::fit_from_dataset(&reference, &energy_key, &vocabulary_of(&reference))
                    .map_err(usage)?;
            let predictor =
                train_property_regressor(&reference, &energy_key, &PredictorConfig::default())
                    .map_err(usage)?;
            let mut map = BTreeMap::new();
            for (idx, m) in &valid {
                let per_atom = predict_property(&predictor, m).map_err(usage)? / m.len() as f64;
                map.insert(*idx, relative_atomic_energy(m, per_atom, &regressor).map_err(usage)?);
            }
            Some(map)
        }
    };

    // Uniqueness and novelty via canonical keys; enantiomers fold together.
    let mut reference_keys = BTreeSet::new();
    let mut reference_plain = BTreeSet::new();
    for m in &reference.records {
        let graph = assign_bonds(m);
        if let Ok(key) = canonical_key(&graph, m, true) {
            reference_keys.insert(key);
        }
        if let Ok(key) = canonical_key(&graph, m, false) {
            reference_plain.insert(key);
        }
    }

    struct Group {
        representative: usize,
        count: usize,
        first_seen: usize,
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    let mut keyed: Vec<(usize, String, String)> = Vec::new();
    for (idx, m) in &valid {
        let graph = assign_bonds(m);
        let stereo = canonical_key(&graph, m, true).map_err(usage)?;
        let plain = canonical_key(&graph, m, false).map_err(usage)?;
        keyed.push((*idx, stereo.clone(), plain));
        match groups.get_mut(&stereo) {
            None => {
                groups.insert(
                    stereo,
                    Group {
                        representative: *idx,
                        count: 1,
                        first_seen: *idx,
                    },
                );
            }
            Some(group) => {
                group.count += 1;
                let better = match (args.keep, &rel_energy) {
                    (KeepPolicy::LowestEnergy, Some(energies)) => {
                        energies.get(idx) < energies.get(&group.representative)
                    }
                    _ => false,
                };
                if better {
                    group.representative = *idx;
                }
            }
        }
    }
    let n_unique = groups.len();

    let mut n_novel = 0;
    let mut n_novel_stereo = 0;
    let mut n_known = 0;
    for (key, _) in groups.iter() {
        if reference_keys.contains(key) {
            n_known += 1;
            continue;
        }
        n_novel += 1;
        // Same constitution present in the reference but new stereo form?
        let plain = keyed
            .iter()
            .find(|(_, stereo, _)| stereo == key)
            .map(|(_, _, plain)| plain.clone())
            .unwrap_or_default();
        if reference_plain.contains(&plain) {
            n_novel_stereo += 1;
        }
    }

    let mut dedup = String::new();
    for (key, group) in &groups {
        let mut line = serde_json::Map::new();
        line.insert("key".into(), serde_json::json!(key));
        line.insert("first_seen".into(), serde_json::json!(group.first_seen));
        line.insert("count".into(), serde_json::json!(group.count));
        line.insert(
            "representative".into(),
            serde_json::json!(group.representative),
        );
        if let Some(energies) = &rel_energy {
            if let Some(e) = energies.get(&group.representative) {
                line.insert("rel_energy".into(), serde_json::json!(e));
            }
        }
        dedup.push_str(&serde_json::to_string(&serde_json::Value::Object(line)).map_err(usage)?);
        dedup.push('\n');
    }
    fs::write(args.out.join("dedup.jsonl"), dedup)
        .map_err(|e| usage(format!("cannot write dedup report: {e}")))?;

    // Structure statistics over unique valid molecules.
    let unique_molecules: Vec<Molecule> = groups
        .values()
        .map(|g| {
            valid
                .iter()
                .find(|(idx, _)| *idx == g.representative)
                .map(|(_, m)| m.clone())
                .expect("representative exists")
        })
        .collect();
    fs::write(
        args.out.join("stats.csv"),
        structure_stats(&unique_molecules).to_csv(),
    )
    .map_err(|e| usage(format!("cannot write stats.csv: {e}")))?;

    // Tanimoto summary against a fingerprint condition target, if present.
    if let Some(target_bits) = records.first().and_then(|r| {
        r.conditions.iter().find_map(|(_, v)| {
            v.as_str()
                .filter(|s| s.len() == crate::analysis::FINGERPRINT_BITS
                    && s.chars().all(|c| c == '0' || c == '1'))
                .map(|s| Fingerprint::from_bools(
                    &s.chars().map(|c| c == '1').collect::<Vec<bool>>(),
                ))
        })
    }) {
        let mut csv = String::from("set,mean_tanimoto,n\n");
        let mut sets: Vec<(&str, Vec<f64>)> = Vec::new();
        let reference_scores: Vec<f64> = reference
            .records
            .iter()
            .map(|m| tanimoto(&fingerprint(&assign_bonds(m)), &target_bits))
            .collect();
        sets.push(("reference", reference_scores));
        let unique_scores: Vec<f64> = unique_molecules
            .iter()
            .map(|m| tanimoto(&fingerprint(&assign_bonds(m)), &target_bits))
            .collect();
        sets.push(("generated-unique", unique_scores));
        let all_scores: Vec<f64> = valid
            .iter()
            .map(|(_, m)| tanimoto(&fingerprint(&assign_bonds(m)), &target_bits))
            .collect();
        sets.push(("generated-all", all_scores));
        for (name, scores) in sets {
            let mean = if scores.is_empty() {
                0.0
            } else {
                scores.iter().sum::<f64>() / scores.len() as f64
            };
            csv.push_str(&format!("{name},{mean},{}\n", scores.len()));
        }
        fs::write(args.out.join("tanimoto_summary.csv"), csv)
            .map_err(|e| usage(format!("cannot write tanimoto summary: {e}")))?;
    }

    let report = AnalyzeReport {
        n_samples,
        n_ok,
        n_failed,
        n_valid,
        validity_rate: rate(n_valid, n_ok),
        n_unique,
        uniqueness_rate: rate(n_unique, n_valid),
        n_novel,
        novelty_rate: rate(n_novel, n_unique),
        n_novel_stereoisomers: n_novel_stereo,
        n_known,
    };
    let report_path = args.out.join("report.json");
    fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).map_err(usage)?,
    )
    .map_err(|e| usage(format!("cannot write report: {e}")))?;
    Ok(report_path)
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn vocabulary_of(dataset: &Dataset) -> Vec<u8> {
    let mut vocab = BTreeSet::new();
    for m in &dataset.records {
        vocab.extend(m.elements.iter().copied());
    }
    vocab.into_iter().collect()
}

/// `fingerprint`: path fingerprint of one molecule from an extended-XYZ
/// file; returns (set bit indices, 1024-char bit string).
pub fn cmd_fingerprint(input: &Path, index: usize) -> Result<(Vec<usize>, String), CliError> {
    let dataset = read_dataset(input)?;
    let molecule = dataset
        .records
        .get(index)
        .ok_or_else(|| usage(format!("dataset has {} molecules, index {index} is out of range", dataset.len())))?;
    let fp = fingerprint(&assign_bonds(molecule));
    let bits: String = fp.to_bools().iter().map(|&b| if b { '1' } else { '0' }).collect();
    Ok((fp.set_bits(), bits))
}

pub struct SplitArgs {
    pub input: PathBuf,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub out: PathBuf,
    pub exclude_composition: Option<Composition>,
}

/// `split`: deterministic train/val/test split written as three
/// extended-XYZ files.
pub fn cmd_split(args: &SplitArgs) -> Result<(usize, usize, usize), CliError> {
    let dataset = read_dataset(&args.input)?;
    let exclude = args.exclude_composition.clone();
    let predicate = exclude.map(|target| move |m: &Molecule| m.composition() == target);
    let predicate_ref: Option<&dyn Fn(&Molecule) -> bool> = match &predicate {
        Some(p) => Some(p),
        None => None,
    };
    let (train, val, test) =
        split_dataset(&dataset, args.seed, args.fractions, predicate_ref).map_err(usage)?;
    ensure_out_dir(&args.out)?;
    for (name, split) in [("train", &train), ("val", &val), ("test", &test)] {
        fs::write(
            args.out.join(format!("{name}.xyz")),
            serialize_extended_xyz(split),
        )
        .map_err(|e| usage(format!("cannot write {name}.xyz: {e}")))?;
    }
    Ok((train.len(), val.len(), test.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::PropertyValue;

    #[test]
    fn keep_policy_and_rate_edge_cases() {
        assert_eq!(rate(0, 0), 0.0);
        assert_eq!(rate(1, 2), 0.5);
    }

    #[test]
    fn vocabulary_is_sorted_union() {
        let mut dataset = crate::toyset::toy_dataset(4, 0);
        dataset.records[0]
            .properties
            .insert("x".into(), PropertyValue::Scalar(0.0));
        let vocab = vocabulary_of(&dataset);
        assert!(vocab.windows(2).all(|w| w[0] < w[1]));
        assert!(vocab.contains(&6));
    }
}
