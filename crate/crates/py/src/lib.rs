//! Python bindings for the molgen toolkit: molecule parsing and analysis,
//! training from a config file, and sampling from a checkpoint.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use molgen::analysis;
use molgen::chem;
use molgen::cli;
use molgen::config::RunConfig;
use molgen::generate;
use molgen::model::conditioning::{ConditionSpec, ConditionValue};
use molgen::train::Checkpoint;

fn value_error<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A molecule with element symbols and 3d positions in Å.
#[pyclass]
#[derive(Clone)]
struct Molecule {
    inner: chem::Molecule,
}

#[pymethods]
impl Molecule {
    #[new]
    fn new(elements: Vec<String>, positions: Vec<[f64; 3]>) -> PyResult<Self> {
        let numbers: Vec<u8> = elements
            .iter()
            .map(|s| {
                chem::elements::atomic_number(s)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown element `{s}`")))
            })
            .collect::<PyResult<_>>()?;
        Ok(Molecule {
            inner: chem::Molecule::new(numbers, positions).map_err(value_error)?,
        })
    }

    #[getter]
    fn elements(&self) -> Vec<String> {
        self.inner
            .elements
            .iter()
            .map(|&z| chem::elements::symbol(z).unwrap_or("?").to_string())
            .collect()
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.positions.clone()
    }

    #[getter]
    fn properties<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        for (key, value) in &self.inner.properties {
            match value {
                chem::PropertyValue::Scalar(v) => dict.set_item(key, v)?,
                chem::PropertyValue::Bits(bits) => {
                    let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
                    dict.set_item(key, s)?
                }
            }
        }
        Ok(dict)
    }

    /// Hill-order molecular formula, e.g. `C2H6O`.
    #[getter]
    fn formula(&self) -> String {
        self.inner.composition().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Molecule({}, {} atoms)", self.formula(), self.inner.len())
    }

    fn center_of_mass(&self) -> [f64; 3] {
        self.inner.center_of_mass()
    }

    /// (is_valid, reason) per the valence and connectedness check.
    fn check_valid(&self) -> (bool, Option<String>) {
        match analysis::check_valid(&self.inner) {
            analysis::Validity::Valid => (true, None),
            analysis::Validity::Invalid(reason) => (false, Some(format!("{reason:?}"))),
        }
    }

    /// Canonical graph key; enantiomers share a key when `stereo` is true.
    #[pyo3(signature = (stereo = true))]
    fn canonical_key(&self, stereo: bool) -> PyResult<String> {
        let graph = analysis::assign_bonds(&self.inner);
        analysis::canonical_key(&graph, &self.inner, stereo).map_err(value_error)
    }

    /// Indices of the set bits of the 1024-bit path fingerprint.
    fn fingerprint_bits(&self) -> Vec<usize> {
        analysis::fingerprint(&analysis::assign_bonds(&self.inner)).set_bits()
    }

    /// Bond list as (atom_a, atom_b, order) tuples.
    fn bonds(&self) -> Vec<(usize, usize, u8)> {
        analysis::assign_bonds(&self.inner)
            .bonds
            .iter()
            .map(|b| (b.a, b.b, b.order))
            .collect()
    }
}

/// Parses an extended-XYZ string into molecules.
#[pyfunction]
fn parse_xyz(text: &str) -> PyResult<Vec<Molecule>> {
    let dataset = chem::parse_extended_xyz(text).map_err(value_error)?;
    Ok(dataset
        .records
        .into_iter()
        .map(|inner| Molecule { inner })
        .collect())
}

/// Serializes molecules to extended-XYZ.
#[pyfunction]
fn write_xyz(molecules: Vec<Molecule>) -> String {
    let mut schema: Vec<chem::PropertySpec> = Vec::new();
    for m in &molecules {
        for (name, value) in &m.inner.properties {
            if !schema.iter().any(|s| &s.name == name) {
                schema.push(chem::PropertySpec {
                    name: name.clone(),
                    kind: match value {
                        chem::PropertyValue::Scalar(_) => chem::PropertyKind::Scalar,
                        chem::PropertyValue::Bits(_) => chem::PropertyKind::BitVector,
                    },
                    unit: None,
                });
            }
        }
    }
    let dataset = chem::Dataset {
        records: molecules.into_iter().map(|m| m.inner).collect(),
        schema,
    };
    chem::serialize_extended_xyz(&dataset)
}

/// Tanimoto similarity of two molecules' path fingerprints.
#[pyfunction]
fn tanimoto(a: &Molecule, b: &Molecule) -> f64 {
    let fa = analysis::fingerprint(&analysis::assign_bonds(&a.inner));
    let fb = analysis::fingerprint(&analysis::assign_bonds(&b.inner));
    analysis::tanimoto(&fa, &fb)
}

/// Trains a model from a config file; returns the checkpoint path.
#[pyfunction]
fn train(config_path: &str) -> PyResult<String> {
    let config = RunConfig::load(Path::new(config_path)).map_err(value_error)?;
    let path = cli::cmd_train(&config).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok(path.display().to_string())
}

/// Samples molecules from a trained checkpoint.
#[pyclass]
struct Sampler {
    checkpoint: Checkpoint,
}

#[pymethods]
impl Sampler {
    #[new]
    fn new(checkpoint_path: &str) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(Path::new(checkpoint_path))
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Sampler { checkpoint })
    }

    /// Condition names the checkpoint expects, in schema order.
    fn schema(&self) -> Vec<String> {
        self.checkpoint
            .model
            .config
            .conditions
            .iter()
            .map(|s| s.name().to_string())
            .collect()
    }

    /// Draws `count` samples. `conditions` maps schema names to floats
    /// (scalar), formula strings (composition) or bit strings (bit-vector).
    /// Returns one dict per attempt with status, elements and positions.
    #[pyo3(signature = (conditions, count, seed = 0, temperature = 0.1, max_atoms = 35, workers = 1))]
    fn sample<'py>(
        &self,
        py: Python<'py>,
        conditions: &Bound<'py, PyDict>,
        count: usize,
        seed: u64,
        temperature: f64,
        max_atoms: usize,
        workers: usize,
    ) -> PyResult<Bound<'py, PyList>> {
        let model = &self.checkpoint.model;
        let mut values = Vec::new();
        for spec in &model.config.conditions {
            let raw = conditions.get_item(spec.name())?.ok_or_else(|| {
                PyValueError::new_err(format!("missing condition `{}`", spec.name()))
            })?;
            let value = match spec {
                ConditionSpec::Scalar { .. } => ConditionValue::Scalar(raw.extract::<f64>()?),
                ConditionSpec::Composition { .. } => ConditionValue::Composition(
                    chem::Composition::parse(&raw.extract::<String>()?).map_err(value_error)?,
                ),
                ConditionSpec::BitVector { length, .. } => {
                    let s: String = raw.extract()?;
                    if s.len() != *length || !s.chars().all(|c| c == '0' || c == '1') {
                        return Err(PyValueError::new_err(format!(
                            "condition `{}` expects a {length}-character bit string",
                            spec.name()
                        )));
                    }
                    ConditionValue::Bits(s.chars().map(|c| c == '1').collect())
                }
            };
            values.push(value);
        }
        for key in conditions.keys() {
            let key: String = key.extract()?;
            if !model.config.conditions.iter().any(|s| s.name() == key) {
                return Err(PyValueError::new_err(format!("unknown condition `{key}`")));
            }
        }

        if temperature <= 0.0 {
            return Err(PyValueError::new_err("temperature must be positive"));
        }
        let sampler = generate::SamplerConfig {
            temperature,
            max_atoms,
            seed,
            grid: generate::GridSpec::default(),
        };
        let results = py
            .allow_threads(|| generate::sample_batch(model, &values, count, &sampler, workers))
            .map_err(value_error)?;

        let list = PyList::empty(py);
        for (sample_seed, outcome) in results {
            let entry = PyDict::new(py);
            let status = match outcome.status {
                generate::SampleStatus::Ok => "ok",
                generate::SampleStatus::MaxAtoms => "max-atoms",
                generate::SampleStatus::Degenerate => "degenerate",
                generate::SampleStatus::Empty => "empty",
            };
            entry.set_item("status", status)?;
            entry.set_item("seed", sample_seed)?;
            entry.set_item(
                "elements",
                outcome
                    .elements
                    .iter()
                    .map(|&z| chem::elements::symbol(z).unwrap_or("?").to_string())
                    .collect::<Vec<String>>(),
            )?;
            entry.set_item("positions", outcome.positions.clone())?;
            if let Some(molecule) = outcome.molecule() {
                entry.set_item("molecule", Molecule { inner: molecule }.into_pyobject(py)?)?;
            }
            list.append(entry)?;
        }
        Ok(list)
    }
}

/// Deterministic train/val/test split of an extended-XYZ file, written to
/// a directory; returns the three sizes.
#[pyfunction]
#[pyo3(signature = (input, out_dir, train = 0.8, val = 0.1, test = 0.1, seed = 0, exclude_composition = None))]
fn split_dataset(
    input: &str,
    out_dir: &str,
    train: f64,
    val: f64,
    test: f64,
    seed: u64,
    exclude_composition: Option<String>,
) -> PyResult<(usize, usize, usize)> {
    let fractions = chem::SplitFractions::new(train, val, test).map_err(value_error)?;
    let exclude = exclude_composition
        .map(|f| chem::Composition::parse(&f))
        .transpose()
        .map_err(value_error)?;
    cli::cmd_split(&cli::SplitArgs {
        input: PathBuf::from(input),
        fractions,
        seed,
        out: PathBuf::from(out_dir),
        exclude_composition: exclude,
    })
    .map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pymodule]
fn molgen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Molecule>()?;
    m.add_class::<Sampler>()?;
    m.add_function(wrap_pyfunction!(parse_xyz, m)?)?;
    m.add_function(wrap_pyfunction!(write_xyz, m)?)?;
    m.add_function(wrap_pyfunction!(tanimoto, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(split_dataset, m)?)?;
    Ok(())
}
