//! Relative atomic energy: a linear map from atomic concentration to
//! energy per atom, fitted by ordinary least squares.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{elements, Composition, Dataset, Molecule};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("need at least {needed} records with distinct concentrations, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("rank-deficient design: concentrations of `{element}` are linearly dependent on the others")]
    RankDeficient { element: String },
    #[error("element {0} is not in the regressor vocabulary")]
    UnknownElement(u8),
    #[error("molecule {index}: property `{name}` missing or not a scalar")]
    MissingEnergy { index: usize, name: String },
}

/// Per-element energy weights (eV per unit concentration). Because
/// concentrations sum to one the intercept is not separately identifiable
/// and is fixed at zero by the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRegressor {
    pub vocabulary: Vec<u8>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl EnergyRegressor {
    /// Least-squares fit from (composition, energy-per-atom) samples.
    pub fn fit(vocabulary: &[u8], samples: &[(Composition, f64)]) -> Result<Self, EnergyError> {
        let k = vocabulary.len();
        if samples.len() < k {
            return Err(EnergyError::TooFewRecords {
                needed: k,
                got: samples.len(),
            });
        }
        for (comp, _) in samples {
            for &z in comp.counts.keys() {
                if !vocabulary.contains(&z) {
                    return Err(EnergyError::UnknownElement(z));
                }
            }
        }
        // Normal equations A w = b with A = X^T X, b = X^T y.
        let mut a = vec![vec![0.0f64; k]; k];
        let mut b = vec![0.0f64; k];
        for (comp, energy) in samples {
            let row: Vec<f64> = vocabulary.iter().map(|&z| comp.fraction(z)).collect();
            for i in 0..k {
                b[i] += row[i] * energy;
                for j in 0..k {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        let weights = solve(a, b, vocabulary)?;
        Ok(EnergyRegressor {
            vocabulary: vocabulary.to_vec(),
            weights,
            intercept: 0.0,
        })
    }

    /// Convenience: fits from a dataset property holding total energies,
    /// dividing by the atom count.
    pub fn fit_from_dataset(
        dataset: &Dataset,
        energy_key: &str,
        vocabulary: &[u8],
    ) -> Result<Self, EnergyError> {
        let samples: Vec<(Composition, f64)> = dataset
            .records
            .iter()
            .enumerate()
            .map(|(index, m)| {
                let total = m
                    .properties
                    .get(energy_key)
                    .and_then(|p| p.as_scalar())
                    .ok_or_else(|| EnergyError::MissingEnergy {
                        index,
                        name: energy_key.into(),
                    })?;
                Ok((m.composition(), total / m.len() as f64))
            })
            .collect::<Result<_, EnergyError>>()?;
        EnergyRegressor::fit(vocabulary, &samples)
    }

    /// Expected energy per atom for a composition.
    pub fn predict(&self, comp: &Composition) -> Result<f64, EnergyError> {
        for &z in comp.counts.keys() {
            if !self.vocabulary.contains(&z) {
                return Err(EnergyError::UnknownElement(z));
            }
        }
        let mut out = self.intercept;
        for (&z, &w) in self.vocabulary.iter().zip(&self.weights) {
            out += w * comp.fraction(z);
        }
        Ok(out)
    }
}

/// Energy per atom minus the composition-expected energy per atom;
/// negative values indicate comparatively low energy.
pub fn relative_atomic_energy(
    molecule: &Molecule,
    energy_per_atom: f64,
    regressor: &EnergyRegressor,
) -> Result<f64, EnergyError> {
    Ok(energy_per_atom - regressor.predict(&molecule.composition())?)
}

fn solve(
    mut a: Vec<Vec<f64>>,
    mut b: Vec<f64>,
    vocabulary: &[u8],
) -> Result<Vec<f64>, EnergyError> {
    let k = b.len();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-10 * scale {
            return Err(EnergyError::RankDeficient {
                element: elements::symbol(vocabulary[col]).unwrap_or("?").to_string(),
            });
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for j in col..k {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    Ok((0..k).map(|i| b[i] / a[i][i]).collect())
}
