//! Validity, uniqueness, fingerprints, energies and structural statistics
//! of molecule sets.

mod bonds;
mod canon;
mod energy;
mod fingerprint;
mod predictor;
mod rings;
mod stats;

pub use bonds::{assign_bonds, check_valid, Bond, BondGraph, InvalidReason, Validity, RADIUS_SLACK};
pub use canon::{canonical_key, CanonError};
pub use energy::{relative_atomic_energy, EnergyError, EnergyRegressor};
pub use fingerprint::{
    fingerprint, fnv1a64, path_labels, tanimoto, Fingerprint, FINGERPRINT_BITS,
};
pub use predictor::{
    predict_property, train_property_regressor, PredictorConfig, PredictorError, PropertyPredictor,
};
pub use rings::smallest_rings;
pub use stats::{structure_stats, StructureStats};
