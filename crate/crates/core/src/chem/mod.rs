//! Molecule representation, dataset ingestion and deterministic splits.

pub mod elements;
mod split;
mod xyz;

pub use split::{split_dataset, SplitFractions};
pub use xyz::{parse_extended_xyz, serialize_extended_xyz};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Vec3};

#[derive(Debug, Error)]
pub enum ChemError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown element symbol `{0}`")]
    UnknownElement(String),
    #[error("unknown atomic number {0}")]
    UnknownAtomicNumber(u8),
    #[error("molecule has no atoms")]
    EmptyMolecule,
    #[error("positions/elements length mismatch ({positions} vs {elements})")]
    LengthMismatch { positions: usize, elements: usize },
    #[error("non-finite coordinate at atom {0}")]
    NonFiniteCoordinate(usize),
    #[error("invalid molecular formula `{0}`")]
    BadFormula(String),
    #[error("split fractions must sum to 1 (got {0})")]
    BadFractions(f64),
    #[error("requested non-empty `{0}` split but it received no records")]
    EmptySplit(&'static str),
}

/// A property value attached to a dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropertyValue {
    Scalar(f64),
    Bits(Vec<bool>),
}

impl PropertyValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            PropertyValue::Scalar(v) => Some(*v),
            PropertyValue::Bits(_) => None,
        }
    }

    pub fn as_bits(&self) -> Option<&[bool]> {
        match self {
            PropertyValue::Scalar(_) => None,
            PropertyValue::Bits(b) => Some(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropertyKind {
    Scalar,
    BitVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub kind: PropertyKind,
    pub unit: Option<String>,
}

/// Ordered atoms with element numbers and 3d positions plus an optional
/// property map.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub elements: Vec<u8>,
    pub positions: Vec<Vec3>,
    pub properties: BTreeMap<String, PropertyValue>,
}

impl Molecule {
    pub fn new(elements: Vec<u8>, positions: Vec<Vec3>) -> Result<Self, ChemError> {
        if elements.len() != positions.len() {
            return Err(ChemError::LengthMismatch {
                positions: positions.len(),
                elements: elements.len(),
            });
        }
        if elements.is_empty() {
            return Err(ChemError::EmptyMolecule);
        }
        for &z in &elements {
            if !elements::is_known(z) {
                return Err(ChemError::UnknownAtomicNumber(z));
            }
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(ChemError::NonFiniteCoordinate(i));
            }
        }
        Ok(Molecule {
            elements,
            positions,
            properties: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Mass-weighted center, or the unweighted centroid when `mass_weighted`
    /// is false.
    pub fn center(&self, mass_weighted: bool) -> Vec3 {
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for (&z, &p) in self.elements.iter().zip(&self.positions) {
            let w = if mass_weighted {
                elements::atomic_mass(z).unwrap_or(1.0)
            } else {
                1.0
            };
            acc = geom::add(acc, geom::scale(p, w));
            total += w;
        }
        geom::scale(acc, 1.0 / total)
    }

    /// Mass-weighted center of mass using the shipped atomic-weight table.
    pub fn center_of_mass(&self) -> Vec3 {
        self.center(true)
    }

    pub fn composition(&self) -> Composition {
        Composition::of(self)
    }

    pub fn transformed(&self, rot: &geom::Mat3, shift: Vec3) -> Molecule {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = geom::add(geom::mat_apply(rot, *p), shift);
        }
        out
    }

    pub fn mirrored(&self) -> Molecule {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = geom::mirror_x(*p);
        }
        out
    }
}

/// Multiset of atomic numbers with derived fractions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub counts: BTreeMap<u8, usize>,
    pub total: usize,
}

impl Composition {
    pub fn of(molecule: &Molecule) -> Composition {
        let mut counts = BTreeMap::new();
        for &z in &molecule.elements {
            *counts.entry(z).or_insert(0) += 1;
        }
        Composition {
            counts,
            total: molecule.len(),
        }
    }

    pub fn fraction(&self, z: u8) -> f64 {
        *self.counts.get(&z).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Parses a molecular formula such as `C7O2H10`.
    pub fn parse(formula: &str) -> Result<Composition, ChemError> {
        let bad = || ChemError::BadFormula(formula.to_string());
        let chars: Vec<char> = formula.chars().collect();
        let mut counts = BTreeMap::new();
        let mut total = 0usize;
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_ascii_uppercase() {
                return Err(bad());
            }
            let mut sym = chars[i].to_string();
            i += 1;
            if i < chars.len() && chars[i].is_ascii_lowercase() {
                sym.push(chars[i]);
                i += 1;
            }
            let z = elements::atomic_number(&sym).ok_or_else(bad)?;
            let mut digits = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                digits.push(chars[i]);
                i += 1;
            }
            let n: usize = if digits.is_empty() {
                1
            } else {
                digits.parse().map_err(|_| bad())?
            };
            if n == 0 {
                return Err(bad());
            }
            *counts.entry(z).or_insert(0) += n;
            total += n;
        }
        if total == 0 {
            return Err(bad());
        }
        Ok(Composition { counts, total })
    }
}

impl fmt::Display for Composition {
    /// Hill order: C first, H second, the rest by symbol.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut entries: Vec<(u8, usize)> = self.counts.iter().map(|(&z, &n)| (z, n)).collect();
        entries.sort_by_key(|&(z, _)| {
            let sym = elements::symbol(z).unwrap_or("?");
            match sym {
                "C" => (0, String::new()),
                "H" => (1, String::new()),
                _ => (2, sym.to_string()),
            }
        });
        for (z, n) in entries {
            write!(f, "{}", elements::symbol(z).unwrap_or("?"))?;
            if n > 1 {
                write!(f, "{n}")?;
            }
        }
        Ok(())
    }
}

/// A sequence of molecules sharing a property schema.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<Molecule>,
    pub schema: Vec<PropertySpec>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn property_spec(&self, name: &str) -> Option<&PropertySpec> {
        self.schema.iter().find(|s| s.name == name)
    }
}
