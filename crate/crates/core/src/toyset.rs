//! A small library of hand-built organic molecules with realistic
//! geometries, used for tests, demos and desk-scale training runs.
//!
//! Every structure passes the validity checker; synthetic `u0` (total
//! energy, eV) and `gap` (eV) properties are attached so conditioned
//! training has labels to work with.

use crate::chem::{Composition, Dataset, Molecule, PropertyKind, PropertySpec, PropertyValue};
use crate::geom::{self, Vec3};
use crate::rng::stream_rng;
use rand::Rng;

const TETRAHEDRAL: f64 = 109.4712206344907;

fn unit(v: Vec3) -> Vec3 {
    geom::scale(v, 1.0 / geom::norm(v))
}

/// Two unit vectors orthogonal to `a` and to each other.
fn frame(a: Vec3) -> (Vec3, Vec3) {
    let pick = if a[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e1 = unit(geom::cross(a, pick));
    let e2 = unit(geom::cross(a, e1));
    (e1, e2)
}

/// Unit directions forming the given angle (degrees) with `axis`, at the
/// given azimuths (degrees).
fn dirs_at_angle(axis: Vec3, angle_deg: f64, phases_deg: &[f64]) -> Vec<Vec3> {
    let a = unit(axis);
    let (e1, e2) = frame(a);
    let angle = angle_deg.to_radians();
    phases_deg
        .iter()
        .map(|p| {
            let phi = p.to_radians();
            geom::add(
                geom::scale(a, angle.cos()),
                geom::add(
                    geom::scale(e1, angle.sin() * phi.cos()),
                    geom::scale(e2, angle.sin() * phi.sin()),
                ),
            )
        })
        .collect()
}

struct Builder {
    elements: Vec<u8>,
    positions: Vec<Vec3>,
}

impl Builder {
    fn new() -> Builder {
        Builder {
            elements: Vec::new(),
            positions: Vec::new(),
        }
    }

    fn atom(&mut self, z: u8, p: Vec3) -> usize {
        self.elements.push(z);
        self.positions.push(p);
        self.elements.len() - 1
    }

    /// Adds hydrogens around `center` pointing away from `toward` at the
    /// tetrahedral angle.
    fn hydrogens(&mut self, center: Vec3, toward: Vec3, r: f64, phases: &[f64]) {
        let axis = geom::sub(toward, center);
        for d in dirs_at_angle(axis, TETRAHEDRAL, phases) {
            self.atom(1, geom::add(center, geom::scale(d, r)));
        }
    }

    fn build(self) -> Molecule {
        Molecule::new(self.elements, self.positions).expect("valid builder geometry")
    }
}

fn methane() -> Molecule {
    let mut b = Builder::new();
    let d = 1.09 / 3f64.sqrt();
    b.atom(6, [0.0; 3]);
    for s in [[d, d, d], [d, -d, -d], [-d, d, -d], [-d, -d, d]] {
        b.atom(1, s);
    }
    b.build()
}

fn ethane() -> Molecule {
    let mut b = Builder::new();
    let c1 = b.atom(6, [-0.77, 0.0, 0.0]);
    let c2 = b.atom(6, [0.77, 0.0, 0.0]);
    let (p1, p2) = (b.positions[c1], b.positions[c2]);
    b.hydrogens(p1, p2, 1.09, &[0.0, 120.0, 240.0]);
    b.hydrogens(p2, p1, 1.09, &[60.0, 180.0, 300.0]);
    b.build()
}

fn ethene() -> Molecule {
    let mut b = Builder::new();
    let half = 1.33 / 2.0;
    b.atom(6, [-half, 0.0, 0.0]);
    b.atom(6, [half, 0.0, 0.0]);
    let angle = 121.3f64.to_radians();
    let (dx, dy) = (1.09 * angle.cos().abs(), 1.09 * angle.sin());
    b.atom(1, [-half - dx, dy, 0.0]);
    b.atom(1, [-half - dx, -dy, 0.0]);
    b.atom(1, [half + dx, dy, 0.0]);
    b.atom(1, [half + dx, -dy, 0.0]);
    b.build()
}

fn ethyne() -> Molecule {
    let mut b = Builder::new();
    b.atom(1, [-1.665, 0.0, 0.0]);
    b.atom(6, [-0.6, 0.0, 0.0]);
    b.atom(6, [0.6, 0.0, 0.0]);
    b.atom(1, [1.665, 0.0, 0.0]);
    b.build()
}

fn water() -> Molecule {
    let mut b = Builder::new();
    b.atom(8, [0.0; 3]);
    b.atom(1, [0.96, 0.0, 0.0]);
    let a = 104.5f64.to_radians();
    b.atom(1, [0.96 * a.cos(), 0.96 * a.sin(), 0.0]);
    b.build()
}

fn ammonia() -> Molecule {
    let mut b = Builder::new();
    b.atom(7, [0.0; 3]);
    for d in dirs_at_angle([0.0, 0.0, 1.0], 68.1, &[0.0, 120.0, 240.0]) {
        b.atom(1, geom::scale(d, 1.01));
    }
    b.build()
}

fn methanol() -> Molecule {
    let mut b = Builder::new();
    let c = b.atom(6, [0.0; 3]);
    let o = b.atom(8, [1.43, 0.0, 0.0]);
    let (pc, po) = (b.positions[c], b.positions[o]);
    let oh = dirs_at_angle(geom::sub(pc, po), 108.5, &[90.0]);
    b.atom(1, geom::add(po, geom::scale(oh[0], 0.96)));
    b.hydrogens(pc, po, 1.09, &[30.0, 150.0, 270.0]);
    b.build()
}

fn formaldehyde() -> Molecule {
    let mut b = Builder::new();
    b.atom(6, [0.0; 3]);
    b.atom(8, [1.21, 0.0, 0.0]);
    let a = 122.0f64.to_radians();
    b.atom(1, [1.11 * a.cos(), 1.11 * a.sin(), 0.0]);
    b.atom(1, [1.11 * a.cos(), -1.11 * a.sin(), 0.0]);
    b.build()
}

fn hydrogen_cyanide() -> Molecule {
    let mut b = Builder::new();
    b.atom(1, [-1.07, 0.0, 0.0]);
    b.atom(6, [0.0; 3]);
    b.atom(7, [1.156, 0.0, 0.0]);
    b.build()
}

fn methylamine() -> Molecule {
    let mut b = Builder::new();
    let c = b.atom(6, [0.0; 3]);
    let n = b.atom(7, [1.47, 0.0, 0.0]);
    let (pc, pn) = (b.positions[c], b.positions[n]);
    for d in dirs_at_angle(geom::sub(pc, pn), 110.0, &[55.0, 305.0]) {
        b.atom(1, geom::add(pn, geom::scale(d, 1.01)));
    }
    b.hydrogens(pc, pn, 1.09, &[0.0, 120.0, 240.0]);
    b.build()
}

pub(crate) fn ethanol() -> Molecule {
    Molecule::new(
        vec![6, 6, 8, 1, 1, 1, 1, 1, 1],
        vec![
            [-1.168, -0.396, 0.0],
            [0.0, 0.548, 0.0],
            [1.190, -0.216, 0.0],
            [1.946, 0.372, 0.0],
            [-2.115, 0.140, 0.0],
            [-1.128, -1.035, 0.885],
            [-1.128, -1.035, -0.885],
            [0.042, 1.193, 0.885],
            [0.042, 1.193, -0.885],
        ],
    )
    .unwrap()
}

fn dimethyl_ether() -> Molecule {
    let mut b = Builder::new();
    let o = b.atom(8, [0.0; 3]);
    let (s, c) = (55.5f64.to_radians().sin(), 55.5f64.to_radians().cos());
    let c1 = b.atom(6, [1.41 * c, 1.41 * s, 0.0]);
    let c2 = b.atom(6, [1.41 * c, -1.41 * s, 0.0]);
    let po = b.positions[o];
    let (p1, p2) = (b.positions[c1], b.positions[c2]);
    b.hydrogens(p1, po, 1.09, &[0.0, 120.0, 240.0]);
    b.hydrogens(p2, po, 1.09, &[60.0, 180.0, 300.0]);
    b.build()
}

fn formic_acid() -> Molecule {
    let mut b = Builder::new();
    b.atom(6, [0.0; 3]);
    let o2 = b.atom(8, [1.36, 0.0, 0.0]);
    let a = 124.0f64.to_radians();
    b.atom(8, [1.21 * a.cos(), 1.21 * a.sin(), 0.0]);
    let h = 118.0f64.to_radians();
    b.atom(1, [1.10 * h.cos(), -1.10 * h.sin(), 0.0]);
    let po = b.positions[o2];
    let d = 74.0f64.to_radians();
    b.atom(1, geom::add(po, [0.97 * d.cos(), 0.97 * d.sin(), 0.0]));
    b.build()
}

fn acetonitrile() -> Molecule {
    let mut b = Builder::new();
    let c1 = b.atom(6, [0.0; 3]);
    let c2 = b.atom(6, [1.46, 0.0, 0.0]);
    b.atom(7, [1.46 + 1.16, 0.0, 0.0]);
    let (p1, p2) = (b.positions[c1], b.positions[c2]);
    b.hydrogens(p1, p2, 1.09, &[0.0, 120.0, 240.0]);
    b.build()
}

fn propane() -> Molecule {
    let mut b = Builder::new();
    let a = 56.0f64.to_radians();
    let c2 = b.atom(6, [0.0, 0.86, 0.0]);
    let c1 = b.atom(6, [-1.53 * a.sin(), 0.86 - 1.53 * a.cos(), 0.0]);
    let c3 = b.atom(6, [1.53 * a.sin(), 0.86 - 1.53 * a.cos(), 0.0]);
    let (p2, p1, p3) = (b.positions[c2], b.positions[c1], b.positions[c3]);
    // Central CH2: both hydrogens in the plane bisecting C1-C2-C3.
    let up = unit(geom::sub(
        p2,
        geom::scale(geom::add(p1, p3), 0.5),
    ));
    let half = (TETRAHEDRAL / 2.0f64).to_radians();
    for sz in [1.0, -1.0] {
        let d = geom::add(
            geom::scale(up, half.cos()),
            geom::scale([0.0, 0.0, sz], half.sin()),
        );
        b.atom(1, geom::add(p2, geom::scale(d, 1.09)));
    }
    b.hydrogens(p1, p2, 1.09, &[0.0, 120.0, 240.0]);
    b.hydrogens(p3, p2, 1.09, &[60.0, 180.0, 300.0]);
    b.build()
}

fn cyclopropane() -> Molecule {
    let mut b = Builder::new();
    let r = 1.51 / 3f64.sqrt();
    let mut carbons = Vec::new();
    for k in 0..3 {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        carbons.push(b.atom(6, [r * theta.cos(), r * theta.sin(), 0.0]));
    }
    let half = (115.0 / 2.0f64).to_radians();
    for &c in &carbons {
        let pc = b.positions[c];
        let out = unit([pc[0], pc[1], 0.0]);
        for sz in [1.0, -1.0] {
            let d = geom::add(
                geom::scale(out, half.cos()),
                geom::scale([0.0, 0.0, sz], half.sin()),
            );
            b.atom(1, geom::add(pc, geom::scale(d, 1.09)));
        }
    }
    b.build()
}

fn fluoromethane() -> Molecule {
    let mut b = Builder::new();
    let c = b.atom(6, [0.0; 3]);
    let f = b.atom(9, [1.38, 0.0, 0.0]);
    let (pc, pf) = (b.positions[c], b.positions[f]);
    b.hydrogens(pc, pf, 1.09, &[0.0, 120.0, 240.0]);
    b.build()
}

fn carbon_dioxide() -> Molecule {
    let mut b = Builder::new();
    b.atom(8, [-1.16, 0.0, 0.0]);
    b.atom(6, [0.0; 3]);
    b.atom(8, [1.16, 0.0, 0.0]);
    b.build()
}

fn acetaldehyde() -> Molecule {
    let mut b = Builder::new();
    let c1 = b.atom(6, [0.0; 3]);
    let c2 = b.atom(6, [1.50, 0.0, 0.0]);
    // Carbonyl O and aldehyde H both point away from the methyl carbon.
    let a = 124.0f64.to_radians();
    b.atom(8, [1.50 - 1.21 * a.cos(), 1.21 * a.sin(), 0.0]);
    let h = 115.3f64.to_radians();
    b.atom(1, [1.50 - 1.11 * h.cos(), -1.11 * h.sin(), 0.0]);
    let (p1, p2) = (b.positions[c1], b.positions[c2]);
    b.hydrogens(p1, p2, 1.09, &[0.0, 120.0, 240.0]);
    b.build()
}

fn hydrogen_peroxide() -> Molecule {
    let mut b = Builder::new();
    let o1 = b.atom(8, [0.0; 3]);
    let o2 = b.atom(8, [1.475, 0.0, 0.0]);
    let (p1, p2) = (b.positions[o1], b.positions[o2]);
    let d1 = dirs_at_angle(geom::sub(p1, p2), 94.8, &[90.0]);
    b.atom(1, geom::add(p2, geom::scale(d1[0], 0.95)));
    let d2 = dirs_at_angle(geom::sub(p2, p1), 94.8, &[90.0 + 115.0]);
    b.atom(1, geom::add(p1, geom::scale(d2[0], 0.95)));
    b.build()
}

fn hydrazine() -> Molecule {
    let mut b = Builder::new();
    let n1 = b.atom(7, [0.0; 3]);
    let n2 = b.atom(7, [1.45, 0.0, 0.0]);
    let (p1, p2) = (b.positions[n1], b.positions[n2]);
    for d in dirs_at_angle(geom::sub(p2, p1), 108.0, &[35.0, 325.0]) {
        b.atom(1, geom::add(p1, geom::scale(d, 1.02)));
    }
    for d in dirs_at_angle(geom::sub(p1, p2), 108.0, &[145.0, 215.0]) {
        b.atom(1, geom::add(p2, geom::scale(d, 1.02)));
    }
    b.build()
}

fn methanimine() -> Molecule {
    let mut b = Builder::new();
    b.atom(6, [0.0; 3]);
    b.atom(7, [1.27, 0.0, 0.0]);
    let a = 121.0f64.to_radians();
    b.atom(1, [1.09 * a.cos(), 1.09 * a.sin(), 0.0]);
    b.atom(1, [1.09 * a.cos(), -1.09 * a.sin(), 0.0]);
    let h = 70.0f64.to_radians();
    b.atom(1, [1.27 + 1.01 * h.cos(), 1.01 * h.sin(), 0.0]);
    b.build()
}

fn formamide() -> Molecule {
    let mut b = Builder::new();
    b.atom(6, [0.0; 3]);
    let n = b.atom(7, [1.36, 0.0, 0.0]);
    let a = 125.0f64.to_radians();
    b.atom(8, [1.22 * a.cos(), 1.22 * a.sin(), 0.0]);
    let h = 122.0f64.to_radians();
    b.atom(1, [1.10 * h.cos(), -1.10 * h.sin(), 0.0]);
    let pn = b.positions[n];
    for sy in [1.0, -1.0] {
        b.atom(1, geom::add(pn, [1.01 * 0.5, 1.01 * 0.866 * sy, 0.0]));
    }
    b.build()
}

fn difluoromethane() -> Molecule {
    let mut b = Builder::new();
    b.atom(6, [0.0; 3]);
    let d = 1.0 / 3f64.sqrt();
    b.atom(9, geom::scale([d, d, d], 1.36));
    b.atom(9, geom::scale([d, -d, -d], 1.36));
    b.atom(1, geom::scale([-d, d, -d], 1.09));
    b.atom(1, geom::scale([-d, -d, d], 1.09));
    b.build()
}

/// A chiral carbon: H, F, OH and NH2 substituents are all distinct.
fn fluoro_amino_methanol() -> Molecule {
    let mut b = Builder::new();
    let d = 1.0 / 3f64.sqrt();
    let c = b.atom(6, [0.0; 3]);
    b.atom(1, geom::scale([d, d, d], 1.09));
    b.atom(9, geom::scale([d, -d, -d], 1.36));
    let o = b.atom(8, geom::scale([-d, d, -d], 1.43));
    let n = b.atom(7, geom::scale([-d, -d, d], 1.47));
    let (pc, po, pn) = (b.positions[c], b.positions[o], b.positions[n]);
    let oh = dirs_at_angle(geom::sub(pc, po), 108.5, &[60.0]);
    b.atom(1, geom::add(po, geom::scale(oh[0], 0.96)));
    for dir in dirs_at_angle(geom::sub(pc, pn), 110.0, &[180.0, 300.0]) {
        b.atom(1, geom::add(pn, geom::scale(dir, 1.01)));
    }
    b.build()
}

pub(crate) fn benzene() -> Molecule {
    let mut b = Builder::new();
    for k in 0..6 {
        let theta = std::f64::consts::PI / 3.0 * k as f64;
        b.atom(6, [1.39 * theta.cos(), 1.39 * theta.sin(), 0.0]);
    }
    for k in 0..6 {
        let theta = std::f64::consts::PI / 3.0 * k as f64;
        b.atom(1, [2.48 * theta.cos(), 2.48 * theta.sin(), 0.0]);
    }
    b.build()
}

/// The toy library: every entry passes the validity check.
pub fn library() -> Vec<Molecule> {
    vec![
        methane(),
        ethane(),
        ethene(),
        ethyne(),
        water(),
        ammonia(),
        methanol(),
        formaldehyde(),
        hydrogen_cyanide(),
        methylamine(),
        ethanol(),
        dimethyl_ether(),
        formic_acid(),
        acetonitrile(),
        propane(),
        cyclopropane(),
        fluoromethane(),
        carbon_dioxide(),
        acetaldehyde(),
        hydrogen_peroxide(),
        hydrazine(),
        methanimine(),
        formamide(),
        difluoromethane(),
        fluoro_amino_methanol(),
        benzene(),
    ]
}

/// Synthetic HOMO-LUMO-gap-like label: a smooth function of composition
/// staying inside the default 2-11 eV embedding range.
pub fn synthetic_gap(molecule: &Molecule) -> f64 {
    let comp = molecule.composition();
    2.5 + 7.0 * comp.fraction(1) + 2.0 * comp.fraction(6) - 1.5 * comp.fraction(8)
        + 0.5 * comp.fraction(7)
        + 0.8 * comp.fraction(9)
        + 0.05 * comp.total as f64
}

/// Synthetic total energy (eV): linear atomic contributions plus a small
/// per-composition deviation.
pub fn synthetic_u0(molecule: &Molecule) -> f64 {
    let comp = molecule.composition();
    let per_atom: f64 = [
        (1u8, -0.5),
        (6, -1.0),
        (7, -1.4),
        (8, -1.9),
        (9, -2.4),
    ]
    .iter()
    .map(|&(z, w)| comp.fraction(z) * w)
    .sum();
    let wobble = 0.02 * (Composition::of(molecule).to_string().len() as f64).sin();
    (per_atom + wobble) * comp.total as f64
}

/// A dataset of `n` records drawn from the library with random rigid
/// motions, annotated with the synthetic properties.
pub fn toy_dataset(n: usize, seed: u64) -> Dataset {
    let base = library();
    let mut rng = stream_rng(seed, "toyset");
    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        let mol = &base[k % base.len()];
        let axis = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0f64),
        ];
        let axis = if geom::norm(axis) < 1e-6 { [1.0, 0.0, 0.0] } else { axis };
        let rot = geom::rotation(axis, rng.gen_range(0.0..std::f64::consts::TAU));
        let shift = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        let mut moved = mol.transformed(&rot, shift);
        moved
            .properties
            .insert("gap".into(), PropertyValue::Scalar(synthetic_gap(mol)));
        moved
            .properties
            .insert("u0".into(), PropertyValue::Scalar(synthetic_u0(mol)));
        records.push(moved);
    }
    Dataset {
        records,
        schema: vec![
            PropertySpec {
                name: "gap".into(),
                kind: PropertyKind::Scalar,
                unit: Some("eV".into()),
            },
            PropertySpec {
                name: "u0".into(),
                kind: PropertyKind::Scalar,
                unit: Some("eV".into()),
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_valid, Validity};

    #[test]
    fn every_library_molecule_is_valid() {
        for (idx, mol) in library().iter().enumerate() {
            let verdict = check_valid(mol);
            assert!(
                matches!(verdict, Validity::Valid),
                "library molecule {idx} ({}) failed: {verdict:?}",
                mol.composition()
            );
        }
    }

    #[test]
    fn library_spans_multiple_compositions() {
        let mut formulas: Vec<String> = library()
            .iter()
            .map(|m| m.composition().to_string())
            .collect();
        formulas.sort();
        formulas.dedup();
        assert!(formulas.len() >= 20, "got {}", formulas.len());
    }

    #[test]
    fn toy_dataset_is_deterministic_and_labelled() {
        let a = toy_dataset(50, 3);
        let b = toy_dataset(50, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for record in &a.records {
            assert!(record.properties.contains_key("gap"));
            assert!(record.properties.contains_key("u0"));
        }
        let c = toy_dataset(50, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_gap_range_is_schema_compatible() {
        for mol in library() {
            let gap = synthetic_gap(&mol);
            assert!((2.0..11.0).contains(&gap), "gap {gap} out of range");
        }
    }
}
