//! Canonical keys for molecular graphs.
//!
//! Atoms are partitioned by iterative neighborhood refinement (element,
//! degree and bond-order invariants, then sorted neighbor signatures);
//! remaining ties are broken by branching over the tied atoms and keeping
//! the lexicographically smallest serialization, which makes the key
//! independent of input atom order. Tetrahedral stereo descriptors are
//! derived from signed volumes over 3d positions; enantiomers fold to one
//! key by taking the minimum of the key and its mirror image's key.

use thiserror::Error;

use crate::chem::{elements, Molecule};
use crate::geom;

use super::bonds::BondGraph;

#[derive(Debug, Error)]
pub enum CanonError {
    #[error("graph has {graph} atoms but the molecule has {molecule}")]
    SizeMismatch { graph: usize, molecule: usize },
    #[error("empty graph")]
    Empty,
}

struct GraphView<'a> {
    elements: &'a [u8],
    /// neighbor list with bond orders
    adjacency: Vec<Vec<(usize, u8)>>,
}

impl<'a> GraphView<'a> {
    fn new(graph: &'a BondGraph) -> GraphView<'a> {
        let mut adjacency = vec![Vec::new(); graph.elements.len()];
        for bond in &graph.bonds {
            adjacency[bond.a].push((bond.b, bond.order));
            adjacency[bond.b].push((bond.a, bond.order));
        }
        GraphView {
            elements: &graph.elements,
            adjacency,
        }
    }

    fn n(&self) -> usize {
        self.elements.len()
    }
}

/// Refines a class assignment to a fixed point; classes are renumbered
/// 0.. by sorted signature so the result is order-independent.
fn refine(view: &GraphView, classes: &mut Vec<usize>) {
    loop {
        let mut signatures: Vec<(usize, Vec<(usize, u8)>)> = Vec::with_capacity(view.n());
        for i in 0..view.n() {
            let mut neighborhood: Vec<(usize, u8)> = view.adjacency[i]
                .iter()
                .map(|&(j, order)| (classes[j], order))
                .collect();
            neighborhood.sort();
            signatures.push((classes[i], neighborhood));
        }
        let mut unique: Vec<&(usize, Vec<(usize, u8)>)> = signatures.iter().collect();
        unique.sort();
        unique.dedup();
        let next: Vec<usize> = signatures
            .iter()
            .map(|s| unique.binary_search(&s).unwrap())
            .collect();
        if next == *classes {
            return;
        }
        *classes = next;
    }
}

fn initial_classes(view: &GraphView) -> Vec<usize> {
    let mut invariants: Vec<(u8, usize, u32)> = Vec::with_capacity(view.n());
    for i in 0..view.n() {
        let degree = view.adjacency[i].len();
        let order_sum: u32 = view.adjacency[i].iter().map(|&(_, o)| o as u32).sum();
        invariants.push((view.elements[i], degree, order_sum));
    }
    let mut unique = invariants.clone();
    unique.sort();
    unique.dedup();
    invariants
        .iter()
        .map(|inv| unique.binary_search(inv).unwrap())
        .collect()
}

/// Symmetry classes of the graph: the refinement fixed point without any
/// artificial tie-breaking. Used for stereocenter detection.
fn symmetry_classes(view: &GraphView) -> Vec<usize> {
    let mut classes = initial_classes(view);
    refine(view, &mut classes);
    classes
}

/// Serializes the graph under a given complete ranking (rank -> position
/// in the output), including stereo descriptors when positions are given.
fn serialize(
    view: &GraphView,
    classes: &[usize],
    symmetry: &[usize],
    positions: Option<&[geom::Vec3]>,
) -> String {
    let n = view.n();
    // classes is a bijection here: order[rank] = atom.
    let mut order = vec![0usize; n];
    for (atom, &rank) in classes.iter().enumerate() {
        order[rank] = atom;
    }
    let mut out = String::new();
    for &atom in &order {
        out.push_str(elements::symbol(view.elements[atom]).unwrap_or("?"));
    }
    let mut edges: Vec<(usize, usize, u8)> = Vec::new();
    for (atom, nbrs) in view.adjacency.iter().enumerate() {
        for &(other, bond_order) in nbrs {
            if atom < other {
                let (ra, rb) = (classes[atom], classes[other]);
                edges.push((ra.min(rb), ra.max(rb), bond_order));
            }
        }
    }
    edges.sort();
    for (a, b, o) in edges {
        out.push_str(&format!("|{a}-{b}:{o}"));
    }
    if let Some(pos) = positions {
        let mut descriptors: Vec<(usize, char)> = Vec::new();
        for atom in 0..n {
            if view.adjacency[atom].len() != 4 {
                continue;
            }
            let mut nbr_classes: Vec<usize> =
                view.adjacency[atom].iter().map(|&(j, _)| symmetry[j]).collect();
            nbr_classes.sort();
            nbr_classes.dedup();
            if nbr_classes.len() != 4 {
                continue;
            }
            // Order substituents by final rank and take the signed volume.
            let mut nbrs: Vec<usize> = view.adjacency[atom].iter().map(|&(j, _)| j).collect();
            nbrs.sort_by_key(|&j| classes[j]);
            let base = pos[nbrs[0]];
            let v1 = geom::sub(pos[nbrs[1]], base);
            let v2 = geom::sub(pos[nbrs[2]], base);
            let v3 = geom::sub(pos[nbrs[3]], base);
            let det = geom::dot(v1, geom::cross(v2, v3));
            if det.abs() < 1e-9 {
                continue;
            }
            descriptors.push((classes[atom], if det > 0.0 { '+' } else { '-' }));
        }
        descriptors.sort();
        for (rank, sign) in descriptors {
            out.push_str(&format!("|@{rank}{sign}"));
        }
    }
    out
}

/// Minimal serialization over all tie-break branches.
fn canonical_string(
    view: &GraphView,
    classes: Vec<usize>,
    symmetry: &[usize],
    positions: Option<&[geom::Vec3]>,
    best: &mut Option<String>,
) {
    // Find the smallest non-singleton class.
    let n = view.n();
    let mut counts = vec![0usize; n];
    for &c in &classes {
        counts[c] += 1;
    }
    let target = (0..n).find(|&c| counts[c] > 1);
    match target {
        None => {
            let s = serialize(view, &classes, symmetry, positions);
            if best.as_ref().map(|b| s < *b).unwrap_or(true) {
                *best = Some(s);
            }
        }
        Some(class) => {
            let members: Vec<usize> = (0..n).filter(|&i| classes[i] == class).collect();
            for &chosen in &members {
                let mut branched = classes.clone();
                // Single the chosen atom out just below its class, shift
                // everything at or above the class up by one.
                for value in branched.iter_mut() {
                    if *value >= class {
                        *value += 1;
                    }
                }
                branched[chosen] = class;
                refine(view, &mut branched);
                canonical_string(view, branched, symmetry, positions, best);
            }
        }
    }
}

fn raw_key(graph: &BondGraph, positions: Option<&[geom::Vec3]>) -> String {
    let view = GraphView::new(graph);
    let symmetry = symmetry_classes(&view);
    let mut classes = symmetry.clone();
    refine(&view, &mut classes);
    let mut best = None;
    canonical_string(&view, classes, &symmetry, positions, &mut best);
    best.expect("at least one serialization")
}

/// Canonical key of a molecular graph. With `stereo` set, tetrahedral
/// descriptors from the 3d geometry are included and mirror images fold
/// to the same key; without it the key is purely constitutional.
pub fn canonical_key(
    graph: &BondGraph,
    molecule: &Molecule,
    stereo: bool,
) -> Result<String, CanonError> {
    if graph.n_atoms() != molecule.len() {
        return Err(CanonError::SizeMismatch {
            graph: graph.n_atoms(),
            molecule: molecule.len(),
        });
    }
    if graph.n_atoms() == 0 {
        return Err(CanonError::Empty);
    }
    if !stereo {
        return Ok(raw_key(graph, None));
    }
    let direct = raw_key(graph, Some(&molecule.positions));
    let mirrored = molecule.mirrored();
    let reflected = raw_key(graph, Some(&mirrored.positions));
    Ok(direct.min(reflected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::assign_bonds;
    use crate::rng::stream_rng;
    use crate::toyset;
    use rand::seq::SliceRandom;

    fn permuted(molecule: &Molecule, seed: u64) -> Molecule {
        let mut order: Vec<usize> = (0..molecule.len()).collect();
        order.shuffle(&mut stream_rng(seed, "perm"));
        let elements = order.iter().map(|&i| molecule.elements[i]).collect();
        let positions = order.iter().map(|&i| molecule.positions[i]).collect();
        let mut out = Molecule::new(elements, positions).unwrap();
        out.properties = molecule.properties.clone();
        out
    }

    #[test]
    fn permutation_invariance_across_library() {
        for (idx, molecule) in toyset::library().iter().enumerate() {
            let reference = canonical_key(&assign_bonds(molecule), molecule, true).unwrap();
            for seed in 0..10 {
                let shuffled = permuted(molecule, seed + 100 * idx as u64);
                let key = canonical_key(&assign_bonds(&shuffled), &shuffled, true).unwrap();
                assert_eq!(key, reference, "molecule {idx} seed {seed}");
            }
        }
    }

    #[test]
    fn mirror_images_share_a_key() {
        for molecule in toyset::library() {
            let mirrored = molecule.mirrored();
            let a = canonical_key(&assign_bonds(&molecule), &molecule, true).unwrap();
            let b = canonical_key(&assign_bonds(&mirrored), &mirrored, true).unwrap();
            assert_eq!(a, b, "{}", molecule.composition());
        }
    }

    #[test]
    fn chiral_center_distinguishes_diastereomer_like_swaps() {
        // The chiral library molecule has a genuine stereocenter: swapping
        // two substituent positions flips the descriptor, which the
        // stereo-free key ignores.
        let library = toyset::library();
        let chiral = library
            .iter()
            .find(|m| m.composition().to_string() == "CH4FNO")
            .expect("chiral molecule in library");
        let mut swapped = chiral.clone();
        // Swap the H and F positions on the chiral carbon (slots 1 and 2).
        swapped.positions.swap(1, 2);
        let tmp = swapped.elements[1];
        swapped.elements[1] = swapped.elements[2];
        swapped.elements[2] = tmp;
        // Same constitution...
        let plain_a = canonical_key(&assign_bonds(chiral), chiral, false).unwrap();
        let plain_b = canonical_key(&assign_bonds(&swapped), &swapped, false).unwrap();
        assert_eq!(plain_a, plain_b);
        // ...and the stereo keys also agree because the swap mirrors the
        // center and enantiomers fold together.
        let stereo_a = canonical_key(&assign_bonds(chiral), chiral, true).unwrap();
        let stereo_b = canonical_key(&assign_bonds(&swapped), &swapped, true).unwrap();
        assert_eq!(stereo_a, stereo_b);
    }

    #[test]
    fn constitutional_isomers_get_distinct_keys() {
        // Butane vs isobutane as plain graphs (positions irrelevant for
        // the constitutional part): build from distances.
        let butane = chain_alkane(&[0, 1, 2, 3]);
        let isobutane = branched_alkane();
        let a = canonical_key(&assign_bonds(&butane), &butane, false).unwrap();
        let b = canonical_key(&assign_bonds(&isobutane), &isobutane, false).unwrap();
        assert_ne!(a, b);
    }

    fn chain_alkane(order: &[usize]) -> Molecule {
        // n-butane heavy atoms along a zig-zag; hydrogens filled by rote.
        let _ = order;
        let c = 1.53f64;
        let a = 111.0f64.to_radians() / 2.0;
        let (dx, dy) = (c * a.sin(), c * a.cos());
        let carbons = vec![
            [0.0, 0.0, 0.0],
            [dx, dy, 0.0],
            [2.0 * dx, 0.0, 0.0],
            [3.0 * dx, dy, 0.0],
        ];
        build_alkane(&carbons, &[(0, 1), (1, 2), (2, 3)])
    }

    fn branched_alkane() -> Molecule {
        let c = 1.53f64;
        let d = c / 3f64.sqrt();
        let carbons = vec![
            [0.0, 0.0, 0.0],
            [d, d, d],
            [d, -d, -d],
            [-d, d, -d],
        ];
        build_alkane(&carbons, &[(0, 1), (0, 2), (0, 3)])
    }

    /// Places hydrogens crudely but far from other heavy atoms so that the
    /// perceived graph is exactly the intended alkane.
    fn build_alkane(carbons: &[[f64; 3]], bonds: &[(usize, usize)]) -> Molecule {
        let mut elements: Vec<u8> = vec![6; carbons.len()];
        let mut positions = carbons.to_vec();
        let ch = 1.09;
        for (i, &pos) in carbons.iter().enumerate() {
            let degree = bonds.iter().filter(|(a, b)| *a == i || *b == i).count();
            let needed = 4 - degree;
            // Directions away from the molecular centroid, fanned out.
            let centroid = carbons
                .iter()
                .fold([0.0; 3], |acc, p| crate::geom::add(acc, *p));
            let centroid = crate::geom::scale(centroid, 1.0 / carbons.len() as f64);
            let away = crate::geom::sub(pos, centroid);
            let away = if crate::geom::norm(away) < 1e-6 {
                [0.0, 0.0, 1.0]
            } else {
                crate::geom::scale(away, 1.0 / crate::geom::norm(away))
            };
            let (e1, e2) = {
                let pick = if away[0].abs() < 0.9 {
                    [1.0, 0.0, 0.0]
                } else {
                    [0.0, 1.0, 0.0]
                };
                let e1 = crate::geom::cross(away, pick);
                let e1 = crate::geom::scale(e1, 1.0 / crate::geom::norm(e1));
                let e2 = crate::geom::cross(away, e1);
                (e1, e2)
            };
            for k in 0..needed {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / needed.max(1) as f64
                    + i as f64 * 0.7;
                let tilt = 0.65f64;
                let dir = crate::geom::add(
                    crate::geom::scale(away, (1.0 - tilt * tilt).sqrt()),
                    crate::geom::add(
                        crate::geom::scale(e1, tilt * phi.cos()),
                        crate::geom::scale(e2, tilt * phi.sin()),
                    ),
                );
                elements.push(1);
                positions.push(crate::geom::add(pos, crate::geom::scale(dir, ch)));
            }
        }
        Molecule::new(elements, positions).unwrap()
    }

    /// 1,2-difluoro-ethane-1,2-diol skeleton with two stereocenters:
    /// swapping two substituents on one carbon gives a diastereomer that
    /// must keep the constitutional key but change the stereo key.
    fn difluoro_diol(swap_on_c2: bool) -> Molecule {
        let tet = 109.4712206344907f64.to_radians();
        let dirs = |axis: [f64; 3], phases: [f64; 3]| -> Vec<[f64; 3]> {
            let a = crate::geom::scale(axis, 1.0 / crate::geom::norm(axis));
            let pick = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let e1 = {
                let c = crate::geom::cross(a, pick);
                crate::geom::scale(c, 1.0 / crate::geom::norm(c))
            };
            let e2 = {
                let c = crate::geom::cross(a, e1);
                crate::geom::scale(c, 1.0 / crate::geom::norm(c))
            };
            phases
                .iter()
                .map(|p| {
                    let phi = p.to_radians();
                    crate::geom::add(
                        crate::geom::scale(a, tet.cos()),
                        crate::geom::add(
                            crate::geom::scale(e1, tet.sin() * phi.cos()),
                            crate::geom::scale(e2, tet.sin() * phi.sin()),
                        ),
                    )
                })
                .collect()
        };
        let c1 = [-0.77, 0.0, 0.0];
        let c2 = [0.77, 0.0, 0.0];
        // Cone axes run along the C-C bond so substituents point outward.
        let d1 = dirs([1.0, 0.0, 0.0], [0.0, 120.0, 240.0]);
        let d2 = dirs([-1.0, 0.0, 0.0], [60.0, 180.0, 300.0]);
        let mut elements = vec![6u8, 6];
        let mut positions = vec![c1, c2];
        // C1: H, F, O.
        for (z, dir, r) in [(1u8, d1[0], 1.09), (9, d1[1], 1.36), (8, d1[2], 1.43)] {
            elements.push(z);
            positions.push(crate::geom::add(c1, crate::geom::scale(dir, r)));
        }
        // C2: H and F swap between the two diastereomers. Oxygens stay
        // bare: canonical keys need the graph and geometry, not satisfied
        // valences, and leaving the hydroxyl hydrogens off keeps the
        // perceived graph free of accidental contacts.
        let (h_slot, f_slot) = if swap_on_c2 { (1, 0) } else { (0, 1) };
        for (z, dir, r) in [
            (1u8, d2[h_slot], 1.09),
            (9, d2[f_slot], 1.36),
            (8, d2[2], 1.43),
        ] {
            elements.push(z);
            positions.push(crate::geom::add(c2, crate::geom::scale(dir, r)));
        }
        Molecule::new(elements, positions).unwrap()
    }

    #[test]
    fn diastereomers_differ_only_in_stereo_keys() {
        let a = difluoro_diol(false);
        let b = difluoro_diol(true);
        let plain_a = canonical_key(&assign_bonds(&a), &a, false).unwrap();
        let plain_b = canonical_key(&assign_bonds(&b), &b, false).unwrap();
        assert_eq!(plain_a, plain_b, "same constitution");
        let stereo_a = canonical_key(&assign_bonds(&a), &a, true).unwrap();
        let stereo_b = canonical_key(&assign_bonds(&b), &b, true).unwrap();
        assert_ne!(stereo_a, stereo_b, "different relative configuration");
        // Each diastereomer still folds with its own mirror image.
        let mirrored = a.mirrored();
        assert_eq!(
            canonical_key(&assign_bonds(&mirrored), &mirrored, true).unwrap(),
            stereo_a
        );
    }

    #[test]
    fn stereo_free_coarsens_stereo_keys() {
        // Equal stereo keys imply equal stereo-free keys.
        for molecule in toyset::library() {
            for seed in 0..3 {
                let shuffled = permuted(&molecule, seed);
                let s1 = canonical_key(&assign_bonds(&molecule), &molecule, true).unwrap();
                let s2 = canonical_key(&assign_bonds(&shuffled), &shuffled, true).unwrap();
                if s1 == s2 {
                    let p1 = canonical_key(&assign_bonds(&molecule), &molecule, false).unwrap();
                    let p2 = canonical_key(&assign_bonds(&shuffled), &shuffled, false).unwrap();
                    assert_eq!(p1, p2);
                }
            }
        }
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let water = &toyset::library()[4];
        let graph = assign_bonds(water);
        let other = Molecule::new(vec![6], vec![[0.0; 3]]).unwrap();
        assert!(canonical_key(&graph, &other, true).is_err());
    }
}
