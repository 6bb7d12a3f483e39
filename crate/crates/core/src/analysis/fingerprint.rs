//! Path-based 1024-bit fingerprints and Tanimoto similarity.
//!
//! All simple bonded paths of 2..=7 atoms are enumerated; each path label
//! (element symbols interleaved with bond orders, direction-normalized) is
//! hashed with FNV-1a 64 reduced mod 1024 and sets one bit.

use std::collections::BTreeSet;

use crate::chem::elements;

use super::bonds::BondGraph;

pub const FINGERPRINT_BITS: usize = 1024;
const MAX_PATH_ATOMS: usize = 7;

/// Fixed-width bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    words: [u64; FINGERPRINT_BITS / 64],
}

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint {
            words: [0; FINGERPRINT_BITS / 64],
        }
    }
}

impl Fingerprint {
    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1u64 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn set_bits(&self) -> Vec<usize> {
        (0..FINGERPRINT_BITS).filter(|&b| self.get(b)).collect()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..FINGERPRINT_BITS).map(|b| self.get(b)).collect()
    }

    pub fn from_bools(bits: &[bool]) -> Fingerprint {
        let mut fp = Fingerprint::default();
        for (i, &b) in bits.iter().enumerate().take(FINGERPRINT_BITS) {
            if b {
                fp.set(i);
            }
        }
        fp
    }
}

/// FNV-1a 64-bit; pinned by published test vectors.
pub fn fnv1a64(input: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &byte in input {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn path_label(graph: &BondGraph, adjacency: &[Vec<(usize, u8)>], path: &[usize]) -> String {
    let forward = label_oriented(graph, adjacency, path.iter().copied());
    let backward = label_oriented(graph, adjacency, path.iter().rev().copied());
    forward.min(backward)
}

fn label_oriented(
    graph: &BondGraph,
    adjacency: &[Vec<(usize, u8)>],
    atoms: impl Iterator<Item = usize>,
) -> String {
    let mut out = String::new();
    let mut prev: Option<usize> = None;
    for atom in atoms {
        if let Some(p) = prev {
            let order = adjacency[p]
                .iter()
                .find(|&&(j, _)| j == atom)
                .map(|&(_, o)| o)
                .unwrap_or(0);
            out.push_str(&order.to_string());
        }
        out.push_str(elements::symbol(graph.elements[atom]).unwrap_or("?"));
        prev = Some(atom);
    }
    out
}

/// All direction-normalized labels of simple paths with 2..=7 atoms.
pub fn path_labels(graph: &BondGraph) -> BTreeSet<String> {
    let n = graph.n_atoms();
    let mut adjacency: Vec<Vec<(usize, u8)>> = vec![Vec::new(); n];
    for bond in &graph.bonds {
        adjacency[bond.a].push((bond.b, bond.order));
        adjacency[bond.b].push((bond.a, bond.order));
    }
    let mut labels = BTreeSet::new();
    let mut path = Vec::with_capacity(MAX_PATH_ATOMS);
    let mut on_path = vec![false; n];

    fn walk(
        graph: &BondGraph,
        adjacency: &[Vec<(usize, u8)>],
        path: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        labels: &mut BTreeSet<String>,
    ) {
        let last = *path.last().unwrap();
        for &(next, _) in &adjacency[last] {
            if on_path[next] {
                continue;
            }
            path.push(next);
            on_path[next] = true;
            if path.len() >= 2 {
                labels.insert(path_label(graph, adjacency, path));
            }
            if path.len() < MAX_PATH_ATOMS {
                walk(graph, adjacency, path, on_path, labels);
            }
            on_path[next] = false;
            path.pop();
        }
    }

    for start in 0..n {
        path.push(start);
        on_path[start] = true;
        walk(graph, &adjacency, &mut path, &mut on_path, &mut labels);
        on_path[start] = false;
        path.pop();
    }
    labels
}

/// 1024-bit path fingerprint of a bond graph.
pub fn fingerprint(graph: &BondGraph) -> Fingerprint {
    let mut fp = Fingerprint::default();
    for label in path_labels(graph) {
        fp.set((fnv1a64(label.as_bytes()) % FINGERPRINT_BITS as u64) as usize);
    }
    fp
}

/// Intersection over union of the set bits; 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let mut intersection = 0u32;
    let mut union = 0u32;
    for (wa, wb) in a.words.iter().zip(&b.words) {
        intersection += (wa & wb).count_ones();
        union += (wa | wb).count_ones();
    }
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::assign_bonds;
    use crate::chem::Molecule;
    use crate::toyset;

    #[test]
    fn fnv_vectors_are_pinned() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"hello"), 0xa430d84680aabd0b);
    }

    #[test]
    fn single_atom_has_empty_fingerprint() {
        let m = Molecule::new(vec![8], vec![[0.0; 3]]).unwrap();
        let fp = fingerprint(&assign_bonds(&m));
        assert_eq!(fp.count_ones(), 0);
    }

    #[test]
    fn ethanol_contains_cco_path() {
        let ethanol = toyset::library()
            .into_iter()
            .find(|m| m.composition().to_string() == "C2H6O")
            .unwrap();
        let labels = path_labels(&assign_bonds(&ethanol));
        assert!(labels.contains("C1C1O"), "labels: {labels:?}");
        let fp = fingerprint(&assign_bonds(&ethanol));
        let bit = (fnv1a64(b"C1C1O") % 1024) as usize;
        assert!(fp.get(bit));
    }

    #[test]
    fn labels_match_brute_force_enumeration() {
        // Oracle: check adjacency over all ordered k-tuples of distinct
        // atoms, k = 2..=7 (feasible for small graphs).
        for molecule in toyset::library().iter().take(12) {
            let graph = assign_bonds(molecule);
            let n = graph.n_atoms();
            if n > 8 {
                continue;
            }
            let mut adjacency = vec![vec![0u8; n]; n];
            for bond in &graph.bonds {
                adjacency[bond.a][bond.b] = bond.order;
                adjacency[bond.b][bond.a] = bond.order;
            }
            let mut oracle: BTreeSet<String> = BTreeSet::new();
            let mut stack: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            while let Some(tuple) = stack.pop() {
                if tuple.len() >= 2 {
                    // Build both orientations by hand.
                    let mut forward = String::new();
                    for (k, &atom) in tuple.iter().enumerate() {
                        if k > 0 {
                            forward.push_str(&adjacency[tuple[k - 1]][atom].to_string());
                        }
                        forward.push_str(
                            crate::chem::elements::symbol(graph.elements[atom]).unwrap(),
                        );
                    }
                    let mut backward = String::new();
                    for (k, &atom) in tuple.iter().rev().enumerate() {
                        if k > 0 {
                            let prev = tuple[tuple.len() - k];
                            backward.push_str(&adjacency[prev][atom].to_string());
                        }
                        backward.push_str(
                            crate::chem::elements::symbol(graph.elements[atom]).unwrap(),
                        );
                    }
                    oracle.insert(forward.min(backward));
                }
                if tuple.len() < 7 {
                    for next in 0..n {
                        if !tuple.contains(&next) && adjacency[*tuple.last().unwrap()][next] > 0 {
                            let mut extended = tuple.clone();
                            extended.push(next);
                            stack.push(extended);
                        }
                    }
                }
            }
            assert_eq!(
                path_labels(&graph),
                oracle,
                "mismatch for {}",
                molecule.composition()
            );
        }
    }

    #[test]
    fn fingerprints_are_deterministic() {
        let benzene = toyset::library()
            .into_iter()
            .find(|m| m.composition().to_string() == "C6H6")
            .unwrap();
        let a = fingerprint(&assign_bonds(&benzene));
        let b = fingerprint(&assign_bonds(&benzene));
        assert_eq!(a, b);
        assert!(a.count_ones() > 0);
    }

    #[test]
    fn tanimoto_examples() {
        let mut a = Fingerprint::default();
        a.set(1);
        a.set(2);
        assert_eq!(tanimoto(&a, &a), 1.0);

        let mut b = Fingerprint::default();
        b.set(2);
        b.set(3);
        assert!((tanimoto(&a, &b) - 1.0 / 3.0).abs() < 1e-15);

        let mut c = Fingerprint::default();
        c.set(10);
        assert_eq!(tanimoto(&a, &c), 0.0);

        let empty = Fingerprint::default();
        assert_eq!(tanimoto(&empty, &empty), 1.0);
    }

    #[test]
    fn roundtrip_bools() {
        let mut fp = Fingerprint::default();
        fp.set(0);
        fp.set(511);
        fp.set(1023);
        let bools = fp.to_bools();
        assert_eq!(bools.len(), 1024);
        assert_eq!(Fingerprint::from_bools(&bools), fp);
    }
}
