//! Structural statistics of molecule sets: mean atom, bond-order and
//! ring-size counts.

use std::collections::BTreeMap;

use crate::chem::{elements, Molecule};

use super::bonds::assign_bonds;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StructureStats {
    pub n_molecules: usize,
    /// Mean count per molecule, keyed by element symbol.
    pub atoms: BTreeMap<String, f64>,
    /// Mean count per molecule, keyed by bond order.
    pub bonds: BTreeMap<u8, f64>,
    /// Mean count per molecule, keyed by ring size.
    pub rings: BTreeMap<usize, f64>,
}

/// Per-set means of element counts, bond-order counts and ring-size counts
/// (rings are the smallest set of smallest rings). An empty input yields
/// an empty table.
pub fn structure_stats(molecules: &[Molecule]) -> StructureStats {
    let mut stats = StructureStats {
        n_molecules: molecules.len(),
        ..StructureStats::default()
    };
    if molecules.is_empty() {
        return stats;
    }
    for molecule in molecules {
        let graph = assign_bonds(molecule);
        for &z in &molecule.elements {
            *stats
                .atoms
                .entry(elements::symbol(z).unwrap_or("?").to_string())
                .or_insert(0.0) += 1.0;
        }
        for bond in &graph.bonds {
            *stats.bonds.entry(bond.order).or_insert(0.0) += 1.0;
        }
        for ring in graph.rings() {
            *stats.rings.entry(ring.len()).or_insert(0.0) += 1.0;
        }
    }
    let n = molecules.len() as f64;
    for v in stats.atoms.values_mut() {
        *v /= n;
    }
    for v in stats.bonds.values_mut() {
        *v /= n;
    }
    for v in stats.rings.values_mut() {
        *v /= n;
    }
    stats
}

impl StructureStats {
    /// CSV with columns kind,key,mean (kinds: atoms, bonds, rings).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,key,mean\n");
        for (key, mean) in &self.atoms {
            out.push_str(&format!("atoms,{key},{mean}\n"));
        }
        for (key, mean) in &self.bonds {
            out.push_str(&format!("bonds,{key},{mean}\n"));
        }
        for (key, mean) in &self.rings {
            out.push_str(&format!("rings,{key},{mean}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyset;

    #[test]
    fn methane_set_counts() {
        let methane = toyset::library()[0].clone();
        let stats = structure_stats(&[methane]);
        assert_eq!(stats.atoms.get("C"), Some(&1.0));
        assert_eq!(stats.atoms.get("H"), Some(&4.0));
        assert_eq!(stats.bonds.get(&1), Some(&4.0));
        assert!(stats.rings.is_empty());
    }

    #[test]
    fn benzene_has_one_six_ring_and_alternating_bonds() {
        let benzene = toyset::library()
            .into_iter()
            .find(|m| m.composition().to_string() == "C6H6")
            .unwrap();
        let stats = structure_stats(&[benzene]);
        assert_eq!(stats.rings.get(&6), Some(&1.0));
        // 6 C-H singles + 3 ring singles, 3 ring doubles.
        assert_eq!(stats.bonds.get(&1), Some(&9.0));
        assert_eq!(stats.bonds.get(&2), Some(&3.0));
    }

    #[test]
    fn empty_set_is_empty_table() {
        let stats = structure_stats(&[]);
        assert_eq!(stats.n_molecules, 0);
        assert!(stats.atoms.is_empty());
        assert_eq!(stats.to_csv(), "kind,key,mean\n");
    }

    #[test]
    fn means_divide_by_set_size() {
        let library = toyset::library();
        let pair = vec![library[0].clone(), library[1].clone()]; // CH4, C2H6
        let stats = structure_stats(&pair);
        assert_eq!(stats.atoms.get("C"), Some(&1.5));
        assert_eq!(stats.atoms.get("H"), Some(&5.0));
    }

    #[test]
    fn csv_layout() {
        let methane = toyset::library()[0].clone();
        let csv = structure_stats(&[methane]).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "kind,key,mean");
        assert!(lines.contains(&"atoms,C,1"));
        assert!(lines.contains(&"bonds,1,4"));
    }
}
