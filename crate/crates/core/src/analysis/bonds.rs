//! Bond perception from 3d geometry and the valence/connectedness check.
//!
//! Edges connect atom pairs within 1.15x the covalent-radius sum. Orders
//! start at 1 and are promoted shortest-bond-first until every valence is
//! saturated or nothing changes; when that fails on ring systems, a bounded
//! search over alternating ring bond orders is tried.

use crate::chem::{elements, Molecule};
use crate::geom;

use super::rings::smallest_rings;

pub const RADIUS_SLACK: f64 = 1.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BondGraph {
    pub elements: Vec<u8>,
    pub bonds: Vec<Bond>,
}

impl BondGraph {
    pub fn n_atoms(&self) -> usize {
        self.elements.len()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adjacency = vec![Vec::new(); self.elements.len()];
        for bond in &self.bonds {
            adjacency[bond.a].push(bond.b);
            adjacency[bond.b].push(bond.a);
        }
        adjacency
    }

    pub fn order_sums(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.elements.len()];
        for bond in &self.bonds {
            sums[bond.a] += bond.order as u32;
            sums[bond.b] += bond.order as u32;
        }
        sums
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.bonds.iter().map(|b| (b.a, b.b)).collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.elements.len();
        if n == 0 {
            return true;
        }
        let adjacency = self.neighbors();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    visited += 1;
                    stack.push(w);
                }
            }
        }
        visited == n
    }

    pub fn rings(&self) -> Vec<Vec<usize>> {
        smallest_rings(self.n_atoms(), &self.edge_list())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(InvalidReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvalidReason {
    /// An atom's bond-order sum differs from its allowed valence.
    Valence { atom: usize },
    Disconnected,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

fn allowed(z: u8) -> u32 {
    elements::allowed_valence(z).unwrap_or(0) as u32
}

/// Saturates bond orders: repeatedly promote the shortest bond whose both
/// endpoints still miss valence, until no promotion applies.
fn saturate(elements: &[u8], lengths: &[f64], bonds: &mut [Bond]) {
    let mut remaining: Vec<i64> = {
        let mut sums = vec![0i64; elements.len()];
        for bond in bonds.iter() {
            sums[bond.a] += bond.order as i64;
            sums[bond.b] += bond.order as i64;
        }
        elements
            .iter()
            .zip(&sums)
            .map(|(&z, &s)| allowed(z) as i64 - s)
            .collect()
    };
    loop {
        let mut best: Option<usize> = None;
        for (idx, bond) in bonds.iter().enumerate() {
            if bond.order >= 3 || remaining[bond.a] <= 0 || remaining[bond.b] <= 0 {
                continue;
            }
            best = match best {
                None => Some(idx),
                Some(prev) if lengths[idx] < lengths[prev] => Some(idx),
                Some(prev) => Some(prev),
            };
        }
        match best {
            Some(idx) => {
                bonds[idx].order += 1;
                remaining[bonds[idx].a] -= 1;
                remaining[bonds[idx].b] -= 1;
            }
            None => break,
        }
    }
}

fn valences_satisfied(elements: &[u8], bonds: &[Bond]) -> bool {
    let mut sums = vec![0u32; elements.len()];
    for bond in bonds {
        sums[bond.a] += bond.order as u32;
        sums[bond.b] += bond.order as u32;
    }
    elements
        .iter()
        .zip(&sums)
        .all(|(&z, &s)| s == allowed(z))
}

/// Bounded backtracking over ring-bond orders (1 or 2) when plain
/// saturation leaves valences unsatisfied; non-ring bonds are re-saturated
/// around each assignment.
fn ring_repair(elements: &[u8], lengths: &[f64], bonds: &[Bond]) -> Option<Vec<Bond>> {
    let edges: Vec<(usize, usize)> = bonds.iter().map(|b| (b.a, b.b)).collect();
    let rings = smallest_rings(elements.len(), &edges);
    let mut ring_bond_idx: Vec<usize> = Vec::new();
    for ring in rings.iter().filter(|r| r.len() <= 8) {
        for (idx, bond) in bonds.iter().enumerate() {
            let in_ring = ring.contains(&bond.a) && ring.contains(&bond.b);
            if in_ring && !ring_bond_idx.contains(&idx) {
                ring_bond_idx.push(idx);
            }
        }
    }
    if ring_bond_idx.is_empty() || ring_bond_idx.len() > 16 {
        return None;
    }

    fn recurse(
        elements: &[u8],
        lengths: &[f64],
        template: &[Bond],
        ring_bond_idx: &[usize],
        pos: usize,
        current: &mut Vec<Bond>,
    ) -> Option<Vec<Bond>> {
        if pos == ring_bond_idx.len() {
            let mut candidate = current.clone();
            saturate(elements, lengths, &mut candidate);
            if valences_satisfied(elements, &candidate) {
                return Some(candidate);
            }
            return None;
        }
        for order in [1u8, 2] {
            current[ring_bond_idx[pos]].order = order;
            // Prune: no atom may exceed its valence.
            let mut sums = vec![0u32; elements.len()];
            for bond in current.iter() {
                sums[bond.a] += bond.order as u32;
                sums[bond.b] += bond.order as u32;
            }
            if elements.iter().zip(&sums).all(|(&z, &s)| s <= allowed(z)) {
                if let Some(found) =
                    recurse(elements, lengths, template, ring_bond_idx, pos + 1, current)
                {
                    return Some(found);
                }
            }
        }
        current[ring_bond_idx[pos]].order = template[ring_bond_idx[pos]].order;
        None
    }

    let template: Vec<Bond> = bonds
        .iter()
        .map(|b| Bond { order: 1, ..*b })
        .collect();
    let mut current = template.clone();
    recurse(elements, lengths, &template, &ring_bond_idx, 0, &mut current)
}

/// Perceives bonds and bond orders from the 3d structure.
pub fn assign_bonds(molecule: &Molecule) -> BondGraph {
    let n = molecule.len();
    let mut bonds = Vec::new();
    let mut lengths = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = geom::dist(molecule.positions[i], molecule.positions[j]);
            let ri = elements::covalent_radius(molecule.elements[i]).unwrap_or(0.0);
            let rj = elements::covalent_radius(molecule.elements[j]).unwrap_or(0.0);
            if d <= RADIUS_SLACK * (ri + rj) {
                bonds.push(Bond { a: i, b: j, order: 1 });
                lengths.push(d);
            }
        }
    }
    saturate(&molecule.elements, &lengths, &mut bonds);
    if !valences_satisfied(&molecule.elements, &bonds) {
        if let Some(repaired) = ring_repair(&molecule.elements, &lengths, &bonds) {
            bonds = repaired;
        }
    }
    BondGraph {
        elements: molecule.elements.clone(),
        bonds,
    }
}

/// Validity per the valence table plus single-component connectedness.
pub fn check_valid(molecule: &Molecule) -> Validity {
    let graph = assign_bonds(molecule);
    let sums = graph.order_sums();
    for (atom, (&z, &sum)) in molecule.elements.iter().zip(&sums).enumerate() {
        if sum != allowed(z) {
            return Validity::Invalid(InvalidReason::Valence { atom });
        }
    }
    if !graph.is_connected() {
        return Validity::Invalid(InvalidReason::Disconnected);
    }
    Validity::Valid
}
