//! Sampling of atom placement sequences for training.
//!
//! A molecule with n atoms yields a 2n-step trajectory: every atom is
//! placed once and stop-marked once. Growth starts at the atom closest to
//! the center of mass and each new atom is an unplaced neighbor of the
//! currently focused atom, preferring neighbors closest to the center.

use rand::Rng;
use thiserror::Error;

use crate::analysis::assign_bonds;
use crate::chem::Molecule;
use crate::geom::{self, Vec3};

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("molecule is disconnected under the neighbor policy ({unreachable} unreachable atoms)")]
    Disconnected { unreachable: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborPolicy {
    /// Adjacency from perceived covalent bonds.
    BondDerived,
    /// Pairs within the given cutoff (Å) are neighbors.
    Radial(f64),
}

/// Symmetric adjacency lists under a neighbor policy.
pub fn neighbors(molecule: &Molecule, policy: NeighborPolicy) -> Vec<Vec<usize>> {
    match policy {
        NeighborPolicy::BondDerived => assign_bonds(molecule).neighbors(),
        NeighborPolicy::Radial(cutoff) => {
            let n = molecule.len();
            let mut adjacency = vec![Vec::new(); n];
            for i in 0..n {
                for j in i + 1..n {
                    if geom::dist(molecule.positions[i], molecule.positions[j]) <= cutoff {
                        adjacency[i].push(j);
                        adjacency[j].push(i);
                    }
                }
            }
            adjacency
        }
    }
}

fn connected(n: usize, adjacency: &[Vec<usize>]) -> usize {
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
    visited
}

/// Bond-derived adjacency, falling back to radial(3 Å) when the bond graph
/// does not connect the molecule.
pub fn default_neighbors(molecule: &Molecule) -> Vec<Vec<usize>> {
    let adjacency = neighbors(molecule, NeighborPolicy::BondDerived);
    if connected(molecule.len(), &adjacency) == molecule.len() {
        adjacency
    } else {
        neighbors(molecule, NeighborPolicy::Radial(3.0))
    }
}

/// Focus of one step: the origin token (first placement only) or a placed
/// atom, identified by its index in the source molecule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Focus {
    OriginToken,
    Atom(usize),
}

/// What the model must predict at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAction {
    /// Place the given molecule atom next.
    Place(usize),
    /// Emit the stop marker for the focused atom.
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep {
    /// How many atoms of `Trajectory::order` are placed before this step.
    pub n_placed: usize,
    pub focus: Focus,
    pub action: StepAction,
}

/// A 2n-step placement sequence over one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Atom indices in placement order.
    pub order: Vec<usize>,
    pub steps: Vec<TrajStep>,
    /// Origin token position (the molecule's center of mass).
    pub origin: Vec3,
}

impl Trajectory {
    /// Elements of the atoms placed before the given step.
    pub fn partial_elements(&self, molecule: &Molecule, step: &TrajStep) -> Vec<u8> {
        self.order[..step.n_placed]
            .iter()
            .map(|&i| molecule.elements[i])
            .collect()
    }

    pub fn partial_positions(&self, molecule: &Molecule, step: &TrajStep) -> Vec<Vec3> {
        self.order[..step.n_placed]
            .iter()
            .map(|&i| molecule.positions[i])
            .collect()
    }

    pub fn focus_position(&self, molecule: &Molecule, step: &TrajStep) -> Vec3 {
        match step.focus {
            Focus::OriginToken => self.origin,
            Focus::Atom(i) => molecule.positions[i],
        }
    }
}

/// Picks among indices whose key is within `tol` of the minimum; ties are
/// broken uniformly at random unless `deterministic_ties` selects the
/// lowest index.
fn pick_closest<R: Rng>(
    candidates: &[usize],
    key: impl Fn(usize) -> f64,
    rng: &mut R,
    deterministic_ties: bool,
) -> usize {
    let tol = 1e-9;
    let best = candidates
        .iter()
        .map(|&c| key(c))
        .fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&c| key(c) <= best + tol)
        .collect();
    if deterministic_ties {
        *tied.iter().min().unwrap()
    } else {
        tied[rng.gen_range(0..tied.len())]
    }
}

/// Samples one placement sequence. Deterministic for a fixed rng state.
pub fn sample_trajectory<R: Rng>(
    molecule: &Molecule,
    adjacency: &[Vec<usize>],
    rng: &mut R,
    deterministic_ties: bool,
) -> Result<Trajectory, TrajError> {
    let n = molecule.len();
    let reachable = connected(n, adjacency);
    if reachable != n {
        return Err(TrajError::Disconnected {
            unreachable: n - reachable,
        });
    }

    let com = molecule.center_of_mass();
    let com_dist = |i: usize| geom::dist(molecule.positions[i], com);

    let mut order = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(2 * n);
    let mut placed = vec![false; n];
    let mut finished = vec![false; n];

    let all: Vec<usize> = (0..n).collect();
    let first = pick_closest(&all, com_dist, rng, deterministic_ties);
    steps.push(TrajStep {
        n_placed: 0,
        focus: Focus::OriginToken,
        action: StepAction::Place(first),
    });
    order.push(first);
    placed[first] = true;

    loop {
        let unfinished: Vec<usize> = (0..n).filter(|&i| placed[i] && !finished[i]).collect();
        if unfinished.is_empty() {
            break;
        }
        let focus = unfinished[rng.gen_range(0..unfinished.len())];
        let unplaced_neighbors: Vec<usize> = adjacency[focus]
            .iter()
            .copied()
            .filter(|&j| !placed[j])
            .collect();
        if unplaced_neighbors.is_empty() {
            steps.push(TrajStep {
                n_placed: order.len(),
                focus: Focus::Atom(focus),
                action: StepAction::Stop,
            });
            finished[focus] = true;
        } else {
            let next = pick_closest(&unplaced_neighbors, com_dist, rng, deterministic_ties);
            steps.push(TrajStep {
                n_placed: order.len(),
                focus: Focus::Atom(focus),
                action: StepAction::Place(next),
            });
            order.push(next);
            placed[next] = true;
        }
    }

    debug_assert_eq!(steps.len(), 2 * n);
    Ok(Trajectory {
        order,
        steps,
        origin: com,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn ethanol() -> Molecule {
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

    #[test]
    fn radial_policy_threshold() {
        let m = Molecule::new(vec![6, 6], vec![[0.0; 3], [2.5, 0.0, 0.0]]).unwrap();
        let near = neighbors(&m, NeighborPolicy::Radial(3.0));
        assert_eq!(near[0], vec![1]);
        let far = neighbors(&m, NeighborPolicy::Radial(2.0));
        assert!(far[0].is_empty());
    }

    #[test]
    fn ethanol_bond_adjacency_matches_covalent_graph() {
        // Hand-derived bond list for the standard geometry: C0-C1, C1-O2,
        // O2-H3, C0-H4..H6, C1-H7, C1-H8.
        let adjacency = neighbors(&ethanol(), NeighborPolicy::BondDerived);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &j in nbrs {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges.sort();
        assert_eq!(
            edges,
            vec![(0, 1), (0, 4), (0, 5), (0, 6), (1, 2), (1, 7), (1, 8), (2, 3)]
        );
    }

    #[test]
    fn single_atom_trajectory_has_two_steps() {
        let m = Molecule::new(vec![8], vec![[0.2, 0.3, -0.1]]).unwrap();
        let adjacency = default_neighbors(&m);
        let mut rng = stream_rng(0, "traj");
        let t = sample_trajectory(&m, &adjacency, &mut rng, false).unwrap();
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.steps[0].action, StepAction::Place(0));
        assert_eq!(t.steps[0].focus, Focus::OriginToken);
        assert_eq!(t.steps[1].action, StepAction::Stop);
        assert_eq!(t.steps[1].focus, Focus::Atom(0));
    }

    #[test]
    fn linear_chain_starts_at_center() {
        // A-B-C with B at the unweighted center; same element so the mass
        // weighted center coincides with B.
        let m = Molecule::new(
            vec![6, 6, 6],
            vec![[0.0; 3], [1.1, 0.0, 0.0], [2.2, 0.0, 0.0]],
        )
        .unwrap();
        let adjacency = neighbors(&m, NeighborPolicy::Radial(1.5));
        for seed in 0..5 {
            let mut rng = stream_rng(seed, "chain");
            let t = sample_trajectory(&m, &adjacency, &mut rng, false).unwrap();
            assert_eq!(t.steps.len(), 6);
            assert_eq!(t.order[0], 1, "B is closest to the center of mass");
        }
    }

    #[test]
    fn disconnected_molecule_is_an_error() {
        let m = Molecule::new(vec![6, 6], vec![[0.0; 3], [9.0, 0.0, 0.0]]).unwrap();
        let adjacency = neighbors(&m, NeighborPolicy::Radial(3.0));
        let mut rng = stream_rng(1, "traj");
        assert!(sample_trajectory(&m, &adjacency, &mut rng, false).is_err());
    }

    #[test]
    fn trajectory_invariants_hold_on_random_molecules() {
        // Random connected point clouds under a radial policy.
        for seed in 0..100u64 {
            let mut rng = stream_rng(seed, "random-mol");
            let n = 2 + (seed % 7) as usize;
            let mut positions: Vec<[f64; 3]> = vec![[0.0; 3]];
            for _ in 1..n {
                // Chain each atom near the previous to keep it connected.
                let prev = positions[positions.len() - 1];
                positions.push([
                    prev[0] + rng.gen_range(0.8..1.4),
                    prev[1] + rng.gen_range(-0.4..0.4),
                    prev[2] + rng.gen_range(-0.4..0.4),
                ]);
            }
            let m = Molecule::new(vec![6; n], positions).unwrap();
            let adjacency = neighbors(&m, NeighborPolicy::Radial(1.6));
            let t = match sample_trajectory(&m, &adjacency, &mut rng, false) {
                Ok(t) => t,
                Err(_) => continue,
            };
            assert_eq!(t.steps.len(), 2 * n);
            // Placed multiset equals the molecule's atoms.
            let mut placed = t.order.clone();
            placed.sort();
            assert_eq!(placed, (0..n).collect::<Vec<_>>());
            // Placements are adjacent to their focus; stops have no
            // unplaced neighbors at that moment.
            let mut is_placed = vec![false; n];
            for step in &t.steps {
                for &i in &t.order[..step.n_placed] {
                    is_placed[i] = true;
                }
                for &i in &t.order[step.n_placed..] {
                    is_placed[i] = false;
                }
                match (step.focus, step.action) {
                    (Focus::OriginToken, StepAction::Place(_)) => assert_eq!(step.n_placed, 0),
                    (Focus::Atom(f), StepAction::Place(next)) => {
                        assert!(adjacency[f].contains(&next));
                        assert!(!is_placed[next]);
                    }
                    (Focus::Atom(f), StepAction::Stop) => {
                        assert!(adjacency[f].iter().all(|&j| is_placed[j]));
                    }
                    (Focus::OriginToken, StepAction::Stop) => panic!("stop on origin token"),
                }
            }
        }
    }

    #[test]
    fn branched_molecule_gets_distinct_orders_across_seeds() {
        let m = ethanol();
        let adjacency = default_neighbors(&m);
        let mut orders = Vec::new();
        for seed in 0..10 {
            let mut rng = stream_rng(seed, "orders");
            let t = sample_trajectory(&m, &adjacency, &mut rng, false).unwrap();
            orders.push(t.order);
        }
        orders.sort();
        orders.dedup();
        assert!(orders.len() >= 2, "expected at least 2 distinct orders");
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let m = ethanol();
        let adjacency = default_neighbors(&m);
        let t1 = sample_trajectory(&m, &adjacency, &mut stream_rng(5, "x"), false).unwrap();
        let t2 = sample_trajectory(&m, &adjacency, &mut stream_rng(5, "x"), false).unwrap();
        assert_eq!(t1, t2);
    }
}
