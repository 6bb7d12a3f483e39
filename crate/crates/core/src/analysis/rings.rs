//! Smallest set of smallest rings via a minimum cycle basis
//! (Horton-style candidate enumeration with GF(2) independence).

use std::collections::VecDeque;

/// Returns the SSSR as vertex lists, one per independent cycle.
pub fn smallest_rings(n_atoms: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    if edges.is_empty() {
        return Vec::new();
    }
    let mut adjacency = vec![Vec::new(); n_atoms];
    for (idx, &(a, b)) in edges.iter().enumerate() {
        adjacency[a].push((b, idx));
        adjacency[b].push((a, idx));
    }

    let components = count_components(n_atoms, &adjacency);
    let rank = edges.len() + components;
    if rank <= n_atoms {
        return Vec::new();
    }
    let rank = rank - n_atoms;

    // Candidate cycles: shortest path trees from every vertex combined with
    // every non-tree edge.
    let mut candidates: Vec<(usize, Vec<bool>, Vec<usize>)> = Vec::new();
    for v in 0..n_atoms {
        let (dist, parent_edge, parent_node) = bfs(v, n_atoms, &adjacency);
        for (edge_idx, &(x, y)) in edges.iter().enumerate() {
            if dist[x] == usize::MAX || dist[y] == usize::MAX {
                continue;
            }
            let px = path_edges(v, x, &parent_edge, &parent_node);
            let py = path_edges(v, y, &parent_edge, &parent_node);
            // Paths must be disjoint except at v for a proper cycle.
            let nodes_x = path_nodes(v, x, &parent_node);
            let nodes_y = path_nodes(v, y, &parent_node);
            let mut shared = 0;
            for nx in &nodes_x {
                if nodes_y.contains(nx) {
                    shared += 1;
                }
            }
            if shared != 1 {
                continue;
            }
            let mut membership = vec![false; edges.len()];
            for &e in px.iter().chain(&py) {
                membership[e] = true;
            }
            if membership[edge_idx] {
                continue;
            }
            membership[edge_idx] = true;
            let size = px.len() + py.len() + 1;
            let mut nodes = nodes_x;
            for ny in nodes_y.into_iter().rev() {
                if !nodes.contains(&ny) {
                    nodes.push(ny);
                }
            }
            candidates.push((size, membership, nodes));
        }
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));

    // Greedy GF(2) independence over edge membership vectors. Basis vectors
    // are keyed by their leading set bit so reduction strictly advances.
    let mut basis: Vec<(usize, Vec<bool>)> = Vec::new();
    let mut rings = Vec::new();
    for (_, membership, nodes) in candidates {
        if rings.len() == rank {
            break;
        }
        let mut reduced = membership;
        let independent = loop {
            let pivot = match reduced.iter().position(|&x| x) {
                Some(p) => p,
                None => break false,
            };
            match basis.iter().find(|(bp, _)| *bp == pivot) {
                Some((_, b)) => {
                    for (r, &bv) in reduced.iter_mut().zip(b) {
                        *r ^= bv;
                    }
                }
                None => {
                    basis.push((pivot, reduced.clone()));
                    break true;
                }
            }
        };
        if independent {
            rings.push(nodes);
        }
    }
    rings
}

fn count_components(n: usize, adjacency: &[Vec<(usize, usize)>]) -> usize {
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    components
}

fn bfs(
    start: usize,
    n: usize,
    adjacency: &[Vec<(usize, usize)>],
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut dist = vec![usize::MAX; n];
    let mut parent_edge = vec![usize::MAX; n];
    let mut parent_node = vec![usize::MAX; n];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adjacency[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                parent_edge[w] = e;
                parent_node[w] = v;
                queue.push_back(w);
            }
        }
    }
    (dist, parent_edge, parent_node)
}

fn path_edges(root: usize, mut v: usize, parent_edge: &[usize], parent_node: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    while v != root {
        out.push(parent_edge[v]);
        v = parent_node[v];
    }
    out
}

fn path_nodes(root: usize, mut v: usize, parent_node: &[usize]) -> Vec<usize> {
    let mut out = vec![v];
    while v != root {
        v = parent_node[v];
        out.push(v);
    }
    out
}
