//! Graclus multilevel coarsening with binary-tree node ordering, so graph
//! max-pooling reduces to 1-D pooling with stride 2. Fake padding nodes are
//! tracked with an explicit validity mask rather than sentinel values.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{laplacians, row_sums, CorrelationGraph, LaplacianSet};
use crate::util::shuffled_indices;

/// Result of one greedy matching pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchGroup {
    Pair(usize, usize),
    Singleton(usize),
}

/// The coarsening hierarchy: `graphs[0]` is the padded finest adjacency,
/// `graphs[l]` halves in size per level. `perm[v]` is the padded finest
/// position of original node v; `valid_mask[l][p]` marks real nodes.
#[derive(Debug, Clone)]
pub struct CoarseningPlan {
    pub levels: usize,
    pub seed: u64,
    pub graphs: Vec<Array2<f64>>,
    pub laplacian_sets: Vec<LaplacianSet>,
    pub perm: Vec<usize>,
    pub valid_mask: Vec<Vec<bool>>,
    /// Matched-edge weight collapsed away at each coarsening step; the
    /// edge-weight conservation identity counts it.
    pub dropped_self_weight: Vec<f64>,
}

impl CoarseningPlan {
    pub fn padded_size(&self, level: usize) -> usize {
        self.graphs[level].nrows()
    }
}

/// Greedy Graclus matching with an explicit visit order: each unmarked node
/// pairs with the unmarked neighbor j maximizing W_ij (1/d_i + 1/d_j), ties
/// broken by smallest j; nodes without an unmarked neighbor stay singletons.
pub fn graclus_match_with_order(
    adjacency: &Array2<f64>,
    degrees: &[f64],
    order: &[usize],
) -> Vec<MatchGroup> {
    let n = degrees.len();
    let mut marked = vec![false; n];
    let mut groups = Vec::new();
    for &i in order {
        if marked[i] {
            continue;
        }
        marked[i] = true;
        let inv_di = if degrees[i] > 0.0 { 1.0 / degrees[i] } else { 0.0 };
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if marked[j] || adjacency[[i, j]] <= 0.0 {
                continue;
            }
            let inv_dj = if degrees[j] > 0.0 { 1.0 / degrees[j] } else { 0.0 };
            let cut = adjacency[[i, j]] * (inv_di + inv_dj);
            let better = match best {
                None => true,
                Some((bj, bcut)) => cut > bcut || (cut == bcut && j < bj),
            };
            if better {
                best = Some((j, cut));
            }
        }
        match best {
            Some((j, _)) => {
                marked[j] = true;
                groups.push(MatchGroup::Pair(i, j));
            }
            None => groups.push(MatchGroup::Singleton(i)),
        }
    }
    groups
}

/// Seeded-random visit order variant; the order is recorded via the seed.
pub fn graclus_match(
    adjacency: &Array2<f64>,
    degrees: &[f64],
    rng_seed: u64,
) -> Vec<MatchGroup> {
    let order = shuffled_indices(degrees.len(), rng_seed, 0x6a_c1);
    graclus_match_with_order(adjacency, degrees, &order)
}

// Binary-tree slot at one level: a real node of the working graph, or a fake
// padding node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Real(usize),
    Fake,
}

pub fn coarsen(graph: &CorrelationGraph, levels: usize, seed: u64) -> Result<CoarseningPlan> {
    coarsen_adjacency(&graph.adjacency, levels, seed)
}

pub fn coarsen_adjacency(
    adjacency: &Array2<f64>,
    levels: usize,
    seed: u64,
) -> Result<CoarseningPlan> {
    let n = adjacency.nrows();
    let max_levels = (n as f64).log2().floor() as usize + 1;
    if levels < 1 || levels > max_levels {
        return Err(Error::InvalidArgument(format!(
            "levels={levels} out of range [1, {max_levels}] for {n} nodes"
        )));
    }

    // Bottom-up: repeated matching, each level building the coarse adjacency
    // with crossing weights summed and the matched edge's weight dropped.
    let mut adjs: Vec<Array2<f64>> = vec![adjacency.clone()];
    let mut parents: Vec<Vec<usize>> = Vec::new();
    let mut dropped = Vec::new();
    for level in 0..levels {
        let fine = &adjs[level];
        let nf = fine.nrows();
        let degrees = row_sums(fine);
        let groups = graclus_match(fine, &degrees, seed.wrapping_add(level as u64));
        let nc = groups.len();
        let mut parent = vec![usize::MAX; nf];
        let mut dropped_here = 0.0;
        for (cid, g) in groups.iter().enumerate() {
            match *g {
                MatchGroup::Pair(a, b) => {
                    parent[a] = cid;
                    parent[b] = cid;
                    dropped_here += fine[[a, b]];
                }
                MatchGroup::Singleton(a) => parent[a] = cid,
            }
        }
        let mut coarse = Array2::<f64>::zeros((nc, nc));
        for i in 0..nf {
            for j in i + 1..nf {
                let w = fine[[i, j]];
                if w > 0.0 && parent[i] != parent[j] {
                    coarse[[parent[i], parent[j]]] += w;
                    coarse[[parent[j], parent[i]]] += w;
                }
            }
        }
        adjs.push(coarse);
        parents.push(parent);
        dropped.push(dropped_here);
    }

    // Top-down: order coarsest clusters by ascending id, then expand each
    // node into its (up to two) children, padding singletons and fake nodes
    // so every level-l node has exactly two level-(l-1) children.
    let mut slots: Vec<Vec<Slot>> = vec![Vec::new(); levels + 1];
    slots[levels] = (0..adjs[levels].nrows()).map(Slot::Real).collect();
    for level in (0..levels).rev() {
        let parent = &parents[level];
        let nf = adjs[level].nrows();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); adjs[level + 1].nrows()];
        for v in 0..nf {
            children[parent[v]].push(v);
        }
        let mut layout = Vec::with_capacity(slots[level + 1].len() * 2);
        for slot in &slots[level + 1] {
            match *slot {
                Slot::Real(c) => {
                    let mut kids = children[c].clone();
                    kids.sort_unstable();
                    layout.push(Slot::Real(kids[0]));
                    layout.push(if kids.len() > 1 {
                        Slot::Real(kids[1])
                    } else {
                        Slot::Fake
                    });
                }
                Slot::Fake => {
                    layout.push(Slot::Fake);
                    layout.push(Slot::Fake);
                }
            }
        }
        slots[level] = layout;
    }

    // Padded adjacency, masks and Laplacians per level; fake rows stay zero.
    let mut graphs = Vec::with_capacity(levels + 1);
    let mut laplacian_sets = Vec::with_capacity(levels + 1);
    let mut valid_mask = Vec::with_capacity(levels + 1);
    for (level, layout) in slots.iter().enumerate() {
        let np = layout.len();
        let mut padded = Array2::<f64>::zeros((np, np));
        for (p, sp) in layout.iter().enumerate() {
            if let Slot::Real(a) = sp {
                for (q, sq) in layout.iter().enumerate() {
                    if let Slot::Real(b) = sq {
                        padded[[p, q]] = adjs[level][[*a, *b]];
                    }
                }
            }
        }
        let degrees = row_sums(&padded);
        laplacian_sets.push(laplacians(&padded, &degrees));
        valid_mask.push(layout.iter().map(|s| matches!(s, Slot::Real(_))).collect());
        graphs.push(padded);
    }

    let mut perm = vec![usize::MAX; n];
    for (p, slot) in slots[0].iter().enumerate() {
        if let Slot::Real(v) = slot {
            perm[*v] = p;
        }
    }
    debug_assert!(perm.iter().all(|&p| p != usize::MAX));

    Ok(CoarseningPlan {
        levels,
        seed,
        graphs,
        laplacian_sets,
        perm,
        valid_mask,
        dropped_self_weight: dropped,
    })
}

/// Scatter one original-length sample into the padded finest layout; fake
/// positions are zero-filled (pooling consults the mask, not the value).
pub fn permute_input(sample: &[f64], plan: &CoarseningPlan) -> Result<Vec<f64>> {
    if sample.len() != plan.perm.len() {
        return Err(Error::ShapeMismatch(format!(
            "sample length {} != {} original nodes",
            sample.len(),
            plan.perm.len()
        )));
    }
    let mut out = vec![0.0; plan.padded_size(0)];
    for (v, &p) in plan.perm.iter().enumerate() {
        out[p] = sample[v];
    }
    Ok(out)
}

/// Stride-2 masked max pool over rows of an even-length feature matrix.
/// Output i takes the max over valid children {2i, 2i+1} per feature; both
/// children invalid yields 0 and an invalid output position.
pub fn masked_max_pool(
    features: &Array2<f64>,
    mask: &[bool],
) -> Result<(Array2<f64>, Vec<bool>)> {
    let (n, f) = features.dim();
    if n % 2 != 0 || mask.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "masked_max_pool needs even length, got {n} rows / {} mask bits",
            mask.len()
        )));
    }
    let half = n / 2;
    let mut out = Array2::<f64>::zeros((half, f));
    let mut out_mask = vec![false; half];
    for i in 0..half {
        let (a, b) = (2 * i, 2 * i + 1);
        out_mask[i] = mask[a] || mask[b];
        for j in 0..f {
            out[[i, j]] = match (mask[a], mask[b]) {
                (true, true) => features[[a, j]].max(features[[b, j]]),
                (true, false) => features[[a, j]],
                (false, true) => features[[b, j]],
                (false, false) => 0.0,
            };
        }
    }
    Ok((out, out_mask))
}
