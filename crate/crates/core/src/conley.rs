//! Chain recurrence on the transition graph: the recurrent box set, its chain
//! transitive classes, and a discrete complete Lyapunov function.
//!
//! A box is recurrent when it lies on a directed cycle of the graph, which is
//! the box-scale version of admitting an ε-chain back to itself. The classes
//! are the strongly connected components restricted to recurrent boxes.
//!
//! The Lyapunov function `g` is constant on each class, strictly decreasing
//! along every other edge, and takes class values in the middle-thirds
//! Cantor set. It is a piecewise-constant, per-box stand-in for a continuous
//! complete Lyapunov function on the annulus; the correspondence is
//! heuristic and tightens with the cover resolution.

use crate::boxgraph::{BoxCover, TransitionGraph};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use serde::Serialize;
use std::collections::VecDeque;

/// Strongly connected components of the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sccs {
    /// Component id per node. Ids are in reverse topological order of the
    /// condensation: an edge between components goes from a higher id to a
    /// lower one.
    pub component: Vec<usize>,
    pub count: usize,
}

/// Iterative Tarjan.
pub fn strongly_connected_components(graph: &TransitionGraph) -> Sccs {
    let n = graph.node_count();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut component = vec![UNSEEN; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut count = 0usize;
    // call stack of (node, position in its successor list)
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|u| graph.successors(u).map(|(v, _)| v).collect())
        .collect();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        frames.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (u, ref mut pos)) = frames.last_mut() {
            if *pos < succ[u].len() {
                let v = succ[u][*pos];
                *pos += 1;
                if index[v] == UNSEEN {
                    index[v] = next_index;
                    low[v] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    frames.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    low[parent] = low[parent].min(low[u]);
                }
                if low[u] == index[u] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        component[w] = count;
                        if w == u {
                            break;
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    Sccs { component, count }
}

fn recurrence_mask(graph: &TransitionGraph, sccs: &Sccs) -> Vec<bool> {
    let mut size = vec![0usize; sccs.count];
    for &c in &sccs.component {
        size[c] += 1;
    }
    (0..graph.node_count())
        .map(|u| size[sccs.component[u]] > 1 || graph.edge(u, u).is_some())
        .collect()
}

/// Nodes lying on a directed cycle, in increasing order.
pub fn chain_recurrent_set(graph: &TransitionGraph) -> Vec<usize> {
    let sccs = strongly_connected_components(graph);
    recurrence_mask(graph, &sccs)
        .into_iter()
        .enumerate()
        .filter_map(|(u, r)| r.then_some(u))
        .collect()
}

/// Chain transitive classes plus the box-scale connectivity diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainComponents {
    /// Classes sorted by their smallest node; nodes sorted within a class.
    pub classes: Vec<Vec<usize>>,
    /// Spatially connected pieces of the recurrent set that are split across
    /// several classes. Non-empty only when the resolution is too coarse to
    /// resolve the true components.
    pub connectivity_violations: Vec<ConnectivityViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityViolation {
    /// Smallest box of the spatial piece.
    pub seed: usize,
    pub boxes: usize,
    /// Distinct classes meeting the piece.
    pub classes: Vec<usize>,
}

/// Strongly connected classes restricted to `recurrent`. When `cover` is
/// given, also checks that every 4-connected spatial piece of the recurrent
/// set lies in a single class.
pub fn chain_transitive_components(
    graph: &TransitionGraph,
    recurrent: &[usize],
    cover: Option<&BoxCover>,
) -> ChainComponents {
    let sccs = strongly_connected_components(graph);
    let mut by_scc: Vec<Vec<usize>> = vec![Vec::new(); sccs.count];
    for &u in recurrent {
        by_scc[sccs.component[u]].push(u);
    }
    let mut classes: Vec<Vec<usize>> = by_scc.into_iter().filter(|c| !c.is_empty()).collect();
    for c in &mut classes {
        c.sort_unstable();
    }
    classes.sort_by_key(|c| c[0]);

    let mut violations = Vec::new();
    if let Some(cover) = cover {
        let n = graph.node_count();
        let mut class_of = vec![usize::MAX; n];
        for (k, c) in classes.iter().enumerate() {
            for &u in c {
                class_of[u] = k;
            }
        }
        let mut seen = vec![false; n];
        for &start in recurrent {
            if seen[start] {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            let mut members = 0;
            let mut touched: Vec<usize> = Vec::new();
            while let Some(u) = queue.pop_front() {
                members += 1;
                if !touched.contains(&class_of[u]) {
                    touched.push(class_of[u]);
                }
                for v in cover.neighbors4(u) {
                    if class_of[v] != usize::MAX && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            if touched.len() > 1 {
                touched.sort_unstable();
                violations.push(ConnectivityViolation {
                    seed: start,
                    boxes: members,
                    classes: touched,
                });
            }
        }
    }
    ChainComponents {
        classes,
        connectivity_violations: violations,
    }
}

/// Discrete complete Lyapunov function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lyapunov {
    /// Value per node.
    pub values: Vec<f64>,
    /// Value per class, indexed like [`ChainComponents::classes`].
    pub class_values: Vec<f64>,
    /// Cantor construction depth used for the class values.
    pub cantor_depth: u32,
}

/// The `count` Cantor-set values used for classes, in increasing order.
///
/// With `d` the smallest depth for which the gap endpoints of levels
/// `1..=d` number at least `count`, the values are evenly spaced picks from
/// those sorted endpoints. Two classes get `1/3` and `2/3`.
pub fn cantor_class_values(count: usize) -> Result<(Vec<f64>, u32)> {
    if count == 0 {
        return Ok((Vec::new(), 0));
    }
    let mut depth = 1u32;
    while 2 * ((1usize << depth) - 1) < count {
        depth += 1;
        if depth > 20 {
            return Err(Error::InvalidArgument(format!(
                "{count} classes exceed the depth-20 Cantor value budget"
            )));
        }
    }
    let scale = 3u64.pow(depth);
    let mut endpoints: Vec<u64> = Vec::new();
    for level in 1..=depth {
        let unit = 3u64.pow(depth - level);
        for address in 0..(1u64 << (level - 1)) {
            // ternary digits 2·a₁ … 2·a_{level−1} followed by the gap digit 1
            let mut base = 0u64;
            for bit in 0..(level - 1) {
                let digit = (address >> (level - 2 - bit)) & 1;
                base += 2 * digit * 3u64.pow(depth - 1 - bit);
            }
            endpoints.push(base + unit);
            endpoints.push(base + 2 * unit);
        }
    }
    endpoints.sort_unstable();
    let m = endpoints.len();
    let picks = (0..count)
        .map(|k| endpoints[k * m / count] as f64 / scale as f64)
        .collect();
    Ok((picks, depth))
}

/// Assigns Cantor values to classes in reachability order and fills in the
/// transient nodes.
///
/// Classes are enumerated upstream-first along a topological order of the
/// condensation and receive decreasing Cantor values. A transient node `u`
/// gets a value strictly between the largest successor value `m` and the
/// smallest value `B` of a class reaching it:
/// `g(u) = m + (B − m) / (h(u) + 1)` where `h(u)` is the length of the
/// longest chain of transient nodes ending at `u`. Nodes without
/// successors or upstream classes use one level-1 gap (1/3) beyond the
/// extreme class values.
pub fn build_lyapunov(graph: &TransitionGraph, components: &ChainComponents) -> Result<Lyapunov> {
    let n = graph.node_count();
    let sccs = strongly_connected_components(graph);
    let mut class_of = vec![usize::MAX; n];
    for (k, c) in components.classes.iter().enumerate() {
        for &u in c {
            class_of[u] = k;
        }
    }
    // Transient nodes must be singleton components; a recurrent node outside
    // the supplied classes would also break the construction.
    let mut scc_size = vec![0usize; sccs.count];
    for &c in &sccs.component {
        scc_size[c] += 1;
    }
    for u in 0..n {
        let cyclic = scc_size[sccs.component[u]] > 1 || graph.edge(u, u).is_some();
        if cyclic && class_of[u] == usize::MAX {
            return Err(Error::InvalidArgument(format!(
                "node {u} lies on a cycle but belongs to no class"
            )));
        }
    }

    // Tarjan ids are reverse-topological, so descending id is upstream-first.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sccs.component[b].cmp(&sccs.component[a]).then(a.cmp(&b)));

    let mut class_rank = vec![usize::MAX; components.classes.len()];
    let mut next = 0;
    for &u in &order {
        let k = class_of[u];
        if k != usize::MAX && class_rank[k] == usize::MAX {
            class_rank[k] = next;
            next += 1;
        }
    }
    let (cantor, cantor_depth) = cantor_class_values(components.classes.len())?;
    let kcount = components.classes.len();
    let class_values: Vec<f64> = class_rank.iter().map(|&r| cantor[kcount - 1 - r]).collect();

    let gap = 1.0 / 3.0;
    let top = class_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let bottom = class_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let (ceiling, floor) = if kcount == 0 {
        (1.0, 0.0)
    } else {
        (top + gap, bottom - gap)
    };

    let preds = graph.predecessors();
    // upstream pass: smallest upstream class value and transient depth
    let mut upper = vec![ceiling; n];
    let mut depth = vec![0usize; n];
    for &u in &order {
        if class_of[u] != usize::MAX {
            upper[u] = class_values[class_of[u]];
            continue;
        }
        let mut b = ceiling;
        let mut h = 0;
        for &p in &preds[u] {
            b = b.min(upper[p]);
            if class_of[p] == usize::MAX {
                h = h.max(depth[p]);
            }
        }
        upper[u] = b;
        depth[u] = h + 1;
    }
    // downstream pass
    let mut values = vec![f64::NAN; n];
    for &u in order.iter().rev() {
        if class_of[u] != usize::MAX {
            values[u] = class_values[class_of[u]];
            continue;
        }
        let mut m = f64::NEG_INFINITY;
        for (v, _) in graph.successors(u) {
            if v == u {
                continue;
            }
            m = m.max(values[v]);
        }
        if m == f64::NEG_INFINITY {
            m = floor;
        }
        let b = upper[u];
        if !(m < b) {
            return Err(Error::InvalidArgument(format!(
                "transient node {u} has no room between {m} and {b}"
            )));
        }
        values[u] = m + (b - m) / (depth[u] as f64 + 1.0);
    }
    Ok(Lyapunov {
        values,
        class_values,
        cantor_depth,
    })
}

/// Everything the later stages need from the chain recurrence analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConleyDecomposition {
    pub recurrent: Vec<usize>,
    pub components: ChainComponents,
    pub lyapunov: Lyapunov,
    /// Class index per node, `None` for transient nodes.
    pub class_of: Vec<Option<usize>>,
}

impl ConleyDecomposition {
    pub fn compute(graph: &TransitionGraph) -> Result<Self> {
        let recurrent = chain_recurrent_set(graph);
        let components = chain_transitive_components(graph, &recurrent, Some(graph.cover()));
        let lyapunov = build_lyapunov(graph, &components)?;
        let mut class_of = vec![None; graph.node_count()];
        for (k, c) in components.classes.iter().enumerate() {
            for &u in c {
                class_of[u] = Some(k);
            }
        }
        Ok(Self {
            recurrent,
            components,
            lyapunov,
            class_of,
        })
    }

    pub fn class_count(&self) -> usize {
        self.components.classes.len()
    }

    pub fn recurrent_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.class_of.len()];
        for &u in &self.recurrent {
            mask[u] = true;
        }
        mask
    }

    /// Count of edges violating the Lyapunov contract: equal values inside
    /// a class, a drop of more than `1e-12` on every other edge.
    pub fn lyapunov_violations(&self, graph: &TransitionGraph) -> usize {
        let g = &self.lyapunov.values;
        graph
            .edges()
            .filter(|e| {
                let same =
                    self.class_of[e.from].is_some() && self.class_of[e.from] == self.class_of[e.to];
                if same {
                    g[e.from] != g[e.to]
                } else {
                    !(g[e.to] < g[e.from] - 1e-12)
                }
            })
            .count()
    }

    /// Summary for reports.
    pub fn report(&self, cover: &BoxCover) -> DecompositionReport {
        let classes = self
            .components
            .classes
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let bounds = c
                    .iter()
                    .map(|&u| cover.rect(u))
                    .reduce(|a, b| a.union(&b))
                    .expect("classes are non-empty");
                let mut rows: Vec<usize> = c.iter().map(|&u| cover.row_of(u)).collect();
                rows.sort_unstable();
                rows.dedup();
                ClassSummary {
                    id: k,
                    size: c.len(),
                    value: self.lyapunov.class_values[k],
                    bounds,
                    rows: (rows[0], *rows.last().unwrap()),
                }
            })
            .collect();
        DecompositionReport {
            nx: cover.nx(),
            ny: cover.ny(),
            y_range: cover.y_range(),
            boxes: cover.len(),
            recurrent_boxes: self.recurrent.len(),
            class_count: self.class_count(),
            classes,
            cantor_depth: self.lyapunov.cantor_depth,
            connectivity_violations: self.components.connectivity_violations.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub id: usize,
    pub size: usize,
    pub value: f64,
    /// Bounding region in cover coordinates (x within one turn).
    pub bounds: Rect,
    /// Lowest and highest row touched.
    pub rows: (usize, usize),
}

/// JSON-facing decomposition summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub nx: usize,
    pub ny: usize,
    pub y_range: (f64, f64),
    pub boxes: usize,
    pub recurrent_boxes: usize,
    pub class_count: usize,
    pub classes: Vec<ClassSummary>,
    pub cantor_depth: u32,
    pub connectivity_violations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxgraph::Edge;

    fn graph_from(n_nodes: usize, edges: &[(usize, usize)]) -> TransitionGraph {
        // 8 columns; enough rows to hold the nodes
        let ny = n_nodes.div_ceil(8).max(2);
        let cover = BoxCover::new(8, ny, (0.0, 1.0)).unwrap();
        let edges = edges
            .iter()
            .map(|&(from, to)| Edge {
                from,
                to,
                winding: 0,
            })
            .collect();
        TransitionGraph::from_edges(cover, 0.0, 4, edges).unwrap()
    }

    #[test]
    fn single_path_has_no_recurrence() {
        let g = graph_from(16, &(0..15).map(|k| (k, k + 1)).collect::<Vec<_>>());
        assert!(chain_recurrent_set(&g).is_empty());
        let comps = chain_transitive_components(&g, &[], None);
        assert!(comps.classes.is_empty());
    }

    #[test]
    fn self_loop_is_recurrent() {
        let g = graph_from(16, &[(3, 3), (3, 4)]);
        assert_eq!(chain_recurrent_set(&g), vec![3]);
    }

    #[test]
    fn tarjan_orders_components_reverse_topologically() {
        let g = graph_from(16, &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 2)]);
        let s = strongly_connected_components(&g);
        assert_eq!(s.component[0], s.component[1]);
        assert!(s.component[1] > s.component[2]);
        assert_eq!(s.component[2], s.component[3]);
    }

    #[test]
    fn two_classes_get_two_thirds_and_one_third() {
        // class {0,1} reaches class {4,5} through transient 2 -> 3
        let g = graph_from(
            16,
            &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 4), (4, 5), (5, 4)],
        );
        let rec = chain_recurrent_set(&g);
        let comps = chain_transitive_components(&g, &rec, None);
        assert_eq!(comps.classes, vec![vec![0, 1], vec![4, 5]]);
        let lyap = build_lyapunov(&g, &comps).unwrap();
        assert_eq!(lyap.class_values, vec![2.0 / 3.0, 1.0 / 3.0]);
        let v = &lyap.values;
        assert!(v[1] > v[2] && v[2] > v[3] && v[3] > v[4]);
    }

    #[test]
    fn single_class_gives_constant_values() {
        let edges: Vec<(usize, usize)> = (0..16).map(|k| (k, (k + 1) % 16)).collect();
        let g = graph_from(16, &edges);
        let d = ConleyDecomposition::compute(&g).unwrap();
        assert_eq!(d.class_count(), 1);
        assert!(d.lyapunov.values.iter().all(|&v| v == d.lyapunov.values[0]));
    }

    #[test]
    fn long_transient_chains_keep_a_strict_drop() {
        let n = 2000;
        let ny = n / 8;
        let cover = BoxCover::new(8, ny, (0.0, 1.0)).unwrap();
        let mut edges: Vec<Edge> = (0..n - 1)
            .map(|k| Edge {
                from: k,
                to: k + 1,
                winding: 0,
            })
            .collect();
        edges.push(Edge {
            from: n - 1,
            to: n - 1,
            winding: 0,
        });
        let g = TransitionGraph::from_edges(cover, 0.0, 4, edges).unwrap();
        let d = ConleyDecomposition::compute(&g).unwrap();
        assert_eq!(d.lyapunov_violations(&g), 0);
    }

    #[test]
    fn cantor_values_are_distinct_and_increasing() {
        for count in 1..200 {
            let (v, _) = cantor_class_values(count).unwrap();
            assert_eq!(v.len(), count);
            assert!(v.windows(2).all(|w| w[0] < w[1]));
            assert!(v.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn connectivity_diagnostic_flags_split_pieces() {
        // boxes 0 and 1 are spatial neighbours but form two separate loops
        let g = graph_from(16, &[(0, 0), (1, 1)]);
        let rec = chain_recurrent_set(&g);
        let comps = chain_transitive_components(&g, &rec, Some(g.cover()));
        assert_eq!(comps.classes.len(), 2);
        assert_eq!(comps.connectivity_violations.len(), 1);
        assert_eq!(comps.connectivity_violations[0].classes, vec![0, 1]);
    }
}
