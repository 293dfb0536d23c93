//! ε-chains in the transition graph, zero-winding periodic chains through
//! both boundary rows, and disk chains built from them.
//!
//! A disk chain is a sequence of open disks `U₀ … U_k`, each moved off
//! itself by the plane map `h`, pairwise equal or disjoint, with
//! `h^{mᵢ}(Uᵢ) ∩ Uᵢ₊₁ ≠ ∅`. Disks of radius ε around a periodic ε-chain
//! satisfy everything but pairwise disjointness; overlapping pairs are
//! merged along the shortest overlapping stretch, and the merged pair stays
//! off its image as long as `δ − 4ε > 0`, where δ bounds `‖h(p) − p‖` from
//! below.

use crate::boxgraph::{BoxCover, TransitionGraph};
use crate::error::{Error, Result};
use crate::geometry::LiftPoint;
use crate::linkage::LinkageVerdict;
use crate::map::AnnulusMap;
use serde::Serialize;
use std::collections::VecDeque;
use std::f64::consts::TAU;

/// Shortest path between two boxes, with per-step windings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonPath {
    /// Visited nodes, `from` first and `to` last.
    pub nodes: Vec<usize>,
    /// Winding of each step; one fewer than `nodes`.
    pub windings: Vec<i32>,
    pub epsilon: f64,
}

impl EpsilonPath {
    pub fn steps(&self) -> usize {
        self.windings.len()
    }

    /// Box centers along the path, each in the copy reached so far.
    pub fn lifted_points(&self, cover: &BoxCover) -> Vec<LiftPoint> {
        let mut turns = 0i64;
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(cover.center(self.nodes[0]));
        for (k, &w) in self.windings.iter().enumerate() {
            turns += w as i64;
            out.push(cover.center(self.nodes[k + 1]).translate(turns as f64));
        }
        out
    }
}

/// Breadth-first shortest path. For `from == to` the path has at least one
/// step (a return to `from`).
pub fn find_epsilon_chain(graph: &TransitionGraph, from: usize, to: usize) -> Result<EpsilonPath> {
    let n = graph.node_count();
    if from >= n || to >= n {
        return Err(Error::InvalidArgument(format!(
            "nodes {from} -> {to} outside a graph of {n} nodes"
        )));
    }
    let mut parent: Vec<Option<(usize, i32)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    // seed with the successors of `from` so that from == to needs a cycle
    for (v, w) in graph.successors(from) {
        if !seen[v] {
            seen[v] = true;
            parent[v] = Some((from, w));
            queue.push_back(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for (v, w) in graph.successors(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((u, w));
                queue.push_back(v);
            }
        }
    }
    if !seen[to] {
        return Err(Error::Unreachable { from, to });
    }
    let mut nodes = vec![to];
    let mut windings = Vec::new();
    let mut cur = to;
    loop {
        let (p, w) = parent[cur].expect("reached nodes have parents");
        windings.push(w);
        nodes.push(p);
        cur = p;
        if cur == from {
            break;
        }
    }
    nodes.reverse();
    windings.reverse();
    Ok(EpsilonPath {
        nodes,
        windings,
        epsilon: graph.epsilon(),
    })
}

/// Closed ε-chain of boxes through both boundary rows whose windings sum to
/// zero, so its lift closes up in the cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicEpsilonChain {
    /// Cyclic node list; the step after the last node returns to the first.
    pub nodes: Vec<usize>,
    /// Winding of the step leaving each node.
    pub windings: Vec<i32>,
    pub epsilon: f64,
    /// Box centers with accumulated windings; one entry per node.
    pub lifted: Vec<LiftPoint>,
    /// Accumulated column index per node (`i + nx·turns`), for exact
    /// closure arithmetic.
    pub lifted_columns: Vec<i64>,
    pub window: i64,
}

impl PeriodicEpsilonChain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn winding_sum(&self) -> i64 {
        self.windings.iter().map(|&w| w as i64).sum()
    }

    /// Column offset after going once around the chain; zero when closed.
    pub fn closure_error(&self, cover: &BoxCover) -> i64 {
        let first = self.lifted_columns[0];
        let (i0, _) = cover.coords(self.nodes[0]);
        first - i0 as i64 + cover.nx() as i64 * self.winding_sum()
    }
}

/// Default winding window `4·⌈max(|r₀|, |r₁|)⌉` (at least 4).
pub fn default_winding_window(map: &AnnulusMap) -> i64 {
    let mut reach: f64 = 0.0;
    for k in 0..256 {
        let x = k as f64 / 256.0;
        reach = reach.max(map.r0(x).abs()).max(map.r1(x).abs());
    }
    4 * (reach.ceil() as i64).max(1)
}

/// Searches the product of the graph with winding offsets in `[−W, W]`
/// and a "top row visited" flag for a cycle from the lowest bottom-row box
/// of the linked class back to itself at offset zero. The window doubles on
/// failure up to 64.
pub fn find_periodic_boundary_chain(
    graph: &TransitionGraph,
    verdict: &LinkageVerdict,
    class_of: &[Option<usize>],
    window: i64,
) -> Result<PeriodicEpsilonChain> {
    let class = match (verdict.linked, verdict.component) {
        (true, Some(c)) => c,
        _ => return Err(Error::NotLinked),
    };
    let cover = graph.cover();
    let top_row = cover.ny() - 1;
    let start = cover
        .row(0)
        .find(|&u| class_of[u] == Some(class))
        .ok_or(Error::BoundaryNotRecurrent { row: 0 })?;
    let mut w = window.max(1);
    loop {
        if let Some(chain) = product_search(graph, class_of, class, start, top_row, w) {
            return Ok(chain);
        }
        if w >= 64 {
            return Err(Error::WindingWindowExhausted { window: w });
        }
        w = (2 * w).min(64);
    }
}

fn product_search(
    graph: &TransitionGraph,
    class_of: &[Option<usize>],
    class: usize,
    start: usize,
    top_row: usize,
    window: i64,
) -> Option<PeriodicEpsilonChain> {
    let cover = graph.cover();
    let n = graph.node_count();
    let span = (2 * window + 1) as usize;
    let state = |u: usize, off: i64, flag: bool| -> usize {
        ((u * span) + (off + window) as usize) * 2 + flag as usize
    };
    let total = n * span * 2;
    let mut parent: Vec<u32> = vec![u32::MAX; total];
    let mut step_winding: Vec<i8> = vec![0; total];
    let mut seen = vec![false; total];
    let goal = state(start, 0, true);
    let mut queue = VecDeque::new();
    let s0 = state(start, 0, false);
    seen[s0] = true;
    queue.push_back((start, 0i64, false));
    let mut found = false;
    while let Some((u, off, flag)) = queue.pop_front() {
        let su = state(u, off, flag);
        for (v, w) in graph.successors(u) {
            // the chain stays inside the linked class
            if class_of[v] != Some(class) {
                continue;
            }
            let off2 = off + w as i64;
            if off2.abs() > window {
                continue;
            }
            let flag2 = flag || cover.row_of(v) == top_row;
            let sv = state(v, off2, flag2);
            if seen[sv] {
                continue;
            }
            seen[sv] = true;
            parent[sv] = su as u32;
            step_winding[sv] = w as i8;
            if sv == goal {
                found = true;
                break;
            }
            queue.push_back((v, off2, flag2));
        }
        if found {
            break;
        }
    }
    if !found {
        return None;
    }
    let mut states = vec![goal];
    let mut windings = Vec::new();
    let mut cur = goal;
    while cur != s0 {
        windings.push(step_winding[cur] as i32);
        cur = parent[cur] as usize;
        states.push(cur);
    }
    states.reverse();
    windings.reverse();
    // states[0] = start, states[last] = goal (start again); drop the repeat
    states.pop();
    let nodes: Vec<usize> = states.iter().map(|&s| s / 2 / span).collect();
    let nx = cover.nx() as i64;
    let mut turns = 0i64;
    let mut lifted = Vec::with_capacity(nodes.len());
    let mut lifted_columns = Vec::with_capacity(nodes.len());
    for (k, &u) in nodes.iter().enumerate() {
        if k > 0 {
            turns += windings[k - 1] as i64;
        }
        let (i, _) = cover.coords(u);
        lifted_columns.push(i as i64 + nx * turns);
        lifted.push(cover.center(u).translate(turns as f64));
    }
    Some(PeriodicEpsilonChain {
        nodes,
        windings,
        epsilon: graph.epsilon(),
        lifted,
        lifted_columns,
        window,
    })
}

/// Open disk in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disk {
    pub center: LiftPoint,
    pub radius: f64,
}

/// One link of a disk chain: a single disk, or a union of overlapping disks
/// produced by a merge (still a topological disk).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainLink {
    pub parts: Vec<Disk>,
    /// Chain positions the parts came from.
    pub origin: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRecord {
    pub i0: usize,
    pub j0: usize,
    pub length_before: usize,
    pub length_after: usize,
    /// `δ − 4ε`, the guaranteed gap between `h(U_{i0})` and `U_{j0}`.
    pub certified_gap: f64,
    /// Sampled `min(d(h(U_{i0}), U_{j0}), d(h(U_{j0}), U_{i0}))`.
    pub measured_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiskChain {
    pub links: Vec<ChainLink>,
    /// Iterate count `mᵢ` from link `i` to the next.
    pub steps: Vec<u32>,
    pub periodic: bool,
    pub merges: Vec<MergeRecord>,
    pub audit: DiskChainAudit,
}

impl DiskChain {
    pub fn disk_count(&self) -> usize {
        self.links.iter().map(|l| l.parts.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DiskChainOutcome {
    /// `ε ≥ δ/4`: the construction cannot start.
    GateFailed {
        epsilon: f64,
        delta: f64,
    },
    Built(DiskChain),
}

/// Radius-ε disks around the points of a chain, merged until pairwise
/// disjoint and checked by [`verify_disk_chain`].
pub fn construct_disk_chain<H: Fn(LiftPoint) -> LiftPoint>(
    points: &[LiftPoint],
    epsilon: f64,
    delta: f64,
    periodic: bool,
    h: H,
) -> Result<DiskChainOutcome> {
    if !(epsilon > 0.0) || !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need epsilon > 0 and delta >= 0, got {epsilon}, {delta}"
        )));
    }
    if !(epsilon < delta / 4.0) {
        return Ok(DiskChainOutcome::GateFailed { epsilon, delta });
    }
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "a disk chain needs at least two disks".into(),
        ));
    }
    let mut links: Vec<ChainLink> = points
        .iter()
        .enumerate()
        .map(|(k, &c)| ChainLink {
            parts: vec![Disk {
                center: c,
                radius: epsilon,
            }],
            origin: vec![k],
        })
        .collect();
    let mut merges = Vec::new();
    while let Some((i0, j0)) = shortest_overlap(&links) {
        let before = links.len();
        let measured = merged_gap(&links[i0], &links[j0], &h);
        let mut merged = links[i0].clone();
        merged.parts.extend(links[j0].parts.iter().copied());
        merged.origin.extend(links[j0].origin.iter().copied());
        links = if periodic {
            // keep the loop U_{i0} ∪ U_{j0}, U_{i0+1}, …, U_{j0−1}
            let mut next = vec![merged];
            next.extend(links[i0 + 1..j0].iter().cloned());
            next
        } else {
            // cut the loop out: …, U_{i0−1}, U_{i0} ∪ U_{j0}, U_{j0+1}, …
            let mut next: Vec<ChainLink> = links[..i0].to_vec();
            next.push(merged);
            next.extend(links[j0 + 1..].iter().cloned());
            next
        };
        if links.len() >= before {
            return Err(Error::DiskChainInvalid(format!(
                "merge of ({i0}, {j0}) did not shorten the chain"
            )));
        }
        merges.push(MergeRecord {
            i0,
            j0,
            length_before: before,
            length_after: links.len(),
            certified_gap: delta - 4.0 * epsilon,
            measured_gap: measured,
        });
    }
    let steps = vec![1; links.len()];
    let audit = verify_disk_chain(&links, &steps, periodic, &h);
    if !audit.valid() {
        return Err(Error::DiskChainInvalid(format!("{audit:?}")));
    }
    Ok(DiskChainOutcome::Built(DiskChain {
        links,
        steps,
        periodic,
        merges,
        audit,
    }))
}

fn links_overlap(a: &ChainLink, b: &ChainLink) -> bool {
    a.parts.iter().any(|p| {
        b.parts
            .iter()
            .any(|q| p.center.distance(q.center) < p.radius + q.radius)
    })
}

/// Overlapping pair `(i, j)`, `i < j`, with the smallest `j − i`;
/// lexicographically first among ties.
fn shortest_overlap(links: &[ChainLink]) -> Option<(usize, usize)> {
    let n = links.len();
    for gap in 1..n {
        for i in 0..n - gap {
            if links_overlap(&links[i], &links[i + gap]) {
                return Some((i, i + gap));
            }
        }
    }
    None
}

fn sample_disk(d: &Disk, closed: bool) -> Vec<LiftPoint> {
    const RINGS: usize = 8;
    const ANGLES: usize = 32;
    let mut out = vec![d.center];
    for k in 1..=RINGS {
        let mut r = d.radius * k as f64 / RINGS as f64;
        if !closed && k == RINGS {
            r *= 1.0 - 1e-9;
        }
        for a in 0..ANGLES {
            let t = TAU * a as f64 / ANGLES as f64;
            out.push(LiftPoint::new(
                d.center.x + r * t.cos(),
                d.center.y + r * t.sin(),
            ));
        }
    }
    out
}

/// Sampled signed gap from the set `points` to a link: positive when every
/// point lies outside all parts.
fn gap_to_link(points: &[LiftPoint], link: &ChainLink) -> f64 {
    points
        .iter()
        .map(|&p| {
            link.parts
                .iter()
                .map(|d| p.distance(d.center) - d.radius)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

fn merged_gap<H: Fn(LiftPoint) -> LiftPoint>(a: &ChainLink, b: &ChainLink, h: &H) -> f64 {
    let img = |l: &ChainLink| -> Vec<LiftPoint> {
        l.parts
            .iter()
            .flat_map(|d| sample_disk(d, true))
            .map(h)
            .collect()
    };
    gap_to_link(&img(a), b).min(gap_to_link(&img(b), a))
}

/// Margins of the three disk-chain conditions. Positive margins pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiskChainAudit {
    /// Smallest sampled `d(h(Vᵢ), Vᵢ)`.
    pub image_disjoint_margin: f64,
    /// Smallest `|cₐ − c_b| − rₐ − r_b` between parts of distinct links;
    /// `+∞` for a single link.
    pub pairwise_disjoint_margin: f64,
    /// Smallest over links of the deepest penetration of `h^{mᵢ}(Vᵢ)` into
    /// `Vᵢ₊₁`.
    pub image_overlap_margin: f64,
    /// Parts of a merged link overlap each other, so the union is connected.
    pub merged_links_connected: bool,
}

impl DiskChainAudit {
    pub fn valid(&self) -> bool {
        self.image_disjoint_margin > 0.0
            && self.pairwise_disjoint_margin >= 0.0
            && self.image_overlap_margin > 0.0
            && self.merged_links_connected
    }
}

/// Independent check of the disk chain conditions by sampling each disk.
#[allow(clippy::needless_range_loop)]
pub fn verify_disk_chain<H: Fn(LiftPoint) -> LiftPoint>(
    links: &[ChainLink],
    steps: &[u32],
    periodic: bool,
    h: &H,
) -> DiskChainAudit {
    let iterate = |p: LiftPoint, m: u32| (0..m).fold(p, |q, _| h(q));
    let mut cond1 = f64::INFINITY;
    for link in links {
        let closed: Vec<LiftPoint> = link
            .parts
            .iter()
            .flat_map(|d| sample_disk(d, true))
            .map(&h)
            .collect();
        cond1 = cond1.min(gap_to_link(&closed, link));
    }
    let mut cond2 = f64::INFINITY;
    for a in 0..links.len() {
        for b in a + 1..links.len() {
            for p in &links[a].parts {
                for q in &links[b].parts {
                    cond2 = cond2.min(p.center.distance(q.center) - p.radius - q.radius);
                }
            }
        }
    }
    let count = if periodic {
        links.len()
    } else {
        links.len().saturating_sub(1)
    };
    let mut cond3 = f64::INFINITY;
    for i in 0..count {
        let next = &links[(i + 1) % links.len()];
        let m = steps.get(i).copied().unwrap_or(1);
        let depth = links[i]
            .parts
            .iter()
            .flat_map(|d| sample_disk(d, false))
            .map(|p| {
                let q = iterate(p, m);
                next.parts
                    .iter()
                    .map(|d| d.radius - q.distance(d.center))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        cond3 = cond3.min(depth);
    }
    let connected = links.iter().all(|l| {
        // every part reaches the first through overlapping parts
        let n = l.parts.len();
        let mut reached = vec![false; n];
        reached[0] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for a in 0..n {
                if !reached[a] {
                    continue;
                }
                for b in 0..n {
                    if !reached[b]
                        && l.parts[a].center.distance(l.parts[b].center)
                            < l.parts[a].radius + l.parts[b].radius
                    {
                        reached[b] = true;
                        changed = true;
                    }
                }
            }
        }
        reached.into_iter().all(|r| r)
    });
    DiskChainAudit {
        image_disjoint_margin: cond1,
        pairwise_disjoint_margin: cond2,
        image_overlap_margin: cond3,
        merged_links_connected: connected,
    }
}

/// Disk chain around a periodic boundary chain, for the plane extension of
/// `map`. Returns the gate failure when `ε ≥ δ/4`.
pub fn build_disk_chain(
    chain: &PeriodicEpsilonChain,
    map: &AnnulusMap,
    delta: f64,
) -> Result<DiskChainOutcome> {
    construct_disk_chain(&chain.lifted, chain.epsilon, delta, true, |p| {
        map.plane_extension(p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxgraph::Edge;

    fn translation(p: LiftPoint) -> LiftPoint {
        LiftPoint::new(p.x + 1.0, p.y)
    }

    #[test]
    fn translation_chain_is_valid() {
        let points: Vec<LiftPoint> = (0..6)
            .map(|k| LiftPoint::new(0.9 * k as f64, 0.0))
            .collect();
        match construct_disk_chain(&points, 0.2, 1.0, false, translation).unwrap() {
            DiskChainOutcome::Built(chain) => {
                assert!(chain.merges.is_empty());
                assert!(chain.audit.valid());
                assert!((chain.audit.image_disjoint_margin - 0.6).abs() < 1e-9);
                assert!((chain.audit.pairwise_disjoint_margin - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gate_rejects_coarse_chains() {
        let points = [LiftPoint::new(0.0, 0.0), LiftPoint::new(0.9, 0.0)];
        let out = construct_disk_chain(&points, 0.25, 1.0, false, translation).unwrap();
        assert_eq!(
            out,
            DiskChainOutcome::GateFailed {
                epsilon: 0.25,
                delta: 1.0
            }
        );
        let out = construct_disk_chain(&points, 0.1, 0.0, false, translation).unwrap();
        assert!(matches!(out, DiskChainOutcome::GateFailed { .. }));
    }

    #[test]
    fn non_periodic_merge_cuts_out_the_loop() {
        // a detour that comes back next to its start, then moves on
        let points = [
            LiftPoint::new(0.0, 0.0),
            LiftPoint::new(1.0, 0.0),
            LiftPoint::new(1.0, 1.0),
            LiftPoint::new(0.05, 0.05),
            LiftPoint::new(1.05, 0.05),
        ];
        // h moves every point by 1 along the detour direction at each node;
        // use a map whose displacement is large and matches the chain steps
        let h = |p: LiftPoint| {
            if p.x > 0.5 && p.y < 0.5 {
                LiftPoint::new(p.x, p.y + 1.0)
            } else if p.x > 0.5 {
                LiftPoint::new(p.x - 0.95, p.y - 0.95)
            } else {
                LiftPoint::new(p.x + 1.0, p.y)
            }
        };
        let out = construct_disk_chain(&points, 0.1, 0.5, false, h).unwrap();
        match out {
            DiskChainOutcome::Built(chain) => {
                assert_eq!(chain.merges.len(), 1);
                assert_eq!((chain.merges[0].i0, chain.merges[0].j0), (0, 3));
                assert_eq!(chain.links.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    fn path_graph() -> TransitionGraph {
        let cover = BoxCover::new(4, 2, (0.0, 1.0)).unwrap();
        let edges = vec![
            Edge {
                from: 0,
                to: 1,
                winding: 0,
            },
            Edge {
                from: 1,
                to: 2,
                winding: 0,
            },
            Edge {
                from: 2,
                to: 3,
                winding: 1,
            },
            Edge {
                from: 3,
                to: 3,
                winding: 0,
            },
        ];
        TransitionGraph::from_edges(cover, 0.0, 4, edges).unwrap()
    }

    #[test]
    fn bfs_path_and_self_loop() {
        let g = path_graph();
        let p = find_epsilon_chain(&g, 0, 3).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3]);
        assert_eq!(p.windings, vec![0, 0, 1]);
        let lifted = p.lifted_points(g.cover());
        assert!((lifted[3].x - (g.cover().center(3).x + 1.0)).abs() < 1e-15);
        let loop_path = find_epsilon_chain(&g, 3, 3).unwrap();
        assert_eq!(loop_path.steps(), 1);
        assert!(matches!(
            find_epsilon_chain(&g, 3, 0),
            Err(Error::Unreachable { .. })
        ));
        assert!(matches!(
            find_epsilon_chain(&g, 0, 0),
            Err(Error::Unreachable { .. })
        ));
    }

    #[test]
    fn unlinked_verdict_is_rejected() {
        let g = path_graph();
        let verdict = LinkageVerdict {
            linked: false,
            component: None,
            witness: None,
        };
        assert!(matches!(
            find_periodic_boundary_chain(&g, &verdict, &[None; 8], 4),
            Err(Error::NotLinked)
        ));
    }
}
