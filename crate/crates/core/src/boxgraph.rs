//! Uniform box covers of the annulus and the directed transition graph that
//! outer-approximates a map on them.
//!
//! Each edge `(u, v, w)` records that the image of box `u` (its canonical
//! copy in the fundamental domain) meets the copy of box `v` translated by
//! `w` full turns. Windings therefore telescope: along any path, the sum of
//! the edge windings is the number of turns a lifted pseudo-orbit travels.

use crate::error::{Error, Result};
use crate::geometry::{wrap_unit, LiftPoint, Rect};
use crate::map::AnnulusMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

/// An `nx × ny` grid of closed boxes on `S¹ × [y_lo, y_hi]`. Box `(i, j)`
/// has index `j·nx + i`, so row 0 is the bottom boundary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxCover {
    nx: usize,
    ny: usize,
    y_lo: f64,
    y_hi: f64,
}

impl BoxCover {
    pub fn new(nx: usize, ny: usize, y_range: (f64, f64)) -> Result<Self> {
        let (y_lo, y_hi) = y_range;
        if nx < 4 || ny < 2 || !(y_hi > y_lo) || !y_lo.is_finite() || !y_hi.is_finite() {
            return Err(Error::DegenerateCover { nx, ny });
        }
        Ok(Self { nx, ny, y_lo, y_hi })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.y_lo, self.y_hi)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn box_width(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn box_height(&self) -> f64 {
        (self.y_hi - self.y_lo) / self.ny as f64
    }

    pub fn box_diameter(&self) -> f64 {
        self.box_width().hypot(self.box_height())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, u: usize) -> (usize, usize) {
        (u % self.nx, u / self.nx)
    }

    pub fn row_of(&self, u: usize) -> usize {
        u / self.nx
    }

    pub fn rect(&self, u: usize) -> Rect {
        let (i, j) = self.coords(u);
        let w = self.box_width();
        let h = self.box_height();
        Rect::new(
            i as f64 * w,
            (i + 1) as f64 * w,
            self.y_lo + j as f64 * h,
            self.y_lo + (j + 1) as f64 * h,
        )
    }

    pub fn center(&self, u: usize) -> LiftPoint {
        self.rect(u).center()
    }

    /// Row `j` as box indices in increasing angle.
    pub fn row(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.nx).map(move |i| self.index(i, j))
    }

    /// Lowest-index box containing the projection of `p`, or `None` when
    /// `p` lies outside the radial range.
    pub fn locate(&self, p: LiftPoint) -> Option<usize> {
        if !(p.y >= self.y_lo && p.y <= self.y_hi) {
            return None;
        }
        let u = wrap_unit(p.x) * self.nx as f64;
        let mut i = (u.floor() as usize).min(self.nx - 1);
        if u == u.floor() && i > 0 {
            i -= 1;
        }
        let t = (p.y - self.y_lo) / self.box_height();
        let mut j = (t.floor().max(0.0) as usize).min(self.ny - 1);
        if t == t.floor() && j > 0 && (j as f64) == t {
            j -= 1;
        }
        Some(self.index(i, j))
    }

    /// The up-to-eight boxes sharing a face or corner with `u` (x periodic).
    pub fn ring(&self, u: usize) -> Vec<usize> {
        let (i, j) = self.coords(u);
        let mut out = Vec::with_capacity(8);
        for dj in -1i64..=1 {
            let jj = j as i64 + dj;
            if jj < 0 || jj >= self.ny as i64 {
                continue;
            }
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let ii = (i as i64 + di).rem_euclid(self.nx as i64) as usize;
                let v = self.index(ii, jj as usize);
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Face neighbours (x periodic).
    pub fn neighbors4(&self, u: usize) -> Vec<usize> {
        let (i, j) = self.coords(u);
        let mut out = vec![
            self.index((i + 1) % self.nx, j),
            self.index((i + self.nx - 1) % self.nx, j),
        ];
        if j > 0 {
            out.push(self.index(i, j - 1));
        }
        if j + 1 < self.ny {
            out.push(self.index(i, j + 1));
        }
        out.dedup();
        out
    }

    /// Membership mask of `set` inflated by one ring of boxes.
    pub fn inflate(&self, set: &[bool]) -> Vec<bool> {
        let mut out = set.to_vec();
        for (u, &inside) in set.iter().enumerate() {
            if inside {
                for v in self.ring(u) {
                    out[v] = true;
                }
            }
        }
        out
    }
}

/// Edge `from → to` reaching the copy of `to` translated by `winding` turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub winding: i32,
}

/// Knobs for [`build_transition_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphOptions {
    /// Subgrid resolution per box axis; at least 4.
    pub samples_per_box: usize,
    /// Image inflation radius. `None` selects the pilot estimate.
    pub padding: Option<f64>,
    /// Number of boxes sampled for the pilot padding estimate.
    pub pilot_boxes: usize,
    /// Seed for choosing the pilot boxes.
    pub seed: u64,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            samples_per_box: 16,
            padding: None,
            pilot_boxes: 64,
            seed: 0,
        }
    }
}

/// Directed outer approximation of a map on a [`BoxCover`], in CSR form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionGraph {
    cover: BoxCover,
    padding: f64,
    samples_per_box: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    windings: Vec<i32>,
}

impl TransitionGraph {
    /// Assembles a graph from an explicit edge list. Exact duplicates are
    /// dropped; the same `(from, to)` pair may appear with several windings.
    pub fn from_edges(
        cover: BoxCover,
        padding: f64,
        samples_per_box: usize,
        mut edges: Vec<Edge>,
    ) -> Result<Self> {
        let n = cover.len();
        if let Some(e) = edges.iter().find(|e| e.from >= n || e.to >= n) {
            return Err(Error::InvalidGraphOptions(format!(
                "edge {} -> {} outside a cover of {n} boxes",
                e.from, e.to
            )));
        }
        edges.sort();
        edges.dedup();
        let mut offsets = vec![0usize; n + 1];
        for e in &edges {
            offsets[e.from + 1] += 1;
        }
        for k in 0..n {
            offsets[k + 1] += offsets[k];
        }
        Ok(Self {
            cover,
            padding,
            samples_per_box,
            offsets,
            targets: edges.iter().map(|e| e.to as u32).collect(),
            windings: edges.iter().map(|e| e.winding).collect(),
        })
    }

    pub fn cover(&self) -> &BoxCover {
        &self.cover
    }

    pub fn padding(&self) -> f64 {
        self.padding
    }

    pub fn samples_per_box(&self) -> usize {
        self.samples_per_box
    }

    /// Chain resolution: box diameter plus padding.
    pub fn epsilon(&self) -> f64 {
        self.cover.box_diameter() + self.padding
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Successors of `u` with windings, in increasing target order.
    pub fn successors(&self, u: usize) -> impl Iterator<Item = (usize, i32)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.targets[range.clone()]
            .iter()
            .zip(&self.windings[range])
            .map(|(&v, &w)| (v as usize, w))
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// Winding of some edge `u → v`, if any.
    pub fn edge(&self, u: usize, v: usize) -> Option<i32> {
        let range = self.offsets[u]..self.offsets[u + 1];
        let slice = &self.targets[range.clone()];
        slice
            .binary_search(&(v as u32))
            .ok()
            .map(|k| self.windings[range.start + k])
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.successors(u).map(move |(v, w)| Edge {
                from: u,
                to: v,
                winding: w,
            })
        })
    }

    /// Reverse adjacency lists, each sorted.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.node_count()];
        for e in self.edges() {
            preds[e.to].push(e.from);
        }
        preds
    }

    /// Edge-list text: `#`-prefixed header, then one `u v w` line per edge.
    pub fn to_edge_list(&self) -> String {
        let (lo, hi) = self.cover.y_range();
        let mut s = String::new();
        let _ = writeln!(s, "# annulus-fixpoint transition graph");
        let _ = writeln!(s, "# nx {}", self.cover.nx());
        let _ = writeln!(s, "# ny {}", self.cover.ny());
        let _ = writeln!(s, "# y_range {lo} {hi}");
        let _ = writeln!(s, "# padding {}", self.padding);
        let _ = writeln!(s, "# samples_per_box {}", self.samples_per_box);
        let _ = writeln!(s, "# nodes {}", self.node_count());
        let _ = writeln!(s, "# edges {}", self.edge_count());
        for e in self.edges() {
            let _ = writeln!(s, "{} {} {}", e.from, e.to, e.winding);
        }
        s
    }

    /// Parses the output of [`TransitionGraph::to_edge_list`].
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut nx = None;
        let mut ny = None;
        let mut y_range = None;
        let mut padding = 0.0;
        let mut spb = 0;
        let mut edges = Vec::new();
        let bad = |line: usize, reason: &str| Error::EdgeListParse {
            line,
            reason: reason.to_string(),
        };
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                let key = parts.next().unwrap_or("");
                let vals: Vec<&str> = parts.collect();
                let num = |i: usize| -> Result<f64> {
                    vals.get(i)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(line, "missing or malformed header value"))
                };
                match key {
                    "nx" => nx = Some(num(0)? as usize),
                    "ny" => ny = Some(num(0)? as usize),
                    "y_range" => y_range = Some((num(0)?, num(1)?)),
                    "padding" => padding = num(0)?,
                    "samples_per_box" => spb = num(0)? as usize,
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad(line, "expected `u v w`"));
            }
            let from = fields[0].parse().map_err(|_| bad(line, "bad source"))?;
            let to = fields[1].parse().map_err(|_| bad(line, "bad target"))?;
            let winding = fields[2].parse().map_err(|_| bad(line, "bad winding"))?;
            edges.push(Edge { from, to, winding });
        }
        let cover = BoxCover::new(
            nx.ok_or_else(|| bad(0, "missing nx header"))?,
            ny.ok_or_else(|| bad(0, "missing ny header"))?,
            y_range.ok_or_else(|| bad(0, "missing y_range header"))?,
        )?;
        Self::from_edges(cover, padding, spb, edges)
    }
}

/// Images of the `(s+1) × (s+1)` subgrid of `rect`, corners included.
fn sampled_images<'a>(
    map: &'a AnnulusMap,
    rect: &Rect,
    s: usize,
) -> impl Iterator<Item = LiftPoint> + 'a {
    let rect = *rect;
    (0..=s).flat_map(move |a| {
        (0..=s).map(move |b| {
            let x = rect.x0 + rect.width() * a as f64 / s as f64;
            let y = rect.y0 + rect.height() * b as f64 / s as f64;
            map.lift(LiftPoint::new(x, y))
        })
    })
}

fn image_rect(map: &AnnulusMap, rect: &Rect, s: usize) -> Rect {
    Rect::bounding(sampled_images(map, rect, s)).expect("subgrid is non-empty")
}

/// Pilot padding: twice the largest growth of a sampled image rectangle when
/// the subgrid is refined twofold, plus box diameter over samples per box.
pub fn estimate_padding(map: &AnnulusMap, cover: &BoxCover, options: &GraphOptions) -> f64 {
    let s = options.samples_per_box;
    let n = cover.len();
    let count = options.pilot_boxes.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut pilot: Vec<usize> = rand::seq::index::sample(&mut rng, n, count).into_vec();
    pilot.sort_unstable();
    let stretch = pilot
        .par_iter()
        .map(|&u| {
            let rect = cover.rect(u);
            let coarse = image_rect(map, &rect, s);
            let fine = image_rect(map, &rect, 2 * s);
            [
                coarse.x0 - fine.x0,
                fine.x1 - coarse.x1,
                coarse.y0 - fine.y0,
                fine.y1 - coarse.y1,
            ]
            .into_iter()
            .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    2.0 * stretch + cover.box_diameter() / s as f64
}

/// Builds the transition graph of `map` on `cover`: every box's sampled image
/// rectangle, inflated by the padding, is intersected with all box copies.
pub fn build_transition_graph(
    map: &AnnulusMap,
    cover: &BoxCover,
    options: &GraphOptions,
) -> Result<TransitionGraph> {
    let s = options.samples_per_box;
    if s < 4 {
        return Err(Error::InvalidGraphOptions(format!(
            "samples_per_box = {s}, need at least 4"
        )));
    }
    let (mlo, mhi) = map.y_range();
    let (clo, chi) = cover.y_range();
    if clo < mlo - 1e-12 || chi > mhi + 1e-12 {
        return Err(Error::InvalidGraphOptions(format!(
            "cover y-range [{clo}, {chi}] exceeds the map domain [{mlo}, {mhi}]"
        )));
    }
    let padding = match options.padding {
        Some(p) if !(p >= 0.0 && p.is_finite()) => {
            return Err(Error::InvalidGraphOptions(format!(
                "padding {p} must be >= 0"
            )))
        }
        Some(p) => p,
        None => estimate_padding(map, cover, options),
    };
    let nx = cover.nx() as i64;
    let ny = cover.ny() as i64;
    let w = cover.box_width();
    let h = cover.box_height();
    let per_box: Vec<Result<Vec<Edge>>> = (0..cover.len())
        .into_par_iter()
        .map(|u| {
            let img = image_rect(map, &cover.rect(u), s).inflate(padding);
            let kmin = (img.x0 / w - 1.0).ceil() as i64;
            let kmax = (img.x1 / w).floor() as i64;
            let columns = (kmax - kmin + 1).max(0) as usize;
            // an image may wrap past a full turn on coarse covers; every
            // copy it meets gets its own edge
            if columns > 2 * cover.nx() {
                return Err(Error::ImageTooWide {
                    node: u,
                    columns,
                    nx: cover.nx(),
                });
            }
            let jmin = (((img.y0 - clo) / h - 1.0).ceil() as i64).clamp(0, ny - 1);
            let jmax = (((img.y1 - clo) / h).floor() as i64).clamp(0, ny - 1);
            let mut out = Vec::with_capacity(columns * (jmax - jmin + 1) as usize);
            for k in kmin..=kmax {
                let i = k.rem_euclid(nx) as usize;
                let winding = k.div_euclid(nx) as i32;
                for j in jmin..=jmax {
                    out.push(Edge {
                        from: u,
                        to: cover.index(i, j as usize),
                        winding,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut edges = Vec::new();
    for chunk in per_box {
        edges.extend(chunk?);
    }
    TransitionGraph::from_edges(*cover, padding, s, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_dimensions() {
        let c = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        assert_eq!(c.len(), 32);
        assert_eq!(c.box_width(), 0.125);
        assert_eq!(c.box_height(), 0.25);
        assert_eq!(BoxCover::new(64, 16, (0.0, 1.0)).unwrap().len(), 1024);
        let collar = BoxCover::new(64, 16, (-0.1, 1.1)).unwrap();
        assert!((collar.box_height() - 0.075).abs() < 1e-15);
        assert!((c.box_diameter() - (0.125f64.powi(2) + 0.0625).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_covers_are_rejected() {
        assert!(BoxCover::new(3, 4, (0.0, 1.0)).is_err());
        assert!(BoxCover::new(8, 1, (0.0, 1.0)).is_err());
        assert!(BoxCover::new(8, 4, (1.0, 1.0)).is_err());
    }

    #[test]
    fn locate_prefers_the_lowest_index_on_shared_faces() {
        let c = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        assert_eq!(c.locate(LiftPoint::new(0.125, 0.25)), Some(0));
        assert_eq!(c.locate(LiftPoint::new(0.0, 0.0)), Some(0));
        assert_eq!(c.locate(LiftPoint::new(0.99, 1.0)), Some(31));
        assert_eq!(c.locate(LiftPoint::new(1.3, 0.6)), Some(c.index(2, 2)));
        assert_eq!(c.locate(LiftPoint::new(0.3, 1.2)), None);
    }

    #[test]
    fn ring_wraps_in_x_and_stops_at_boundaries() {
        let c = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        let r = c.ring(0);
        assert_eq!(r.len(), 5);
        assert!(r.contains(&7) && r.contains(&15) && r.contains(&9));
    }

    #[test]
    fn pure_twist_top_corner_box_edges() {
        // Box (0,3) = [0, 1/8] x [3/4, 1] maps affinely onto the parallelogram
        // with x-range [1/4, 5/8] and the same y-range.
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&f, &cover, &GraphOptions::default()).unwrap();
        let u = cover.index(0, 3);
        let succ: Vec<(usize, i32)> = g.successors(u).collect();
        let mut cols: Vec<usize> = succ.iter().map(|&(v, _)| cover.coords(v).0).collect();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols, vec![1, 2, 3, 4, 5]);
        let rows: Vec<usize> = succ.iter().map(|&(v, _)| cover.coords(v).1).collect();
        assert!(rows.iter().all(|&j| j == 2 || j == 3));
        assert!(succ.iter().all(|&(_, w)| w == 0));
    }

    #[test]
    fn windings_appear_across_the_seam() {
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&f, &cover, &GraphOptions::default()).unwrap();
        // bottom-left box moves left by about 1/2 and lands in the copy at -1
        let u = cover.index(0, 0);
        assert!(g.successors(u).all(|(_, w)| w == -1 || w == 0));
        assert!(g.successors(u).any(|(_, w)| w == -1));
        for u in 0..g.node_count() {
            assert!(g.out_degree(u) >= 1);
            assert!(g.successors(u).all(|(_, w)| (-1..=1).contains(&w)));
        }
    }

    #[test]
    fn images_wrapping_past_a_turn_keep_every_copy() {
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(4, 2, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&f, &cover, &GraphOptions::default()).unwrap();
        // the image of box (0, 0) spans x in [-0.5, 0.25], touching column 1
        // both one turn back and in its own copy
        let windings: Vec<i32> = g
            .successors(0)
            .filter(|&(v, _)| v == 1)
            .map(|(_, w)| w)
            .collect();
        assert_eq!(windings, vec![-1, 0]);
    }

    #[test]
    fn padding_that_covers_two_turns_is_rejected() {
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        let opts = GraphOptions {
            padding: Some(1.2),
            ..GraphOptions::default()
        };
        assert!(matches!(
            build_transition_graph(&f, &cover, &opts),
            Err(Error::ImageTooWide { .. })
        ));
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        let opts = GraphOptions {
            samples_per_box: 3,
            ..GraphOptions::default()
        };
        assert!(build_transition_graph(&f, &cover, &opts).is_err());
    }

    #[test]
    fn default_padding_is_small_for_affine_maps() {
        let f = AnnulusMap::drift_twist(0.1).unwrap();
        let cover = BoxCover::new(64, 16, (0.0, 1.0)).unwrap();
        let p = estimate_padding(&f, &cover, &GraphOptions::default());
        let floor = cover.box_diameter() / 16.0;
        assert!(p >= floor && p < floor + 1e-9, "{p}");
    }

    #[test]
    fn edge_list_round_trips() {
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(8, 4, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&f, &cover, &GraphOptions::default()).unwrap();
        let text = g.to_edge_list();
        assert!(text.contains("# nodes 32"));
        let back = TransitionGraph::parse_edge_list(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn malformed_edge_list_reports_the_line() {
        let text = "# nx 4\n# ny 2\n# y_range 0 1\n0 1\n";
        match TransitionGraph::parse_edge_list(text) {
            Err(Error::EdgeListParse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
