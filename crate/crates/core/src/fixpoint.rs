//! Fixed-point localization through the index of the displacement field.
//!
//! A box whose boundary avoids the fixed set has an integer index, the
//! winding number of `v(p) = h(p) − p` around its boundary. A nonzero index
//! forces a fixed point inside. The search discards boxes on which a sampled
//! lower bound of `‖v‖` is positive, subdivides the rest, and computes the
//! index on the leaves.

use crate::error::{Error, Result};
use crate::geometry::{LiftPoint, Rect};
use crate::map::AnnulusMap;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, TAU};

/// Safety factor on the finite-difference slope estimate.
const SLOPE_SAFETY: f64 = 2.0;
/// Upper limit on boundary samples before a margin failure is declared.
pub const MAX_BOUNDARY_SAMPLES: usize = 4096;
/// Offset of the search grid, as a fraction of the leaf size. Irrational
/// enough that fixed points at rational coordinates avoid box edges at
/// every level.
const GRID_SHIFT: f64 = 0.381_966_011_250_105;

/// Lower bound for `‖h(p) − p‖` over the union of `region`.
///
/// Each rectangle is sampled on a `(sx+1) × (sy+1)` grid. Every point of a
/// rectangle lies within half a cell of some grid point, so the bound is
/// the minimum over grid points of `‖v‖ − Lx·hx/2 − Ly·hy/2`, where the
/// slopes `Lx`, `Ly` are the steepest differences along the grid edges at
/// that point, doubled. Clamped at zero.
pub fn displacement_bound(map: &AnnulusMap, region: &[Rect], samples: (usize, usize)) -> f64 {
    region
        .iter()
        .map(|r| rect_bound(map, r, samples))
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

fn rect_bound(map: &AnnulusMap, rect: &Rect, (sx, sy): (usize, usize)) -> f64 {
    let sx = sx.max(1);
    let sy = sy.max(1);
    let hx = rect.width() / sx as f64;
    let hy = rect.height() / sy as f64;
    let stride = sx + 1;
    let norms: Vec<f64> = (0..=sy)
        .flat_map(|j| (0..=sx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let p = LiftPoint::new(rect.x0 + hx * i as f64, rect.y0 + hy * j as f64);
            map.displacement(p).norm()
        })
        .collect();
    let at = |i: usize, j: usize| norms[j * stride + i];
    let mut bound = f64::INFINITY;
    for j in 0..=sy {
        for i in 0..=sx {
            let d = at(i, j);
            let mut lx: f64 = 0.0;
            let mut ly: f64 = 0.0;
            if hx > 0.0 {
                if i > 0 {
                    lx = lx.max((d - at(i - 1, j)).abs() / hx);
                }
                if i < sx {
                    lx = lx.max((d - at(i + 1, j)).abs() / hx);
                }
            }
            if hy > 0.0 {
                if j > 0 {
                    ly = ly.max((d - at(i, j - 1)).abs() / hy);
                }
                if j < sy {
                    ly = ly.max((d - at(i, j + 1)).abs() / hy);
                }
            }
            let slack = SLOPE_SAFETY * 0.5 * (lx * hx + ly * hy);
            bound = bound.min(d - slack);
        }
    }
    bound
}

/// Winding of the displacement field around a box boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum IndexOutcome {
    Index {
        index: i32,
        /// Smallest sampled `‖v‖` on the boundary.
        margin: f64,
        samples: usize,
    },
    /// Some angle step stayed at or above π/2 up to the sample limit.
    MarginTooSmall { margin: f64, samples: usize },
}

/// Index of `rect`, walking its boundary counterclockwise with
/// `boundary_samples` points, doubled until every angle increment is below
/// π/2 or [`MAX_BOUNDARY_SAMPLES`] is reached.
pub fn box_index(map: &AnnulusMap, rect: &Rect, boundary_samples: usize) -> Result<IndexOutcome> {
    if boundary_samples < 64 {
        return Err(Error::InvalidArgument(format!(
            "box_index needs at least 64 boundary samples, got {boundary_samples}"
        )));
    }
    let mut n = boundary_samples;
    loop {
        let (turn, margin, max_step) = winding(map, rect, n);
        if max_step < FRAC_PI_2 && margin > 0.0 {
            return Ok(IndexOutcome::Index {
                index: (turn / TAU).round() as i32,
                margin,
                samples: n,
            });
        }
        if n >= MAX_BOUNDARY_SAMPLES {
            return Ok(IndexOutcome::MarginTooSmall { margin, samples: n });
        }
        n = (2 * n).min(MAX_BOUNDARY_SAMPLES);
    }
}

/// Total angle swept, minimum norm and largest single increment.
fn winding(map: &AnnulusMap, rect: &Rect, n: usize) -> (f64, f64, f64) {
    let per_side = n.div_ceil(4);
    let corners = [
        LiftPoint::new(rect.x0, rect.y0),
        LiftPoint::new(rect.x1, rect.y0),
        LiftPoint::new(rect.x1, rect.y1),
        LiftPoint::new(rect.x0, rect.y1),
    ];
    let mut points = Vec::with_capacity(4 * per_side + 1);
    for s in 0..4 {
        let a = corners[s];
        let b = corners[(s + 1) % 4];
        for k in 0..per_side {
            let t = k as f64 / per_side as f64;
            points.push(LiftPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    points.push(corners[0]);
    let field: Vec<LiftPoint> = points.iter().map(|&p| map.displacement(p)).collect();
    let margin = field.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    let mut max_step: f64 = 0.0;
    for w in field.windows(2) {
        let (a, b) = (w[0], w[1]);
        let step = (a.x * b.y - a.y * b.x).atan2(a.x * b.x + a.y * b.y);
        max_step = max_step.max(step.abs());
        total += step;
    }
    (total, margin, max_step)
}

/// Newton iteration on `v(p) = f̃(p) − p` with a central-difference
/// Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonConfirmation {
    pub point: LiftPoint,
    pub residual: f64,
    pub iterations: usize,
    pub inside_box: bool,
}

impl NewtonConfirmation {
    pub fn confirmed(&self) -> bool {
        self.inside_box && self.residual < 1e-10
    }
}

pub fn newton_fixed_point(
    map: &AnnulusMap,
    start: LiftPoint,
    max_iter: usize,
) -> (LiftPoint, f64, usize) {
    let v = |p: LiftPoint| map.displacement(p);
    let mut p = start;
    let mut r = v(p);
    let mut it = 0;
    while it < max_iter && r.norm() > 1e-14 {
        let h = 1e-7;
        let dx = (v(LiftPoint::new(p.x + h, p.y)) - v(LiftPoint::new(p.x - h, p.y))) * (0.5 / h);
        let dy = (v(LiftPoint::new(p.x, p.y + h)) - v(LiftPoint::new(p.x, p.y - h))) * (0.5 / h);
        let det = dx.x * dy.y - dy.x * dx.y;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let sx = (dy.y * r.x - dy.x * r.y) / det;
        let sy = (dx.x * r.y - dx.y * r.x) / det;
        let next = LiftPoint::new(p.x - sx, p.y - sy);
        let rn = v(next);
        it += 1;
        if !(rn.norm() < r.norm()) {
            break;
        }
        p = next;
        r = rn;
    }
    (p, r.norm(), it)
}

/// Box with a nonzero index, hence containing a fixed point of the lift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointCertificate {
    #[serde(rename = "box")]
    pub rect: Rect,
    pub index: i32,
    pub boundary_margin: f64,
    pub boundary_samples: usize,
    /// Index recomputed with four times the samples.
    pub recheck_index: Option<i32>,
    pub newton: NewtonConfirmation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocateOptions {
    /// Columns and rows of the initial grid.
    pub nx: usize,
    pub ny: usize,
    pub max_depth: u32,
    /// Per-axis samples for the displacement bound of one box.
    pub bound_samples: usize,
    pub boundary_samples: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 16,
            max_depth: 6,
            bound_samples: 8,
            boundary_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocateResult {
    pub certificates: Vec<FixedPointCertificate>,
    /// Leaves where the index could not be computed, merged along rows.
    pub suspicious: Vec<Rect>,
    pub suspicious_leaves: usize,
    /// Leaves with index zero.
    pub zero_index_leaves: usize,
    /// Surviving boxes per level, starting with the initial grid.
    pub survivors_per_level: Vec<usize>,
    pub leaf_width: f64,
    pub leaf_height: f64,
}

/// The initial search grid: `nx` columns over one turn and enough rows to
/// cover the map's radial range, offset so that points at dyadic
/// coordinates never sit on a box edge.
pub fn search_grid(map: &AnnulusMap, options: &LocateOptions) -> Vec<Rect> {
    let (lo, hi) = map.y_range();
    let w = 1.0 / options.nx as f64;
    let h = (hi - lo) / options.ny as f64;
    let scale = (1u64 << options.max_depth) as f64;
    let x_off = -GRID_SHIFT * w / scale;
    let y_off = lo - GRID_SHIFT * h / scale;
    let mut boxes = Vec::with_capacity(options.nx * (options.ny + 1));
    for j in 0..=options.ny {
        for i in 0..options.nx {
            let x0 = x_off + w * i as f64;
            let y0 = y_off + h * j as f64;
            boxes.push(Rect::new(x0, x0 + w, y0, y0 + h));
        }
    }
    boxes
}

/// Subdivides boxes whose displacement bound is zero down to `max_depth`
/// levels and computes the index on the remaining leaves. Certificates are
/// sorted by box position and confirmed by a finer index and Newton's
/// method.
pub fn locate_fixed_points(map: &AnnulusMap, options: &LocateOptions) -> Result<LocateResult> {
    if options.nx == 0 || options.ny == 0 {
        return Err(Error::InvalidArgument("empty search grid".into()));
    }
    if options.max_depth > 16 {
        return Err(Error::InvalidArgument(format!(
            "max_depth {} exceeds 16",
            options.max_depth
        )));
    }
    let s = options.bound_samples.max(2);
    let mut boxes = search_grid(map, options);
    let mut survivors_per_level = Vec::new();
    for depth in 0..=options.max_depth {
        let keep: Vec<bool> = boxes
            .par_iter()
            .map(|r| displacement_bound(map, std::slice::from_ref(r), (s, s)) == 0.0)
            .collect();
        boxes = boxes
            .into_iter()
            .zip(keep)
            .filter_map(|(r, k)| k.then_some(r))
            .collect();
        survivors_per_level.push(boxes.len());
        if depth < options.max_depth {
            boxes = boxes.iter().flat_map(|r| r.quadrants()).collect();
        }
    }
    let outcomes: Vec<Result<IndexOutcome>> = boxes
        .par_iter()
        .map(|r| box_index(map, r, options.boundary_samples))
        .collect();
    let mut certificates = Vec::new();
    let mut suspicious_rects = Vec::new();
    let mut zero = 0;
    for (rect, outcome) in boxes.iter().zip(outcomes) {
        match outcome? {
            IndexOutcome::Index { index: 0, .. } => zero += 1,
            IndexOutcome::Index {
                index,
                margin,
                samples,
            } => certificates.push(certify(map, *rect, index, margin, samples)?),
            IndexOutcome::MarginTooSmall { .. } => suspicious_rects.push(*rect),
        }
    }
    certificates.sort_by(|a, b| {
        (a.rect.y0, a.rect.x0)
            .partial_cmp(&(b.rect.y0, b.rect.x0))
            .expect("finite box corners")
    });
    let suspicious_leaves = suspicious_rects.len();
    let scale = (1u64 << options.max_depth) as f64;
    let (lo, hi) = map.y_range();
    Ok(LocateResult {
        certificates,
        suspicious: merge_rows(suspicious_rects),
        suspicious_leaves,
        zero_index_leaves: zero,
        survivors_per_level,
        leaf_width: 1.0 / options.nx as f64 / scale,
        leaf_height: (hi - lo) / options.ny as f64 / scale,
    })
}

fn certify(
    map: &AnnulusMap,
    rect: Rect,
    index: i32,
    margin: f64,
    samples: usize,
) -> Result<FixedPointCertificate> {
    let recheck = match box_index(map, &rect, (4 * samples).max(64))? {
        IndexOutcome::Index { index, .. } => Some(index),
        IndexOutcome::MarginTooSmall { .. } => None,
    };
    let (point, residual, iterations) = newton_fixed_point(map, rect.center(), 50);
    Ok(FixedPointCertificate {
        rect,
        index,
        boundary_margin: margin,
        boundary_samples: samples,
        recheck_index: recheck,
        newton: NewtonConfirmation {
            point,
            residual,
            iterations,
            inside_box: rect.contains_open(point),
        },
    })
}

/// Joins leaves that share a row and touch along x.
fn merge_rows(mut rects: Vec<Rect>) -> Vec<Rect> {
    rects.sort_by(|a, b| (a.y0, a.x0).partial_cmp(&(b.y0, b.x0)).expect("finite"));
    let mut out: Vec<Rect> = Vec::new();
    for r in rects {
        if let Some(last) = out.last_mut() {
            let same_row = last.y0 == r.y0 && last.y1 == r.y1;
            let touching = (r.x0 - last.x1).abs() <= 1e-12 * (1.0 + r.x0.abs());
            if same_row && touching {
                last.x1 = r.x1;
                continue;
            }
        }
        out.push(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_twist_top_line_bound_is_half() {
        let map = AnnulusMap::pure_twist();
        let top = Rect::new(0.0, 1.0, 1.0, 1.0);
        assert!((displacement_bound(&map, &[top], (64, 1)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bound_vanishes_on_a_fixed_circle() {
        let map = AnnulusMap::pure_twist();
        // grid lines straddle y = 1/2 without hitting it
        let r = Rect::new(0.0, 1.0, 0.45, 0.55 + 0.1 / 3.0);
        assert_eq!(displacement_bound(&map, &[r], (8, 4)), 0.0);
    }

    #[test]
    fn index_needs_enough_samples() {
        let map = AnnulusMap::pure_twist();
        let r = Rect::new(0.0, 0.1, 0.0, 0.1);
        assert!(box_index(&map, &r, 32).is_err());
    }

    #[test]
    fn perturbed_twist_saddle_and_center() {
        let map = AnnulusMap::perturbed_twist(0.05).unwrap();
        let at = |x: f64| match box_index(&map, &Rect::new(x - 0.1, x + 0.1, 0.4, 0.6), 64).unwrap()
        {
            IndexOutcome::Index { index, .. } => index,
            other => panic!("{other:?}"),
        };
        assert_eq!(at(0.0), -1);
        assert_eq!(at(0.5), 1);
    }

    #[test]
    fn index_through_a_fixed_circle_fails() {
        let map = AnnulusMap::pure_twist();
        let r = Rect::new(0.1, 0.2, 0.4 + 1e-3 / 3.0, 0.6);
        assert!(matches!(
            box_index(&map, &r, 64).unwrap(),
            IndexOutcome::MarginTooSmall { .. }
        ));
    }

    #[test]
    fn newton_lands_on_the_saddle() {
        let map = AnnulusMap::perturbed_twist(0.05).unwrap();
        let (p, r, _) = newton_fixed_point(&map, LiftPoint::new(0.01, 0.51), 50);
        assert!(r < 1e-12);
        assert!(p.x.abs() < 1e-9 && (p.y - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rows_merge_only_when_touching() {
        let rects = vec![
            Rect::new(0.5, 1.0, 0.0, 1.0),
            Rect::new(0.0, 0.5, 0.0, 1.0),
            Rect::new(2.0, 3.0, 0.0, 1.0),
        ];
        assert_eq!(
            merge_rows(rects),
            vec![Rect::new(0.0, 1.0, 0.0, 1.0), Rect::new(2.0, 3.0, 0.0, 1.0)]
        );
    }
}
