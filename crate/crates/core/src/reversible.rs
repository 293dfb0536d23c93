//! Reversible maps: `R ∘ f ∘ R = f⁻¹` for an involution `R`.
//!
//! For such maps the recurrent set is `R`-invariant and a symmetric
//! essential curve always meets its image, since `f⁻¹(γ)` and `f(γ)` are
//! exchanged by `R`.

use crate::boxgraph::BoxCover;
use crate::conley::ConleyDecomposition;
use crate::curve::{intersects_image, segment_distance, CurveIntersection, EssentialCurve};
use crate::error::Result;
use crate::geometry::{AnnulusPoint, LiftPoint};
use crate::involution::Involution;
use crate::map::{AnnulusMap, LiftMap};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversibilityCheck {
    pub passed: bool,
    pub max_residual: f64,
    pub worst_point: AnnulusPoint,
    pub tolerance: f64,
}

/// Largest `d(R(f(R(p))), f⁻¹(p))` over a `grid × grid` sample of the
/// annulus.
pub fn check_reversibility(
    map: &AnnulusMap,
    r: &Involution,
    grid: usize,
    tol: f64,
) -> ReversibilityCheck {
    let grid = grid.max(2);
    let (lo, hi) = map.y_range();
    let mut worst = (0.0f64, AnnulusPoint::new(0.0, lo));
    for i in 0..grid {
        for j in 0..grid {
            let p = AnnulusPoint::new(
                i as f64 / grid as f64,
                lo + (hi - lo) * j as f64 / (grid - 1) as f64,
            );
            let lhs = r.apply(map.evaluate(r.apply(p)));
            let rhs = map.evaluate_inverse(p);
            let d = lhs.distance(rhs);
            if d > worst.0 {
                worst = (d, p);
            }
        }
    }
    ReversibilityCheck {
        passed: worst.0 <= tol,
        max_residual: worst.0,
        worst_point: worst.1,
        tolerance: tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SymmetryCheck {
    pub passed: bool,
    /// Recurrent boxes whose mirror box is not recurrent, plus the converse.
    pub symmetric_difference: usize,
    /// Mirror boxes with no recurrent box within one ring.
    pub beyond_slack: usize,
}

/// Compares the recurrent box set with its image under `R`, snapping box
/// centers to boxes and allowing a one-box ring of slack.
pub fn check_recurrent_symmetry(
    decomp: &ConleyDecomposition,
    r: &Involution,
    cover: &BoxCover,
) -> SymmetryCheck {
    let recurrent = decomp.recurrent_mask();
    let mirror = |u: usize| -> Option<usize> {
        let c = cover.center(u);
        let q = r.apply(AnnulusPoint::new(c.x, c.y));
        cover.locate(LiftPoint::new(q.x, q.y))
    };
    let mut diff = 0;
    let mut beyond = 0;
    for u in 0..cover.len() {
        if !recurrent[u] {
            continue;
        }
        match mirror(u) {
            Some(v) if recurrent[v] => {}
            Some(v) => {
                diff += 1;
                if !cover.ring(v).into_iter().any(|w| recurrent[w]) {
                    beyond += 1;
                }
            }
            None => {
                diff += 1;
                beyond += 1;
            }
        }
    }
    // the converse direction: non-recurrent boxes whose mirror is recurrent
    for u in 0..cover.len() {
        if recurrent[u] {
            continue;
        }
        if let Some(v) = mirror(u) {
            if recurrent[v] {
                diff += 1;
                if !cover.ring(u).into_iter().any(|w| recurrent[w]) {
                    beyond += 1;
                }
            }
        }
    }
    SymmetryCheck {
        passed: beyond == 0,
        symmetric_difference: diff,
        beyond_slack: beyond,
    }
}

/// Largest distance from a mirrored vertex `R(v)` to `γ`. For an
/// isometric `R` this is also the largest distance from `γ` to `R(γ)`.
pub fn curve_asymmetry(curve: &EssentialCurve, r: &Involution) -> f64 {
    let mirrored: Vec<LiftPoint> = curve
        .vertices()
        .iter()
        .map(|v| {
            let q = r.apply(AnnulusPoint::new(v.x, v.y));
            LiftPoint::new(q.x, q.y)
        })
        .collect();
    one_sided(&mirrored, curve)
}

/// Largest distance from `points` to the periodic polyline `curve`.
fn one_sided(points: &[LiftPoint], curve: &EssentialCurve) -> f64 {
    let segs: Vec<(LiftPoint, LiftPoint)> = curve.segments().collect();
    points
        .iter()
        .map(|&p| {
            let mut best = f64::INFINITY;
            for &(a, b) in &segs {
                for k in -2..=2 {
                    let q = p.translate(k as f64);
                    best = best.min(segment_distance(q, q, a, b).0);
                }
            }
            best
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SymmetricCurveVerdict {
    Checked {
        intersection: CurveIntersection,
        /// The pair is reversible but the curve missed its image.
        anomaly: bool,
    },
    NotSymmetric {
        asymmetry: f64,
    },
}

impl SymmetricCurveVerdict {
    pub fn intersects(&self) -> bool {
        matches!(self, SymmetricCurveVerdict::Checked { intersection, .. } if intersection.intersects())
    }
}

/// Runs [`intersects_image`] on every `R`-symmetric curve in `curves`;
/// curves farther than `symmetry_tol` from their mirror image are rejected.
pub fn check_symmetric_curve_intersection(
    map: &AnnulusMap,
    r: &Involution,
    curves: &[EssentialCurve],
    symmetry_tol: f64,
    reversible: bool,
) -> Result<Vec<SymmetricCurveVerdict>> {
    curves
        .iter()
        .map(|c| {
            let asymmetry = curve_asymmetry(c, r);
            if asymmetry > symmetry_tol {
                return Ok(SymmetricCurveVerdict::NotSymmetric { asymmetry });
            }
            let intersection = intersects_image(map, c, c.max_step())?;
            Ok(SymmetricCurveVerdict::Checked {
                anomaly: reversible && !intersection.intersects(),
                intersection,
            })
        })
        .collect()
}

/// Three horizontal circles and five cosine graphs, all symmetric under
/// `(x, y) ↦ (−x, y)`.
pub fn standard_symmetric_curves(resolution: usize) -> Result<Vec<EssentialCurve>> {
    let mut out = Vec::new();
    for c in [0.25, 0.5, 0.75] {
        out.push(EssentialCurve::horizontal(c, resolution)?);
    }
    for (c, a) in [
        (0.5, 0.1),
        (0.5, 0.2),
        (0.5, 0.3),
        (0.3, 0.05),
        (0.7, -0.05),
    ] {
        out.push(EssentialCurve::cosine(c, a, resolution)?);
    }
    Ok(out)
}

/// Vertical logistic flow `ẏ = a(x)·y(1−y)` with `a(x) = (ε/2)·sin(2πx)`,
/// run for time `t`.
fn logistic_flow(eps: f64, t: f64, p: LiftPoint) -> LiftPoint {
    let a = 0.5 * eps * (std::f64::consts::TAU * p.x).sin();
    let e = (a * t).exp();
    LiftPoint::new(p.x, p.y * e / (1.0 - p.y + p.y * e))
}

struct SymmetricShearTwist {
    eps: f64,
}

impl LiftMap for SymmetricShearTwist {
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let q = logistic_flow(self.eps, 0.5, p);
        let q = LiftPoint::new(q.x + q.y - 0.5, q.y);
        logistic_flow(self.eps, 0.5, q)
    }

    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        let q = logistic_flow(self.eps, -0.5, p);
        let q = LiftPoint::new(q.x - q.y + 0.5, q.y);
        logistic_flow(self.eps, -0.5, q)
    }
}

/// `S ∘ T ∘ S` with `T` the pure twist and `S` the half-time logistic flow.
/// `R S R = S⁻¹` and `R T R = T⁻¹`, so the composite is reversible under
/// `(x, y) ↦ (−x, y)`. It has fixed points at `(0, 1/2)` and `(1/2, 1/2)`.
pub fn symmetric_shear_twist(eps: f64) -> AnnulusMap {
    AnnulusMap::from_lift_map(
        "symmetric_shear_twist",
        BTreeMap::from([("eps".to_string(), eps)]),
        (0.0, 1.0),
        Arc::new(SymmetricShearTwist { eps }),
    )
}
