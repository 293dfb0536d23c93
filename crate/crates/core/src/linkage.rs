//! The boundary dichotomy: either one chain transitive class touches both
//! boundary rows, or a Lyapunov sublevel set yields an essential curve that
//! is pushed off itself by the map. Also boundary rotation numbers and the
//! collar extension that makes both boundaries rigid rotations.

use crate::boxgraph::BoxCover;
use crate::conley::ConleyDecomposition;
use crate::curve::{intersects_image, CurveIntersection, EssentialCurve};
use crate::error::{Error, Result};
use crate::geometry::LiftPoint;
use crate::map::{bisect_increasing, AnnulusMap, LiftMap};
use serde::Serialize;
use std::sync::Arc;

/// Which boundary circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Bottom,
    Top,
}

/// Essential curve disjoint from its image, cut out of a level band of the
/// Lyapunov function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatingCurve {
    pub level: f64,
    /// Width of the gap between class values that `level` sits in.
    pub band_thickness: f64,
    pub curve: EssentialCurve,
    pub min_distance: f64,
    /// Candidate levels rejected before this one.
    pub rejected_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkageVerdict {
    pub linked: bool,
    /// Class meeting both boundary rows, when linked.
    pub component: Option<usize>,
    /// Separating curve, when not linked.
    pub witness: Option<SeparatingCurve>,
}

fn boundary_classes(
    decomp: &ConleyDecomposition,
    cover: &BoxCover,
    row: usize,
) -> Result<Vec<usize>> {
    let mut classes: Vec<usize> = cover.row(row).filter_map(|u| decomp.class_of[u]).collect();
    if classes.is_empty() {
        return Err(Error::BoundaryNotRecurrent { row });
    }
    classes.sort_unstable();
    classes.dedup();
    Ok(classes)
}

/// Classes meeting both boundary rows, smallest first.
pub fn linked_classes(decomp: &ConleyDecomposition, cover: &BoxCover) -> Result<Vec<usize>> {
    let bottom = boundary_classes(decomp, cover, 0)?;
    let top = boundary_classes(decomp, cover, cover.ny() - 1)?;
    Ok(bottom.into_iter().filter(|c| top.contains(c)).collect())
}

/// Decides whether the two boundary rows share a chain transitive class.
/// When they do not, returns the separating curve as the witness.
pub fn boundary_linkage(
    decomp: &ConleyDecomposition,
    cover: &BoxCover,
    map: &AnnulusMap,
) -> Result<LinkageVerdict> {
    let shared = linked_classes(decomp, cover)?;
    if let Some(&component) = shared.first() {
        return Ok(LinkageVerdict {
            linked: true,
            component: Some(component),
            witness: None,
        });
    }
    let witness = extract_separating_curve(decomp, cover, map)?;
    Ok(LinkageVerdict {
        linked: false,
        component: None,
        witness: Some(witness),
    })
}

/// Picks a level `c` between the class values on the two boundary sides,
/// takes the sublevel set `{g < c}` (forward invariant in the graph), and
/// traces its interface with the complement as a staircase curve. Levels are
/// tried from the widest gap down until the curve verifiably misses its
/// image.
pub fn extract_separating_curve(
    decomp: &ConleyDecomposition,
    cover: &BoxCover,
    map: &AnnulusMap,
) -> Result<SeparatingCurve> {
    if !linked_classes(decomp, cover)?.is_empty() {
        return Err(Error::BoundariesLinked);
    }
    let values = &decomp.lyapunov.class_values;
    let side_values = |row| -> Result<Vec<f64>> {
        Ok(boundary_classes(decomp, cover, row)?
            .into_iter()
            .map(|c| values[c])
            .collect())
    };
    let bottom = side_values(0)?;
    let top = side_values(cover.ny() - 1)?;
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    // The side with the smaller values is the attractor side.
    let (lo, hi, attractor_on_top) = if max(&top) < min(&bottom) {
        (max(&top), min(&bottom), true)
    } else if max(&bottom) < min(&top) {
        (max(&bottom), min(&top), false)
    } else {
        return Err(Error::NoSeparatingBand(
            "boundary class values interleave".into(),
        ));
    };

    let mut distinct: Vec<f64> = values
        .iter()
        .cloned()
        .filter(|&v| v >= lo && v <= hi)
        .collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("class values are finite"));
    distinct.dedup();
    let mut gaps: Vec<(f64, f64)> = distinct
        .windows(2)
        .map(|w| (w[1] - w[0], 0.5 * (w[0] + w[1])))
        .collect();
    // widest first; ties by lower level
    gaps.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });

    let g = &decomp.lyapunov.values;
    let step = cover.box_width().min(cover.box_height());
    let tol = cover.box_width().max(cover.box_height());
    let mut rejected = 0;
    let mut last_reason = String::from("no gap between boundary class values");
    for (thickness, level) in gaps {
        let in_sublevel: Vec<bool> = g.iter().map(|&v| v < level).collect();
        let curve = match staircase(cover, &in_sublevel, attractor_on_top) {
            Ok(c) => c.densified(step),
            Err(e) => {
                last_reason = e.to_string();
                rejected += 1;
                continue;
            }
        };
        if !curve.is_simple() {
            last_reason = format!("curve at level {level} self-intersects");
            rejected += 1;
            continue;
        }
        match intersects_image(map, &curve, tol)? {
            CurveIntersection::Disjoint { min_distance } => {
                return Ok(SeparatingCurve {
                    level,
                    band_thickness: thickness,
                    curve,
                    min_distance,
                    rejected_levels: rejected,
                })
            }
            CurveIntersection::Intersects { witness } => {
                last_reason = format!(
                    "curve at level {level} meets its image near ({:.4}, {:.4})",
                    witness.x, witness.y
                );
                rejected += 1;
            }
        }
    }
    Err(Error::NoSeparatingBand(last_reason))
}

/// Interface between the column-wise hull of `set` on the attractor side and
/// the rest of the cover.
fn staircase(cover: &BoxCover, set: &[bool], attractor_on_top: bool) -> Result<EssentialCurve> {
    let nx = cover.nx();
    let ny = cover.ny();
    let (y_lo, _) = cover.y_range();
    let h = cover.box_height();
    let w = cover.box_width();
    let mut levels = Vec::with_capacity(nx);
    for i in 0..nx {
        let level = if attractor_on_top {
            // lowest row b with rows b..ny all in the set
            let mut b = ny;
            while b > 0 && set[cover.index(i, b - 1)] {
                b -= 1;
            }
            b
        } else {
            // rows 0..b all in the set
            let mut b = 0;
            while b < ny && set[cover.index(i, b)] {
                b += 1;
            }
            b
        };
        if level == 0 || level == ny {
            return Err(Error::NoSeparatingBand(format!(
                "column {i} has no interface strictly inside the annulus"
            )));
        }
        levels.push(y_lo + level as f64 * h);
    }
    let mut vertices: Vec<LiftPoint> = Vec::with_capacity(2 * nx);
    for (i, &y) in levels.iter().enumerate() {
        let a = LiftPoint::new(i as f64 * w, y);
        let b = LiftPoint::new((i + 1) as f64 * w, y);
        if vertices.last() != Some(&a) {
            vertices.push(a);
        }
        vertices.push(b);
    }
    // the last vertex coincides with the first one translated by a turn
    if let (Some(first), Some(last)) = (vertices.first().copied(), vertices.last().copied()) {
        if last == first.translate(1.0) {
            vertices.pop();
        }
    }
    // drop collinear interior points on horizontal runs
    let n = vertices.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let prev = if k == 0 {
            vertices[n - 1].translate(-1.0)
        } else {
            vertices[k - 1]
        };
        let next = if k + 1 == n {
            vertices[0].translate(1.0)
        } else {
            vertices[k + 1]
        };
        let cur = vertices[k];
        let collinear =
            (prev.y == cur.y && cur.y == next.y) || (prev.x == cur.x && cur.x == next.x);
        if !collinear {
            out.push(cur);
        }
    }
    if out.len() < 3 {
        // a flat circle: keep evenly spaced vertices instead
        let y = levels[0];
        out = (0..nx).map(|i| LiftPoint::new(i as f64 * w, y)).collect();
    }
    EssentialCurve::from_vertices(out)
}

/// Boundary rotation number estimate with its `1/n` error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationNumber {
    pub value: f64,
    pub error_bound: f64,
    pub iterations: u64,
}

/// `(f̃ⁿ(0, b).x) / n` on the chosen boundary circle.
pub fn rotation_number(
    map: &AnnulusMap,
    boundary: Boundary,
    iterations: u64,
) -> Result<RotationNumber> {
    if iterations < 100 {
        return Err(Error::InvalidArgument(format!(
            "rotation number needs at least 100 iterations, got {iterations}"
        )));
    }
    let (lo, hi) = map.y_range();
    let y = match boundary {
        Boundary::Bottom => lo,
        Boundary::Top => hi,
    };
    // Track the integer part separately so the fractional position keeps
    // full precision over long orbits.
    let mut turns: i64 = 0;
    let mut x = 0.0f64;
    for _ in 0..iterations {
        let next = map.lift(LiftPoint::new(x, y)).x;
        let whole = next.floor();
        turns += whole as i64;
        x = next - whole;
    }
    let total = turns as f64 + x;
    Ok(RotationNumber {
        value: total / iterations as f64,
        error_bound: 1.0 / iterations as f64,
        iterations,
    })
}

/// Extension of a map to `S¹ × [y_lo − δ, y_hi + δ]` by linear
/// interpolation in two collars between the boundary map and the rigid
/// rotation by the boundary rotation number.
pub struct CollarExtension {
    base: AnnulusMap,
    delta: f64,
    alpha: f64,
    beta: f64,
}

impl CollarExtension {
    fn upper_weights(&self, y: f64) -> (f64, f64) {
        let (_, hi) = self.base.y_range();
        ((hi + self.delta - y) / self.delta, (y - hi) / self.delta)
    }

    fn lower_weights(&self, y: f64) -> (f64, f64) {
        let (lo, _) = self.base.y_range();
        ((y - lo + self.delta) / self.delta, -(y - lo) / self.delta)
    }
}

impl LiftMap for CollarExtension {
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let (lo, hi) = self.base.y_range();
        if p.y > hi {
            // (1+δ−y)/δ · f̃(x,1) + (y−1)/δ · (x+β, 1+δ)
            let (a, b) = self.upper_weights(p.y);
            let f = self.base.lift(LiftPoint::new(p.x, hi));
            LiftPoint::new(
                a * f.x + b * (p.x + self.beta),
                a * f.y + b * (hi + self.delta),
            )
        } else if p.y < lo {
            // (y+δ)/δ · f̃(x,0) − y/δ · (x+α, −δ)
            let (a, b) = self.lower_weights(p.y);
            let f = self.base.lift(LiftPoint::new(p.x, lo));
            LiftPoint::new(
                a * f.x + b * (p.x + self.alpha),
                a * f.y + b * (lo - self.delta),
            )
        } else {
            self.base.lift(p)
        }
    }

    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        let (lo, hi) = self.base.y_range();
        if p.y > hi || p.y < lo {
            // each collar circle is preserved and moved by an increasing
            // circle map, so invert in x alone
            let phi = |x: f64| self.lift(LiftPoint::new(x, p.y)).x;
            let reach = self.alpha.abs().max(self.beta.abs())
                + 2.0
                + self.base.r0(p.x).abs()
                + self.base.r1(p.x).abs();
            let x = bisect_increasing(phi, p.x, p.x - reach, p.x + reach);
            LiftPoint::new(x, p.y)
        } else {
            self.base.inverse_lift(p)
        }
    }
}

/// Collar extension using the given boundary rotation numbers: `alpha` on
/// the lower boundary (negative under the twist condition), `beta` on the
/// upper one.
pub fn collar_extend_with(
    map: &AnnulusMap,
    delta: f64,
    alpha: f64,
    beta: f64,
) -> Result<AnnulusMap> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::ParameterOutOfRange {
            name: "delta",
            value: delta,
            reason: "collar width must lie in (0, 0.5]",
        });
    }
    let (lo, hi) = map.y_range();
    let mut params = map.params().clone();
    params.insert("collar_delta".into(), delta);
    params.insert("collar_alpha".into(), alpha);
    params.insert("collar_beta".into(), beta);
    Ok(AnnulusMap::from_lift_map(
        format!("{}+collar", map.name()),
        params,
        (lo - delta, hi + delta),
        Arc::new(CollarExtension {
            base: map.clone(),
            delta,
            alpha,
            beta,
        }),
    ))
}

/// Collar extension with rotation numbers measured over `iterations` steps.
pub fn collar_extend(map: &AnnulusMap, delta: f64, iterations: u64) -> Result<AnnulusMap> {
    if !(delta > 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "delta",
            value: delta,
            reason: "collar width must be positive",
        });
    }
    let alpha = rotation_number(map, Boundary::Bottom, iterations)?.value;
    let beta = rotation_number(map, Boundary::Top, iterations)?.value;
    collar_extend_with(map, delta, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxgraph::{build_transition_graph, GraphOptions};

    #[test]
    fn pure_twist_boundaries_rotate_by_a_half() {
        let f = AnnulusMap::pure_twist();
        let top = rotation_number(&f, Boundary::Top, 1_000_000).unwrap();
        assert!((top.value - 0.5).abs() <= 1e-6);
        let bottom = rotation_number(&f, Boundary::Bottom, 1000).unwrap();
        assert!((bottom.value + 0.5).abs() <= bottom.error_bound);
    }

    #[test]
    fn too_few_iterations_is_an_error() {
        assert!(rotation_number(&AnnulusMap::pure_twist(), Boundary::Top, 99).is_err());
    }

    #[test]
    fn collar_on_pure_twist_is_rigid_outside() {
        let f = AnnulusMap::pure_twist();
        let g = collar_extend(&f, 0.1, 1000).unwrap();
        assert_eq!(g.y_range(), (-0.1, 1.1));
        let p = g.lift(LiftPoint::new(0.3, 1.1));
        assert!((p.x - 0.8).abs() < 1e-12 && (p.y - 1.1).abs() < 1e-15);
        // halfway through the collar: 0.5·0.5 + 0.5·0.5
        let q = g.lift(LiftPoint::new(0.3, 1.05));
        assert!((q.x - 0.8).abs() < 1e-12 && (q.y - 1.05).abs() < 1e-12);
        let inside = LiftPoint::new(0.3, 0.7);
        assert_eq!(g.lift(inside), f.lift(inside));
        g.validate().unwrap();
    }

    #[test]
    fn collar_width_is_checked() {
        let f = AnnulusMap::pure_twist();
        assert!(collar_extend(&f, 0.0, 1000).is_err());
        assert!(collar_extend(&f, -0.1, 1000).is_err());
    }

    #[test]
    fn drift_twist_is_not_linked_and_yields_a_witness() {
        let f = AnnulusMap::drift_twist(0.1).unwrap();
        let cover = BoxCover::new(32, 8, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&f, &cover, &GraphOptions::default()).unwrap();
        let d = ConleyDecomposition::compute(&g).unwrap();
        let verdict = boundary_linkage(&d, &cover, &f).unwrap();
        assert!(!verdict.linked);
        let w = verdict.witness.unwrap();
        assert!(w.min_distance > 0.0);
        // the witness is re-checked independently
        let again = intersects_image(&f, &w.curve, 1.0).unwrap();
        assert!(!again.intersects());
    }

    #[test]
    fn linked_input_has_no_separating_curve() {
        let f = AnnulusMap::pure_twist();
        let cover = BoxCover::new(16, 4, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&f, &cover, &GraphOptions::default()).unwrap();
        let d = ConleyDecomposition::compute(&g).unwrap();
        assert!(matches!(
            extract_separating_curve(&d, &cover, &f),
            Err(Error::BoundariesLinked)
        ));
        assert!(boundary_linkage(&d, &cover, &f).unwrap().linked);
    }
}
