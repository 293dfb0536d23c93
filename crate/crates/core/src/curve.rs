//! Essential closed curves as polylines in the cover, and the
//! curve-versus-image intersection test.

use crate::error::{Error, Result};
use crate::geometry::{AnnulusPoint, LiftPoint};
use crate::map::AnnulusMap;
use serde::Serialize;
use std::f64::consts::TAU;
use std::io::Write;

/// Distances at or below this are reported as intersections.
pub const CONTACT_TOLERANCE: f64 = 1e-12;

/// A closed curve winding once around the annulus, stored as one period of
/// its lift: vertices `v₀ … v_{n−1}` with the closing edge running from
/// `v_{n−1}` to `v₀ + (1, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssentialCurve {
    vertices: Vec<LiftPoint>,
}

impl EssentialCurve {
    /// Validates vertex count and simplicity.
    pub fn from_vertices(vertices: Vec<LiftPoint>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidCurve(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite vertex".into()));
        }
        let curve = Self { vertices };
        if !curve.is_simple() {
            return Err(Error::InvalidCurve("polyline self-intersects".into()));
        }
        Ok(curve)
    }

    /// Samples a lifted parameterization `t ∈ [0, 1) ↦ γ̃(t)` with
    /// `γ̃(1) = γ̃(0) + (1, 0)` at `resolution` points.
    pub fn from_param<F: Fn(f64) -> LiftPoint>(resolution: usize, param: F) -> Result<Self> {
        if resolution < 3 {
            return Err(Error::InvalidCurve("resolution must be at least 3".into()));
        }
        let start = param(0.0);
        let end = param(1.0);
        if (end.x - start.x - 1.0).abs() > 1e-9 || (end.y - start.y).abs() > 1e-9 {
            return Err(Error::InvalidCurve(
                "parameterization does not close up after one turn".into(),
            ));
        }
        let vertices = (0..resolution)
            .map(|k| param(k as f64 / resolution as f64))
            .collect();
        Self::from_vertices(vertices)
    }

    /// The graph `y = φ(x)` of a 1-periodic function.
    pub fn graph<F: Fn(f64) -> f64>(resolution: usize, phi: F) -> Result<Self> {
        Self::from_param(resolution, |t| LiftPoint::new(t, phi(t)))
    }

    /// The circle `y = c`.
    pub fn horizontal(c: f64, resolution: usize) -> Result<Self> {
        Self::graph(resolution, |_| c)
    }

    /// The R-symmetric cosine graph `y = c + a·cos(2πx)`.
    pub fn cosine(c: f64, amplitude: f64, resolution: usize) -> Result<Self> {
        Self::graph(resolution, |x| c + amplitude * (TAU * x).cos())
    }

    pub fn vertices(&self) -> &[LiftPoint] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge `k` of the fundamental period, the last one closing the curve.
    pub fn segment(&self, k: usize) -> (LiftPoint, LiftPoint) {
        let n = self.vertices.len();
        let a = self.vertices[k];
        let b = if k + 1 < n {
            self.vertices[k + 1]
        } else {
            self.vertices[0].translate(1.0)
        };
        (a, b)
    }

    pub fn segments(&self) -> impl Iterator<Item = (LiftPoint, LiftPoint)> + '_ {
        (0..self.vertices.len()).map(move |k| self.segment(k))
    }

    /// Largest distance between consecutive vertices.
    pub fn max_step(&self) -> f64 {
        self.segments()
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max)
    }

    /// Inserts vertices until no edge exceeds `max_step`.
    pub fn densified(&self, max_step: f64) -> Self {
        let mut out = Vec::with_capacity(self.vertices.len());
        for (a, b) in self.segments() {
            let pieces = (a.distance(b) / max_step).ceil().max(1.0) as usize;
            for k in 0..pieces {
                let t = k as f64 / pieces as f64;
                out.push(LiftPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            }
        }
        Self { vertices: out }
    }

    fn x_extent(&self) -> (f64, f64) {
        let lo = self
            .vertices
            .iter()
            .map(|v| v.x)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .vertices
            .iter()
            .map(|v| v.x)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi + 1.0)
    }

    /// No two non-adjacent edges of the projected curve meet.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let (lo, hi) = self.x_extent();
        let span = (hi - lo).ceil() as i64 + 1;
        for a in 0..n {
            let (p0, p1) = self.segment(a);
            for b in a..n {
                let (q0, q1) = self.segment(b);
                for k in -span..=span {
                    let same = a == b && k == 0;
                    let adjacent = (b == a + 1 && k == 0) || (a == 0 && b == n - 1 && k == -1);
                    if same || adjacent {
                        continue;
                    }
                    let q0k = q0.translate(k as f64);
                    let q1k = q1.translate(k as f64);
                    if segment_distance(p0, p1, q0k, q1k).0 <= CONTACT_TOLERANCE {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The lifted image polyline `f̃(γ̃)`.
    pub fn image(&self, map: &AnnulusMap) -> EssentialCurve {
        EssentialCurve {
            vertices: self.vertices.iter().map(|&v| map.lift(v)).collect(),
        }
    }

    /// Writes the vertices projected to `[0, 1) × ℝ` as `x,y` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y"])?;
        for v in &self.vertices {
            let p = v.project();
            w.write_record([p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of [`intersects_image`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CurveIntersection {
    Intersects { witness: AnnulusPoint },
    Disjoint { min_distance: f64 },
}

impl CurveIntersection {
    pub fn intersects(&self) -> bool {
        matches!(self, CurveIntersection::Intersects { .. })
    }

    pub fn min_distance(&self) -> f64 {
        match self {
            CurveIntersection::Intersects { .. } => 0.0,
            CurveIntersection::Disjoint { min_distance } => *min_distance,
        }
    }
}

/// Tests whether the polyline `γ` meets the polyline through the images of
/// its vertices, on the cylinder. Fails if consecutive vertices of `γ` are
/// farther apart than `tol`.
pub fn intersects_image(
    map: &AnnulusMap,
    curve: &EssentialCurve,
    tol: f64,
) -> Result<CurveIntersection> {
    let step = curve.max_step();
    if step > tol {
        return Err(Error::ResolutionTooCoarse { step, tol });
    }
    let image = curve.image(map);
    let (dist, witness) = polyline_distance(curve, &image);
    if dist <= CONTACT_TOLERANCE {
        Ok(CurveIntersection::Intersects {
            witness: witness.project(),
        })
    } else {
        Ok(CurveIntersection::Disjoint { min_distance: dist })
    }
}

/// Minimum distance between the projections of two periodic polylines, with
/// the closest point on `a`.
pub fn polyline_distance(a: &EssentialCurve, b: &EssentialCurve) -> (f64, LiftPoint) {
    let (alo, ahi) = a.x_extent();
    let (blo, bhi) = b.x_extent();
    let kmin = (alo - bhi).floor() as i64 - 1;
    let kmax = (ahi - blo).ceil() as i64 + 1;
    let mut best = (f64::INFINITY, a.vertices[0]);
    for (p0, p1) in a.segments() {
        for (q0, q1) in b.segments() {
            for k in kmin..=kmax {
                let shift = k as f64;
                // cheap reject on x-extents before the exact test
                let qx_lo = q0.x.min(q1.x) + shift;
                let qx_hi = q0.x.max(q1.x) + shift;
                let gap = (qx_lo - p0.x.max(p1.x)).max(p0.x.min(p1.x) - qx_hi);
                if gap > best.0 {
                    continue;
                }
                let d = segment_distance(p0, p1, q0.translate(shift), q1.translate(shift));
                if d.0 < best.0 {
                    best = d;
                }
            }
        }
    }
    best
}

fn cross(o: LiftPoint, a: LiftPoint, b: LiftPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn closest_on_segment(p: LiftPoint, a: LiftPoint, b: LiftPoint) -> LiftPoint {
    let d = b - a;
    let len2 = d.x * d.x + d.y * d.y;
    if len2 == 0.0 {
        return a;
    }
    let t = (((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2).clamp(0.0, 1.0);
    LiftPoint::new(a.x + t * d.x, a.y + t * d.y)
}

/// Distance between segments `[p0,p1]` and `[q0,q1]` and the closest point
/// on the first. Returns distance zero for crossing or touching segments.
pub fn segment_distance(
    p0: LiftPoint,
    p1: LiftPoint,
    q0: LiftPoint,
    q1: LiftPoint,
) -> (f64, LiftPoint) {
    let d1 = cross(q0, q1, p0);
    let d2 = cross(q0, q1, p1);
    let d3 = cross(p0, p1, q0);
    let d4 = cross(p0, p1, q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        let t = d1 / (d1 - d2);
        let x = LiftPoint::new(p0.x + t * (p1.x - p0.x), p0.y + t * (p1.y - p0.y));
        return (0.0, x);
    }
    let candidates = [
        (p0, closest_on_segment(p0, q0, q1)),
        (p1, closest_on_segment(p1, q0, q1)),
        (closest_on_segment(q0, p0, p1), q0),
        (closest_on_segment(q1, p0, p1), q1),
    ];
    let mut best = (f64::INFINITY, p0);
    for (on_p, on_q) in candidates {
        let d = on_p.distance(on_q);
        if d < best.0 {
            best = (d, on_p);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_segments_have_zero_distance() {
        let (d, w) = segment_distance(
            LiftPoint::new(0.0, 0.0),
            LiftPoint::new(1.0, 1.0),
            LiftPoint::new(0.0, 1.0),
            LiftPoint::new(1.0, 0.0),
        );
        assert_eq!(d, 0.0);
        assert!((w.x - 0.5).abs() < 1e-15 && (w.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collinear_overlap_counts_as_contact() {
        let (d, _) = segment_distance(
            LiftPoint::new(0.0, 0.5),
            LiftPoint::new(1.0, 0.5),
            LiftPoint::new(0.5, 0.5),
            LiftPoint::new(2.0, 0.5),
        );
        assert_eq!(d, 0.0);
    }

    #[test]
    fn parallel_segments_report_their_gap() {
        let (d, _) = segment_distance(
            LiftPoint::new(0.0, 0.5),
            LiftPoint::new(1.0, 0.5),
            LiftPoint::new(0.0, 0.525),
            LiftPoint::new(1.0, 0.525),
        );
        assert!((d - 0.025).abs() < 1e-15);
    }

    #[test]
    fn horizontal_and_cosine_curves_are_simple() {
        assert!(EssentialCurve::horizontal(0.5, 64).unwrap().is_simple());
        assert!(EssentialCurve::cosine(0.5, 0.2, 64).unwrap().is_simple());
    }

    #[test]
    fn self_crossing_curve_is_rejected() {
        // a figure-eight style wiggle in x
        let res = EssentialCurve::from_param(64, |t| {
            LiftPoint::new(t + 0.3 * (TAU * 2.0 * t).sin(), 0.5 + 0.1 * (TAU * t).sin())
        });
        assert!(matches!(res, Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn non_closing_parameterization_is_rejected() {
        let res = EssentialCurve::from_param(16, |t| LiftPoint::new(2.0 * t, 0.5));
        assert!(res.is_err());
    }

    #[test]
    fn invariant_circle_meets_its_image() {
        let f = AnnulusMap::pure_twist();
        let gamma = EssentialCurve::horizontal(0.5, 128).unwrap();
        assert!(intersects_image(&f, &gamma, 0.05).unwrap().intersects());
    }

    #[test]
    fn drift_pushes_the_middle_circle_off_itself() {
        let f = AnnulusMap::drift_twist(0.1).unwrap();
        let gamma = EssentialCurve::horizontal(0.5, 128).unwrap();
        match intersects_image(&f, &gamma, 0.05).unwrap() {
            CurveIntersection::Disjoint { min_distance } => {
                assert!((min_distance - 0.025).abs() < 1e-12, "{min_distance}")
            }
            other => panic!("expected disjoint, got {other:?}"),
        }
    }

    #[test]
    fn perturbed_twist_middle_circle_crosses_near_a_fixed_point() {
        let f = AnnulusMap::perturbed_twist(0.05).unwrap();
        let gamma = EssentialCurve::horizontal(0.5, 256).unwrap();
        match intersects_image(&f, &gamma, 0.05).unwrap() {
            CurveIntersection::Intersects { witness } => {
                let near_zero = witness.x.min(1.0 - witness.x);
                let near_half = (witness.x - 0.5).abs();
                assert!(near_zero.min(near_half) < 0.01, "{witness:?}");
            }
            other => panic!("expected intersection, got {other:?}"),
        }
    }

    #[test]
    fn coarse_resolution_is_an_error() {
        let f = AnnulusMap::pure_twist();
        let gamma = EssentialCurve::horizontal(0.5, 8).unwrap();
        assert!(matches!(
            intersects_image(&f, &gamma, 0.05),
            Err(Error::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn densify_bounds_the_step() {
        let c = EssentialCurve::horizontal(0.3, 4).unwrap().densified(0.01);
        assert!(c.max_step() <= 0.01 + 1e-15);
        assert_eq!(c.len(), 100);
    }
}
