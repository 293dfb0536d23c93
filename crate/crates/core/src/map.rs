//! Annulus homeomorphisms represented by a chosen lift to the covering strip.
//!
//! Every map carries its lift `f̃` and the inverse lift. Maps are cheap to
//! clone (the evaluator sits behind an `Arc`) and immutable after
//! construction, so they can be shared across worker threads.

use crate::error::{Error, Result};
use crate::geometry::{wrap_unit, AnnulusPoint, LiftPoint};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Largest |ε| accepted by the shear-perturbed catalog maps.
pub const MAX_SHEAR_EPS: f64 = 0.5;

/// Evaluator of a lift and its inverse.
pub trait LiftMap: Send + Sync {
    fn lift(&self, p: LiftPoint) -> LiftPoint;
    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint;
}

/// A homeomorphism of `S¹ × [y_lo, y_hi]`, given by a lift commuting with
/// the deck translation `(x, y) ↦ (x + 1, y)`.
#[derive(Clone)]
pub struct AnnulusMap {
    name: String,
    params: BTreeMap<String, f64>,
    y_range: (f64, f64),
    inner: Arc<dyn LiftMap>,
}

impl fmt::Debug for AnnulusMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnnulusMap")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("y_range", &self.y_range)
            .finish()
    }
}

impl AnnulusMap {
    pub fn from_lift_map(
        name: impl Into<String>,
        params: BTreeMap<String, f64>,
        y_range: (f64, f64),
        inner: Arc<dyn LiftMap>,
    ) -> Self {
        Self {
            name: name.into(),
            params,
            y_range,
            inner,
        }
    }

    /// Builds a map on `S¹ × [0,1]` from closures. Without an explicit
    /// inverse the inverse lift is found by damped Newton iteration.
    pub fn from_fns<F, G>(name: impl Into<String>, lift: F, inverse: Option<G>) -> Self
    where
        F: Fn(LiftPoint) -> LiftPoint + Send + Sync + 'static,
        G: Fn(LiftPoint) -> LiftPoint + Send + Sync + 'static,
    {
        let inner = FnLift {
            lift: Box::new(lift),
            inverse: inverse.map(|g| Box::new(g) as BoxedLift),
        };
        Self::from_lift_map(name, BTreeMap::new(), (0.0, 1.0), Arc::new(inner))
    }

    /// `f̃(x, y) = (x + y − 1/2, y)`.
    pub fn pure_twist() -> Self {
        Self::from_lift_map(
            "pure_twist",
            BTreeMap::new(),
            (0.0, 1.0),
            Arc::new(PureTwist),
        )
    }

    /// `f̃(x, y) = (x′, y + ε·sin(2πx′)·y(1−y))` with `x′ = x + y − 1/2`.
    pub fn perturbed_twist(eps: f64) -> Result<Self> {
        check_shear_eps(eps)?;
        Ok(Self::from_lift_map(
            "perturbed_twist",
            BTreeMap::from([("eps".to_string(), eps)]),
            (0.0, 1.0),
            Arc::new(ShearTwist {
                eps,
                profile: ShearProfile::Sine,
            }),
        ))
    }

    /// `f̃(x, y) = (x + y − 1/2, y + ε·y(1−y))`.
    pub fn drift_twist(eps: f64) -> Result<Self> {
        check_shear_eps(eps)?;
        Ok(Self::from_lift_map(
            "drift_twist",
            BTreeMap::from([("eps".to_string(), eps)]),
            (0.0, 1.0),
            Arc::new(ShearTwist {
                eps,
                profile: ShearProfile::Constant,
            }),
        ))
    }

    pub fn custom_sampled(samples: SampledLift) -> Self {
        let params = BTreeMap::from([
            ("grid_nx".to_string(), samples.nx as f64),
            ("grid_ny".to_string(), samples.ny as f64),
        ]);
        Self::from_lift_map("custom_sampled", params, (0.0, 1.0), Arc::new(samples))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Radial extent `(y_lo, y_hi)` of the annulus the map acts on.
    pub fn y_range(&self) -> (f64, f64) {
        self.y_range
    }

    pub fn lift(&self, p: LiftPoint) -> LiftPoint {
        self.inner.lift(p)
    }

    pub fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        self.inner.inverse_lift(p)
    }

    /// Projects the lift through the covering map. Independent of the lift
    /// chosen for `p` by equivariance.
    pub fn evaluate(&self, p: AnnulusPoint) -> AnnulusPoint {
        self.lift(p.lift()).project()
    }

    pub fn evaluate_inverse(&self, p: AnnulusPoint) -> AnnulusPoint {
        self.inverse_lift(p.lift()).project()
    }

    /// Upper boundary displacement `r₁(x) = f̃(x, y_hi).x − x`.
    pub fn r1(&self, x: f64) -> f64 {
        self.lift(LiftPoint::new(x, self.y_range.1)).x - x
    }

    /// Lower boundary displacement `r₀(x) = x − f̃(x, y_lo).x`.
    pub fn r0(&self, x: f64) -> f64 {
        x - self.lift(LiftPoint::new(x, self.y_range.0)).x
    }

    /// Extension of the lift to the whole plane: outside the strip each
    /// horizontal line is moved like the nearest boundary line.
    pub fn plane_extension(&self, p: LiftPoint) -> LiftPoint {
        let (lo, hi) = self.y_range;
        if p.y >= hi {
            LiftPoint::new(self.lift(LiftPoint::new(p.x, hi)).x, p.y)
        } else if p.y <= lo {
            LiftPoint::new(self.lift(LiftPoint::new(p.x, lo)).x, p.y)
        } else {
            self.lift(p)
        }
    }

    /// Displacement field `h(p) − p` of the plane extension.
    pub fn displacement(&self, p: LiftPoint) -> LiftPoint {
        self.plane_extension(p) - p
    }

    /// Whether both boundary profiles are constant on `samples` angles.
    pub fn has_rigid_boundaries(&self, samples: usize) -> bool {
        let xs: Vec<f64> = (0..samples).map(|k| k as f64 / samples as f64).collect();
        let spread = |f: &dyn Fn(f64) -> f64| {
            let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        spread(&|x| self.r0(x)) <= 1e-12 && spread(&|x| self.r1(x)) <= 1e-12
    }

    /// Measures the map invariants on a `grid × grid` sample and on 256
    /// boundary angles.
    pub fn audit(&self, grid: usize) -> MapAudit {
        let (lo, hi) = self.y_range;
        let grid = grid.max(2);
        let mut equivariance: f64 = 0.0;
        let mut inverse: f64 = 0.0;
        for i in 0..grid {
            for j in 0..grid {
                let p = LiftPoint::new(
                    i as f64 / grid as f64,
                    lo + (hi - lo) * j as f64 / (grid - 1) as f64,
                );
                let fp = self.lift(p);
                let fq = self.lift(p.translate(1.0));
                equivariance = equivariance.max(fq.translate(-1.0).distance(fp));
                let back = self.inverse_lift(fp);
                inverse = inverse.max(back.distance(p));
            }
        }
        let mut boundary: f64 = 0.0;
        let mut min_r0 = f64::INFINITY;
        let mut min_r1 = f64::INFINITY;
        for k in 0..256 {
            let x = k as f64 / 256.0;
            let b0 = self.lift(LiftPoint::new(x, lo));
            let b1 = self.lift(LiftPoint::new(x, hi));
            boundary = boundary.max((b0.y - lo).abs()).max((b1.y - hi).abs());
            min_r0 = min_r0.min(x - b0.x);
            min_r1 = min_r1.min(b1.x - x);
        }
        MapAudit {
            equivariance_residual: equivariance,
            boundary_residual: boundary,
            inverse_residual: inverse,
            min_r0,
            min_r1,
        }
    }

    /// Checks the map invariants at the default tolerances: equivariance
    /// and boundary preservation to 1e-12, inverse consistency to 1e-9,
    /// strictly positive `r₀` and `r₁`.
    pub fn validate(&self) -> Result<MapAudit> {
        let audit = self.audit(64);
        let fail = |invariant, residual| Error::InvariantViolated {
            name: self.name.clone(),
            invariant,
            residual,
        };
        if !(audit.equivariance_residual <= 1e-12) {
            return Err(fail("lift equivariance", audit.equivariance_residual));
        }
        if !(audit.boundary_residual <= 1e-12) {
            return Err(fail("boundary preservation", audit.boundary_residual));
        }
        if !(audit.inverse_residual <= 1e-9) {
            return Err(fail("inverse consistency", audit.inverse_residual));
        }
        if !(audit.min_r0 > 0.0 && audit.min_r1 > 0.0) {
            return Err(fail("the twist condition", audit.min_r0.min(audit.min_r1)));
        }
        Ok(audit)
    }
}

/// Measured invariant residuals of an [`AnnulusMap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapAudit {
    pub equivariance_residual: f64,
    pub boundary_residual: f64,
    pub inverse_residual: f64,
    pub min_r0: f64,
    pub min_r1: f64,
}

impl MapAudit {
    pub fn twist_holds(&self) -> bool {
        self.min_r0 > 0.0 && self.min_r1 > 0.0
    }
}

/// Map name plus parameters, as read from the command line or a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    /// CSV of lift samples, required by `custom_sampled`.
    pub samples: Option<PathBuf>,
}

impl MapSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }
}

/// Instantiates one of the catalog maps.
pub fn catalog_map(spec: &MapSpec) -> Result<AnnulusMap> {
    let eps = || {
        spec.params
            .get("eps")
            .copied()
            .ok_or(Error::MissingParameter("eps"))
    };
    match spec.name.as_str() {
        "pure_twist" => Ok(AnnulusMap::pure_twist()),
        "perturbed_twist" => AnnulusMap::perturbed_twist(eps()?),
        "drift_twist" => AnnulusMap::drift_twist(eps()?),
        "custom_sampled" => {
            let path = spec
                .samples
                .as_ref()
                .ok_or(Error::MissingParameter("samples"))?;
            Ok(AnnulusMap::custom_sampled(SampledLift::from_csv_path(
                path,
            )?))
        }
        other => Err(Error::UnknownMap(other.to_string())),
    }
}

fn check_shear_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || eps.abs() > MAX_SHEAR_EPS {
        return Err(Error::ParameterOutOfRange {
            name: "eps",
            value: eps,
            reason: "|eps| must be at most 0.5 for the map to stay a homeomorphism",
        });
    }
    Ok(())
}

struct PureTwist;

impl LiftMap for PureTwist {
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        LiftPoint::new(p.x + p.y - 0.5, p.y)
    }

    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        LiftPoint::new(p.x - p.y + 0.5, p.y)
    }
}

#[derive(Clone, Copy)]
enum ShearProfile {
    Sine,
    Constant,
}

/// Twist `(x, y) ↦ (x + y − 1/2, y)` followed by the vertical shear
/// `(x′, y) ↦ (x′, y + ε·s(x′)·y(1−y))`.
struct ShearTwist {
    eps: f64,
    profile: ShearProfile,
}

impl ShearTwist {
    fn amplitude(&self, x: f64) -> f64 {
        match self.profile {
            ShearProfile::Sine => self.eps * (TAU * x).sin(),
            ShearProfile::Constant => self.eps,
        }
    }
}

impl LiftMap for ShearTwist {
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        let x = p.x + p.y - 0.5;
        let a = self.amplitude(x);
        LiftPoint::new(x, p.y + a * p.y * (1.0 - p.y))
    }

    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        // The shear is monotone in y for |a| < 1, so the inverse is a 1D root.
        let a = self.amplitude(p.x);
        let y = bisect_increasing(|y| y + a * y * (1.0 - y), p.y, 0.0, 1.0);
        LiftPoint::new(p.x - y + 0.5, y)
    }
}

/// Solves `g(t) = target` for increasing `g` on `[lo, hi]` by bisection;
/// targets outside `[g(lo), g(hi)]` clamp to the interval end.
pub(crate) fn bisect_increasing<F: Fn(f64) -> f64>(g: F, target: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if target <= g(a) {
        return a;
    }
    if target >= g(b) {
        return b;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m) < target {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    let (ga, gb) = (g(a), g(b));
    if (target - ga).abs() <= (gb - target).abs() {
        a
    } else {
        b
    }
}

/// Damped Newton solve of `f(p) = target` with a central-difference Jacobian.
pub(crate) fn newton_inverse<F: Fn(LiftPoint) -> LiftPoint>(f: F, target: LiftPoint) -> LiftPoint {
    let mut p = target - (f(target) - target);
    let mut r = f(p) - target;
    for _ in 0..100 {
        let rn = r.norm();
        if rn < 1e-15 {
            break;
        }
        let h = 1e-7;
        let fx = f(LiftPoint::new(p.x + h, p.y)) - f(LiftPoint::new(p.x - h, p.y));
        let fy = f(LiftPoint::new(p.x, p.y + h)) - f(LiftPoint::new(p.x, p.y - h));
        let (a, c) = (fx.x / (2.0 * h), fx.y / (2.0 * h));
        let (b, d) = (fy.x / (2.0 * h), fy.y / (2.0 * h));
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            break;
        }
        let step = LiftPoint::new((d * r.x - b * r.y) / det, (a * r.y - c * r.x) / det);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let q = LiftPoint::new(p.x - t * step.x, p.y - t * step.y);
            let rq = f(q) - target;
            if rq.norm() < rn {
                p = q;
                r = rq;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    p
}

type BoxedLift = Box<dyn Fn(LiftPoint) -> LiftPoint + Send + Sync>;

struct FnLift {
    lift: BoxedLift,
    inverse: Option<BoxedLift>,
}

impl LiftMap for FnLift {
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        (self.lift)(p)
    }

    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        match &self.inverse {
            Some(inv) => inv(p),
            None => newton_inverse(|q| (self.lift)(q), p),
        }
    }
}

/// Lift given by samples on the grid `x_i = i/nx`, `y_j = j/(ny−1)`,
/// interpolated bilinearly in the displacement `f̃(p) − p` (which is
/// periodic in x, so equivariance holds by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLift {
    nx: usize,
    ny: usize,
    /// Row-major displacement samples, index `j * nx + i`.
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl SampledLift {
    /// Builds samples from lift values `fx, fy` given row-major (y outer,
    /// x inner) and checks boundary preservation, the twist signs and
    /// monotonicity along rows and columns.
    pub fn from_values(nx: usize, ny: usize, fx: &[f64], fy: &[f64]) -> Result<Self> {
        if nx < 3 || ny < 2 {
            return Err(Error::InvalidSamples(format!(
                "grid {nx}x{ny} too small (need at least 3x2)"
            )));
        }
        if fx.len() != nx * ny || fy.len() != nx * ny {
            return Err(Error::InvalidSamples(format!(
                "expected {} samples, got {}",
                nx * ny,
                fx.len().min(fy.len())
            )));
        }
        if fx.iter().chain(fy).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSamples("non-finite lift value".into()));
        }
        let xg = |i: usize| i as f64 / nx as f64;
        let yg = |j: usize| j as f64 / (ny - 1) as f64;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let next = if i + 1 < nx {
                    fx[k + 1]
                } else {
                    fx[j * nx] + 1.0
                };
                if !(next > fx[k]) {
                    return Err(Error::InvalidSamples(format!(
                        "x-component not increasing along row {j} at column {i}"
                    )));
                }
                if j + 1 < ny && !(fy[k + nx] > fy[k]) {
                    return Err(Error::InvalidSamples(format!(
                        "y-component not increasing along column {i} at row {j}"
                    )));
                }
            }
        }
        for i in 0..nx {
            let bottom = i;
            let top = (ny - 1) * nx + i;
            if fy[bottom].abs() > 1e-12 || (fy[top] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSamples(format!(
                    "boundary circles not preserved at column {i}"
                )));
            }
            if !(fx[top] - xg(i) > 0.0) || !(fx[bottom] - xg(i) < 0.0) {
                return Err(Error::InvalidSamples(format!(
                    "twist condition fails at column {i}"
                )));
            }
        }
        let mut dx = Vec::with_capacity(nx * ny);
        let mut dy = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                dx.push(fx[k] - xg(i));
                dy.push(fy[k] - yg(j));
            }
        }
        Ok(Self { nx, ny, dx, dy })
    }

    /// Samples an analytic lift on the grid.
    pub fn from_fn<F: Fn(LiftPoint) -> LiftPoint>(nx: usize, ny: usize, f: F) -> Result<Self> {
        let mut fx = Vec::with_capacity(nx * ny);
        let mut fy = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let p = f(LiftPoint::new(
                    i as f64 / nx as f64,
                    j as f64 / (ny.max(2) - 1) as f64,
                ));
                fx.push(p.x);
                fy.push(p.y);
            }
        }
        Self::from_values(nx, ny, &fx, &fy)
    }

    /// Reads a CSV with header `x,y,fx,fy` in row-major grid order. The
    /// grid dimensions are inferred from the distinct coordinates.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["x", "y", "fx", "fy"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::InvalidSamples(format!(
                "header must be `x,y,fx,fy`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut vals = [0.0; 4];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec[k]
                    .parse()
                    .map_err(|_| Error::InvalidSamples(format!("bad number `{}`", &rec[k])))?;
            }
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::InvalidSamples("no samples".into()));
        }
        let y0 = rows[0][1];
        let nx = rows.iter().take_while(|r| r[1] == y0).count();
        if nx == 0 || rows.len() % nx != 0 {
            return Err(Error::InvalidSamples(
                "sample count is not a multiple of the row length".into(),
            ));
        }
        let ny = rows.len() / nx;
        for (k, r) in rows.iter().enumerate() {
            let (i, j) = (k % nx, k / nx);
            let ex = i as f64 / nx as f64;
            let ey = j as f64 / (ny.max(2) - 1) as f64;
            if (r[0] - ex).abs() > 1e-9 || (r[1] - ey).abs() > 1e-9 {
                return Err(Error::InvalidSamples(format!(
                    "sample {k} at ({}, {}) is off the expected grid point ({ex}, {ey})",
                    r[0], r[1]
                )));
            }
        }
        let fx: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        let fy: Vec<f64> = rows.iter().map(|r| r[3]).collect();
        Self::from_values(nx, ny, &fx, &fy)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "fx", "fy"])?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                let x = i as f64 / self.nx as f64;
                let y = j as f64 / (self.ny - 1) as f64;
                w.write_record([
                    x.to_string(),
                    y.to_string(),
                    (x + self.dx[k]).to_string(),
                    (y + self.dy[k]).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn interpolate(&self, p: LiftPoint) -> LiftPoint {
        let u = wrap_unit(p.x) * self.nx as f64;
        let i = (u.floor() as usize).min(self.nx - 1);
        let s = u - i as f64;
        let i1 = (i + 1) % self.nx;
        let t = p.y.clamp(0.0, 1.0) * (self.ny - 1) as f64;
        let j = (t.floor() as usize).min(self.ny - 2);
        let r = t - j as f64;
        let k00 = j * self.nx + i;
        let k10 = j * self.nx + i1;
        let k01 = (j + 1) * self.nx + i;
        let k11 = (j + 1) * self.nx + i1;
        let blend = |v: &[f64]| {
            (1.0 - s) * (1.0 - r) * v[k00]
                + s * (1.0 - r) * v[k10]
                + (1.0 - s) * r * v[k01]
                + s * r * v[k11]
        };
        LiftPoint::new(blend(&self.dx), blend(&self.dy))
    }
}

impl LiftMap for SampledLift {
    fn lift(&self, p: LiftPoint) -> LiftPoint {
        p + self.interpolate(p)
    }

    fn inverse_lift(&self, p: LiftPoint) -> LiftPoint {
        newton_inverse(|q| self.lift(q), p)
    }
}
