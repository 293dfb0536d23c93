use crate::geometry::AnnulusPoint;
use std::fmt;
use std::sync::Arc;

type PointFn = Arc<dyn Fn(AnnulusPoint) -> AnnulusPoint + Send + Sync>;

/// A map `R` of the annulus with `R ∘ R = Id`.
#[derive(Clone)]
pub struct Involution {
    name: String,
    eval: PointFn,
}

impl fmt::Debug for Involution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Involution")
            .field("name", &self.name)
            .finish()
    }
}

impl Involution {
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(AnnulusPoint) -> AnnulusPoint + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    /// `R(x, y) = (−x, y)`.
    pub fn reflection() -> Self {
        Self::new("reflection", |p| AnnulusPoint::new(-p.x, p.y))
    }

    pub fn identity() -> Self {
        Self::new("identity", |p| p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, p: AnnulusPoint) -> AnnulusPoint {
        (self.eval)(p)
    }

    /// Largest `d(R(R(p)), p)` over a `grid × grid` sample of `[0,1)×[0,1]`.
    pub fn involution_residual(&self, grid: usize) -> f64 {
        let grid = grid.max(2);
        let mut worst: f64 = 0.0;
        for i in 0..grid {
            for j in 0..grid {
                let p = AnnulusPoint::new(i as f64 / grid as f64, j as f64 / (grid - 1) as f64);
                worst = worst.max(self.apply(self.apply(p)).distance(p));
            }
        }
        worst
    }

    pub fn is_involution(&self, grid: usize, tol: f64) -> bool {
        self.involution_residual(grid) <= tol
    }
}
