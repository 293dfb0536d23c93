//! Fixed points of annulus twist maps, found by running the boundary
//! dichotomy on a box outer approximation.
//!
//! The pipeline covers the annulus with boxes, builds the transition graph
//! of the map, splits the chain recurrent boxes into chain transitive
//! classes with a complete Lyapunov function, and then either exhibits an
//! essential curve pushed off itself (the intersection property fails) or a
//! periodic chain through both boundaries, after which fixed points are
//! isolated by the winding number of the displacement field.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boxgraph;
pub mod conley;
pub mod curve;
pub mod diskchain;
pub mod error;
pub mod fixpoint;
pub mod geometry;
pub mod involution;
pub mod linkage;
pub mod map;
pub mod pipeline;
pub mod reversible;

pub use boxgraph::{build_transition_graph, BoxCover, Edge, GraphOptions, TransitionGraph};
pub use conley::ConleyDecomposition;
pub use curve::{intersects_image, CurveIntersection, EssentialCurve};
pub use error::{Error, Result};
pub use geometry::{AnnulusPoint, LiftPoint, Rect};
pub use involution::Involution;
pub use linkage::{boundary_linkage, Boundary, LinkageVerdict};
pub use map::{catalog_map, AnnulusMap, MapSpec, SampledLift};
