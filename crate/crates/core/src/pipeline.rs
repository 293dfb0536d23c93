//! End-to-end run of the boundary dichotomy on one map.
//!
//! Steps: twist check, collar extension when a boundary is not rigid,
//! transition graph, chain recurrence, boundary linkage, and then either the
//! separating-curve witness or the periodic chain, displacement bound, disk
//! chain gate and fixed-point search.

use crate::boxgraph::{build_transition_graph, BoxCover, GraphOptions, TransitionGraph};
use crate::conley::{ConleyDecomposition, DecompositionReport};
use crate::diskchain::{
    build_disk_chain, default_winding_window, find_periodic_boundary_chain, DiskChainOutcome,
    PeriodicEpsilonChain,
};
use crate::error::{Error, Result};
use crate::fixpoint::{
    displacement_bound, locate_fixed_points, FixedPointCertificate, LocateOptions,
};
use crate::geometry::Rect;
use crate::linkage::{boundary_linkage, collar_extend, LinkageVerdict, SeparatingCurve};
use crate::map::{AnnulusMap, MapAudit};
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub nx: usize,
    pub ny: usize,
    pub samples_per_box: usize,
    /// `None` selects the pilot padding estimate.
    pub padding: Option<f64>,
    pub pilot_boxes: usize,
    pub seed: u64,
    pub collar_delta: f64,
    pub rotation_iterations: u64,
    pub max_depth: u32,
    pub bound_samples: usize,
    pub boundary_samples: usize,
    /// `None` selects the default window from the boundary displacements.
    pub winding_window: Option<i64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 16,
            samples_per_box: 16,
            padding: None,
            pilot_boxes: 64,
            seed: 0,
            collar_delta: 0.1,
            rotation_iterations: 100_000,
            max_depth: 6,
            bound_samples: 8,
            boundary_samples: 64,
            winding_window: None,
        }
    }
}

impl PipelineConfig {
    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            samples_per_box: self.samples_per_box,
            padding: self.padding,
            pilot_boxes: self.pilot_boxes,
            seed: self.seed,
        }
    }

    pub fn locate_options(&self) -> LocateOptions {
        LocateOptions {
            nx: self.nx,
            ny: self.ny,
            max_depth: self.max_depth,
            bound_samples: self.bound_samples,
            boundary_samples: self.boundary_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// At least one box with nonzero index.
    Certified,
    /// The boundaries are not linked: an essential curve misses its image,
    /// so the intersection property fails.
    HypothesisVoid,
    /// Linked, but no isolated fixed point at this resolution.
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Certified => 0,
            Verdict::HypothesisVoid => 2,
            Verdict::Inconclusive => 3,
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Verdict::Certified => "fixed point(s) certified",
            Verdict::HypothesisVoid => "intersection property fails; theorem hypothesis void",
            Verdict::Inconclusive => {
                "linked boundaries but no isolated fixed point at this resolution"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: &'static str,
    /// What the step stands for in the argument.
    pub role: &'static str,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSummary {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub y_range: (f64, f64),
}

impl MapSummary {
    fn of(map: &AnnulusMap) -> Self {
        Self {
            name: map.name().to_string(),
            params: map.params().clone(),
            y_range: map.y_range(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub padding: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessSummary {
    pub level: f64,
    pub band_thickness: f64,
    pub min_distance: f64,
    pub vertices: usize,
    pub rejected_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkageSummary {
    pub linked: bool,
    pub component: Option<usize>,
    pub witness: Option<WitnessSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub length: usize,
    pub winding_sum: i64,
    pub closure_error: i64,
    pub window: i64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GateSummary {
    Failed {
        epsilon: f64,
        delta: f64,
    },
    Passed {
        links: usize,
        disks: usize,
        merges: usize,
    },
}

/// JSON pipeline report. Contains no timings, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub map: MapSummary,
    pub analyzed_map: MapSummary,
    pub config: PipelineConfig,
    pub steps: Vec<StepRecord>,
    pub audit: MapAudit,
    pub graph: GraphSummary,
    pub decomposition: DecompositionReport,
    pub linkage: LinkageSummary,
    pub chain: Option<ChainSummary>,
    pub delta: Option<f64>,
    pub disk_chain_gate: Option<GateSummary>,
    pub certificates: Vec<FixedPointCertificate>,
    pub index_sum: i32,
    pub suspicious: Vec<Rect>,
    pub suspicious_leaves: usize,
    pub verdict: Verdict,
    pub verdict_text: &'static str,
    pub exit_code: i32,
    pub notes: Vec<String>,
}

/// Report plus the intermediate objects needed for the data files.
pub struct PipelineOutcome {
    pub report: PipelineReport,
    /// The map the graph was built for (after any collar extension).
    pub analyzed_map: AnnulusMap,
    pub graph: TransitionGraph,
    pub decomposition: ConleyDecomposition,
    pub verdict: LinkageVerdict,
    pub chain: Option<PeriodicEpsilonChain>,
    pub disk_chain: Option<DiskChainOutcome>,
    /// Wall-clock seconds per step, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

impl PipelineOutcome {
    pub fn witness(&self) -> Option<&SeparatingCurve> {
        self.verdict.witness.as_ref()
    }
}

struct Clock {
    last: Instant,
    timings: Vec<(&'static str, f64)>,
}

impl Clock {
    fn lap(&mut self, step: &'static str) {
        let now = Instant::now();
        let secs = (now - self.last).as_secs_f64();
        log::debug!("{step}: {secs:.3} s");
        self.timings.push((step, secs));
        self.last = now;
    }
}

pub fn run_theorem_pipeline(map: &AnnulusMap, config: &PipelineConfig) -> Result<PipelineOutcome> {
    let mut clock = Clock {
        last: Instant::now(),
        timings: Vec::new(),
    };
    let mut steps = Vec::new();
    let mut notes = Vec::new();

    let audit = map.validate().map_err(|e| e.at("twist check"))?;
    steps.push(StepRecord {
        step: "twist check",
        role: "boundaries move in opposite directions under the chosen lift",
        status: format!("min r0 = {:.6}, min r1 = {:.6}", audit.min_r0, audit.min_r1),
    });
    clock.lap("twist check");

    let analyzed = if map.has_rigid_boundaries(256) {
        steps.push(StepRecord {
            step: "collar extension",
            role: "reduce to rigid rotations on both boundaries",
            status: "skipped: boundaries already rigid".into(),
        });
        map.clone()
    } else {
        let ext = collar_extend(map, config.collar_delta, config.rotation_iterations)
            .map_err(|e| e.at("collar extension"))?;
        steps.push(StepRecord {
            step: "collar extension",
            role: "reduce to rigid rotations on both boundaries",
            status: format!(
                "extended to y in [{}, {}]",
                ext.y_range().0,
                ext.y_range().1
            ),
        });
        ext
    };
    clock.lap("collar extension");

    let cover = BoxCover::new(config.nx, config.ny, analyzed.y_range())
        .map_err(|e| e.at("transition graph"))?;
    let graph = build_transition_graph(&analyzed, &cover, &config.graph_options())
        .map_err(|e| e.at("transition graph"))?;
    steps.push(StepRecord {
        step: "transition graph",
        role: "outer approximation: every true epsilon-step is a graph edge",
        status: format!(
            "{} nodes, {} edges, epsilon = {:.6}",
            graph.node_count(),
            graph.edge_count(),
            graph.epsilon()
        ),
    });
    clock.lap("transition graph");

    let decomposition =
        ConleyDecomposition::compute(&graph).map_err(|e| e.at("chain recurrence"))?;
    let violations = decomposition.lyapunov_violations(&graph);
    if violations > 0 {
        return Err(
            Error::InvalidArgument(format!("{violations} Lyapunov contract violations"))
                .at("chain recurrence"),
        );
    }
    steps.push(StepRecord {
        step: "chain recurrence",
        role: "chain transitive classes and a complete Lyapunov function",
        status: format!(
            "{} recurrent boxes in {} classes",
            decomposition.recurrent.len(),
            decomposition.class_count()
        ),
    });
    if !decomposition.components.connectivity_violations.is_empty() {
        notes.push(format!(
            "{} chain transitive classes are not spatially connected at this resolution",
            decomposition.components.connectivity_violations.len()
        ));
    }
    clock.lap("chain recurrence");

    let verdict = boundary_linkage(&decomposition, &cover, &analyzed)
        .map_err(|e| e.at("boundary linkage"))?;
    steps.push(StepRecord {
        step: "boundary linkage",
        role: "either one class meets both boundaries or a level set separates them",
        status: if verdict.linked {
            "linked".into()
        } else {
            "not linked".into()
        },
    });
    clock.lap("boundary linkage");

    let linkage = LinkageSummary {
        linked: verdict.linked,
        component: verdict.component,
        witness: verdict.witness.as_ref().map(|w| WitnessSummary {
            level: w.level,
            band_thickness: w.band_thickness,
            min_distance: w.min_distance,
            vertices: w.curve.len(),
            rejected_levels: w.rejected_levels,
        }),
    };

    let mut chain = None;
    let mut delta = None;
    let mut disk_chain = None;
    let mut certificates = Vec::new();
    let mut suspicious = Vec::new();
    let mut suspicious_leaves = 0;
    let verdict_kind;

    if !verdict.linked {
        let d = verdict
            .witness
            .as_ref()
            .map(|w| w.min_distance)
            .unwrap_or(0.0);
        steps.push(StepRecord {
            step: "separating curve",
            role: "essential curve disjoint from its image",
            status: format!("verified minimum distance to the image {d:.6}"),
        });
        verdict_kind = Verdict::HypothesisVoid;
    } else {
        let window = config
            .winding_window
            .unwrap_or_else(|| default_winding_window(&analyzed));
        let periodic =
            find_periodic_boundary_chain(&graph, &verdict, &decomposition.class_of, window)
                .map_err(|e| e.at("periodic chain"))?;
        steps.push(StepRecord {
            step: "periodic chain",
            role: "closed epsilon-chain through both boundaries in the cover",
            status: format!(
                "{} boxes, winding sum {}",
                periodic.len(),
                periodic.winding_sum()
            ),
        });
        clock.lap("periodic chain");

        let region: Vec<Rect> = periodic
            .nodes
            .iter()
            .map(|&u| cover.rect(u).inflate(periodic.epsilon))
            .collect();
        let d = displacement_bound(
            &analyzed,
            &region,
            (config.bound_samples, config.bound_samples),
        );
        steps.push(StepRecord {
            step: "displacement bound",
            role: "lower bound for |h(p) - p| near the chain",
            status: format!("delta = {d:.6}"),
        });
        clock.lap("displacement bound");

        let outcome = build_disk_chain(&periodic, &analyzed, d).map_err(|e| e.at("disk chain"))?;
        steps.push(StepRecord {
            step: "disk chain",
            role: "periodic disk chain, impossible for a fixed-point-free map",
            status: match &outcome {
                DiskChainOutcome::GateFailed { epsilon, delta } => format!(
                    "gate failed: epsilon {epsilon:.6} >= delta/4 = {:.6}; consistent with fixed points",
                    delta / 4.0
                ),
                DiskChainOutcome::Built(c) => format!("built with {} links", c.links.len()),
            },
        });
        clock.lap("disk chain");
        if matches!(outcome, DiskChainOutcome::Built(_)) {
            notes.push(
                "a periodic disk chain was built, so a fixed point of positive index must exist"
                    .into(),
            );
        }

        let located = locate_fixed_points(&analyzed, &config.locate_options())
            .map_err(|e| e.at("fixed point search"))?;
        steps.push(StepRecord {
            step: "fixed point search",
            role: "boxes with nonzero index of the displacement field",
            status: format!(
                "{} certificates, {} suspicious leaves",
                located.certificates.len(),
                located.suspicious_leaves
            ),
        });
        clock.lap("fixed point search");
        if located.suspicious_leaves > 0 && located.certificates.is_empty() {
            notes.push("fixed points are not isolated at this resolution (a continuum or a degenerate point)".into());
        }
        certificates = located.certificates;
        suspicious = located.suspicious;
        suspicious_leaves = located.suspicious_leaves;
        delta = Some(d);
        chain = Some(periodic);
        disk_chain = Some(outcome);
        verdict_kind = if certificates.is_empty() {
            Verdict::Inconclusive
        } else {
            Verdict::Certified
        };
    }

    let report = PipelineReport {
        map: MapSummary::of(map),
        analyzed_map: MapSummary::of(&analyzed),
        config: config.clone(),
        steps,
        audit,
        graph: GraphSummary {
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            padding: graph.padding(),
            epsilon: graph.epsilon(),
        },
        decomposition: decomposition.report(&cover),
        linkage,
        chain: chain.as_ref().map(|c: &PeriodicEpsilonChain| ChainSummary {
            length: c.len(),
            winding_sum: c.winding_sum(),
            closure_error: c.closure_error(&cover),
            window: c.window,
            epsilon: c.epsilon,
        }),
        delta,
        disk_chain_gate: disk_chain.as_ref().map(|o| match o {
            DiskChainOutcome::GateFailed { epsilon, delta } => GateSummary::Failed {
                epsilon: *epsilon,
                delta: *delta,
            },
            DiskChainOutcome::Built(c) => GateSummary::Passed {
                links: c.links.len(),
                disks: c.disk_count(),
                merges: c.merges.len(),
            },
        }),
        index_sum: certificates.iter().map(|c| c.index).sum(),
        certificates,
        suspicious,
        suspicious_leaves,
        verdict: verdict_kind,
        verdict_text: verdict_kind.summary(),
        exit_code: verdict_kind.exit_code(),
        notes,
    };
    Ok(PipelineOutcome {
        report,
        analyzed_map: analyzed,
        graph,
        decomposition,
        verdict,
        chain,
        disk_chain,
        timings: clock.timings,
    })
}
