//! Subcommands of the `annulus-fixpoint` binary.

use annulus_fixpoint::boxgraph::{build_transition_graph, BoxCover};
use annulus_fixpoint::conley::ConleyDecomposition;
use annulus_fixpoint::involution::Involution;
use annulus_fixpoint::linkage::{rotation_number, Boundary, RotationNumber};
use annulus_fixpoint::pipeline::{run_theorem_pipeline, PipelineConfig, PipelineOutcome};
use annulus_fixpoint::reversible::{
    check_recurrent_symmetry, check_reversibility, check_symmetric_curve_intersection,
    standard_symmetric_curves, ReversibilityCheck, SymmetricCurveVerdict, SymmetryCheck,
};
use annulus_fixpoint::{catalog_map, AnnulusMap, MapSpec};
use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Exit code when a fixed point is certified.
pub const EXIT_CERTIFIED: i32 = 0;
/// Exit code for bad input or a failed step.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when the boundaries are not linked.
pub const EXIT_HYPOTHESIS_VOID: i32 = 2;
/// Exit code when nothing could be decided at the chosen resolution.
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "annulus-fixpoint",
    version,
    about = "Fixed points of annulus twist maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write the report files.
    Analyze(AnalyzeArgs),
    /// Write the transition graph as an edge list.
    ExportGraph(ExportArgs),
    /// Boundary rotation numbers.
    RotationNumber(RotationArgs),
    /// Reversibility under (x, y) -> (-x, y).
    ReversibleCheck(ReversibleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    /// Catalog map name or path to a TOML map file.
    #[arg(long)]
    pub map: Option<String>,
    /// Shorthand for `--param eps=<value>`.
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    /// Map parameter `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CoverArgs {
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 16)]
    pub ny: usize,
    #[arg(long, default_value_t = 16)]
    pub samples_per_box: usize,
    /// Image padding; estimated from pilot boxes when omitted.
    #[arg(long)]
    pub padding: Option<f64>,
    /// Seed for the pilot box choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub cover: CoverArgs,
    /// Collar width used when a boundary is not a rigid rotation.
    #[arg(long, default_value_t = 0.1)]
    pub collar: f64,
    /// Subdivision depth of the fixed-point search.
    #[arg(long, default_value_t = 6)]
    pub max_depth: u32,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub cover: CoverArgs,
    /// Edge-list file to write.
    #[arg(long, default_value = "graph.txt")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryChoice {
    Bottom,
    Top,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct RotationArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, value_enum, default_value_t = BoundaryChoice::Both)]
    pub boundary: BoundaryChoice,
    #[arg(long, default_value_t = 1_000_000)]
    pub iterations: u64,
    /// JSON file to write; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReversibleArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub cover: CoverArgs,
    /// Sample grid for the reversibility residual.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// JSON file to write; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a TOML map file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    /// Lift samples for `custom_sampled`, relative to the map file.
    samples: Option<PathBuf>,
}

/// Reads `--map`, `--eps` and `--param` into a map spec. A `--map` value
/// naming an existing file is read as TOML; command-line parameters
/// override the file's.
pub fn resolve_map_spec(args: &MapArgs) -> Result<MapSpec> {
    let Some(map) = args.map.as_deref() else {
        bail!("no map given (use --map <name|file.toml>)");
    };
    let path = Path::new(map);
    let mut spec = if path.is_file() {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: MapFile =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        MapSpec {
            name: file.name,
            params: file.params,
            samples: file.samples.map(|s| base.join(s)),
        }
    } else {
        MapSpec::named(map)
    };
    for kv in &args.params {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--param expects key=value, got `{kv}`"))?;
        let value: f64 = v
            .trim()
            .parse()
            .with_context(|| format!("--param {k}: `{v}` is not a number"))?;
        spec.params.insert(k.trim().to_string(), value);
    }
    if let Some(eps) = args.eps {
        spec.params.insert("eps".into(), eps);
    }
    Ok(spec)
}

pub fn resolve_map(args: &MapArgs) -> Result<AnnulusMap> {
    let spec = resolve_map_spec(args)?;
    catalog_map(&spec).with_context(|| format!("building map `{}`", spec.name))
}

/// Validated settings of one `analyze` run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub map: MapSpec,
    pub pipeline: PipelineConfig,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

fn check_cover(cover: &CoverArgs) -> Result<()> {
    ensure!(cover.nx >= 4, "--nx must be at least 4, got {}", cover.nx);
    ensure!(cover.ny >= 2, "--ny must be at least 2, got {}", cover.ny);
    ensure!(
        cover.samples_per_box >= 4,
        "--samples-per-box must be at least 4, got {}",
        cover.samples_per_box
    );
    if let Some(p) = cover.padding {
        ensure!(
            p.is_finite() && p >= 0.0,
            "--padding must be a non-negative number, got {p}"
        );
    }
    if let Some(w) = cover.workers {
        ensure!(w >= 1, "--workers must be at least 1");
    }
    Ok(())
}

impl RunConfig {
    pub fn from_args(args: &AnalyzeArgs) -> Result<Self> {
        check_cover(&args.cover)?;
        ensure!(
            args.collar > 0.0 && args.collar <= 0.5,
            "--collar must lie in (0, 0.5], got {}",
            args.collar
        );
        ensure!(
            args.max_depth <= 12,
            "--max-depth must be at most 12, got {}",
            args.max_depth
        );
        let pipeline = PipelineConfig {
            nx: args.cover.nx,
            ny: args.cover.ny,
            samples_per_box: args.cover.samples_per_box,
            padding: args.cover.padding,
            seed: args.cover.seed,
            collar_delta: args.collar,
            max_depth: args.max_depth,
            ..PipelineConfig::default()
        };
        Ok(Self {
            map: resolve_map_spec(&args.map)?,
            pipeline,
            out: args.out.clone(),
            workers: args.cover.workers,
        })
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker pool")?;
    Ok(pool.install(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs the pipeline and writes the report files into `config.out`.
/// Returns the exit code of the verdict.
pub fn cmd_analyze(config: &RunConfig) -> Result<i32> {
    let map =
        catalog_map(&config.map).with_context(|| format!("building map `{}`", config.map.name))?;
    let outcome = with_workers(config.workers, || {
        run_theorem_pipeline(&map, &config.pipeline)
    })??;
    fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    write_outputs(&config.out, &outcome)?;
    log::info!("{}: {}", map.name(), outcome.report.verdict_text);
    Ok(outcome.report.exit_code)
}

#[derive(Serialize)]
struct ChainFile<'a> {
    chain: &'a annulus_fixpoint::diskchain::PeriodicEpsilonChain,
    disk_chain: Option<&'a annulus_fixpoint::diskchain::DiskChainOutcome>,
}

#[derive(Serialize)]
struct TimingEntry {
    step: &'static str,
    seconds: f64,
}

fn write_outputs(dir: &Path, outcome: &PipelineOutcome) -> Result<()> {
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_json(
        &dir.join("decomposition.json"),
        &outcome.report.decomposition,
    )?;
    let timings: Vec<TimingEntry> = outcome
        .timings
        .iter()
        .map(|&(step, seconds)| TimingEntry { step, seconds })
        .collect();
    write_json(&dir.join("timings.json"), &timings)?;

    let witness_path = dir.join("witness_curve.csv");
    let chain_path = dir.join("chain.json");
    // stale files from an earlier run would contradict this report
    for p in [&witness_path, &chain_path] {
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    if let Some(w) = outcome.witness() {
        w.curve.write_csv(fs::File::create(&witness_path)?)?;
    }
    if let Some(chain) = &outcome.chain {
        write_json(
            &chain_path,
            &ChainFile {
                chain,
                disk_chain: outcome.disk_chain.as_ref(),
            },
        )?;
    }

    let graph = &outcome.graph;
    let cover = graph.cover();
    let map = &outcome.analyzed_map;
    let decomp = &outcome.decomposition;

    let mut disp = csv::Writer::from_path(dir.join("displacement.csv"))?;
    disp.write_record(["node", "x", "y", "dx", "dy", "norm"])?;
    for u in 0..cover.len() {
        let c = cover.center(u);
        let d = map.displacement(c);
        disp.serialize((u, c.x, c.y, d.x, d.y, d.norm()))?;
    }
    disp.flush()?;

    let mut rec = csv::Writer::from_path(dir.join("recurrent_boxes.csv"))?;
    rec.write_record(["node", "i", "j", "x0", "x1", "y0", "y1", "class"])?;
    for &u in &decomp.recurrent {
        let (i, j) = cover.coords(u);
        let r = cover.rect(u);
        let class = decomp.class_of[u].expect("recurrent boxes have a class");
        rec.serialize((u, i, j, r.x0, r.x1, r.y0, r.y1, class))?;
    }
    rec.flush()?;

    let mut lyap = csv::Writer::from_path(dir.join("lyapunov.csv"))?;
    lyap.write_record(["node", "i", "j", "value", "class"])?;
    for u in 0..cover.len() {
        let (i, j) = cover.coords(u);
        lyap.serialize((u, i, j, decomp.lyapunov.values[u], decomp.class_of[u]))?;
    }
    lyap.flush()?;
    Ok(())
}

/// Writes the edge list of the transition graph.
pub fn cmd_export_graph(args: &ExportArgs) -> Result<i32> {
    check_cover(&args.cover)?;
    let map = resolve_map(&args.map)?;
    let cover = BoxCover::new(args.cover.nx, args.cover.ny, map.y_range())?;
    let options = annulus_fixpoint::GraphOptions {
        samples_per_box: args.cover.samples_per_box,
        padding: args.cover.padding,
        seed: args.cover.seed,
        ..Default::default()
    };
    let graph = with_workers(args.cover.workers, || {
        build_transition_graph(&map, &cover, &options)
    })??;
    fs::write(&args.out, graph.to_edge_list())
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(EXIT_CERTIFIED)
}

#[derive(Serialize)]
struct RotationReport {
    map: String,
    bottom: Option<RotationNumber>,
    top: Option<RotationNumber>,
}

pub fn cmd_rotation_number(args: &RotationArgs) -> Result<i32> {
    let map = resolve_map(&args.map)?;
    let want = |b| args.boundary == b || args.boundary == BoundaryChoice::Both;
    let report = RotationReport {
        map: map.name().to_string(),
        bottom: want(BoundaryChoice::Bottom)
            .then(|| rotation_number(&map, Boundary::Bottom, args.iterations))
            .transpose()?,
        top: want(BoundaryChoice::Top)
            .then(|| rotation_number(&map, Boundary::Top, args.iterations))
            .transpose()?,
    };
    emit(args.out.as_deref(), &report)?;
    Ok(EXIT_CERTIFIED)
}

#[derive(Serialize)]
struct ReversibilityReport {
    map: String,
    involution: String,
    reversibility: ReversibilityCheck,
    recurrent_symmetry: SymmetryCheck,
    curves: Vec<SymmetricCurveVerdict>,
    /// Two fixed points for reversible maps needs an index-zero removal
    /// argument that is not implemented.
    two_fixed_points_claim: &'static str,
}

/// Exit 0 when the map is reversible and every check passes, 3 otherwise.
pub fn cmd_reversible_check(args: &ReversibleArgs) -> Result<i32> {
    check_cover(&args.cover)?;
    ensure!(args.grid >= 2, "--grid must be at least 2");
    let map = resolve_map(&args.map)?;
    let r = Involution::reflection();
    let reversibility = check_reversibility(&map, &r, args.grid, args.tol);
    let cover = BoxCover::new(args.cover.nx, args.cover.ny, map.y_range())?;
    let options = annulus_fixpoint::GraphOptions {
        samples_per_box: args.cover.samples_per_box,
        padding: args.cover.padding,
        seed: args.cover.seed,
        ..Default::default()
    };
    let (decomp, curves) = with_workers(args.cover.workers, || -> Result<_> {
        let graph = build_transition_graph(&map, &cover, &options)?;
        let decomp = ConleyDecomposition::compute(&graph)?;
        let family = standard_symmetric_curves(256)?;
        let curves =
            check_symmetric_curve_intersection(&map, &r, &family, 1e-9, reversibility.passed)?;
        Ok((decomp, curves))
    })??;
    let recurrent_symmetry = check_recurrent_symmetry(&decomp, &r, &cover);
    let all_pass =
        reversibility.passed && recurrent_symmetry.passed && curves.iter().all(|c| c.intersects());
    let report = ReversibilityReport {
        map: map.name().to_string(),
        involution: r.name().to_string(),
        reversibility,
        recurrent_symmetry,
        curves,
        two_fixed_points_claim: "unverified",
    };
    emit(args.out.as_deref(), &report)?;
    Ok(if all_pass {
        EXIT_CERTIFIED
    } else {
        EXIT_INCONCLUSIVE
    })
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(&RunConfig::from_args(&args)?),
        Command::ExportGraph(args) => cmd_export_graph(&args),
        Command::RotationNumber(args) => cmd_rotation_number(&args),
        Command::ReversibleCheck(args) => cmd_reversible_check(&args),
    }
}
