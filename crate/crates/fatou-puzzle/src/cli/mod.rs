//! Command-line driver: configuration, cached puzzle builds, JSON reports and rendering.

pub mod render;

use crate::angles::RationalAngle;
use crate::nest::{
    bicritical_model, classify_recurrence, enhanced_nest, fibonacci_model, CriticalOrbitTable, NestError, NestRecord,
    Recurrence,
};
use crate::poly_core::{PolyError, PolySpec, Polynomial, C64};
use crate::puzzle::{
    build_spec_with, depth0_atlas, geometry, geometry_at, Atlas, PieceDump, PieceGeometry, PieceId, PuzzleError,
    PuzzleOptions, PuzzleSpec,
};
use crate::rays::{internal_ray_point, InternalBasin, RayControl, RayError};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use render::{RenderOptions, Svg};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA: &str = "fatou-puzzle/config/1";
pub const ERROR_SCHEMA: &str = "fatou-puzzle/error/1";
pub const CLASSIFY_SCHEMA: &str = "fatou-puzzle/classify/1";
pub const LC_SCHEMA: &str = "fatou-puzzle/lc-evidence/1";
pub const NEST_REPORT_SCHEMA: &str = "fatou-puzzle/nest-report/1";
pub const PUZZLE_ATLAS_SCHEMA: &str = "fatou-puzzle/puzzle-atlas/1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error(transparent)]
    Nest(#[from] NestError),
    #[error(transparent)]
    Ray(#[from] RayError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Poly(_) => "polynomial",
            CliError::Puzzle(_) => "puzzle",
            CliError::Nest(_) => "nest",
            CliError::Ray(_) => "ray",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "schema": ERROR_SCHEMA, "kind": self.kind(), "message": self.to_string() }).to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSource {
    #[default]
    Puzzle,
    Fibonacci,
    Bicritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_graph: f64,
    pub clash_tol: f64,
    pub contact_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let p = PuzzleOptions::default();
        Self { tol_graph: p.tol_graph, clash_tol: p.clash_tol, contact_tol: 1e-9 }
    }
}

/// Boundary samples for local-connectivity evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Random internal phases drawn from the run seed.
    pub count: usize,
    pub phases: Vec<f64>,
    /// Exact rational internal angles; these are (eventually) periodic.
    pub angles: Vec<String>,
    /// Least depth used in the decay fit.
    pub fit_from: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: 20, phases: Vec::new(), angles: Vec::new(), fit_from: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub polynomial: Option<PolySpec>,
    #[serde(default)]
    pub theta: Option<String>,
    /// Superattracting fixed point; the first one found when absent.
    #[serde(default)]
    pub c0: Option<[f64; 2]>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub tau: Option<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_omega_depth")]
    pub omega_depth: usize,
    #[serde(default)]
    pub source: TableSource,
    /// Treat `c0` as a critical end of the table.
    #[serde(default)]
    pub include_center: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_resolution")]
    pub geometry_resolution: usize,
    #[serde(default)]
    pub samples: SampleConfig,
    #[serde(default)]
    pub render: RenderOptions,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_depth() -> usize {
    3
}
fn default_horizon() -> usize {
    10_000
}
fn default_n_max() -> usize {
    6
}
fn default_omega_depth() -> usize {
    4
}
fn default_resolution() -> usize {
    128
}

impl RunConfig {
    pub fn parse(text: &str, toml_syntax: bool) -> Result<Self, CliError> {
        let cfg: RunConfig = if toml_syntax {
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let is_toml = path.extension().map_or(false, |e| e == "toml");
        Self::parse(&text, is_toml)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(CliError::Config(format!("schema must be \"{CONFIG_SCHEMA}\", got \"{}\"", self.schema)));
        }
        let t = &self.tolerances;
        for (name, v) in [("tol_graph", t.tol_graph), ("clash_tol", t.clash_tol), ("contact_tol", t.contact_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if self.tau == Some(0) {
            return Err(CliError::Config("tau must be at least 1".into()));
        }
        if self.render.width == 0 || self.render.height == 0 || !(self.render.span > 0.0) {
            return Err(CliError::Config("render viewport must be nonempty".into()));
        }
        if let Some(l) = self.render.layers.iter().find(|l| !render::LAYER_ORDER.contains(&l.as_str())) {
            return Err(CliError::Config(format!("unknown layer {l}")));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if self.geometry_resolution < 16 {
            return Err(CliError::Config("geometry_resolution must be at least 16".into()));
        }
        Ok(())
    }

    pub fn polynomial(&self) -> Result<Polynomial, CliError> {
        let spec = self.polynomial.as_ref().ok_or_else(|| CliError::Config("missing polynomial".into()))?;
        Ok(Polynomial::from_spec(spec)?)
    }

    pub fn theta(&self) -> Result<RationalAngle, CliError> {
        let t = self.theta.as_ref().ok_or_else(|| CliError::Config("missing theta".into()))?;
        t.parse().map_err(|e| CliError::Config(format!("theta: {e}")))
    }

    pub fn c0(&self, poly: &Polynomial) -> Result<C64, CliError> {
        if let Some([re, im]) = self.c0 {
            return Ok(C64::new(re, im));
        }
        poly.superattracting_fixed()
            .first()
            .map(|c| c.point)
            .ok_or_else(|| CliError::Config("polynomial has no superattracting fixed point; set c0".into()))
    }

    pub fn puzzle_options(&self) -> PuzzleOptions {
        PuzzleOptions { tol_graph: self.tolerances.tol_graph, clash_tol: self.tolerances.clash_tol, ..Default::default() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fatou-puzzle", version, about = "Puzzles, nests and renders for polynomials with a bounded fixed Fatou component")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (JSON, or TOML by extension).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "FATOU_PUZZLE_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "FATOU_PUZZLE_THREADS")]
    pub threads: Option<usize>,
    /// Ignore and overwrite cached puzzle builds.
    #[arg(long, global = true)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Escape-time render with basin statistics.
    Classify,
    /// Depth-0 atlas, depth-n pieces and an SVG overlay.
    Puzzle,
    /// Enhanced nest record with its inequality report.
    Nest,
    /// Diameters of nested pieces around boundary samples.
    LcEvidence,
    /// SVG and PNG of the selected layers.
    Render,
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fatou-out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    let ctx = Context { cfg, out_dir, use_cache: !cli.no_cache };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Classify => cmd_classify(&ctx),
        Command::Puzzle => cmd_puzzle(&ctx),
        Command::Nest => cmd_nest(&ctx),
        Command::LcEvidence => cmd_lc_evidence(&ctx),
        Command::Render => cmd_render(&ctx),
    })
}

pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub use_cache: bool,
}

impl Context {
    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.out_dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Puzzle build, cached under a hash of the inputs that determine it.
    pub fn spec(&self) -> Result<PuzzleSpec, CliError> {
        let poly = self.cfg.polynomial()?;
        let c0 = self.cfg.c0(&poly)?;
        let theta = self.cfg.theta()?;
        let opts = self.cfg.puzzle_options();
        let key = serde_json::json!({
            "polynomial": poly.to_spec(),
            "c0": [c0.re, c0.im],
            "theta": theta.to_string(),
            "options": opts,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        let hexd: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
        let cache_dir = self.out_dir.join("cache");
        let path = cache_dir.join(format!("spec-{hexd}.json"));
        if self.use_cache {
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(spec) = serde_json::from_str::<PuzzleSpec>(&text) {
                    return Ok(spec);
                }
            }
        }
        let spec = build_spec_with(&poly, c0, &theta, &opts)?;
        std::fs::create_dir_all(&cache_dir).map_err(|e| io_err(&cache_dir, e))?;
        let text = serde_json::to_string(&spec).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(spec)
    }
}

fn files_summary(command: &str, files: &[PathBuf], extra: serde_json::Value) -> String {
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    serde_json::json!({ "command": command, "files": names, "summary": extra }).to_string()
}

pub fn cmd_classify(ctx: &Context) -> Result<String, CliError> {
    let poly = ctx.cfg.polynomial()?;
    let (img, stats) = render::escape_image(&poly, &ctx.cfg.render);
    let png = ctx.out_dir.join("classify.png");
    img.save(&png).map_err(|e| io_err(&png, e))?;
    let report = serde_json::json!({ "schema": CLASSIFY_SCHEMA, "polynomial": poly.to_spec(), "render": ctx.cfg.render, "stats": stats });
    let js = ctx.write_json("classify.json", &report)?;
    Ok(files_summary("classify", &[png, js], serde_json::to_value(&stats).unwrap_or_default()))
}

/// Admissible words of a given depth, in lexicographic order.
pub fn admissible_words(spec: &PuzzleSpec, depth: usize) -> Vec<PieceId> {
    let k = spec.label_count();
    let mut words: Vec<Vec<u8>> = (0..k as u8).map(|s| vec![s]).collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &words {
            let last = *w.last().expect("nonempty") as usize;
            for s in 0..k {
                if spec.transitions[last][s] {
                    let mut v = w.clone();
                    v.push(s as u8);
                    next.push(v);
                }
            }
        }
        words = next;
    }
    words.into_iter().map(PieceId::from_vec).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PuzzleAtlasReport {
    pub schema: String,
    pub atlas: Atlas,
    pub depth: usize,
    pub pieces: Vec<PieceDump>,
    /// Words whose geometry could not be realized, with the reason.
    pub failures: Vec<(PieceId, String)>,
}

fn piece_geometries(spec: &PuzzleSpec, depth: usize, resolution: usize) -> (Vec<PieceGeometry>, Vec<(PieceId, String)>) {
    let words = admissible_words(spec, depth);
    let results: Vec<(PieceId, Result<PieceGeometry, PuzzleError>)> =
        words.into_par_iter().map(|w| { let g = geometry(spec, &w, resolution); (w, g) }).collect();
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (w, r) in results {
        match r {
            Ok(g) => ok.push(g),
            Err(e) => bad.push((w, e.to_string())),
        }
    }
    (ok, bad)
}

pub fn cmd_puzzle(ctx: &Context) -> Result<String, CliError> {
    let spec = ctx.spec()?;
    let depth = ctx.cfg.depth;
    let (geoms, failures) = piece_geometries(&spec, depth, ctx.cfg.geometry_resolution);
    let report = PuzzleAtlasReport {
        schema: PUZZLE_ATLAS_SCHEMA.into(),
        atlas: depth0_atlas(&spec),
        depth,
        pieces: geoms
            .iter()
            .map(|g| PieceDump { word: g.word.clone(), depth, diameter: Some(g.diameter), boundary: Some(g.boundary.clone()) })
            .collect(),
        failures,
    };
    let js = ctx.write_json("atlas.json", &report)?;
    let mut svg = Svg::new(&ctx.cfg.render);
    render::draw_pieces(&mut svg, &geoms);
    render::draw_graph(&mut svg, &spec);
    for p in on_graph_samples(&spec, depth, &ctx.cfg.render) {
        svg.marker("markers", p, 1.5, "#e00000");
    }
    let sv = ctx.write("puzzle.svg", svg.finish().as_bytes())?;
    let summary = serde_json::json!({
        "labels": report.atlas.labels,
        "depth": depth,
        "pieces": report.pieces.len(),
        "failures": report.failures.len(),
    });
    Ok(files_summary("puzzle", &[js, sv], summary))
}

/// Coarse grid points that fall on the depth-`n` graph.
fn on_graph_samples(spec: &PuzzleSpec, n: usize, opts: &RenderOptions) -> Vec<C64> {
    let step = 8u32;
    let pts: Vec<(u32, u32)> =
        (0..opts.height).step_by(step as usize).flat_map(|j| (0..opts.width).step_by(step as usize).map(move |i| (i, j))).collect();
    pts.into_par_iter()
        .filter_map(|(i, j)| {
            let z = opts.pixel(i, j);
            matches!(crate::puzzle::locate(spec, z, n), Err(PuzzleError::OnGraph(_))).then_some(z)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestReport {
    pub schema: String,
    pub source: TableSource,
    pub ends: Vec<String>,
    pub horizon: usize,
    pub classification: Option<Recurrence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification_error: Option<String>,
    pub stages: usize,
    pub partial: Option<String>,
    pub doubling: bool,
    pub return_growth: bool,
    pub degree_bound: bool,
    pub all_checks: bool,
    pub failures: Vec<String>,
    /// Moduli of `K_(n-1) ∖ K_n` are not computed for symbolic tables.
    pub mu_note: String,
}

pub fn nest_table(ctx: &Context) -> Result<CriticalOrbitTable, CliError> {
    Ok(match ctx.cfg.source {
        TableSource::Fibonacci => fibonacci_model(ctx.cfg.horizon),
        TableSource::Bicritical => bicritical_model(ctx.cfg.horizon),
        TableSource::Puzzle => CriticalOrbitTable::from_puzzle(&ctx.spec()?, ctx.cfg.horizon, ctx.cfg.include_center)?,
    })
}

pub fn cmd_nest(ctx: &Context) -> Result<String, CliError> {
    let table = nest_table(ctx)?;
    // The nest is centred at the first free end.
    let c = table.ends.iter().position(|e| e.name != "c0").unwrap_or(0);
    let (classification, classification_error) = match classify_recurrence(&table, c, ctx.cfg.omega_depth) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let k0 = PieceId::from_vec(table.itinerary(c)[..1].to_vec());
    let record: NestRecord = enhanced_nest(&table, c, &k0, ctx.cfg.tau, ctx.cfg.n_max, ctx.cfg.omega_depth)?;
    let report = NestReport {
        schema: NEST_REPORT_SCHEMA.into(),
        source: ctx.cfg.source,
        ends: table.ends.iter().map(|e| e.name.clone()).collect(),
        horizon: table.horizon,
        classification,
        classification_error,
        stages: record.stages.len(),
        partial: record.partial.clone(),
        doubling: record.checks.doubling,
        return_growth: record.checks.return_growth,
        degree_bound: record.checks.degree,
        all_checks: record.checks.all(),
        failures: record.checks.failures.clone(),
        mu_note: "annulus moduli need piece geometry at the nest depths; not computed".into(),
    };
    let a = ctx.write_json("nest.json", &record)?;
    let b = ctx.write_json("nest_report.json", &report)?;
    let summary = serde_json::json!({ "stages": report.stages, "tau": record.tau, "all_checks": report.all_checks, "partial": report.partial });
    Ok(files_summary("nest", &[a, b], summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcRow {
    pub depth: usize,
    pub word: PieceId,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcSample {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle: Option<String>,
    pub point: Option<C64>,
    pub rows: Vec<LcRow>,
    /// `exp` of the least-squares slope of `log diam` against depth.
    pub ratio: Option<f64>,
    pub monotone: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

/// Point of `∂U` at internal phase `phase`, or a point of `U` just inside it.
pub fn boundary_point(spec: &PuzzleSpec, phase: f64) -> Result<C64, CliError> {
    let phase = phase.rem_euclid(1.0);
    if spec.exact_power {
        return Ok(spec.c0 + C64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase));
    }
    let q: u64 = 1_000_000_007;
    let p = ((phase * q as f64).round() as u64).min(q - 1);
    let angle = RationalAngle::from_u64(p, q).map_err(|e| CliError::Config(e.to_string()))?;
    let basin = InternalBasin::new(&spec.poly, spec.c0)?;
    Ok(internal_ray_point(&basin, &angle, -1e-10, &RayControl::default())?)
}

/// Diameters of `P_n(z)` for `n` in `0..=max_depth`.
pub fn lc_evidence(spec: &PuzzleSpec, z: C64, max_depth: usize, resolution: usize, fit_from: usize) -> LcSample {
    let mut rows = Vec::new();
    let mut excluded = None;
    for n in 0..=max_depth {
        match geometry_at(spec, z, n, resolution, None) {
            Ok(g) => rows.push(LcRow { depth: n, word: g.word, diameter: g.diameter }),
            Err(e) => {
                excluded = Some(format!("depth {n}: {e}"));
                break;
            }
        }
    }
    let monotone = rows.windows(2).all(|w| w[1].diameter < w[0].diameter);
    let fit: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.depth >= fit_from && r.diameter > 0.0).map(|r| (r.depth as f64, r.diameter.ln())).collect();
    let ratio = (fit.len() >= 2).then(|| {
        let n = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / n;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx).exp()
    });
    LcSample { phase: None, angle: None, point: Some(z), rows, ratio, monotone, excluded }
}

pub fn cmd_lc_evidence(ctx: &Context) -> Result<String, CliError> {
    let spec = ctx.spec()?;
    let s = &ctx.cfg.samples;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut phases = s.phases.clone();
    phases.extend((0..s.count).map(|_| rng.gen::<f64>()));
    let depth = ctx.cfg.depth;
    let res = ctx.cfg.geometry_resolution;
    let mut samples: Vec<LcSample> = phases
        .par_iter()
        .map(|&phase| match boundary_point(&spec, phase) {
            Ok(z) => LcSample { phase: Some(phase), ..lc_evidence(&spec, z, depth, res, s.fit_from) },
            Err(e) => LcSample {
                phase: Some(phase),
                angle: None,
                point: None,
                rows: Vec::new(),
                ratio: None,
                monotone: false,
                excluded: Some(e.to_string()),
            },
        })
        .collect();
    for a in &s.angles {
        samples.push(LcSample {
            phase: None,
            angle: Some(a.clone()),
            point: None,
            rows: Vec::new(),
            ratio: None,
            monotone: false,
            excluded: Some("rational internal angle: the landing point is (eventually) periodic".into()),
        });
    }
    let ratios: Vec<f64> = samples.iter().filter_map(|s| s.ratio).collect();
    let report = serde_json::json!({ "schema": LC_SCHEMA, "depth": depth, "samples": samples });
    let js = ctx.write_json("lc_evidence.json", &report)?;
    let summary = serde_json::json!({
        "samples": samples.len(),
        "fitted": ratios.len(),
        "ratio_min": ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        "ratio_max": ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    });
    Ok(files_summary("lc-evidence", &[js], summary))
}

pub fn cmd_render(ctx: &Context) -> Result<String, CliError> {
    let opts = &ctx.cfg.render;
    let poly = ctx.cfg.polynomial()?;
    let mut files = Vec::new();
    let mut svg = Svg::new(opts);
    if opts.has("julia") {
        let (img, _) = render::escape_image(&poly, opts);
        let p = ctx.out_dir.join("julia.png");
        img.save(&p).map_err(|e| io_err(&p, e))?;
        svg.image("julia", "julia.png");
        files.push(p);
    }
    let wants_puzzle = ["pieces", "graph", "equipotentials", "markers"].iter().any(|l| opts.has(l));
    if wants_puzzle && ctx.cfg.theta.is_some() {
        let spec = ctx.spec()?;
        let img = render::piece_image(&spec, ctx.cfg.depth, opts);
        let p = ctx.out_dir.join("pieces.png");
        img.save(&p).map_err(|e| io_err(&p, e))?;
        files.push(p);
        svg.image("pieces", "pieces.png");
        render::draw_graph(&mut svg, &spec);
        for z in on_graph_samples(&spec, ctx.cfg.depth, opts) {
            svg.marker("markers", z, 1.5, "#e00000");
        }
    }
    files.push(ctx.write("render.svg", svg.finish().as_bytes())?);
    Ok(files_summary("render", &files, serde_json::json!({ "layers": opts.layers })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(&format!(r#"{{"schema":"{CONFIG_SCHEMA}"{extra}}}"#), false)
    }

    #[test]
    fn config_validation() {
        assert!(cfg("").is_ok());
        assert!(matches!(cfg(r#","tau":0"#), Err(CliError::Config(_))));
        assert!(matches!(cfg(r#","tolerances":{"tol_graph":-1}"#), Err(CliError::Config(_))));
        assert!(matches!(cfg(r#","bogus":1"#), Err(CliError::Config(_))));
        assert!(RunConfig::parse(r#"{"schema":"other"}"#, false).is_err());
        let t = RunConfig::parse(&format!("schema = \"{CONFIG_SCHEMA}\"\ndepth = 5\n"), true).unwrap();
        assert_eq!(t.depth, 5);
    }

    #[test]
    fn error_objects_are_json() {
        let e = CliError::Config("bad".into());
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["kind"], "config");
        assert_eq!(v["schema"], ERROR_SCHEMA);
        assert_ne!(e.exit_code(), 0);
    }
}
