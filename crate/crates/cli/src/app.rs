//! Argument parsing and subcommand execution.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use treeshape::clustering::{cut, linkage, Dendrogram, Linkage};
use treeshape::metric::DistanceMatrix;
use treeshape::srvf::{srvft_to_tree_labeled, Sampling};
use treeshape::statistics::{fit_atlas, karcher_mean, mode_path, sample_random, Atlas, KarcherOptions, RegressionModel};
use treeshape::synthetic::{random_tree, SynthParams};
use treeshape::tree::{extract_bio_params, load_collection, load_root, normalize_scale, BioParams};
use treeshape::{AnalysisOptions, RegistrationOptions, RootTree, Weights};

use crate::render::{render_dendrogram, render_strip, render_tree, Panel, RenderStyle};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "TREESHAPE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "treeshape", version, about = "Elastic shape statistics for two-layer root architectures")]
pub struct Cli {
    /// Worker threads (default: $TREESHAPE_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 0.02)]
    pub lambda_m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_p: f64,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct ShapeArgs {
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Divide coordinates by the main root length before analysis.
    #[arg(long)]
    pub normalize: bool,
    /// Samples per main curve.
    #[arg(long, default_value_t = 100)]
    pub n_main: usize,
    /// Samples per lateral.
    #[arg(long, default_value_t = 50)]
    pub n_lat: usize,
    /// Registration sweeps.
    #[arg(long, default_value_t = 10)]
    pub reg_iter: usize,
    /// Keep attachment positions fixed when the main is reparameterized.
    #[arg(long)]
    pub fixed_attachments: bool,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct KarcherArgs {
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Geodesic between two roots.
    Geodesic {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Registered distance between two roots.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise distance matrix of a collection.
    Matrix {
        input: PathBuf,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Karcher mean of a collection.
    Mean {
        input: PathBuf,
        #[command(flatten)]
        karcher: KarcherArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and principal modes of a collection.
    Atlas {
        input: PathBuf,
        #[command(flatten)]
        karcher: KarcherArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep along one principal mode.
    Modes {
        atlas: PathBuf,
        /// Mode number, starting at 1.
        #[arg(long, default_value_t = 1)]
        mode: usize,
        /// Range of standard deviations, as `lo,hi`.
        #[arg(long, default_value = "-2,2", allow_hyphen_values = true)]
        alpha_range: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random roots drawn from an atlas.
    Sample {
        atlas: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coefficient range, as `lo,hi`.
        #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
        range: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a linear map from root parameters to mode coefficients.
    RegressFit {
        input: PathBuf,
        #[command(flatten)]
        karcher: KarcherArgs,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a root from parameter values.
    RegressPredict {
        model: PathBuf,
        /// Comma-separated values in the model's parameter order.
        #[arg(long, allow_hyphen_values = true)]
        params: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hierarchical clustering of a distance matrix or a collection.
    Cluster {
        input: PathBuf,
        #[arg(long, default_value = "single")]
        linkage: Linkage,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        shape: ShapeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a root or a collection.
    Render {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write random synthetic roots, one JSON file each.
    Synth {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Failure kinds with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Compute(e)
    }
}

impl From<treeshape::Error> for Failure {
    fn from(e: treeshape::Error) -> Self {
        Failure::Compute(anyhow!(e.to_string()))
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Svg,
}

fn format_of(path: &Path, allowed: &[Format]) -> Outcome<Format> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let fmt = match ext.as_deref() {
        Some("json") => Format::Json,
        Some("csv") => Format::Csv,
        Some("svg") => Format::Svg,
        _ => return Err(usage(format!("cannot tell output format of {}", path.display()))),
    };
    if !allowed.contains(&fmt) {
        return Err(usage(format!("{} output is not supported here", path.display())));
    }
    Ok(fmt)
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn parse_pair(text: &str, what: &str) -> Outcome<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
    match nums {
        Ok(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) && v[0] <= v[1] => Ok((v[0], v[1])),
        _ => Err(usage(format!("--{what} expects `lo,hi` with lo <= hi, got {text:?}"))),
    }
}

impl ShapeArgs {
    fn weights(&self) -> Outcome<Weights> {
        let w = self.weights;
        Weights::new(w.lambda_m, w.lambda_s, w.lambda_p).map_err(|e| usage(e.to_string()))
    }

    fn analysis(&self) -> Outcome<AnalysisOptions> {
        if self.n_main < 3 || self.n_lat < 2 {
            return Err(usage("--n-main must be at least 3 and --n-lat at least 2"));
        }
        Ok(AnalysisOptions {
            sampling: Sampling {
                n_main: self.n_main,
                n_lat: self.n_lat,
            },
            registration: RegistrationOptions {
                max_iter: self.reg_iter,
                remap_attachments: !self.fixed_attachments,
                ..Default::default()
            },
        })
    }

    fn prepare(&self, trees: Vec<RootTree>) -> Outcome<Vec<RootTree>> {
        if !self.normalize {
            return Ok(trees);
        }
        Ok(trees.iter().map(normalize_scale).collect::<Result<_, _>>()?)
    }
}

impl KarcherArgs {
    fn options(&self) -> Outcome<KarcherOptions> {
        if !(self.step > 0.0) || !(self.tol >= 0.0) {
            return Err(usage("--step must be positive and --tol nonnegative"));
        }
        Ok(KarcherOptions {
            step: self.step,
            max_iter: self.max_iter,
            tol: self.tol,
            ..Default::default()
        })
    }
}

fn load_trees(path: &Path) -> Outcome<Vec<RootTree>> {
    Ok(load_collection(path)?)
}

fn load_atlas(path: &Path) -> Outcome<Atlas> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Atlas::from_json(&text, &path.display().to_string())?)
}

fn write_trees(path: &Path, trees: &[(RootTree, Vec<usize>)], captions: &[String]) -> Outcome {
    match format_of(path, &[Format::Json, Format::Svg])? {
        Format::Json => {
            let roots: Vec<&RootTree> = trees.iter().map(|(t, _)| t).collect();
            write(path, &json(&roots))
        }
        _ => {
            let panels: Vec<Panel> = trees
                .iter()
                .zip(captions)
                .map(|((t, l), c)| Panel::labeled(t, l).caption(c.clone()))
                .collect();
            write(path, &render_strip(&panels, &RenderStyle::default()))
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Compute(e) => eprintln!("error: {e:#}"),
            }
            f.code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Outcome<Option<usize>> {
    if let Some(n) = flag {
        return if n == 0 { Err(usage("--threads must be positive")) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command and returns the human summary.
pub fn execute(cli: Cli) -> Outcome<String> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| anyhow!("thread pool: {e}"))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Outcome<String> {
    let mut out = String::new();
    match command {
        Command::Geodesic { a, b, steps, shape, out: path } => {
            if steps < 2 {
                return Err(usage("--steps must be at least 2"));
            }
            let trees = shape.prepare(vec![load_root(&a)?, load_root(&b)?])?;
            let g = treeshape::geodesic(&trees[0], &trees[1], &shape.weights()?, steps, &shape.analysis()?)?;
            let recon = g.trees("step")?;
            writeln!(out, "distance {}", g.registration.cost.max(0.0).sqrt()).unwrap();
            writeln!(out, "steps {steps}, rotation {:.6} rad", g.registration.rotation_angle()).unwrap();
            if let Some(p) = path {
                let captions: Vec<String> = g.r_values.iter().map(|r| format!("r = {r:.2}")).collect();
                write_trees(&p, &recon, &captions)?;
            }
        }
        Command::Distance { a, b, shape, out: path } => {
            let trees = shape.prepare(vec![load_root(&a)?, load_root(&b)?])?;
            let d = treeshape::distance(&trees[0], &trees[1], &shape.weights()?, &shape.analysis()?)?;
            writeln!(out, "{d:?}").unwrap();
            if let Some(p) = path {
                format_of(&p, &[Format::Json])?;
                let doc = serde_json::json!({ "a": trees[0].id(), "b": trees[1].id(), "distance": d });
                write(&p, &json(&doc))?;
            }
        }
        Command::Matrix { input, shape, out: path } => {
            let trees = shape.prepare(load_trees(&input)?)?;
            let fmt = path.as_deref().map(|p| format_of(p, &[Format::Csv, Format::Json])).transpose()?;
            let m = treeshape::pairwise_matrix(&trees, &shape.weights()?, &shape.analysis()?)?;
            writeln!(out, "{} trees, {} pairs", m.len(), m.len() * (m.len() - 1) / 2).unwrap();
            for f in &m.failures {
                writeln!(out, "pair ({}, {}) failed: {}", m.labels[f.i], m.labels[f.j], f.error).unwrap();
            }
            if let (Some(p), Some(fmt)) = (path, fmt) {
                let text = if fmt == Format::Csv { m.to_csv() } else { json(&m) };
                write(&p, &text)?;
            }
            if !m.failures.is_empty() {
                print!("{out}");
                return Err(Failure::Compute(anyhow!("{} pair(s) failed", m.failures.len())));
            }
        }
        Command::Mean { input, karcher, shape, out: path } => {
            let fmt = path.as_deref().map(|p| format_of(p, &[Format::Json, Format::Svg])).transpose()?;
            let trees = shape.prepare(load_trees(&input)?)?;
            let k = karcher_mean(&trees, &shape.weights()?, &shape.analysis()?, &karcher.options()?)?;
            let (tree, labels) = srvft_to_tree_labeled(&k.mean, "mean")?;
            writeln!(
                out,
                "{} trees, medoid {}, {} iterations, objective {:.6e} -> {:.6e}, gradient {:.3e}{}",
                trees.len(),
                k.ids[k.medoid],
                k.iterations(),
                k.objective_history[0],
                k.objective(),
                k.gradient_norms.last().copied().unwrap_or(0.0),
                if k.converged { "" } else { " (not converged)" }
            )
            .unwrap();
            writeln!(out, "mean main length {:.6}", tree.main().length()).unwrap();
            if let (Some(p), Some(fmt)) = (path, fmt) {
                let text = match fmt {
                    Format::Json => json(&tree),
                    _ => render_tree(&tree, &RenderStyle::default(), Some(&labels)),
                };
                write(&p, &text)?;
            }
        }
        Command::Atlas { input, karcher, shape, out: path } => {
            if let Some(p) = &path {
                format_of(p, &[Format::Json])?;
            }
            let trees = shape.prepare(load_trees(&input)?)?;
            let (atlas, k) = fit_atlas(&trees, &shape.weights()?, &shape.analysis()?, &karcher.options()?)?;
            summarize_atlas(&mut out, &atlas, k.iterations());
            if let Some(p) = path {
                write(&p, &(atlas.to_json() + "\n"))?;
            }
        }
        Command::Modes { atlas, mode, alpha_range, steps, out: path } => {
            let (lo, hi) = parse_pair(&alpha_range, "alpha-range")?;
            if mode == 0 || steps == 0 {
                return Err(usage("--mode starts at 1 and --steps must be positive"));
            }
            let atlas = load_atlas(&atlas)?;
            let alphas: Vec<f64> = if steps == 1 {
                vec![lo]
            } else {
                (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
            };
            let sweep = alphas
                .iter()
                .map(|&a| mode_path(&atlas, mode - 1, a).map(|s| (s.tree, s.labels)))
                .collect::<Result<Vec<_>, _>>()?;
            writeln!(out, "mode {mode}, λ = {:.6e}, {} trees", atlas.eigenvalues[mode - 1], sweep.len()).unwrap();
            if let Some(p) = path {
                let captions: Vec<String> = alphas.iter().map(|a| format!("α = {a:.2}")).collect();
                write_trees(&p, &sweep, &captions)?;
            }
        }
        Command::Sample { atlas, n, seed, range, out: path } => {
            let range = parse_pair(&range, "range")?;
            if range.0 == range.1 {
                return Err(usage("--range must have lo < hi"));
            }
            if let Some(p) = &path {
                format_of(p, &[Format::Json, Format::Svg])?;
            }
            let atlas = load_atlas(&atlas)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = (0..n)
                .map(|i| sample_random(&atlas, &mut rng, range, &format!("sample{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            let clamped: usize = samples.iter().map(|s| s.clamped).sum();
            writeln!(out, "{n} samples, seed {seed}, {} modes", atlas.retained).unwrap();
            if clamped > 0 {
                writeln!(out, "{clamped} attachment position(s) clamped").unwrap();
            }
            if let Some(p) = path {
                let captions: Vec<String> = samples.iter().map(|s| s.tree.id().to_string()).collect();
                let trees: Vec<_> = samples.into_iter().map(|s| (s.tree, s.labels)).collect();
                write_trees(&p, &trees, &captions)?;
            }
        }
        Command::RegressFit { input, karcher, shape, out: path } => {
            if let Some(p) = &path {
                format_of(p, &[Format::Json])?;
            }
            let raw = load_trees(&input)?;
            let params: Vec<Vec<f64>> = raw.iter().map(|t| extract_bio_params(t).to_vec()).collect();
            let trees = shape.prepare(raw)?;
            let (atlas, _) = fit_atlas(&trees, &shape.weights()?, &shape.analysis()?, &karcher.options()?)?;
            let names = BioParams::NAMES.iter().map(|s| s.to_string()).collect();
            let model = treeshape::fit_regression(&atlas, &params, names)?;
            summarize_atlas(&mut out, &atlas, 0);
            writeln!(
                out,
                "regression on {}: rank {}, residual {:.6e}{}",
                model.param_names.join(", "),
                model.rank,
                model.residual,
                if model.degenerate { " (rank deficient)" } else { "" }
            )
            .unwrap();
            if let Some(p) = path {
                write(&p, &(model.to_json() + "\n"))?;
            }
        }
        Command::RegressPredict { model, params, out: path } => {
            if let Some(p) = &path {
                format_of(p, &[Format::Json, Format::Svg])?;
            }
            let values: Vec<f64> = params
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("--params: {e}")))?;
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let model = RegressionModel::from_json(&text, &model.display().to_string())?;
            if values.len() != model.param_names.len() {
                return Err(usage(format!(
                    "--params needs {} values ({})",
                    model.param_names.len(),
                    model.param_names.join(", ")
                )));
            }
            let s = treeshape::predict(&model, &values, "predicted")?;
            writeln!(out, "main length {:.6}, {} laterals", s.tree.main().length(), s.tree.real_laterals().count())
                .unwrap();
            if let Some(p) = path {
                let text = match format_of(&p, &[Format::Json, Format::Svg])? {
                    Format::Json => json(&s.tree),
                    _ => render_tree(&s.tree, &RenderStyle::default(), Some(&s.labels)),
                };
                write(&p, &text)?;
            }
        }
        Command::Cluster { input, linkage: method, k, shape, out: path } => {
            if let Some(p) = &path {
                format_of(p, &[Format::Json, Format::Svg])?;
            }
            let matrix = load_matrix(&input, &shape)?;
            let dend = linkage(&matrix, method)?;
            let labels = k.map(|k| cut(&dend, k)).transpose().map_err(|e| usage(e.to_string()))?;
            writeln!(out, "{} leaves, {method} linkage", dend.leaves()).unwrap();
            if let Some(l) = &labels {
                for (name, c) in dend.leaf_labels.iter().zip(l) {
                    writeln!(out, "{name}\t{c}").unwrap();
                }
            }
            if let Some(p) = path {
                write(&p, &cluster_output(&p, &dend, labels.as_deref())?)?;
            }
        }
        Command::Render { input, out: path } => {
            format_of(&path, &[Format::Svg])?;
            let trees = load_trees(&input)?;
            let panels: Vec<Panel> = trees.iter().map(|t| Panel::new(t).caption(t.id())).collect();
            let svg = if trees.len() == 1 {
                render_tree(&trees[0], &RenderStyle::default(), None)
            } else {
                render_strip(&panels, &RenderStyle::default())
            };
            write(&path, &svg)?;
            writeln!(out, "{} tree(s) drawn", trees.len()).unwrap();
        }
        Command::Synth { n, seed, out_dir } => {
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = SynthParams::default();
            for i in 0..n {
                let id = format!("root{i:03}");
                let t = random_tree(&mut rng, &id, &params);
                treeshape::tree::save_root(&t, out_dir.join(format!("{id}.json")))?;
            }
            writeln!(out, "{n} roots written to {}", out_dir.display()).unwrap();
        }
    }
    Ok(out)
}

fn summarize_atlas(out: &mut String, atlas: &Atlas, iterations: usize) {
    if iterations > 0 {
        writeln!(out, "karcher mean after {iterations} iterations").unwrap();
    }
    writeln!(
        out,
        "{} samples, {} modes, {} retained ({:.4} of variance)",
        atlas.training_coeffs.len(),
        atlas.modes.len(),
        atlas.retained,
        atlas.retained_ratio()
    )
    .unwrap();
    for (i, l) in atlas.eigenvalues.iter().take(atlas.retained).enumerate() {
        writeln!(out, "  λ{} = {l:.6e}", i + 1).unwrap();
    }
}

fn load_matrix(input: &Path, shape: &ShapeArgs) -> Outcome<DistanceMatrix> {
    if input.is_file() {
        let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        match input.extension().and_then(|e| e.to_str()) {
            Some("csv") => return Ok(DistanceMatrix::from_csv(&text)?),
            Some("json") => {
                if let Ok(m) = serde_json::from_str::<DistanceMatrix>(&text) {
                    m.validate()?;
                    return Ok(m);
                }
            }
            _ => {}
        }
    }
    let trees = shape.prepare(load_trees(input)?)?;
    let m = treeshape::pairwise_matrix(&trees, &shape.weights()?, &shape.analysis()?)?;
    if !m.failures.is_empty() {
        return Err(Failure::Compute(anyhow!("{} pair distance(s) failed", m.failures.len())));
    }
    Ok(m)
}

fn cluster_output(path: &Path, dend: &Dendrogram, labels: Option<&[usize]>) -> Outcome<String> {
    Ok(match format_of(path, &[Format::Json, Format::Svg])? {
        Format::Json => json(&serde_json::json!({ "dendrogram": dend, "labels": labels })),
        _ => render_dendrogram(dend, &RenderStyle::default(), labels),
    })
}
