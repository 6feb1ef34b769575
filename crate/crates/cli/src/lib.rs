//! Command-line driver: argument parsing, config files and the five
//! subcommands (`train`, `ablate`, `stats`, `export-embeddings`,
//! `gradcheck`).
//!
//! Settings resolve in three layers: command-line flags override keys from
//! `--config <file>`, which override built-in defaults. The config file is
//! plain `key = value` lines using the flag names without the leading
//! dashes (`fusion-hops` and `fusion_hops` are both accepted); `#` starts a
//! comment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gsapool_core::check::gradient_suite;
use gsapool_core::dataset::{
    canonical_name, find_tu_dataset, reference_stats, stratified_folds, synthetic_motif_dataset,
};
use gsapool_core::train::{cross_validate, run_split, write_embeddings_csv};
use gsapool_core::{Dataset, FusionKind, GsaPoolNet, ModelConfig, ScorerKernel, TrainConfig};
use log::info;

#[derive(Debug, Parser)]
#[command(
    name = "gsapool",
    version,
    about = "Structure-feature self-adaptive graph pooling experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validate one configuration and write metrics.json.
    Train(Flags),
    /// Sweep one hyperparameter axis, one metrics file per value.
    Ablate(Flags),
    /// Print dataset statistics.
    Stats(Flags),
    /// Train on the first fold and write per-graph embeddings as CSV.
    ExportEmbeddings(Flags),
    /// Run the finite-difference gradient suite.
    Gradcheck(Flags),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Ratio,
    Alpha,
    Scorer,
    Fusion,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(
            self.to_possible_value()
                .expect("no skipped variants")
                .get_name(),
        )
    }
}

/// Every flag is optional so that unset flags fall through to the config
/// file and then to the defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// TU dataset name (DD, NCI1, NCI109, Mutagenicity) or `synthetic[:N[:SEED]]`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Directory holding `<name>/<name>_A.txt` and friends.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Weight of the structure score; defaults to 0.6 on DD and 0.4 elsewhere.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Structure scorer kernel: gcn, cheb, sage or gat.
    #[arg(long)]
    pub sbtl: Option<String>,
    /// Feature fusion before discarding nodes: none, gcn or gat.
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long)]
    pub fusion_hops: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum folds trained at once.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Sweep axis for `ablate`.
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    /// `key = value` file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 15] = [
    "dataset",
    "data-dir",
    "out-dir",
    "ratio",
    "alpha",
    "sbtl",
    "fusion",
    "fusion-hops",
    "folds",
    "epochs",
    "batch-size",
    "lr",
    "seed",
    "jobs",
    "axis",
];

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, got `{raw}`", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key `{}`", n + 1, k.trim());
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub axis: Option<Axis>,
}

impl RunSpec {
    /// Applies flags over the config file over defaults.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        fn pick<T: FromStr>(
            cli: Option<T>,
            file: &BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>>
        where
            T::Err: fmt::Display,
        {
            if cli.is_some() {
                return Ok(cli);
            }
            file.get(key)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|e| anyhow::anyhow!("config key `{key}` = `{v}`: {e}"))
                })
                .transpose()
        }

        let dataset =
            pick(flags.dataset.clone(), &file, "dataset")?.unwrap_or_else(|| "synthetic".into());
        let mut model = ModelConfig::default();
        let mut train = TrainConfig::default();
        let pool = &mut model.pool;
        pool.alpha = if canonical_name(&dataset) == "DD" {
            0.6
        } else {
            0.4
        };
        if let Some(v) = pick(flags.ratio, &file, "ratio")? {
            pool.ratio = v;
        }
        if let Some(v) = pick(flags.alpha, &file, "alpha")? {
            pool.alpha = v;
        }
        if let Some(v) = pick(flags.sbtl.clone(), &file, "sbtl")? {
            pool.sbtl = v.parse::<ScorerKernel>()?;
        }
        if let Some(v) = pick(flags.fusion.clone(), &file, "fusion")? {
            pool.fusion = v.parse::<FusionKind>()?;
        }
        if let Some(v) = pick(flags.fusion_hops, &file, "fusion-hops")? {
            pool.fusion_hops = v;
        }
        if let Some(v) = pick(flags.folds, &file, "folds")? {
            train.folds = v;
        }
        if let Some(v) = pick(flags.epochs, &file, "epochs")? {
            train.epochs = v;
        }
        if let Some(v) = pick(flags.batch_size, &file, "batch-size")? {
            train.batch_size = v;
        }
        if let Some(v) = pick(flags.lr, &file, "lr")? {
            train.lr = v;
        }
        if let Some(v) = pick(flags.seed, &file, "seed")? {
            train.seed = v;
        }
        if let Some(v) = pick(flags.jobs, &file, "jobs")? {
            train.jobs = v;
        }
        let axis = match flags.axis {
            Some(a) => Some(a),
            None => file
                .get("axis")
                .map(|v| {
                    Axis::from_str(v, true).map_err(|e| anyhow::anyhow!("config key `axis`: {e}"))
                })
                .transpose()?,
        };
        model.validate()?;
        train.validate()?;
        Ok(Self {
            dataset,
            data_dir: pick(flags.data_dir.clone(), &file, "data-dir")?
                .unwrap_or_else(|| "data".into()),
            out_dir: pick(flags.out_dir.clone(), &file, "out-dir")?.unwrap_or_else(|| "out".into()),
            model,
            train,
            axis,
        })
    }

    /// `key = value` text that resolves back to this spec.
    pub fn to_config(&self) -> String {
        let p = &self.model.pool;
        let t = &self.train;
        let mut s = format!(
            "dataset = {}\ndata-dir = {}\nout-dir = {}\nratio = {}\nalpha = {}\nsbtl = {}\nfusion = {}\n\
             fusion-hops = {}\nfolds = {}\nepochs = {}\nbatch-size = {}\nlr = {}\nseed = {}\njobs = {}\n",
            self.dataset,
            self.data_dir.display(),
            self.out_dir.display(),
            p.ratio,
            p.alpha,
            p.sbtl,
            p.fusion,
            p.fusion_hops,
            t.folds,
            t.epochs,
            t.batch_size,
            t.lr,
            t.seed,
            t.jobs
        );
        if let Some(a) = self.axis {
            s.push_str(&format!("axis = {a}\n"));
        }
        s
    }
}

/// `synthetic`, `synthetic:N` or `synthetic:N:SEED` (defaults 500 and 7),
/// otherwise a TU dataset under `data_dir`.
pub fn load_dataset(spec: &str, data_dir: &Path) -> Result<Dataset> {
    let mut parts = spec.split(':');
    if parts
        .next()
        .is_some_and(|p| p.eq_ignore_ascii_case("synthetic"))
    {
        let n = parts
            .next()
            .map(str::parse)
            .transpose()
            .context("synthetic size")?
            .unwrap_or(500);
        let seed = parts
            .next()
            .map(str::parse)
            .transpose()
            .context("synthetic seed")?
            .unwrap_or(7);
        let mut d = synthetic_motif_dataset(n, seed)?;
        d.name = spec.to_string();
        return Ok(d);
    }
    let name = canonical_name(spec);
    let known = reference_stats(&name).is_some()
        || data_dir.join(&name).is_dir()
        || data_dir.join(format!("{name}_A.txt")).is_file();
    if !known {
        bail!(
            "unknown dataset `{spec}`: expected DD, NCI1, NCI109, Mutagenicity, synthetic[:N[:SEED]], \
             or TU files under {}",
            data_dir.display()
        );
    }
    Ok(find_tu_dataset(data_dir, &name)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(f) => train(&RunSpec::resolve(&f)?),
        Command::Ablate(f) => ablate(&RunSpec::resolve(&f)?),
        Command::Stats(f) => stats(&RunSpec::resolve(&f)?),
        Command::ExportEmbeddings(f) => export_embeddings(&RunSpec::resolve(&f)?),
        Command::Gradcheck(f) => gradcheck(f.seed.unwrap_or(0)),
    }
}

fn write_metrics(spec: &RunSpec, d: &Dataset, model: &ModelConfig, path: &Path) -> Result<f64> {
    let m = cross_validate(d, model, &spec.train)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    m.write_json(BufWriter::new(file))?;
    println!(
        "{}: {} ({} folds) -> {}",
        d.name,
        m.summary(),
        m.fold_accuracies.len(),
        path.display()
    );
    Ok(m.mean)
}

fn train(spec: &RunSpec) -> Result<()> {
    let d = load_dataset(&spec.dataset, &spec.data_dir)?;
    fs::create_dir_all(&spec.out_dir)?;
    fs::write(spec.out_dir.join("run.conf"), spec.to_config())?;
    write_metrics(spec, &d, &spec.model, &spec.out_dir.join("metrics.json"))?;
    Ok(())
}

/// `(file label, model config)` for every cell of `axis`.
pub fn ablation_cells(axis: Axis, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    let with = |f: &dyn Fn(&mut ModelConfig)| {
        let mut m = base.clone();
        f(&mut m);
        m
    };
    match axis {
        Axis::Ratio => [0.25, 0.5, 0.75]
            .iter()
            .map(|&r| (format!("ratio_{r}"), with(&|m| m.pool.ratio = r)))
            .collect(),
        Axis::Alpha => [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&a| (format!("alpha_{a}"), with(&|m| m.pool.alpha = a)))
            .collect(),
        // single structure kernels use alpha = 1, the feature-only scorer
        // alpha = 0, and the combined scorer keeps the configured alpha
        Axis::Scorer => {
            let mut cells: Vec<(String, ModelConfig)> = [
                ScorerKernel::Sage,
                ScorerKernel::Gat,
                ScorerKernel::Gcn,
                ScorerKernel::Cheb,
            ]
            .iter()
            .map(|&k| {
                (
                    format!("scorer_{k}"),
                    with(&|m| {
                        m.pool.sbtl = k;
                        m.pool.alpha = 1.0;
                    }),
                )
            })
            .collect();
            cells.push(("scorer_mlp".into(), with(&|m| m.pool.alpha = 0.0)));
            cells.push((
                "scorer_gcn+mlp".into(),
                with(&|m| m.pool.sbtl = ScorerKernel::Gcn),
            ));
            cells
        }
        Axis::Fusion => [FusionKind::None, FusionKind::Gcn, FusionKind::Gat]
            .iter()
            .map(|&f| (format!("fusion_{f}"), with(&|m| m.pool.fusion = f)))
            .collect(),
    }
}

fn ablate(spec: &RunSpec) -> Result<()> {
    let Some(axis) = spec.axis else {
        bail!("ablate needs --axis (ratio, alpha, scorer or fusion)");
    };
    let d = load_dataset(&spec.dataset, &spec.data_dir)?;
    fs::create_dir_all(&spec.out_dir)?;
    fs::write(
        spec.out_dir.join(format!("ablate_{axis}.conf")),
        spec.to_config(),
    )?;
    for (label, model) in ablation_cells(axis, &spec.model) {
        info!("ablation cell {label}");
        write_metrics(
            spec,
            &d,
            &model,
            &spec.out_dir.join(format!("ablate_{label}.json")),
        )?;
    }
    Ok(())
}

fn stats(spec: &RunSpec) -> Result<()> {
    let d = load_dataset(&spec.dataset, &spec.data_dir)?;
    let s = d.stats();
    println!("{s}");
    if let Some((graphs, classes, nodes, edges)) = reference_stats(&d.name) {
        println!("reference: {graphs} graphs, {classes} classes, {nodes:.2} mean nodes, {edges:.2} mean edges");
    }
    Ok(())
}

fn export_embeddings(spec: &RunSpec) -> Result<()> {
    let d = load_dataset(&spec.dataset, &spec.data_dir)?;
    let model = GsaPoolNet::new(spec.model.clone(), d.feature_dim, d.num_classes)?;
    let plan = stratified_folds(&d, spec.train.folds, spec.train.seed)?;
    let split = plan.split(0, &d.labels())?;
    let out = run_split(&d, &split, &model, &spec.train, 0, spec.train.seed)?;
    fs::create_dir_all(&spec.out_dir)?;
    let csv = spec.out_dir.join("embeddings.csv");
    write_embeddings_csv(BufWriter::new(File::create(&csv)?), &model, &out.params, &d)?;
    let ckpt = spec.out_dir.join("model.ckpt");
    out.params
        .write_checkpoint(BufWriter::new(File::create(&ckpt)?))?;
    println!(
        "fold 0 test accuracy {:.4}; wrote {} and {}",
        out.report.test_accuracy,
        csv.display(),
        ckpt.display()
    );
    Ok(())
}

fn gradcheck(seed: u64) -> Result<()> {
    let reports = gradient_suite(seed)?;
    let mut failed = 0;
    for (name, r) in &reports {
        println!("{name:<32} {r}");
        if !r.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} gradient checks failed", reports.len());
    }
    println!("all {} gradient checks passed", reports.len());
    Ok(())
}
