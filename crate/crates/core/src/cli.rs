//! Command-line front end. Flags override values from `--config`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{load_dataset, read_features, synth_dataset, Dataset, ElementWidth, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::write_csv;
use crate::experiment::{evaluate_against_table, run_experiment, DatabaseChoice};
use crate::index::CodeTable;
use crate::model::encode;
use crate::objective::{random_gradcheck, Hyperparams};
use crate::trainer::{
    encode_with_ids, load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig,
};

/// Step used by `gradcheck`.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "semhash",
    version,
    about = "Supervised binary hashing: train, encode, search, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Gaussian-cluster dataset split into train and query files.
    Synth,
    /// Fit a model and write its checkpoint.
    Train,
    /// Encode a feature file into a code table.
    Encode,
    /// Rank a code table against one query vector.
    Query,
    /// Score held-out queries against a database.
    Eval,
    /// Compare analytic and finite-difference gradients on random problems.
    Gradcheck,
    /// Train and evaluate over a grid of bits × eta × beta.
    Sweep,
}

#[derive(Debug, Default, Args)]
pub struct Options {
    /// key=value run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Feature file (training set for train/sweep, queries for eval/query).
    #[arg(long, global = true, value_name = "PATH")]
    pub features: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Held-out feature file for sweep.
    #[arg(long, global = true, value_name = "PATH")]
    pub query_features: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub query_labels: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub codes: Option<PathBuf>,
    /// Code length; sweep accepts a comma list.
    #[arg(long, global = true, value_name = "K", value_delimiter = ',')]
    pub bits: Vec<usize>,
    #[arg(long, global = true, value_name = "F", value_delimiter = ',')]
    pub eta: Vec<f64>,
    #[arg(long, global = true, value_name = "F", value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long, global = true, value_name = "F")]
    pub lr: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub batch: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Defaults to --seed.
    #[arg(long, global = true, value_name = "N")]
    pub shuffle_seed: Option<u64>,
    /// Per-epoch learning-rate factor.
    #[arg(long, global = true, value_name = "F")]
    pub decay: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub checkpoint_interval: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub topk: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub radius: Option<u32>,
    #[arg(long, global = true, value_name = "train|all")]
    pub database: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Row of --features used as the query vector.
    #[arg(long, global = true, value_name = "N")]
    pub query: Option<usize>,
    /// Number of random gradcheck problems.
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub classes: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub per_class: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub dim: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    pub separation: Option<f64>,
    /// Held-out share for synth and for sweeps without query files.
    #[arg(long, global = true, value_name = "F")]
    pub test_fraction: Option<f64>,
}

/// Flags layered over the config file.
struct Settings {
    opts: Options,
    cfg: RunConfig,
}

impl Settings {
    fn new(opts: Options) -> Result<Self> {
        let cfg = match &opts.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(Settings { opts, cfg })
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.cfg.path(key))
    }

    fn require(&self, flag: &Option<PathBuf>, key: &str, name: &str) -> Result<PathBuf> {
        self.path(flag, key)
            .ok_or_else(|| Error::Config(format!("missing --{name} (or `{key}` in the config)")))
    }

    fn value<T: std::str::FromStr + Copy>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.cfg.get(key),
        }
    }

    /// All values of a list flag, falling back to the config's single value.
    fn list<T: std::str::FromStr + Copy>(&self, flag: &[T], key: &str) -> Result<Vec<T>> {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        Ok(self.cfg.get(key)?.into_iter().collect())
    }

    fn single<T: std::str::FromStr + Copy>(&self, flag: &[T], key: &str) -> Result<Option<T>> {
        let values = self.list(flag, key)?;
        if values.len() > 1 {
            return Err(Error::Config(format!(
                "--{key} takes one value outside sweep"
            )));
        }
        Ok(values.first().copied())
    }

    fn base_hyper(&self) -> Result<Hyperparams> {
        let mut h = Hyperparams::default();
        if let Some(v) = self.value(self.opts.lr, "lr")? {
            h.lr = v;
        }
        if let Some(v) = self.value(self.opts.epochs, "epochs")? {
            h.epochs = v;
        }
        if let Some(v) = self.value(self.opts.batch, "batch")? {
            h.batch_size = v;
        }
        if let Some(v) = self.value(self.opts.seed, "seed")? {
            h.seed = v;
        }
        Ok(h)
    }

    fn hyper(&self) -> Result<Hyperparams> {
        let mut h = self.base_hyper()?;
        if let Some(v) = self.single(&self.opts.bits, "bits")? {
            h.code_bits = v;
        }
        if let Some(v) = self.single(&self.opts.eta, "eta")? {
            h.eta = v;
        }
        if let Some(v) = self.single(&self.opts.beta, "beta")? {
            h.beta = v;
        }
        h.validate()?;
        Ok(h)
    }

    fn train_config(&self, hyper: Hyperparams) -> Result<TrainConfig> {
        let mut tc = TrainConfig::new(hyper);
        if let Some(v) = self.value(self.opts.shuffle_seed, "shuffle_seed")? {
            tc.shuffle_seed = v;
        }
        if let Some(v) = self.value(self.opts.decay, "decay")? {
            tc.lr_decay = v;
        }
        tc.checkpoint_interval =
            self.value(self.opts.checkpoint_interval, "checkpoint_interval")?;
        tc.validate()?;
        Ok(tc)
    }

    fn database(&self) -> Result<DatabaseChoice> {
        match &self.opts.database {
            Some(v) => v.parse(),
            None => Ok(self
                .cfg
                .get::<String>("database")?
                .map(|v| v.parse())
                .transpose()?
                .unwrap_or_default()),
        }
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.require(&self.opts.out, "out", "out")?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn train_set(&self) -> Result<Dataset> {
        let f = self.require(&self.opts.features, "train_features", "features")?;
        let l = self.require(&self.opts.labels, "train_labels", "labels")?;
        load_dataset(&f, &l)
    }

    /// Query set: `--features/--labels`, else the config's `query_*` keys.
    fn query_set(&self) -> Result<Dataset> {
        let f = self.require(&self.opts.features, "query_features", "features")?;
        let l = self.require(&self.opts.labels, "query_labels", "labels")?;
        load_dataset(&f, &l)
    }

    fn synth_spec(&self) -> SynthSpec {
        let d = SynthSpec::default();
        SynthSpec {
            classes: self.opts.classes.unwrap_or(d.classes),
            per_class: self.opts.per_class.unwrap_or(d.per_class),
            dim: self.opts.dim.unwrap_or(d.dim),
            separation: self.opts.separation.unwrap_or(d.separation),
            seed: self.opts.seed.unwrap_or(d.seed),
        }
    }

    fn test_fraction(&self) -> Result<f64> {
        let f = self.opts.test_fraction.unwrap_or(0.2);
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "test fraction must lie in (0, 1), got {f}"
            )));
        }
        Ok(f)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        load_checkpoint(&self.require(&self.opts.checkpoint, "checkpoint", "checkpoint")?)
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let s = Settings::new(cli.opts)?;
    match cli.command {
        Command::Synth => cmd_synth(&s, out),
        Command::Train => cmd_train(&s, out),
        Command::Encode => cmd_encode(&s, out),
        Command::Query => cmd_query(&s, out),
        Command::Eval => cmd_eval(&s, out),
        Command::Gradcheck => cmd_gradcheck(&s, out),
        Command::Sweep => cmd_sweep(&s, out),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io(Path::new("<stdout>"), e)
}

fn cmd_synth(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let data = synth_dataset(&s.synth_spec())?;
    let (train_set, query_set) = data.stratified_split(s.test_fraction()?, s.synth_spec().seed);
    let dir = s.out_dir()?;
    train_set.save(
        &dir.join("train.feat"),
        &dir.join("train.labels"),
        ElementWidth::F64,
    )?;
    query_set.save(
        &dir.join("query.feat"),
        &dir.join("query.labels"),
        ElementWidth::F64,
    )?;
    let cfg = "train_features = train.feat\ntrain_labels = train.labels\n\
               query_features = query.feat\nquery_labels = query.labels\n";
    let cfg_path = dir.join("run.cfg");
    std::fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
    writeln!(
        out,
        "train={} query={} dim={} classes={}",
        train_set.len(),
        query_set.len(),
        data.dim(),
        data.classes
    )
    .map_err(stdout_err)
}

fn cmd_train(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let hyper = s.hyper()?;
    let config = s.train_config(hyper)?;
    let data = s.train_set()?;
    let ckpt_path = match s.path(&s.opts.checkpoint, "checkpoint") {
        Some(p) => p,
        None => s.out_dir()?.join("checkpoint.dhcn"),
    };
    let aux_dir = match s.path(&s.opts.out, "out") {
        Some(_) => s.out_dir()?,
        None => ckpt_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };

    let outcome = train(&data, &config)?;
    save_checkpoint(&outcome.final_checkpoint(hyper), &ckpt_path)?;
    write_csv(&aux_dir.join("trace.csv"), &outcome.trace)?;
    for cp in &outcome.checkpoints {
        save_checkpoint(
            cp,
            &aux_dir.join(format!("checkpoint_epoch{:04}.dhcn", cp.epoch)),
        )?;
    }
    let last = outcome.trace.last();
    writeln!(
        out,
        "epochs={} objective={:.6e} checkpoint={}",
        outcome.trace.len(),
        last.map_or(f64::NAN, |t| t.objective),
        ckpt_path.display()
    )
    .map_err(stdout_err)
}

fn cmd_encode(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let cp = s.checkpoint()?;
    let features_path = s.require(&s.opts.features, "train_features", "features")?;
    let labels_path = s.path(&s.opts.labels, "train_labels");
    let mut table = CodeTable::new(cp.params.code_bits());
    match labels_path {
        Some(l) => {
            let data = load_dataset(&features_path, &l)?;
            table = encode_with_ids(&cp.params, &data, 0)?;
        }
        None => {
            let features = read_features(&features_path)?;
            for (i, row) in features.iter_rows().enumerate() {
                let (code, predicted) = encode(row, &cp.params)?;
                table.push(&code, i as u32, None, predicted as u32)?;
            }
        }
    }
    let codes_path = match s.path(&s.opts.codes, "codes") {
        Some(p) => p,
        None => s.out_dir()?.join("codes.htbl"),
    };
    table.save(&codes_path)?;
    writeln!(
        out,
        "encoded={} bits={} codes={}",
        table.len(),
        table.bits(),
        codes_path.display()
    )
    .map_err(stdout_err)
}

#[derive(Serialize)]
struct QueryRow {
    rank: usize,
    id: u32,
    distance: u32,
    true_label: String,
    predicted_label: u32,
}

fn cmd_query(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let cp = s.checkpoint()?;
    let table = CodeTable::load(s.require(&s.opts.codes, "codes", "codes")?)?;
    if table.bits() != cp.params.code_bits() {
        return Err(Error::Dimension {
            context: "code table bits vs checkpoint",
            expected: cp.params.code_bits(),
            actual: table.bits(),
        });
    }
    let features = read_features(&s.require(&s.opts.features, "query_features", "features")?)?;
    let row = s.opts.query.unwrap_or(0);
    if row >= features.rows() {
        return Err(Error::Data(format!(
            "query row {row} out of range for {} vectors",
            features.rows()
        )));
    }
    let (code, predicted) = encode(features.row(row), &cp.params)?;
    let hits = match s.value(s.opts.radius, "radius")? {
        Some(r) => table.radius_search(&code, r)?,
        None => table.top_k(&code, s.value(s.opts.topk, "topk")?.unwrap_or(10))?,
    };
    log::info!(
        "query row {row} predicted class {predicted}, {} hits",
        hits.len()
    );
    let mut w = csv::Writer::from_writer(out);
    for (rank, h) in hits.iter().enumerate() {
        w.serialize(QueryRow {
            rank: rank + 1,
            id: h.id,
            distance: h.distance,
            true_label: table
                .label(h.index)
                .map_or_else(String::new, |l| l.to_string()),
            predicted_label: h.predicted,
        })
        .map_err(|e| stdout_err(e.into()))?;
    }
    w.flush().map_err(stdout_err)
}

fn cmd_eval(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let cp = s.checkpoint()?;
    let queries = s.query_set()?;
    let table = match s.path(&s.opts.codes, "codes") {
        Some(p) => {
            let t = CodeTable::load(&p)?;
            if t.bits() != cp.params.code_bits() {
                return Err(Error::Dimension {
                    context: "code table bits vs checkpoint",
                    expected: cp.params.code_bits(),
                    actual: t.bits(),
                });
            }
            t
        }
        None => {
            let f = s.require(&None, "train_features", "codes")?;
            let l = s.require(&None, "train_labels", "codes")?;
            encode_with_ids(&cp.params, &load_dataset(&f, &l)?, 0)?
        }
    };
    let (_, report) = evaluate_against_table(&cp.params, table, &queries, s.database()?)?;
    let dir = s.out_dir()?;
    report.write_files(&dir)?;
    writeln!(
        out,
        "map={:.6} oa={:.6} queries={} report={}",
        report.map,
        report.oa,
        report.queries,
        dir.join("report.json").display()
    )
    .map_err(stdout_err)
}

fn cmd_gradcheck(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let trials = s.opts.trials.unwrap_or(20);
    let seed = s.value(s.opts.seed, "seed")?.unwrap_or(0);
    let results = random_gradcheck(seed, trials, GRADCHECK_STEP)?;
    let mut failure = None;
    for (t, r) in results.iter().enumerate() {
        let worst = r.report.worst();
        writeln!(
            out,
            "trial={t} m={} d={} k={} c={} eta={} beta={} worst={:.3e} block={}",
            r.batch, r.dim, r.bits, r.classes, r.eta, r.beta, worst.worst, worst.block
        )
        .map_err(stdout_err)?;
        if failure.is_none() {
            failure = r.report.ensure_below(GRADCHECK_TOLERANCE).err();
        }
    }
    match failure {
        Some(e) => Err(e),
        None => writeln!(out, "ok trials={trials}").map_err(stdout_err),
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    bits: usize,
    eta: f64,
    beta: f64,
    map: f64,
    oa: f64,
    objective: f64,
}

fn cmd_sweep(s: &Settings, out: &mut dyn Write) -> Result<()> {
    let base = s.base_hyper()?;
    let mut bits = s.list(&s.opts.bits, "bits")?;
    if bits.is_empty() {
        bits = vec![16, 32, 48, 64];
    }
    let etas = Some(s.list(&s.opts.eta, "eta")?)
        .filter(|v| !v.is_empty())
        .unwrap_or(vec![base.eta]);
    let betas = Some(s.list(&s.opts.beta, "beta")?)
        .filter(|v| !v.is_empty())
        .unwrap_or(vec![base.beta]);

    let have_files = s.path(&s.opts.features, "train_features").is_some();
    let (train_set, query_set) = if have_files {
        let q_f = s.require(&s.opts.query_features, "query_features", "query-features")?;
        let q_l = s.require(&s.opts.query_labels, "query_labels", "query-labels")?;
        (s.train_set()?, load_dataset(&q_f, &q_l)?)
    } else {
        let spec = s.synth_spec();
        synth_dataset(&spec)?.stratified_split(s.test_fraction()?, spec.seed)
    };
    let choice = s.database()?;
    let dir = s.out_dir()?;

    let mut rows = Vec::new();
    for &k in &bits {
        for &eta in &etas {
            for &beta in &betas {
                let hyper = Hyperparams {
                    code_bits: k,
                    eta,
                    beta,
                    ..base
                };
                hyper.validate()?;
                let result =
                    run_experiment(&train_set, &query_set, &s.train_config(hyper)?, choice)?;
                let row = SweepRow {
                    bits: k,
                    eta,
                    beta,
                    map: result.report.map,
                    oa: result.report.oa,
                    objective: result
                        .outcome
                        .trace
                        .last()
                        .map_or(f64::NAN, |t| t.objective),
                };
                log::info!("{row:?}");
                rows.push(row);
            }
        }
    }
    write_csv(&dir.join("sweep.csv"), &rows)?;
    let mut w = csv::Writer::from_writer(out);
    for row in &rows {
        w.serialize(row).map_err(|e| stdout_err(e.into()))?;
    }
    w.flush().map_err(stdout_err)
}
