//! `compound3d` command-line driver.

mod config;
mod report;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use compound3d::checkpoint::{self, CheckpointHeader, CODE_VERSION};
use compound3d::data::{classify_relations, Dataset, DatasetStats, FilterIndex, RelationType, Triple};
use compound3d::ensemble::{fusion_evaluate, method_table, EnsembleManifest, ManifestMember, WdsEnsemble};
use compound3d::evaluation::{evaluate, Metrics, MetricsReport};
use compound3d::search::{beam_search_with_observer, read_log, CheckpointSink, DatasetTrainer};
use compound3d::training::train_with_observer;
use compound3d::{load_dataset, Model};

use config::{EnsembleChoice, EvalSplit, Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Core(compound3d::Error),
}

impl From<compound3d::Error> for CliError {
    fn from(e: compound3d::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        use compound3d::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(E::Config(_) | E::InvalidVariant(_) | E::VariantSyntax { .. } | E::Dimension(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "compound3d",
    version,
    about = "Knowledge graph embedding with compound 3D affine operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset and write its statistics.
    Prepare,
    /// Train one variant and write a checkpoint.
    Train,
    /// Filtered link prediction metrics for a checkpoint.
    Eval {
        /// Defaults to the checkpoint written by `train` in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate a freshly initialized model instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        untrained: bool,
    },
    /// Beam search over operator variants.
    Search,
    /// Evaluate ensembles of trained checkpoints.
    Ensemble {
        /// Member checkpoint; repeat for each member.
        #[arg(long = "member")]
        members: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Plot-ready CSV tables from search logs and evaluation reports.
    Report {
        #[arg(long = "search-log")]
        search_logs: Vec<PathBuf>,
        #[arg(long = "eval-report")]
        eval_reports: Vec<PathBuf>,
    },
    /// Print the resolved configuration in canonical form and its hash.
    Config,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Prepare => prepare(&cfg),
        Command::Train => train(&cfg),
        Command::Eval { checkpoint, untrained } => eval(&cfg, checkpoint, untrained),
        Command::Search => search(&cfg),
        Command::Ensemble { members, manifest } => ensemble(&cfg, members, manifest),
        Command::Report {
            search_logs,
            eval_reports,
        } => report_cmd(&cfg, search_logs, eval_reports),
        Command::Config => {
            print!("{}", cfg.canonical());
            println!("# config_hash={}", cfg.hash());
            Ok(())
        }
    }
}

fn stamp(cfg: &RunConfig) -> String {
    format!("# code_version={CODE_VERSION}\n# config_hash={}\n", cfg.hash())
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_owned();
    name.push(".partial");
    path.with_file_name(name)
}

/// Written under `<name>.partial` and renamed into place by `commit`, so an
/// interrupted or failed run leaves only clearly marked files behind.
struct Artifact {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Artifact {
    fn create(path: PathBuf) -> CliResult<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))?;
        }
        let partial = partial_path(&path);
        let file =
            File::create(&partial).map_err(|e| CliError::Data(format!("creating {}: {e}", partial.display())))?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    fn write(&mut self, text: &str) -> CliResult<()> {
        self.out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::Data(format!("writing {}: {e}", self.path.display())))
    }

    fn commit(mut self) -> CliResult<PathBuf> {
        self.out
            .flush()
            .map_err(|e| CliError::Data(format!("writing {}: {e}", self.path.display())))?;
        drop(self.out);
        fs::rename(partial_path(&self.path), &self.path)
            .map_err(|e| CliError::Data(format!("finalizing {}: {e}", self.path.display())))?;
        Ok(self.path)
    }
}

fn write_artifact(path: PathBuf, text: &str) -> CliResult<PathBuf> {
    let mut a = Artifact::create(path)?;
    a.write(text)?;
    a.commit()
}

fn load(cfg: &RunConfig) -> CliResult<Dataset> {
    let dir = cfg.dataset_dir()?;
    let ds = load_dataset(dir)?;
    eprintln!(
        "loaded {}: {} entities, {} relations, {}/{}/{} triples",
        dir.display(),
        ds.vocab.num_entities(),
        ds.vocab.num_relations(),
        ds.store.train.len(),
        ds.store.valid.len(),
        ds.store.test.len()
    );
    Ok(ds)
}

fn relation_types(cfg: &RunConfig, ds: &Dataset) -> Vec<RelationType> {
    classify_relations(
        &ds.store.train,
        ds.vocab.num_relations(),
        cfg.eval.relation_type_threshold,
    )
}

fn eval_triples(cfg: &RunConfig, ds: &Dataset) -> Vec<Triple> {
    match cfg.eval.split {
        EvalSplit::Valid => ds.store.valid.clone(),
        EvalSplit::Test => ds.store.test.clone(),
    }
}

fn prepare(cfg: &RunConfig) -> CliResult<()> {
    let ds = load(cfg)?;
    ds.store.validate(ds.vocab.num_entities(), ds.vocab.num_relations())?;
    let stats = DatasetStats::compute(&ds);
    let out = cfg.out_dir.join("prepare");
    write_artifact(out.join("stats.txt"), &format!("{}{stats}", stamp(cfg)))?;
    let types = relation_types(cfg, &ds);
    let mut counts = vec![0usize; ds.vocab.num_relations()];
    for t in &ds.store.train {
        counts[t.relation as usize] += 1;
    }
    let mut csv = format!("{}relation_id,relation,type,train_triples\n", stamp(cfg));
    for (r, ty) in types.iter().enumerate() {
        let name = ds.vocab.relations.name(r as u32).unwrap_or_default();
        csv.push_str(&format!("{r},{name},{},{}\n", ty.label(), counts[r]));
    }
    write_artifact(out.join("relation_types.csv"), &csv)?;
    print!("{stats}");
    Ok(())
}

fn train(cfg: &RunConfig) -> CliResult<()> {
    let ds = load(cfg)?;
    let mcfg = cfg.model_config()?;
    let model = Model::init(ds.vocab.num_entities(), ds.vocab.num_relations(), &mcfg, cfg.seed)?;
    let out = cfg.out_dir.join("train");
    write_artifact(out.join("config.toml"), &format!("{}{}", stamp(cfg), cfg.canonical()))?;
    let mut log = Artifact::create(out.join("log.txt"))?;
    log.write(&stamp(cfg))?;
    let mut log_err = None;
    let outcome = train_with_observer(model, &ds.store, &cfg.loss_config(), &cfg.train_config(), &mut |rec| {
        eprintln!("{rec}");
        if let Err(e) = log.write(&format!("{rec}\n")) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let final_loss = outcome.losses.last().copied();
    let (model, step, val_mrr) = match outcome.best {
        Some(b) => (b.model, Some(b.step), Some(b.val_mrr)),
        None => (outcome.model, Some(cfg.train.max_steps), None),
    };
    let mut header = CheckpointHeader::for_model(&model, ds.vocab.fingerprint(), cfg.hash());
    header.config = serde_json::to_value(cfg).map_err(compound3d::Error::from)?;
    header.step = step;
    header.val_mrr = val_mrr;
    let path = out.join("model.ckpt");
    checkpoint::save(&path, &header, &model)?;
    log.commit()?;
    println!("checkpoint={}", path.display());
    if let Some(l) = final_loss {
        println!("final_loss={l:.6}");
    }
    if let Some(m) = val_mrr {
        println!("best_val_mrr={m:.6} step={}", step.unwrap_or(0));
    }
    Ok(())
}

fn eval(cfg: &RunConfig, checkpoint_path: Option<PathBuf>, untrained: bool) -> CliResult<()> {
    let ds = load(cfg)?;
    let (model, ckpt_hash, step) = if untrained {
        let m = Model::init(
            ds.vocab.num_entities(),
            ds.vocab.num_relations(),
            &cfg.model_config()?,
            cfg.seed,
        )?;
        (m, "untrained".to_owned(), 0)
    } else {
        let path = checkpoint_path.unwrap_or_else(|| cfg.out_dir.join("train").join("model.ckpt"));
        let ck = checkpoint::load_for_vocab(&path, &ds.vocab.fingerprint())?;
        (ck.model, ck.header.config_hash, ck.header.step.unwrap_or(0))
    };
    let filter = FilterIndex::build(&ds.store);
    let triples = eval_triples(cfg, &ds);
    let report = evaluate(&model, &triples, &filter, &relation_types(cfg, &ds))?;
    let split = cfg.eval.split.name();
    let header = format!(
        "{}# checkpoint_config_hash={ckpt_hash}\n# checkpoint_step={step}\n# variant={}\n# dim={}\n# split={split}\n",
        stamp(cfg),
        model.variant(),
        model.dim()
    );
    let body = report.render(Some(&ds.vocab));
    let out = cfg.out_dir.join("eval");
    write_artifact(out.join(format!("{split}.txt")), &format!("{header}{body}"))?;
    write_artifact(
        out.join(format!("{split}_relations.csv")),
        &format!("{}{}", stamp(cfg), report.relation_csv(Some(&ds.vocab))),
    )?;
    print!("{body}");
    Ok(())
}

fn search(cfg: &RunConfig) -> CliResult<()> {
    let ds = load(cfg)?;
    let out = cfg.out_dir.join("search");
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::Data(format!("creating {}: {e}", ckpt_dir.display())))?;
    let mut trainer = DatasetTrainer::new(
        &ds.store,
        ds.vocab.num_entities(),
        ds.vocab.num_relations(),
        cfg.model_config()?,
        cfg.loss_config(),
        cfg.train_config(),
    );
    trainer.valid_limit = cfg.search.valid_limit;
    trainer.checkpoints = Some(CheckpointSink {
        dir: ckpt_dir,
        vocab: ds.vocab.fingerprint(),
        config_hash: cfg.hash(),
    });
    let mut log = Artifact::create(out.join("log.jsonl"))?;
    log.write(&stamp(cfg))?;
    let mut log_err = None;
    let outcome = beam_search_with_observer(&mut trainer, &cfg.search_config(), &mut |rec| {
        match rec.mrr {
            Some(m) => eprintln!(
                "stage {} {:<24} mrr={m:.4} params={}",
                rec.stage,
                rec.variant.to_string(),
                rec.params
            ),
            None => eprintln!(
                "stage {} {:<24} failed: {}",
                rec.stage,
                rec.variant.to_string(),
                rec.error.as_deref().unwrap_or("")
            ),
        }
        let line = serde_json::to_string(rec).expect("records serialize") + "\n";
        if let Err(e) = log.write(&line) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    log.commit()?;

    let best = &outcome.best;
    let summary = format!(
        "{}best_variant={}\nbest_mrr={:.6}\nbest_params={}\nfinal_frontier_best={}\nstop={:?}\ncandidates={}\n",
        stamp(cfg),
        best.variant,
        best.mrr.unwrap_or(f64::NAN),
        best.params,
        outcome.final_frontier_best().map(|v| v.to_string()).unwrap_or_default(),
        outcome.stop,
        outcome.records.len()
    );
    write_artifact(out.join("best.txt"), &summary)?;
    let manifest = EnsembleManifest {
        members: outcome
            .records
            .iter()
            .filter_map(|r| {
                Some(ManifestMember {
                    checkpoint: r.checkpoint.clone()?,
                    val_mrr: r.mrr?,
                    variant: Some(r.variant.to_string()),
                })
            })
            .collect(),
        config_hash: Some(cfg.hash()),
        code_version: Some(CODE_VERSION.to_owned()),
    };
    let sorted = EnsembleManifest {
        members: manifest.sorted(),
        ..manifest
    };
    let text = serde_json::to_string_pretty(&sorted).map_err(compound3d::Error::from)? + "\n";
    write_artifact(out.join("manifest.json"), &text)?;
    print!(
        "{}",
        summary
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    );
    Ok(())
}

fn ensemble(cfg: &RunConfig, members: Vec<PathBuf>, manifest: Option<PathBuf>) -> CliResult<()> {
    let ds = load(cfg)?;
    let paths: Vec<PathBuf> = if !members.is_empty() {
        members
    } else if !cfg.ensemble.members.is_empty() {
        cfg.ensemble.members.clone()
    } else {
        let path = manifest
            .or_else(|| cfg.ensemble.manifest.clone())
            .unwrap_or_else(|| cfg.out_dir.join("search").join("manifest.json"));
        EnsembleManifest::load(&path)?
            .sorted()
            .into_iter()
            .take(cfg.ensemble.top)
            .map(|m| PathBuf::from(m.checkpoint))
            .collect()
    };
    if paths.len() < 2 {
        return Err(CliError::Usage(format!(
            "an ensemble needs at least 2 members, got {}",
            paths.len()
        )));
    }
    let mut loaded = Vec::new();
    for p in &paths {
        let ck = checkpoint::load_for_vocab(p, &ds.vocab.fingerprint())?;
        loaded.push((p.clone(), ck.header.val_mrr, ck.model));
    }
    // best validation MRR first, which geometric weighting relies on
    loaded.sort_by(|a, b| {
        b.1.unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.1.unwrap_or(f64::NEG_INFINITY))
    });
    let models: Vec<&Model> = loaded.iter().map(|(_, _, m)| m).collect();

    let filter = FilterIndex::build(&ds.store);
    let triples = eval_triples(cfg, &ds);
    let types = relation_types(cfg, &ds);
    let mut rows: Vec<(String, Metrics)> = Vec::new();
    for (path, _, m) in &loaded {
        let r = evaluate(m, &triples, &filter, &types)?;
        rows.push((format!("member {} ({})", m.variant(), path.display()), r.overall));
    }
    let mut weights_text = String::new();
    for (name, choice) in cfg.ensemble_methods()? {
        let report: MetricsReport = match choice {
            EnsembleChoice::Wds(scheme) => {
                let ens = WdsEnsemble::new(models.clone(), &scheme, &ds.store, &cfg.loss_config())?;
                let relations = if cfg.ensemble.per_relation {
                    ds.vocab.num_relations()
                } else {
                    1
                };
                for r in 0..relations {
                    let w: Vec<String> = ens.weights(r as u32).iter().map(|x| format!("{x:.6}")).collect();
                    weights_text.push_str(&format!("{name}.relation{r}={}\n", w.join(",")));
                }
                evaluate(&ens, &triples, &filter, &types)?
            }
            EnsembleChoice::Fusion(fc) => fusion_evaluate(&models, &fc, &triples, &filter, &types)?,
        };
        rows.push((name, report.overall));
    }
    let table = method_table(&rows);
    let split = cfg.eval.split.name();
    let out = cfg.out_dir.join("ensemble");
    write_artifact(
        out.join(format!("{split}_methods.csv")),
        &format!("{}{table}", stamp(cfg)),
    )?;
    if !weights_text.is_empty() {
        write_artifact(out.join("weights.txt"), &format!("{}{weights_text}", stamp(cfg)))?;
    }
    print!("{table}");
    Ok(())
}

fn report_cmd(cfg: &RunConfig, search_logs: Vec<PathBuf>, eval_reports: Vec<PathBuf>) -> CliResult<()> {
    let (mut search_logs, mut eval_reports) = (search_logs, eval_reports);
    if search_logs.is_empty() && eval_reports.is_empty() {
        let log = cfg.out_dir.join("search").join("log.jsonl");
        if log.is_file() {
            search_logs.push(log);
        }
        for split in ["valid", "test"] {
            let p = cfg.out_dir.join("eval").join(format!("{split}.txt"));
            if p.is_file() {
                eval_reports.push(p);
            }
        }
        if search_logs.is_empty() && eval_reports.is_empty() {
            return Err(CliError::Usage(
                "nothing to report: pass --search-log or --eval-report".into(),
            ));
        }
    }
    let out = cfg.out_dir.join("report");
    if !search_logs.is_empty() {
        let mut logs = Vec::new();
        for p in &search_logs {
            let f = File::open(p).map_err(|e| CliError::Data(format!("opening {}: {e}", p.display())))?;
            logs.push((p.display().to_string(), read_log(BufReader::new(f))?));
        }
        let all: Vec<_> = logs.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
        let dist = report::operator_distribution(&all);
        write_artifact(out.join("mrr_vs_operators.csv"), &format!("{}{dist}", stamp(cfg)))?;
        write_artifact(
            out.join("candidates.csv"),
            &format!("{}{}", stamp(cfg), report::candidate_table(&logs)),
        )?;
        println!("MRR by operator count");
        print!("{dist}");
    }
    if !eval_reports.is_empty() {
        let mut rows = Vec::new();
        for p in &eval_reports {
            let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("reading {}: {e}", p.display())))?;
            rows.push(report::parse_eval_report(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?);
        }
        let table = report::dimension_table(&rows);
        write_artifact(out.join("mrr_vs_dim.csv"), &format!("{}{table}", stamp(cfg)))?;
        println!("MRR by dimension");
        print!("{table}");
    }
    Ok(())
}
