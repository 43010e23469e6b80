use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spikte_core::eval::{self, histogram_csv, isi_statistics, length_sweep, predict_communities, sweep_csv};
use spikte_core::kg::{KnowledgeGraph, Side, Triple, ZACHARY_RELATION};
use spikte_core::model::{Model, ModelKind, Snapshot};
use spikte_core::neuron::membrane_trace;
use spikte_core::parallel::{set_threads, Exec};
use spikte_core::train::{self, EpochRecord};
use spikte_core::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spikte", version, about = "Spike-train knowledge graph embeddings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs the sequential reference path.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint with filtered MRR and hits@k.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Builtin dataset name or dataset directory.
        #[arg(long)]
        dataset: String,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
    },
    /// Rank all completions of "(s, p, ?)" or "(?, p, o)".
    Query {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
        pattern: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Train on the karate club graph and predict group membership.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Dump spike trains (and membrane traces for neuron models) as CSV.
    Spikes {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        entities: Vec<String>,
    },
    /// Retrain with variable spike counts and tabulate the metrics.
    SweepLength {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated standard deviations (overrides `sweep_stds`).
        #[arg(long, value_delimiter = ',')]
        stds: Option<Vec<f64>>,
    },
    /// Interspike-interval statistics of a checkpoint.
    StatsIsi {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Valid,
    Test,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = match cli.global.threads {
        Some(0) => bail!(Error::Config {
            key: "threads".into(),
            msg: "must be >= 1".into()
        }),
        Some(1) => Exec::Sequential,
        Some(n) => {
            set_threads(n);
            Exec::Parallel
        }
        None => Exec::Parallel,
    };
    let g = &cli.global;
    match &cli.command {
        Command::Train { config } => cmd_train(g, config, exec),
        Command::Eval {
            checkpoint,
            dataset,
            split,
        } => cmd_eval(g, checkpoint, dataset, *split, exec),
        Command::Query {
            checkpoint,
            dataset,
            pattern,
            top_k,
        } => cmd_query(checkpoint, dataset, pattern, *top_k, exec),
        Command::Cluster { config, seeds } => cmd_cluster(g, config, *seeds, exec),
        Command::Spikes { checkpoint, entities } => cmd_spikes(g, checkpoint, entities, exec),
        Command::SweepLength { config, stds } => cmd_sweep(g, config, stds.as_deref(), exec),
        Command::StatsIsi { checkpoint } => cmd_stats_isi(g, checkpoint, exec),
    }
}

fn load_config(g: &Global, path: &Path) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.output {
        cfg.output = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn output_dir(g: &Global, cfg: Option<&ExperimentConfig>) -> anyhow::Result<Option<PathBuf>> {
    let dir = g
        .output
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.as_ref().map(PathBuf::from)));
    if let Some(d) = &dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_train(g: &Global, config: &Path, exec: Exec) -> anyhow::Result<()> {
    let cfg = load_config(g, config)?;
    let dir = output_dir(g, Some(&cfg))?.unwrap_or_else(|| PathBuf::from("runs").join(default_run_name(&cfg)));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let kg = KnowledgeGraph::open(&cfg.dataset)?;
    write(&dir, "config.toml", &cfg.to_toml())?;

    let mut log = String::new();
    let outcome = train::train_with(
        &kg,
        train::init_model(&kg, cfg.model, &cfg.train_config())?,
        &cfg.train_config(),
        exec,
        |r: &EpochRecord| {
            let line = serde_json::to_string(r).expect("record serializes");
            eprintln!("{line}");
            log.push_str(&line);
            log.push('\n');
        },
    )?;
    write(&dir, "metrics.jsonl", &log)?;
    outcome.model.save(dir.join("checkpoint.json"))?;
    eprintln!("best epoch {} of {}", outcome.best_epoch, outcome.log.len());

    if !kg.test.is_empty() {
        let snap = outcome.model.snapshot(exec)?;
        let report = eval::evaluate(&snap, &kg.test, &kg.filter, exec)?;
        let json = serde_json::to_string_pretty(&report)?;
        write(&dir, "test_report.json", &json)?;
        println!("{}", summary(&report));
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn default_run_name(cfg: &ExperimentConfig) -> String {
    let name = Path::new(&cfg.dataset)
        .file_name()
        .map_or_else(|| cfg.dataset.clone(), |n| n.to_string_lossy().into_owned());
    format!("{name}_{}_seed{}", format!("{:?}", cfg.model).to_lowercase(), cfg.seed)
}

fn summary(r: &eval::RankReport) -> String {
    format!(
        "mrr {:.4}  hits@1 {:.4}  hits@3 {:.4}  hits@10 {:.4}",
        r.mrr, r.hits_at_1, r.hits_at_3, r.hits_at_10
    )
}

/// Load a checkpoint together with its dataset, checking that the vocabularies agree.
fn load_pair(checkpoint: &Path, dataset: &str) -> anyhow::Result<(Model, KnowledgeGraph)> {
    let model = Model::load(checkpoint)?;
    let kg = KnowledgeGraph::open(dataset)?;
    if model.vocab != kg.vocab {
        bail!(Error::Checkpoint(format!(
            "{} was not trained on dataset `{dataset}` (vocabularies differ)",
            checkpoint.display()
        )));
    }
    Ok((model, kg))
}

fn cmd_eval(g: &Global, checkpoint: &Path, dataset: &str, split: Split, exec: Exec) -> anyhow::Result<()> {
    let (model, kg) = load_pair(checkpoint, dataset)?;
    let triples = match split {
        Split::Valid => &kg.valid,
        Split::Test => &kg.test,
    };
    let snap = model.snapshot(exec)?;
    let report = eval::evaluate(&snap, triples, &kg.filter, exec)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = output_dir(g, None)? {
        let name = match split {
            Split::Valid => "valid_report.json",
            Split::Test => "test_report.json",
        };
        write(&dir, name, &json)?;
    }
    eprintln!("{}", summary(&report));
    println!("{json}");
    Ok(())
}

fn parse_pattern(pattern: &str) -> anyhow::Result<[Option<String>; 3]> {
    let inner = pattern.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!(Error::Config {
            key: "pattern".into(),
            msg: format!("expected \"(s, p, ?)\" or \"(?, p, o)\", got `{pattern}`")
        });
    }
    let slot = |s: &str| (s != "?").then(|| s.to_owned());
    Ok([slot(parts[0]), slot(parts[1]), slot(parts[2])])
}

fn cmd_query(checkpoint: &Path, dataset: &str, pattern: &str, top_k: usize, exec: Exec) -> anyhow::Result<()> {
    let (model, kg) = load_pair(checkpoint, dataset)?;
    let snap = model.snapshot(exec)?;
    let entity = |l: &str| {
        kg.vocab.entities.id(l).ok_or_else(|| Error::UnknownLabel {
            kind: "entity",
            label: l.to_owned(),
        })
    };
    let [s, p, o] = parse_pattern(pattern)?;
    let p = p.ok_or_else(|| Error::config("pattern", "the relation must be given"))?;
    let p = kg.vocab.relations.id(&p).ok_or(Error::UnknownLabel {
        kind: "relation",
        label: p,
    })?;
    let mut scores = vec![0.0; kg.num_entities()];
    let (side, fixed) = match (s, o) {
        (Some(s), None) => {
            let s = entity(&s)?;
            snap.score_objects(s, p, &mut scores);
            (Side::Object, s)
        }
        (None, Some(o)) => {
            let o = entity(&o)?;
            snap.score_subjects(p, o, &mut scores);
            (Side::Subject, o)
        }
        _ => bail!(Error::config("pattern", "exactly one of subject/object must be `?`")),
    };
    for line in query_listing(&kg, &scores, side, fixed, p, top_k) {
        println!("{line}");
    }
    Ok(())
}

/// Lines `rank<TAB>score<TAB>label[<TAB>known]`, best first. With `top_k`
/// below the entity count, the `top_k` worst entities follow after `...`.
fn query_listing(kg: &KnowledgeGraph, scores: &[f64], side: Side, fixed: usize, p: usize, top_k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let line = |rank: usize, e: usize| {
        let t = match side {
            Side::Object => Triple::new(fixed, p, e),
            Side::Subject => Triple::new(e, p, fixed),
        };
        let mark = if kg.filter.contains(&t) { "\tknown" } else { "" };
        format!("{}\t{:.6}\t{}{mark}", rank + 1, scores[e], kg.vocab.entities.label(e))
    };
    let n = order.len();
    let mut out = Vec::new();
    if top_k >= n || 2 * top_k >= n {
        out.extend(order.iter().enumerate().map(|(r, &e)| line(r, e)));
    } else {
        out.extend(order[..top_k].iter().enumerate().map(|(r, &e)| line(r, e)));
        out.push("...".to_owned());
        out.extend(order[n - top_k..].iter().enumerate().map(|(r, &e)| line(n - top_k + r, e)));
    }
    out
}

fn cmd_cluster(g: &Global, config: &Path, seeds: u64, exec: Exec) -> anyhow::Result<()> {
    let mut cfg = load_config(g, config)?;
    let kg = KnowledgeGraph::open(&cfg.dataset)?;
    let Some(comm) = kg.communities.clone() else {
        bail!(Error::config("dataset", format!("`{}` has no community labels", cfg.dataset)));
    };
    let rel = kg
        .vocab
        .relations
        .id(ZACHARY_RELATION)
        .ok_or_else(|| Error::config("dataset", "missing interaction relation"))?;
    if !cfg.freeze_relations.iter().any(|r| r == ZACHARY_RELATION) {
        cfg.freeze_relations.push(ZACHARY_RELATION.to_owned());
    }
    let dir = output_dir(g, Some(&cfg))?;
    let first = cfg.seed;
    let mut counts = Vec::new();
    for seed in first..first + seeds.max(1) {
        cfg.seed = seed;
        let outcome = train::fit(&kg, cfg.model, &cfg.train_config(), exec)?;
        let snap = outcome.model.snapshot(exec)?;
        let pred = predict_communities(&snap, &comm, rel);
        let label = |e: usize| kg.vocab.entities.label(e).to_owned();
        println!("seed {seed}");
        println!("member\tpredicted\ttrue");
        for (m, a) in pred.assignments.iter().enumerate() {
            let p = a.map_or_else(|| "unresolved".to_owned(), label);
            println!("{}\t{}\t{}", label(m), p, label(comm.membership[m]));
        }
        let wrong: Vec<String> = pred.mismatches.iter().map(|&m| label(m)).collect();
        println!(
            "mismatches {} [{}]  unresolved {}  accuracy {:.4}",
            wrong.len(),
            wrong.join(", "),
            pred.unresolved.len(),
            pred.accuracy
        );
        counts.push(pred.mismatches.len() + pred.unresolved.len());
        if let Some(d) = &dir {
            let sub = if seeds > 1 { d.join(format!("seed{seed}")) } else { d.clone() };
            fs::create_dir_all(&sub)?;
            write(&sub, "assignments.json", &serde_json::to_string_pretty(&pred)?)?;
            let all: Vec<usize> = (0..kg.num_entities()).collect();
            write(&sub, "spikes.csv", &spikes_csv(&snap, &all))?;
            outcome.model.save(sub.join("checkpoint.json"))?;
        }
    }
    if counts.len() > 1 {
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        println!(
            "seeds {}  best {}  median {}  per-seed {:?}",
            counts.len(),
            sorted[0],
            sorted[sorted.len() / 2],
            counts
        );
    }
    Ok(())
}

/// `entity,spike,time,refractory_end` rows.
fn spikes_csv(snap: &Snapshot<'_>, entities: &[usize]) -> String {
    let model = snap.model();
    let mut out = String::from("entity,spike,time,refractory_end\n");
    for &e in entities {
        for (i, t) in snap.rep(e).iter().enumerate() {
            let label = model.vocab.entities.label(e);
            let _ = writeln!(out, "{label},{i},{t},{}", t + model.tau_ref);
        }
    }
    out
}

fn cmd_spikes(g: &Global, checkpoint: &Path, labels: &[String], exec: Exec) -> anyhow::Result<()> {
    let model = Model::load(checkpoint)?;
    if !model.kind.is_spiking() {
        bail!(Error::config("checkpoint", format!("{:?} models have no spike trains", model.kind)));
    }
    let ids = labels
        .iter()
        .map(|l| {
            model.vocab.entities.id(l).ok_or_else(|| Error::UnknownLabel {
                kind: "entity",
                label: l.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let snap = model.snapshot(exec)?;
    let spikes = spikes_csv(&snap, &ids);
    let traces = model.neuron.as_ref().map(|setup| {
        let mut out = String::from("entity,t,u\n");
        let is = setup.inputs.len();
        for &e in &ids {
            let w = &model.entities.row(e)[..model.length(e) * is];
            let label = model.vocab.entities.label(e);
            for (t, u) in membrane_trace(w, &setup.inputs, &setup.config, 1e-3).unwrap_or_default() {
                let _ = writeln!(out, "{label},{t},{u}");
            }
        }
        out
    });
    match output_dir(g, None)? {
        Some(dir) => {
            write(&dir, "spikes.csv", &spikes)?;
            if let Some(t) = &traces {
                write(&dir, "traces.csv", t)?;
            }
            println!("wrote {}", dir.display());
        }
        None => {
            print!("{spikes}");
            if let Some(t) = &traces {
                print!("\n{t}");
            }
        }
    }
    Ok(())
}

fn cmd_sweep(g: &Global, config: &Path, stds: Option<&[f64]>, exec: Exec) -> anyhow::Result<()> {
    let cfg = load_config(g, config)?;
    if cfg.model != ModelKind::Spikte {
        bail!(Error::config("model", "the length sweep needs model = \"spikte\""));
    }
    let stds = stds.map_or_else(|| cfg.sweep_stds.clone(), <[f64]>::to_vec);
    let kg = KnowledgeGraph::open(&cfg.dataset)?;
    let rows = length_sweep(&kg, &cfg.train_config(), &stds, exec, |r| {
        eprintln!("std {}  mean length {:.2}  mrr {:.4}", r.std, r.mean_length, r.mrr)
    })?;
    let csv = sweep_csv(&rows);
    if let Some(dir) = output_dir(g, Some(&cfg))? {
        write(&dir, "sweep.csv", &csv)?;
    }
    print!("{csv}");
    Ok(())
}

fn cmd_stats_isi(g: &Global, checkpoint: &Path, exec: Exec) -> anyhow::Result<()> {
    let model = Model::load(checkpoint)?;
    let snap = model.snapshot(exec)?;
    let stats = isi_statistics(&snap)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "count": stats.count,
        "mean": stats.mean,
        "std": stats.std,
        "cv": stats.cv,
        "cv_uncorrected": stats.cv_uncorrected,
        "tau_ref": stats.tau_ref,
    }))?;
    if let Some(dir) = output_dir(g, None)? {
        write(&dir, "isi.json", &json)?;
        write(&dir, "isi_histogram.csv", &histogram_csv(&stats))?;
    }
    println!("{json}");
    Ok(())
}
