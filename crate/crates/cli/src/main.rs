use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use ownership_core::engine::DecisionInput;
use ownership_core::health::{churn, health_report_with, write_churn_tsv, write_health_tsv, STALE_AFTER_DAYS};
use ownership_core::ingest::parse_log_file;
use ownership_core::learn::{ModelRecord, TrainConfig};
use ownership_core::model::{AssetId, AssetType, CandidateId, Store};
use ownership_core::persist::FileJournal;
use ownership_core::recommend::Recommendation;
use ownership_core::sim::{evaluate, generate, GroundTruth, SimConfig};
use ownership_core::time::{format_iso, parse_day, parse_time, Timestamp};
use ownership_core::Engine;
use ownership_service::{model_spec, Clock, ServiceConfig, SessionTable};

/// Ownership attribution: mine logs, train owner models, review recommendations.
#[derive(Parser)]
#[command(name = "ownership", version)]
struct Cli {
    /// Store file.
    #[arg(long, global = true, env = "OWNERSHIP_STORE", default_value = "ownership.log")]
    store: PathBuf,

    /// Logical time for the command; defaults to one second past the latest
    /// time in the store.
    #[arg(long, global = true, value_parser = time_arg)]
    at: Option<Timestamp>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest commit, review or admin logs, one event per file.
    Ingest {
        /// commitlog, reviewlog or adminlog.
        #[arg(long)]
        format: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Scan asset payloads for ownership directives.
    Annotations {
        /// Directory that asset paths are relative to.
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Train a model and make it current for its asset type.
    Train(TrainArgs),
    /// Rank owner candidates for an asset and record the recommendation.
    Recommend {
        #[arg(long)]
        asset: String,
        /// Show per-feature contributions and counterfactual sentences.
        #[arg(long)]
        explain: bool,
        /// Rank without recording.
        #[arg(long)]
        dry_run: bool,
    },
    /// Accept, reject or delegate a recommendation.
    Decide(DecideArgs),
    /// Unowned, stale and inconclusive counts.
    Health {
        #[arg(long, default_value_t = STALE_AFTER_DAYS)]
        stale_days: i64,
    },
    /// Daily churn for one asset type.
    Churn {
        #[arg(long = "type")]
        asset_type: AssetType,
        /// First day, `YYYY-MM-DD` or days since the epoch.
        #[arg(long, value_parser = day_arg)]
        from: i64,
        #[arg(long, value_parser = day_arg)]
        to: i64,
    },
    /// Generate a synthetic organization with planted owners.
    Simulate {
        /// TOML simulation config; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the current models against planted owners.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Session token table (TOML).
        #[arg(long)]
        sessions: Option<PathBuf>,
        /// Directory served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Stamp mutations with store time instead of the wall clock.
        #[arg(long)]
        logical_clock: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    asset_type: AssetType,
    /// tree or scoring.
    #[arg(long, default_value = "tree")]
    model: String,
    /// Only labeling events from the last N days.
    #[arg(long)]
    window_days: Option<i64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hold out the latest examples for test metrics.
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Print the model card.
    #[arg(long)]
    card: bool,
}

#[derive(Args)]
#[command(group(ArgGroup::new("choice").required(true).args(["accept", "reject", "delegate"])))]
struct DecideArgs {
    #[arg(long)]
    rec: String,
    #[arg(long)]
    candidate: String,
    #[arg(long)]
    accept: bool,
    #[arg(long)]
    reject: bool,
    #[arg(long, value_name = "CANDIDATE")]
    delegate: Option<String>,
    /// Deciding individual.
    #[arg(long = "as", env = "OWNERSHIP_ACTOR")]
    actor: String,
}

fn time_arg(s: &str) -> Result<Timestamp, String> {
    parse_time(s).ok_or_else(|| format!("bad time `{s}`"))
}

fn day_arg(s: &str) -> Result<i64, String> {
    parse_day(s).ok_or_else(|| format!("bad day `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn open(path: &Path) -> Result<Engine<FileJournal>> {
    Engine::open(path).with_context(|| format!("opening store {}", path.display()))
}

fn now(cli_at: Option<Timestamp>, engine: &Engine<FileJournal>) -> Timestamp {
    cli_at.unwrap_or_else(|| engine.next_time())
}

fn resolve_asset(store: &Store, key: &str) -> Result<AssetId> {
    store
        .asset(&AssetId::new(key))
        .or_else(|| store.find_asset_by_path(key))
        .map(|a| a.asset_id.clone())
        .ok_or_else(|| anyhow!("unknown asset `{key}`"))
}

fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    let at = cli.at;
    match cli.command {
        Command::Ingest { format, files } => {
            let mut engine = open(&cli.store)?;
            writeln!(out, "file\taccepted\tduplicates\tnew_assets\tquarantined_actors\tdiagnostics\tsequence")?;
            for f in &files {
                let parsed = parse_log_file(f, &format)?;
                let fmt = format.parse()?;
                let mut diagnostics = parsed.diagnostics;
                let mut report = engine.ingest_interactions(&f.display().to_string(), fmt, parsed.events)?;
                diagnostics.append(&mut report.diagnostics);
                for d in &diagnostics {
                    eprintln!("warning: {d}");
                }
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    f.display(),
                    report.accepted,
                    report.duplicates,
                    report.new_assets.len(),
                    report.quarantined_actors.len(),
                    diagnostics.len(),
                    report.sequence.map_or("-".to_string(), |s| s.to_string())
                )?;
            }
        }
        Command::Annotations { root, files } => {
            let mut engine = open(&cli.store)?;
            let t = now(at, &engine);
            writeln!(out, "asset\taccepted\tquarantined")?;
            for f in &files {
                let rel = match &root {
                    Some(r) => f.strip_prefix(r).unwrap_or(f),
                    None => f.as_path(),
                };
                let key = rel.to_string_lossy().replace('\\', "/");
                let asset = resolve_asset(engine.store(), &key)?;
                let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
                let report = engine.scan_annotations(&asset, &text, t)?;
                for d in &report.quarantined {
                    eprintln!("warning: {d}");
                }
                writeln!(out, "{asset}\t{}\t{}", report.accepted, report.quarantined.len())?;
            }
        }
        Command::Train(args) => {
            let mut engine = open(&cli.store)?;
            let t = now(at, &engine);
            let config = TrainConfig {
                asset_type: args.asset_type,
                spec: model_spec(&args.model).map_err(|e| anyhow!(e))?,
                seed: args.seed,
                split_fraction: args.split_fraction,
            };
            let (record, dataset) = engine.train(&config, t, args.window_days)?;
            print_model(out, &record)?;
            writeln!(out, "train_examples\t{}", dataset.train.len())?;
            writeln!(out, "test_examples\t{}", dataset.test.len())?;
            writeln!(out, "join_failures\t{}", dataset.failures.len())?;
            if args.card {
                write!(out, "{}", record.model.to_card())?;
            }
        }
        Command::Recommend {
            asset,
            explain,
            dry_run,
        } => {
            let mut engine = open(&cli.store)?;
            let t = now(at, &engine);
            let id = resolve_asset(engine.store(), &asset)?;
            let rec = if dry_run {
                engine.preview_recommendation(&id, t)?
            } else {
                engine.issue_recommendation(&id, t)?
            };
            print_recommendation(out, &rec, explain)?;
        }
        Command::Decide(args) => {
            let mut engine = open(&cli.store)?;
            let t = now(at, &engine);
            let actor = CandidateId::new(args.actor);
            engine.check_decider(&actor, t)?;
            let input = match (args.accept, args.reject, args.delegate) {
                (true, _, _) => DecisionInput::Accept,
                (_, true, _) => DecisionInput::Reject,
                (_, _, Some(to)) => {
                    let to = CandidateId::new(to);
                    engine.check_delegate_target(&to, t)?;
                    DecisionInput::Delegate(to)
                }
                _ => bail!("one of --accept, --reject or --delegate is required"),
            };
            let outcome = engine.apply_decision(&args.rec, &CandidateId::new(args.candidate), input, &actor, t)?;
            let d = &outcome.decision;
            writeln!(out, "decision\t{}", d.decision_id)?;
            writeln!(out, "kind\t{}", d.decision)?;
            writeln!(out, "asset\t{}", d.asset_id)?;
            writeln!(out, "candidate\t{}", d.candidate_id)?;
            writeln!(out, "decided_by\t{}", d.decided_by)?;
            if let Some(to) = &d.delegate_to {
                writeln!(out, "delegate_to\t{to}")?;
            }
            let owner = engine.store().current_owner(&d.asset_id, t)?;
            writeln!(out, "owner\t{}", owner.map_or("-", |c| c.as_str()))?;
            writeln!(out, "sequence\t{}", outcome.sequence)?;
        }
        Command::Health { stale_days } => {
            let engine = open(&cli.store)?;
            let t = now(at, &engine);
            write_health_tsv(out, &health_report_with(engine.store(), t, stale_days))?;
        }
        Command::Churn { asset_type, from, to } => {
            if from > to {
                bail!("--from is after --to");
            }
            let engine = open(&cli.store)?;
            write_churn_tsv(out, &churn(engine.store(), asset_type, from, to))?;
        }
        Command::Simulate { config, out: dir } => {
            let config = match config {
                Some(path) => SimConfig::from_toml(
                    &std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
                )?,
                None => SimConfig::default(),
            };
            let sim = generate(&config)?;
            sim.write_to(&dir)?;
            let store = sim.store();
            writeln!(out, "seed\t{}", config.seed)?;
            writeln!(out, "assets\t{}", store.asset_count())?;
            writeln!(out, "candidates\t{}", store.candidates().count())?;
            writeln!(out, "interactions\t{}", store.interaction_count())?;
            writeln!(out, "events\t{}", sim.engine.journal().len())?;
            writeln!(out, "start\t{}", format_iso(config.start()))?;
            writeln!(out, "end\t{}", format_iso(config.end()))?;
            writeln!(out, "store\t{}", dir.join("store.log").display())?;
            writeln!(out, "truth\t{}", dir.join("truth.tsv").display())?;
        }
        Command::Evaluate { truth } => {
            let engine = open(&cli.store)?;
            let t = now(at, &engine);
            let file = std::fs::File::open(&truth).with_context(|| format!("reading {}", truth.display()))?;
            let truth = GroundTruth::read_tsv(io::BufReader::new(file))?;
            let models: Vec<&ModelRecord> = AssetType::ALL
                .iter()
                .filter_map(|ty| engine.store().current_model(*ty))
                .collect();
            if models.is_empty() {
                bail!("no trained models in the store");
            }
            let m = evaluate(engine.store(), &truth, &models, t, &engine.thresholds)?;
            writeln!(out, "as_of\t{}", format_iso(m.as_of))?;
            for r in &models {
                writeln!(out, "model\t{}\t{}", r.model.asset_type(), r.model_id)?;
            }
            writeln!(out, "evaluated\t{}", m.evaluated)?;
            writeln!(out, "skipped\t{}", m.skipped)?;
            writeln!(out, "top1_accuracy\t{:.6}", m.top1_accuracy)?;
            writeln!(out, "top3_accuracy\t{:.6}", m.top3_accuracy)?;
            writeln!(out, "auc\t{}", m.auc.map_or("-".to_string(), |a| format!("{a:.6}")))?;
            writeln!(out, "inconclusive_rate\t{:.6}", m.inconclusive_rate)?;
        }
        Command::Serve {
            bind,
            sessions,
            static_dir,
            logical_clock,
        } => {
            let sessions = match sessions {
                Some(p) => SessionTable::from_toml(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )
                .map_err(|e| anyhow!("session table: {e}"))?,
                None => {
                    log::warn!("no session table; every API call will be refused");
                    SessionTable::default()
                }
            };
            let config = ServiceConfig {
                bind,
                store_path: cli.store,
                static_dir,
                sessions,
                clock: if logical_clock { Clock::Logical } else { Clock::Wall },
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(ownership_service::serve(config, async {
                let _ = tokio::signal::ctrl_c().await;
            }))?;
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.6}"))
}

fn print_model(out: &mut impl Write, r: &ModelRecord) -> io::Result<()> {
    let m = &r.model.metrics;
    writeln!(out, "model\t{}", r.model_id)?;
    writeln!(out, "asset_type\t{}", r.model.asset_type())?;
    writeln!(out, "kind\t{}", r.model.kind_name())?;
    writeln!(out, "trained_at\t{}", format_iso(r.trained_at))?;
    writeln!(out, "train_accuracy\t{}", opt(m.train_accuracy))?;
    writeln!(out, "train_auc\t{}", opt(m.train_auc))?;
    writeln!(out, "test_accuracy\t{}", opt(m.test_accuracy))?;
    writeln!(out, "test_auc\t{}", opt(m.test_auc))?;
    if !r.model.dropped_features.is_empty() {
        writeln!(out, "dropped_features\t{}", r.model.dropped_features.join(","))?;
    }
    Ok(())
}

fn print_recommendation(out: &mut impl Write, rec: &Recommendation, explain: bool) -> io::Result<()> {
    writeln!(out, "recommendation\t{}", rec.recommendation_id)?;
    writeln!(out, "asset\t{}", rec.asset_id)?;
    writeln!(out, "as_of\t{}", format_iso(rec.as_of))?;
    writeln!(out, "model\t{}", rec.model_id)?;
    writeln!(out, "band\t{:?}", rec.band)?;
    writeln!(out, "rank\tcandidate\tscore")?;
    for (i, e) in rec.entries.iter().enumerate() {
        writeln!(out, "{}\t{}\t{:.4}", i + 1, e.candidate_id, e.score)?;
        if !explain {
            continue;
        }
        let a = &e.attribution;
        writeln!(out, "\tbase\t{:.4}", a.base_value)?;
        let mut parts: Vec<_> = a.contributions.iter().filter(|c| c.contribution != 0.0).collect();
        parts.sort_by(|x, y| {
            y.contribution
                .abs()
                .total_cmp(&x.contribution.abs())
                .then_with(|| x.feature.cmp(&y.feature))
        });
        for c in parts {
            writeln!(out, "\t{}={}\t{:+.4}", c.feature, c.value, c.contribution)?;
        }
        if let Some(cf) = &e.counterfactual {
            writeln!(out, "\t{}", cf.sentence)?;
        }
    }
    Ok(())
}
