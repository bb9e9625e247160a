use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use hardneg_core::config::{config_help, RunConfig};
use hardneg_core::controller::{ChatBackend, HttpChatBackend, ScriptedBackend};
use hardneg_core::hnqs::{generate_with_backend, mock_generate, render_variants, write_records, Generator, HnqsRecord};
use hardneg_core::mining::{read_pools, write_pools};
use hardneg_core::mva::{build_composite, MvaParams, RasterImage, WHITE};
use hardneg_core::plot::plot_trajectory;
use hardneg_core::replay::replay_decisions;
use hardneg_core::sim::log::{TrajectoryLog, TrajectoryRecord};
use hardneg_core::sim::train::{
    curriculum_train, default_pool_size, evaluate_ndcg, mine_pools, mix_seed, run_training, warmup_epoch,
    ControllerMode,
};
use hardneg_core::sim::{gen_synthetic_dataset, SyntheticDataset, ToyEncoder};
use hardneg_core::{Error, Result};

const EXIT_CALIBRATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hardneg",
    version,
    about = "Curriculum hard-negative training for late-interaction retrievers"
)]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with queries and negative queries.
    GenData(GenDataArgs),
    /// Run one in-batch InfoNCE epoch from a fresh encoder and save a checkpoint.
    Warmup(WarmupArgs),
    /// Mine candidate pools for every training query with a checkpoint.
    MinePool(MinePoolArgs),
    /// Curriculum training; writes the trajectory log.
    Train(TrainArgs),
    /// Re-run the rule-based controller over a logged trajectory.
    Replay(ReplayArgs),
    /// Render a trajectory as SVG.
    Plot(PlotArgs),
    /// Synthesize negative query variants.
    HnqsGen(HnqsArgs),
    /// Build a multi-view composite from a PNG.
    Mva(MvaArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long)]
    num_docs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WarmupArgs {
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct MinePoolArgs {
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long)]
    pool_size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Starting checkpoint (ignored with --full).
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Candidate pools (ignored with --full).
    #[arg(long, value_name = "FILE")]
    pools: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
    /// Where to write the trained encoder.
    #[arg(long, value_name = "FILE")]
    save: Option<PathBuf>,
    /// Run warm-up and mining in-process instead of reading their outputs.
    #[arg(long)]
    full: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Scripted controller responses; implies mock mode.
    #[arg(long, value_name = "FILE")]
    mock_controller: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Oracle,
    Llm,
    Mock,
    FixedWindow,
    Linear,
}

impl From<ModeArg> for ControllerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Oracle => ControllerMode::Oracle,
            ModeArg::Llm => ControllerMode::Llm,
            ModeArg::Mock => ControllerMode::Mock,
            ModeArg::FixedWindow => ControllerMode::FixedWindow,
            ModeArg::Linear => ControllerMode::Linear,
        }
    }
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct HnqsArgs {
    /// Question to expand; repeatable.
    #[arg(long = "question", value_name = "TEXT")]
    questions: Vec<String>,
    /// Expand every question of a generated dataset instead.
    #[arg(long, value_name = "FILE", conflicts_with = "questions")]
    dataset: Option<PathBuf>,
    /// JSONL output; variants are printed when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Use the configured chat endpoint instead of the offline generator.
    #[arg(long)]
    endpoint: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MvaArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Rotation in degrees; drawn from the seed when absent.
    #[arg(long, allow_hyphen_values = true)]
    angle: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<SyntheticDataset> {
    let path = flag.unwrap_or_else(|| cfg.data.dataset.clone());
    let ds = SyntheticDataset::load(&path)?;
    ds.validate()?;
    Ok(ds)
}

fn load_encoder(path: &Path, ds: &SyntheticDataset) -> Result<ToyEncoder> {
    let (enc, _) = ToyEncoder::load_checkpoint(path)?;
    if enc.d_in() != ds.config.d_in {
        return Err(Error::Data(format!(
            "checkpoint {} expects d_in = {}, dataset has {}",
            path.display(),
            enc.d_in(),
            ds.config.d_in
        )));
    }
    Ok(enc)
}

fn cmd_gen_data(mut cfg: RunConfig, a: GenDataArgs) -> Result<u8> {
    if let Some(n) = a.num_docs {
        cfg.data.generation.num_docs = n;
    }
    if let Some(s) = a.seed {
        cfg.data.generation.seed = s;
    }
    let out = a.out.unwrap_or(cfg.data.dataset);
    let ds = gen_synthetic_dataset(&cfg.data.generation)?;
    ensure_parent(&out)?;
    ds.save(&out)?;
    println!(
        "{}: {} docs, {} train queries, {} held-out queries",
        out.display(),
        ds.docs.len(),
        ds.train_queries().len(),
        ds.heldout_queries().len()
    );
    Ok(0)
}

fn cmd_warmup(mut cfg: RunConfig, a: WarmupArgs) -> Result<u8> {
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(lr) = a.lr {
        cfg.train.warmup_lr = lr;
    }
    cfg.validate()?;
    let ds = load_dataset(&cfg, a.dataset)?;
    let tc = &cfg.train;
    let mut enc = ToyEncoder::random(ds.config.d_in, tc.d_out, mix_seed(tc.seed, u64::MAX));
    let train = ds.train_queries();
    let before = evaluate_ndcg(&enc, &ds, &ds.heldout_queries())?;
    let r = warmup_epoch(
        &mut enc,
        &ds,
        &train,
        cfg.loss.tau,
        tc.warmup_lr,
        tc.warmup_batch_size,
        tc.seed,
    )?;
    let after = evaluate_ndcg(&enc, &ds, &ds.heldout_queries())?;
    let out = a.checkpoint.unwrap_or(cfg.data.checkpoint);
    ensure_parent(&out)?;
    enc.save_checkpoint(&out, 0)?;
    println!(
        "warm-up: {} batches, loss {:.4} -> {:.4}, held-out nDCG@5 {:.4} -> {:.4}; wrote {}",
        r.batches,
        r.loss_start,
        r.loss_end,
        before,
        after,
        out.display()
    );
    Ok(0)
}

fn cmd_mine_pool(mut cfg: RunConfig, a: MinePoolArgs) -> Result<u8> {
    if let Some(n) = a.pool_size {
        cfg.train.pool_size = Some(n);
    }
    cfg.validate()?;
    let ds = load_dataset(&cfg, a.dataset)?;
    let enc = load_encoder(&a.checkpoint.unwrap_or(cfg.data.checkpoint), &ds)?;
    let n = cfg.train.pool_size.unwrap_or_else(|| default_pool_size(ds.docs.len()));
    let (pools, skipped) = mine_pools(&enc, &ds, &ds.train_queries(), n)?;
    let out = a.out.unwrap_or(cfg.data.pools);
    ensure_parent(&out)?;
    write_pools(&out, &pools)?;
    println!("{}: {} pools of up to {n} candidates", out.display(), pools.len());
    for qi in skipped {
        eprintln!("skipped {}: positive score <= 0", ds.queries[qi].id);
    }
    Ok(0)
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<u8> {
    if let Some(m) = a.mode {
        cfg.controller.mode = m.into();
    }
    if let Some(p) = a.mock_controller {
        cfg.controller.mode = ControllerMode::Mock;
        cfg.controller.mock_script = Some(p);
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.validate()?;
    let setup = cfg.setup()?;

    let mut backend: Option<Box<dyn ChatBackend>> = match setup.mode {
        ControllerMode::Mock => {
            let script =
                cfg.controller.mock_script.as_deref().ok_or_else(|| {
                    Error::Usage("mock mode needs --mock-controller or controller.mock_script".into())
                })?;
            Some(Box::new(ScriptedBackend::from_file(script)?))
        }
        ControllerMode::Llm => Some(Box::new(HttpChatBackend::new(cfg.controller.endpoint())?)),
        _ => None,
    };

    let ds = load_dataset(&cfg, a.dataset)?;
    let (log, enc, calibration_failure) = if a.full {
        let out = run_training(&ds, &setup, backend.as_mut().map(|b| &mut **b as &mut dyn ChatBackend))?;
        (out.log, out.encoder, out.calibration_failure)
    } else {
        let mut enc = load_encoder(&a.checkpoint.unwrap_or_else(|| cfg.data.checkpoint.clone()), &ds)?;
        let pools = read_pools(&a.pools.unwrap_or_else(|| cfg.data.pools.clone()))?;
        let tc = &setup.train;
        let train = ds.train_queries();
        let heldout = ds.heldout_queries();
        let mut log = TrajectoryLog::default();
        log.push(TrajectoryRecord::Meta {
            seed: tc.seed,
            mode: setup.mode.label().into(),
            steps: tc.steps,
            train_queries: train.len(),
            heldout_queries: heldout.len(),
            skipped_queries: train.len().saturating_sub(pools.len()),
            pool_size: tc.pool_size.unwrap_or_else(|| default_pool_size(ds.docs.len())),
        });
        log.push(TrajectoryRecord::Eval {
            step: 0,
            label: "start".into(),
            ndcg_at_5: evaluate_ndcg(&enc, &ds, &heldout)?,
        });
        let failure = curriculum_train(
            &mut enc,
            &ds,
            &pools,
            &setup,
            backend.as_mut().map(|b| &mut **b as &mut dyn ChatBackend),
            &mut log,
        )?;
        (log, enc, failure)
    };

    let trajectory = a.trajectory.unwrap_or(cfg.data.trajectory);
    ensure_parent(&trajectory)?;
    log.write(&trajectory)?;
    if let Some(save) = &a.save {
        ensure_parent(save)?;
        enc.save_checkpoint(save, setup.train.steps)?;
    }
    let ndcg = |label: &str| log.eval(label).map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{}: {} steps, {} decisions, final held-out nDCG@5 {}",
        trajectory.display(),
        log.steps().count(),
        log.decisions().count(),
        ndcg("final")
    );
    if calibration_failure {
        eprintln!("controller calibration failure: transition ended without a stable anchor");
        return Ok(EXIT_CALIBRATION);
    }
    Ok(0)
}

fn cmd_replay(cfg: RunConfig, a: ReplayArgs) -> Result<u8> {
    let path = a.trajectory.unwrap_or(cfg.data.trajectory.clone());
    let report = replay_decisions(&path, &cfg.curriculum.action_space()?)?;
    print!("{}", report.render());
    Ok(if report.is_clean() { 0 } else { 2 })
}

fn cmd_plot(cfg: RunConfig, a: PlotArgs) -> Result<u8> {
    let path = a.trajectory.unwrap_or(cfg.data.trajectory.clone());
    ensure_parent(&a.out)?;
    plot_trajectory(&path, &a.out, cfg.curriculum.action_space()?.len())?;
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn cmd_hnqs(cfg: RunConfig, a: HnqsArgs) -> Result<u8> {
    let items: Vec<(String, String)> = match &a.dataset {
        Some(p) => SyntheticDataset::load(p)?
            .queries
            .into_iter()
            .map(|q| (q.id, q.question))
            .collect(),
        None if a.questions.is_empty() => {
            return Err(Error::Usage("hnqs-gen needs --question or --dataset".into()));
        }
        None => a
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| (format!("q{i:04}"), q.clone()))
            .collect(),
    };
    let mut endpoint = if a.endpoint {
        Some(HttpChatBackend::new(cfg.controller.endpoint())?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(items.len());
    for (i, (id, question)) in items.into_iter().enumerate() {
        let (variants, generator) = match endpoint.as_mut() {
            Some(b) => (generate_with_backend(b, &question)?, Generator::Endpoint),
            None => (
                mock_generate(&question, a.seed.wrapping_add(i as u64))?,
                Generator::Mock,
            ),
        };
        records.push(HnqsRecord::new(id, question, variants, generator)?);
    }
    match &a.out {
        Some(out) => {
            ensure_parent(out)?;
            write_records(out, &records)?;
            println!("{}: {} records", out.display(), records.len());
        }
        None => {
            for r in &records {
                print!("{}", render_variants(&r.variants));
            }
        }
    }
    Ok(0)
}

fn cmd_mva(a: MvaArgs) -> Result<u8> {
    let params = MvaParams {
        angle: a.angle,
        downsample_factor: a.factor,
        pad_color: WHITE,
        seed: a.seed,
    };
    params.validate()?;
    let img = RasterImage::load_png(&a.input)?;
    let out = build_composite(&img, &params)?;
    ensure_parent(&a.out)?;
    out.save_png(&a.out)?;
    println!(
        "{}: {}x{} (angle {:.3})",
        a.out.display(),
        out.width(),
        out.height(),
        params.resolve_angle()
    );
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => cmd_gen_data(cfg, a),
        Command::Warmup(a) => cmd_warmup(cfg, a),
        Command::MinePool(a) => cmd_mine_pool(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Replay(a) => cmd_replay(cfg, a),
        Command::Plot(a) => cmd_plot(cfg, a),
        Command::HnqsGen(a) => cmd_hnqs(cfg, a),
        Command::Mva(a) => cmd_mva(a),
    }
}

fn main() -> ExitCode {
    let help = config_help();
    let command = Cli::command()
        .after_help(help.clone())
        .mut_subcommands(|sc| sc.after_help(help.clone()));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
