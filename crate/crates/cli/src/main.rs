//! Command-line front end: synthetic data generation, training, evaluation,
//! dreamed rollouts, and the step-size ablation.

mod manifest;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manifest::ManifestBuilder;
use svg::SvgScene;
use vrd_core::config::ModelConfig;
use vrd_core::data;
use vrd_core::error::{Error, Result};
use vrd_core::eval::{evaluate_model, EvalConfig};
use vrd_core::model::VrdModel;
use vrd_core::scene::Scenario;
use vrd_core::training::{ablation_csv, run_ablation, train, TrainConfig};

#[derive(Parser)]
#[command(name = "vrd", version, about = "world-model motion forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario corpus (JSONL).
    GenData(GenDataArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
    /// Dream one scenario forward and render it.
    Dream(DreamArgs),
    /// Train and evaluate across step sizes.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Archetype mix, e.g. "straight=4,ped_yield=2". Empty means all.
    #[arg(long, default_value = "")]
    mix: String,
    #[arg(long, default_value_t = 40)]
    obs_len: usize,
    #[arg(long, default_value_t = 60)]
    horizon_len: usize,
    #[arg(long, default_value_t = 10.0)]
    rate: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training config (TOML); defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model config (TOML); defaults are used when absent.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training output directory (checkpoint.json + model_config.json).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 5)]
    obs_stride: usize,
}

#[derive(Args)]
struct DreamArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Scenario id; the first scenario when absent.
    #[arg(long)]
    scenario: Option<String>,
    /// Dream steps; must be at least 1.
    #[arg(long, default_value_t = 60)]
    horizon: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 5)]
    obs_stride: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Comma-separated step sizes.
    #[arg(long, default_value = "0.1,0.5")]
    dts: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Dream(a) => {
            if a.horizon == 0 {
                eprintln!("usage: --horizon must be at least 1");
                return ExitCode::from(2);
            }
            cmd_dream(a)
        }
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_corpus(path: &Path) -> Result<Vec<Scenario>> {
    let outcome = data::load(path)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.scenarios.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(outcome.scenarios)
}

fn load_model_config(path: &Option<PathBuf>) -> Result<ModelConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", p.display(), e)))
        }
        None => Ok(ModelConfig::default()),
    }
}

fn load_trained_model(dir: &Path) -> Result<VrdModel> {
    let cfg_text = std::fs::read_to_string(dir.join("model_config.json"))?;
    let cfg: ModelConfig = serde_json::from_str(&cfg_text)?;
    let mut model = VrdModel::init(0, cfg);
    model.load(&dir.join("checkpoint.json"))?;
    Ok(model)
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let mb = ManifestBuilder::start("gen-data");
    let spec = data::GenSpec {
        sample_rate: a.rate,
        observation_len: a.obs_len,
        horizon_len: a.horizon_len,
    };
    let mix = data::parse_mix(&a.mix)?;
    let scenarios = data::generate_synthetic(a.seed, a.count, &mix, &spec)?;
    if let Some(dir) = a.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    data::save(&a.out, &scenarios)?;
    println!("wrote {} scenarios to {}", scenarios.len(), a.out.display());
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mb.write(dir, Some(a.seed), serde_json::json!({ "mix": a.mix, "count": a.count }))?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mb = ManifestBuilder::start("train");
    let dataset = load_corpus(&a.data)?;
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_toml(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let model_cfg = load_model_config(&a.model_config)?;
    std::fs::create_dir_all(&a.out)?;

    let mut model = VrdModel::init(cfg.seed, model_cfg.clone());
    let report = train(&mut model, &dataset, &cfg)?;

    model.save(&a.out.join("checkpoint.json"))?;
    std::fs::write(a.out.join("model_config.json"), serde_json::to_string_pretty(&model_cfg)?)?;
    std::fs::write(a.out.join("train_log.csv"), report.to_csv())?;
    let last = report.logs.last().expect("at least one epoch");
    println!(
        "trained {} epochs, final losses rssm {:.4} target {:.4} score {:.4} recon {:.4} dream {:.4}",
        report.logs.len(),
        last.rssm,
        last.target,
        last.score,
        last.recon,
        last.dream
    );
    mb.write(&a.out, Some(cfg.seed), serde_json::to_value(&cfg)?)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mb = ManifestBuilder::start("eval");
    let dataset = load_corpus(&a.data)?;
    let model = load_trained_model(&a.model)?;
    let cfg = EvalConfig { k: a.k, dt: a.dt, obs_stride: a.obs_stride };
    std::fs::create_dir_all(&a.out)?;
    let report = evaluate_model(&model, &dataset, &cfg)?;
    std::fs::write(a.out.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(a.out.join("metrics.csv"), report.to_csv())?;
    println!(
        "minADE_{k} {:.4}  minFDE_{k} {:.4}  actorMR_{k} {:.4}  ({} agents, {} aborted)",
        report.min_ade,
        report.min_fde,
        report.actor_mr,
        report.num_agents,
        report.aborted.len(),
        k = report.k
    );
    for (id, step) in &report.aborted {
        eprintln!("aborted: scenario {id} at dream step {step}");
    }
    mb.write(&a.out, None, serde_json::json!({ "k": a.k, "dt": a.dt }))?;
    Ok(())
}

fn cmd_dream(a: DreamArgs) -> Result<()> {
    let mb = ManifestBuilder::start("dream");
    let dataset = load_corpus(&a.data)?;
    let scenario = match &a.scenario {
        Some(id) => dataset
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::Config(format!("scenario {id} not found")))?,
        None => &dataset[0],
    };
    let model = load_trained_model(&a.model)?;
    std::fs::create_dir_all(&a.out)?;

    let mut ctx = vrd_core::autodiff::Ctx::new();
    let rollout = model.dream(&mut ctx, scenario, a.horizon, a.dt, 0, a.obs_stride)?;
    let positions = rollout.agent_positions_world(&ctx);

    let mut scene = SvgScene::new(scenario);
    for (id, pts) in &positions {
        scene.add_dreamed(id, pts.clone());
    }
    std::fs::write(a.out.join("dream.svg"), scene.render())?;
    let json = serde_json::json!({
        "scenario": scenario.id,
        "horizon": a.horizon,
        "dt": a.dt,
        "target_index": rollout.target_index,
        "used_fallback": rollout.used_fallback,
        "agents": positions.iter().map(|(id, pts)| {
            serde_json::json!({ "agent_id": id, "positions": pts })
        }).collect::<Vec<_>>(),
    });
    std::fs::write(a.out.join("dream.json"), serde_json::to_string_pretty(&json)?)?;
    println!("dreamed {} steps for {} agents in {}", a.horizon, positions.len(), scenario.id);
    mb.write(&a.out, None, serde_json::json!({ "horizon": a.horizon, "dt": a.dt }))?;
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let mb = ManifestBuilder::start("ablate");
    let dataset = load_corpus(&a.data)?;
    let cfg = match &a.config {
        Some(p) => TrainConfig::from_toml(p)?,
        None => TrainConfig::default(),
    };
    let model_cfg = load_model_config(&a.model_config)?;
    let dts: Vec<f64> = a
        .dts
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad dt '{s}'"))))
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(&a.out)?;
    let rows = run_ablation(&model_cfg, &cfg, &dataset, &dts)?;
    let csv = ablation_csv(&rows);
    std::fs::write(a.out.join("ablation.csv"), &csv)?;
    print!("{csv}");
    mb.write(&a.out, Some(cfg.seed), serde_json::json!({ "dts": dts }))?;
    Ok(())
}
