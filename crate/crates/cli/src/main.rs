//! `rlvc`: synthetic data, reward pre-training, training, synthesis and
//! evaluation for diffusion-GAN zero-shot feature generation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use rlvc_core::config::{key_help, RunConfig};
use rlvc_core::cues::mine_prototypes;
use rlvc_core::data::{export_features, make_synthetic, SampleSplit, ZslDataset};
use rlvc_core::eval::{evaluate_generator, synthesize_unseen};
use rlvc_core::reward::{pretrain_reward, RewardModel};
use rlvc_core::rng::{stream, Stream};
use rlvc_core::trainer::{self, load_generator};
use rlvc_core::{Error, Preset, Result};

const REWARD_FILE: &str = "reward.ckpt";
const PROTOTYPES_FILE: &str = "visual_prototypes.txt";
const CONFIG_FILE: &str = "config.txt";
const SYNTH_FILE: &str = "synthetic_unseen.csv";
const REPORT_FILE: &str = "report.txt";

#[derive(Parser)]
#[command(name = "rlvc", version, about = "Generative zero-shot learning with diffusion-GAN synthesis and outcome rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Hyperparameter preset: cub, sun, awa2, synthetic.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Clone, Default)]
struct DataArg {
    /// Dataset directory (overrides `data_dir`).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
        /// Write into an existing non-empty directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Train and freeze the reward classifier on seen training rows.
    PretrainReward {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Train the generator.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Reward checkpoint.
        #[arg(long, value_name = "PATH")]
        reward: PathBuf,
        /// Disable the RL update.
        #[arg(long)]
        no_rl: bool,
        /// Disable the visual-cue loss.
        #[arg(long)]
        no_cues: bool,
        /// Use raw rewards as advantages (no EMA baseline).
        #[arg(long)]
        raw_reward: bool,
        /// Cue loss variant: pd, kl, l1.
        #[arg(long, value_name = "VARIANT")]
        cue_loss: Option<String>,
    },
    /// Synthesize unseen-class features with a trained generator.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Generator checkpoint.
        #[arg(long, value_name = "PATH")]
        generator: PathBuf,
    },
    /// Train CZSL/GZSL heads on synthesized features and report accuracy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Generator checkpoint.
        #[arg(long, value_name = "PATH")]
        generator: PathBuf,
    },
}

fn parse_cli() -> std::result::Result<Cli, clap::Error> {
    let keys = format!("Config keys:\n{}", key_help());
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_help(keys));
    }
    let matches = cmd.try_get_matches()?;
    Cli::from_arg_matches(&matches)
}

fn resolve(common: &Common, extra: &[(&str, String)]) -> Result<RunConfig> {
    let preset = common.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let mut overrides = vec![];
    if let Some(seed) = common.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    if let Some(out) = &common.out {
        overrides.push(("out_dir".to_string(), out.display().to_string()));
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    let config = RunConfig::resolve(preset, common.config.as_deref(), &overrides)?;
    config.validate()?;
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Usage("no output directory: pass --out or set out_dir".into()))
}

fn load_data(config: &RunConfig, data: &DataArg) -> Result<ZslDataset> {
    let dir = data
        .data
        .clone()
        .or_else(|| config.data_dir.clone())
        .ok_or_else(|| Error::Usage("no dataset: pass --data or set data_dir".into()))?;
    let ds = ZslDataset::load(&dir)?;
    if config.standardize {
        ds.standardized()
    } else {
        Ok(ds)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_config_if(common: &Common, config: &RunConfig) -> bool {
    if common.print_config {
        print!("{}", config.to_text());
    }
    common.print_config
}

fn gen_synthetic(common: &Common, overwrite: bool) -> Result<()> {
    let config = resolve(common, &[])?;
    if print_config_if(common, &config) {
        return Ok(());
    }
    let dir = out_dir(&config)?;
    let occupied = dir.is_dir()
        && fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .next()
            .is_some();
    if occupied && !overwrite {
        return Err(Error::Usage(format!(
            "{} exists and is not empty; pass --overwrite to replace its dataset files",
            dir.display()
        )));
    }
    let ds = make_synthetic(&config.synthetic)?;
    ds.save(&dir)?;
    println!(
        "wrote {} rows ({} seen, {} unseen classes) to {}",
        ds.len(),
        ds.seen_classes().len(),
        ds.unseen_classes().len(),
        dir.display()
    );
    Ok(())
}

fn pretrain(common: &Common, data: &DataArg) -> Result<()> {
    let config = resolve(common, &[])?;
    if print_config_if(common, &config) {
        return Ok(());
    }
    let ds = load_data(&config, data)?;
    let dir = out_dir(&config)?;
    let (x, y) = ds.split(SampleSplit::Train);
    let local = ds.seen_local_labels(&y)?;
    let mut rng = stream(config.seed, Stream::Reward);
    let model = pretrain_reward(&x, &local, ds.seen_classes().len(), config.reward, &mut rng)?;
    let acc = model.accuracy(&x, &local)?;
    ensure_dir(&dir)?;
    model.save(&dir.join(REWARD_FILE))?;
    println!("train_acc={acc:.6}");
    Ok(())
}

fn load_reward(path: &Path, ds: &ZslDataset) -> Result<RewardModel> {
    let model = RewardModel::load(path)?;
    if model.feature_dim() != ds.feature_dim() || model.num_classes() != ds.seen_classes().len() {
        return Err(Error::invalid(
            path,
            format!(
                "reward model maps width {} to {} classes; dataset has width {} and {} seen classes",
                model.feature_dim(),
                model.num_classes(),
                ds.feature_dim(),
                ds.seen_classes().len()
            ),
        ));
    }
    Ok(model)
}

struct TrainFlags<'a> {
    reward: &'a Path,
    no_rl: bool,
    no_cues: bool,
    raw_reward: bool,
    cue_loss: Option<&'a str>,
}

fn train(common: &Common, data: &DataArg, flags: TrainFlags) -> Result<()> {
    let mut extra = vec![];
    if flags.no_rl {
        extra.push(("use_rl", "false".to_string()));
    }
    if flags.no_cues {
        extra.push(("use_cues", "false".to_string()));
    }
    if flags.raw_reward {
        extra.push(("raw_reward", "true".to_string()));
    }
    if let Some(v) = flags.cue_loss {
        extra.push(("cue_loss", v.to_string()));
    }
    let config = resolve(common, &extra)?;
    if print_config_if(common, &config) {
        return Ok(());
    }
    let ds = load_data(&config, data)?;
    let dir = out_dir(&config)?;
    let reward = load_reward(flags.reward, &ds)?;
    let (x, y) = ds.split(SampleSplit::Train);
    let prototypes = mine_prototypes(&x, &y, &ds.seen_classes())?;
    ensure_dir(&dir)?;
    write(&dir.join(CONFIG_FILE), &config.to_text())?;
    prototypes.export(&dir.join(PROTOTYPES_FILE))?;
    let outcome = trainer::train(&ds, &reward, &prototypes, config.train.clone(), Some(&dir))?;
    println!("epochs={} metrics={}", outcome.metrics.len(), dir.join(trainer::METRICS_FILE).display());
    if let Some(report) = outcome.final_report() {
        println!("{report}");
    }
    Ok(())
}

fn synthesize(common: &Common, data: &DataArg, generator: &Path) -> Result<()> {
    let config = resolve(common, &[])?;
    if print_config_if(common, &config) {
        return Ok(());
    }
    let ds = load_data(&config, data)?;
    let dir = out_dir(&config)?;
    let gen = load_generator(generator, ds.feature_dim())?;
    if gen.proto_dim() != ds.proto_dim() {
        return Err(Error::invalid(
            generator,
            format!("generator expects prototypes of width {}, dataset has {}", gen.proto_dim(), ds.proto_dim()),
        ));
    }
    let sched = config.train.schedule()?;
    let (x, labels) = synthesize_unseen(&gen, &sched, &ds, config.train.synth_per_class, config.seed)?;
    ensure_dir(&dir)?;
    let path = dir.join(SYNTH_FILE);
    export_features(&x, &labels, &path)?;
    println!("wrote {} rows to {}", labels.len(), path.display());
    Ok(())
}

fn eval(common: &Common, data: &DataArg, generator: &Path) -> Result<()> {
    let config = resolve(common, &[])?;
    if print_config_if(common, &config) {
        return Ok(());
    }
    let ds = load_data(&config, data)?;
    let gen = load_generator(generator, ds.feature_dim())?;
    if gen.proto_dim() != ds.proto_dim() {
        return Err(Error::invalid(
            generator,
            format!("generator expects prototypes of width {}, dataset has {}", gen.proto_dim(), ds.proto_dim()),
        ));
    }
    let sched = config.train.schedule()?;
    let report = evaluate_generator(&gen, &sched, &ds, &config.train.eval_config(), config.seed)?;
    println!("{report}");
    if let Some(dir) = &config.out_dir {
        ensure_dir(dir)?;
        write(&dir.join(REPORT_FILE), &format!("{report}\n"))?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RLVC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("RLVC_THREADS must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::GenSynthetic { common, overwrite } => gen_synthetic(common, *overwrite),
        Command::PretrainReward { common, data } => pretrain(common, data),
        Command::Train {
            common,
            data,
            reward,
            no_rl,
            no_cues,
            raw_reward,
            cue_loss,
        } => train(
            common,
            data,
            TrainFlags {
                reward,
                no_rl: *no_rl,
                no_cues: *no_cues,
                raw_reward: *raw_reward,
                cue_loss: cue_loss.as_deref(),
            },
        ),
        Command::Synthesize { common, data, generator } => synthesize(common, data, generator),
        Command::Eval { common, data, generator } => eval(common, data, generator),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse_cli() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
