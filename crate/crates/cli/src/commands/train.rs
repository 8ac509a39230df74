use super::load_dataset;
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use orchard_core::cnn::{CnnArch, CnnTrainOptions};
use orchard_core::io::{save_model, ModelProvenance, NetworkModel};
use orchard_core::metadata::MetaParam;
use orchard_core::msmlp::{MsMlpArch, MsMlpTrainOptions};
use orchard_core::nn::TrainConfig;
use std::path::PathBuf;

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Multi-scale MLP with ZCA whitening and DAE pretraining.
    Msmlp(MsMlpArgs),
    /// Patch CNN (no pretraining, dropout on the dense layers).
    Cnn(CnnArgs),
}

#[derive(Args, Debug)]
pub struct CommonTrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated metadata parameters (p_i,p_j,r_n,s_psi,noise).
    #[arg(long)]
    pub metadata: Option<String>,
    /// Balanced training instances to sample.
    #[arg(long, default_value_t = 20_000)]
    pub instances: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Balanced validation instances for per-epoch monitoring.
    #[arg(long, default_value_t = 2000)]
    pub val_instances: usize,
}

#[derive(Args, Debug)]
pub struct MsMlpArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Architecture: the baseline 2-hidden-layer net or the optimized
    /// 3-hidden-layer one.
    #[arg(long, default_value = "mlp3", value_parser = ["mlp2", "mlp3"])]
    pub arch: String,
    #[arg(long, default_value_t = 6)]
    pub dae_epochs: usize,
    #[arg(long, default_value_t = 6000)]
    pub pretrain_patches: usize,
    #[arg(long, default_value_t = 8000)]
    pub zca_patches: usize,
}

#[derive(Args, Debug)]
pub struct CnnArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    #[arg(long, default_value_t = 0.5)]
    pub dropout_keep: f64,
    /// Early-stopping patience (epochs without validation F1 improvement).
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
}

fn parse_metadata(s: &Option<String>) -> Result<Vec<MetaParam>> {
    match s {
        None => Ok(Vec::new()),
        Some(list) => list
            .split(',')
            .filter(|p| !p.is_empty())
            .map(|p| MetaParam::from_name(p.trim()).map_err(anyhow::Error::from))
            .collect(),
    }
}

fn train_config(common: &CommonTrainArgs, defaults: TrainConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: common.learning_rate.unwrap_or(defaults.learning_rate),
        lr_end: common.lr_end.unwrap_or(defaults.lr_end),
        momentum: common.momentum.unwrap_or(defaults.momentum),
        l2: common.l2.unwrap_or(defaults.l2),
        dropout_keep: defaults.dropout_keep,
        epochs: common.epochs.unwrap_or(defaults.epochs),
        batch_size: common.batch.unwrap_or(defaults.batch_size),
        seed: common.seed,
    }
}

fn write_log(out: &PathBuf, log: &orchard_core::msmlp::TrainedModelLog) -> Result<()> {
    let mut text = String::new();
    for (s, (init, fin)) in log.pretrain_recon.iter().enumerate() {
        text.push_str(&format!("pretrain scale={s} recon {init:.6} -> {fin:.6}\n"));
    }
    for e in &log.epochs {
        text.push_str(&format!(
            "epoch {:>3} lr {:.6} train_loss {:.6} val_f1 {:.4}\n",
            e.epoch, e.learning_rate, e.train_loss, e.val_f1
        ));
    }
    if let Some(best) = log.best_epoch {
        text.push_str(&format!("best_epoch {best}\n"));
    }
    let log_path = out.with_extension("log");
    orchard_core::io::atomic_write(&log_path, text.as_bytes())?;
    Ok(())
}

pub fn run(cmd: TrainCommand) -> Result<()> {
    match cmd {
        TrainCommand::Msmlp(args) => {
            let ds = load_dataset(&args.common.dataset)?;
            let enabled = parse_metadata(&args.common.metadata)?;
            let meta = if enabled.is_empty() {
                None
            } else {
                Some(ds.descriptor.encoder_spec(&enabled)?)
            };
            let arch = match args.arch.as_str() {
                "mlp2" => MsMlpArch::mlp2(meta),
                _ => MsMlpArch::mlp3_star(meta),
            };
            let cfg = train_config(
                &args.common,
                TrainConfig {
                    learning_rate: 0.2,
                    lr_end: 0.02,
                    epochs: 12,
                    batch_size: 64,
                    l2: 1e-5,
                    ..TrainConfig::default()
                },
            );
            let mut opts = MsMlpTrainOptions::new(arch, cfg, args.common.instances);
            opts.dae.epochs = args.dae_epochs;
            opts.pretrain_count = args.pretrain_patches;
            opts.zca_fit_count = args.zca_patches;
            opts.val_instances = args.common.val_instances;

            let train = ds.load_scenes(&ds.train)?;
            let val = ds.load_scenes(&ds.val)?;
            println!(
                "train msmlp ({}): {} train scenes, {} val scenes, {} instances",
                args.arch,
                train.len(),
                val.len(),
                args.common.instances
            );
            let (model, log) = orchard_core::msmlp::train_msmlp(&train, &val, &opts)?;
            if let Some(last) = log.epochs.last() {
                println!(
                    "final epoch: train_loss {:.4} val_f1 {:.4}",
                    last.train_loss, last.val_f1
                );
            }
            let provenance = ModelProvenance {
                seed: args.common.seed,
                epochs: log.epochs.len() as u32,
                config_summary: format!("{:?}", opts.cfg),
            };
            save_model(&args.common.out, &NetworkModel::MsMlp(model), &provenance)
                .context("saving model")?;
            write_log(&args.common.out, &log)?;
            println!("wrote {}", args.common.out.display());
            Ok(())
        }
        TrainCommand::Cnn(args) => {
            let ds = load_dataset(&args.common.dataset)?;
            let enabled = parse_metadata(&args.common.metadata)?;
            let meta = if enabled.is_empty() {
                None
            } else {
                Some(ds.descriptor.encoder_spec(&enabled)?)
            };
            let arch = CnnArch::cnn_star(meta);
            let mut cfg = train_config(
                &args.common,
                TrainConfig {
                    learning_rate: 0.05,
                    lr_end: 0.005,
                    epochs: 8,
                    batch_size: 64,
                    l2: 1e-5,
                    ..TrainConfig::default()
                },
            );
            cfg.dropout_keep = args.dropout_keep;
            let mut opts = CnnTrainOptions::new(arch, cfg, args.common.instances);
            opts.val_instances = args.common.val_instances;
            opts.patience = Some(args.patience);

            let train = ds.load_scenes(&ds.train)?;
            let val = ds.load_scenes(&ds.val)?;
            println!(
                "train cnn: {} train scenes, {} val scenes, {} instances",
                train.len(),
                val.len(),
                args.common.instances
            );
            let (model, log) = orchard_core::cnn::train_cnn(&train, &val, &opts)?;
            if let Some(last) = log.epochs.last() {
                println!(
                    "final epoch: train_loss {:.4} val_f1 {:.4}",
                    last.train_loss, last.val_f1
                );
            }
            let provenance = ModelProvenance {
                seed: args.common.seed,
                epochs: log.epochs.len() as u32,
                config_summary: format!("{:?}", opts.cfg),
            };
            save_model(&args.common.out, &NetworkModel::Cnn(model), &provenance)
                .context("saving model")?;
            write_log(&args.common.out, &log)?;
            println!("wrote {}", args.common.out.display());
            Ok(())
        }
    }
}
