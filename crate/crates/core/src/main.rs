use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use curiolab::analysis::latent_analysis;
use curiolab::config::load_config;
use curiolab::dataset::ObservationDataset;
use curiolab::experiment::{evaluate, generate_dataset, load_vae, pretrain_vae, read_rows, run_experiment};
use curiolab::plot::{lesson_curves_svg, scatter_svg};
use curiolab::policy::PolicyNet;
use curiolab_arena::{arena_to_svg, parse_arena};
use curiolab_numcore::module::load_param_map;
use curiolab_numcore::{load_checkpoint, save_checkpoint};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "curiolab", version, about = "Curiosity-driven RL with pretrained state encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample labelled observations into `<output_dir>/dataset.obsd`.
    GenDataset { config: PathBuf },
    /// Pretrain the β-VAE into `<output_dir>/vae.ckpt`.
    TrainVae { config: PathBuf },
    /// Run the IDC and XMC phases and score the final policy.
    Train { config: PathBuf },
    /// Score a saved policy on the training and test suites.
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// PCA projection and k-NN purity of the VAE latent space.
    AnalyzeLatent { config: PathBuf },
    /// Lesson-vs-steps curves from one or more run CSVs.
    Plot {
        #[arg(required = true)]
        runlogs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Top-down SVG of an arena file.
    RenderArena {
        dsl: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset { config } => {
            let cfg = load_config(&config)?;
            let ds = generate_dataset(&cfg)?;
            let path = cfg.output_dir.join("dataset.obsd");
            fs::create_dir_all(&cfg.output_dir)?;
            ds.save(&path)?;
            println!("wrote {} observations to {}", ds.len(), path.display());
        }
        Command::TrainVae { config } => {
            let cfg = load_config(&config)?;
            let (model, logs) = pretrain_vae(&cfg)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("vae.ckpt");
            save_checkpoint(&path, &model.to_checkpoint())?;
            let mut csv = String::from("epoch,recon,kl,total\n");
            for l in &logs {
                csv.push_str(&format!("{},{},{},{}\n", l.epoch, l.recon, l.kl, l.total));
            }
            write(&cfg.output_dir.join("vae_log.csv"), csv)?;
            println!("wrote {} (checksum {})", path.display(), model.checksum());
        }
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            let log = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&log.summary)?);
        }
        Command::Eval { config, checkpoint } => {
            let cfg = load_config(&config)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut policy = PolicyNet::new((3, cfg.resolution, cfg.resolution), &mut rng);
            load_param_map(&mut policy, &load_checkpoint(&checkpoint)?)?;
            let (train, test) = evaluate(&policy, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "training_score": train, "test_score": test }))?);
        }
        Command::AnalyzeLatent { config } => {
            let cfg = load_config(&config)?;
            let ckpt = cfg.vae_checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join("vae.ckpt"));
            let model = load_vae(&ckpt)?;
            let ds = match &cfg.dataset {
                Some(p) => ObservationDataset::load(p)?,
                None => generate_dataset(&cfg)?,
            };
            let a = latent_analysis(&model, &ds)?;
            let labels: Vec<usize> = ds.labels.as_ref().expect("analysis checked labels").iter().map(|&l| l as usize).collect();
            let mut csv = String::from("pc1,pc2,label\n");
            for (p, l) in a.projection.iter().zip(&labels) {
                csv.push_str(&format!("{},{},{}\n", p[0], p[1], l));
            }
            write(&cfg.output_dir.join("latent_pca.csv"), csv)?;
            write(&cfg.output_dir.join("latent_pca.svg"), scatter_svg(&format!("purity {:.3}", a.purity), &a.projection, &labels))?;
            println!("{}", serde_json::json!({ "purity": a.purity, "variances": a.variances }));
        }
        Command::Plot { runlogs, out } => {
            let runs = runlogs.iter().map(|p| read_rows(p)).collect::<Result<Vec<_>, _>>()?;
            let path = out.join("lessons.svg");
            write(&path, lesson_curves_svg("lesson index vs environment steps", &runs)?)?;
            println!("wrote {}", path.display());
        }
        Command::RenderArena { dsl, out } => {
            let text = fs::read_to_string(&dsl).with_context(|| format!("reading {}", dsl.display()))?;
            let spec = parse_arena(&text)?;
            write(&out, arena_to_svg(&spec, 24.0))?;
        }
    }
    Ok(())
}
