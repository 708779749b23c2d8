use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reforest_core::harness::{
    altitude_profile_csv, difficulty_seed_matrix, evaluate, flight_overlay, parse_trajectory,
    run_training, write_render, EvalPolicy, EvalSetup, ExperimentConfig, HarnessError, PresetName,
    CONFIG_FILE, TEST_SEED,
};
use reforest_core::nn::{load_checkpoint, PolicyNet};
use reforest_core::ppo::read_checkpoint_meta;
use reforest_core::terrain::{generate_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "reforest",
    version,
    about = "Drone reforestation simulator and PPO trainer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a preset; resumes from the newest checkpoint in --out.
    Train {
        #[arg(long)]
        preset: Option<PresetName>,
        /// Experiment TOML; its preset must agree with --preset when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_updates: Option<u64>,
    },
    /// Greedy evaluation of a checkpoint on one scenario.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Defaults to `config.toml` of the training run owning the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = TEST_SEED)]
        seed: u64,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        /// Report directory; defaults to `eval-seed<S>` beside the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Height map, reforestation map and tree list for one scenario.
    Render {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        difficulty: u32,
        #[arg(long, default_value = "render")]
        out: PathBuf,
    },
    /// Mosaic of height maps, one row per difficulty and one column per seed.
    Matrix {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 10)]
        max_difficulty: u32,
        #[arg(long, default_value_t = 64)]
        tile: usize,
        #[arg(long, default_value = "matrix.pgm")]
        out: PathBuf,
    },
    /// Draws a recorded trajectory over its scenario's height map.
    Flightpath {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = TEST_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        difficulty: u32,
        /// Takes the scenario settings from an experiment TOML instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "flightpath")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Train {
            preset,
            config,
            out,
            seed,
            max_updates,
        } => {
            let mut cfg = match (&config, preset) {
                (Some(path), p) => {
                    let cfg = ExperimentConfig::load(path)?;
                    if let Some(p) = p.filter(|&p| p != cfg.preset) {
                        return Err(HarnessError::Config(format!(
                            "--preset {p} disagrees with preset {} in {}",
                            cfg.preset,
                            path.display()
                        )));
                    }
                    cfg
                }
                (None, Some(p)) => ExperimentConfig::for_preset(p),
                (None, None) => {
                    return Err(HarnessError::Config(
                        "train needs --preset or --config".into(),
                    ))
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if max_updates.is_some() {
                cfg.train.max_updates = max_updates;
            }
            let o = run_training(&cfg, &out)?;
            if let Some(u) = o.resumed_from {
                eprintln!("resumed from update {u}");
            }
            for s in &o.summaries {
                eprintln!(
                    "step {:>9}  update {:>5}  episodes {:>3}  cumulative_reward {:>9.3}",
                    s.step,
                    s.update,
                    s.episodes,
                    s.metrics
                        .get("cumulative_reward")
                        .copied()
                        .unwrap_or(f64::NAN)
                );
            }
            println!("{} updates, {} agent steps", o.update, o.step);
            if let Some(p) = o.last_checkpoint {
                println!("checkpoint {}", p.display());
            }
            Ok(())
        }
        Command::Eval {
            ckpt,
            config,
            seed,
            runs,
            steps,
            out,
        } => {
            let cfg_path = config.unwrap_or_else(|| run_dir(&ckpt).join(CONFIG_FILE));
            let cfg = ExperimentConfig::load(&cfg_path)?;
            let meta = read_checkpoint_meta(&ckpt)?;
            if let Some(h) = meta.extra.get("resume_hash").and_then(|v| v.as_str()) {
                if h != cfg.resume_hash() {
                    return Err(HarnessError::Config(format!(
                        "checkpoint was trained under config {h}, {} hashes to {}",
                        cfg_path.display(),
                        cfg.resume_hash()
                    )));
                }
            }
            let params = load_checkpoint(&ckpt, &cfg.net)?;
            let net = PolicyNet::new(cfg.net.clone());
            let setup = EvalSetup {
                scenario: ScenarioConfig {
                    seed,
                    ..cfg.scenario.clone()
                },
                env: cfg.env.clone(),
                layout: cfg.obs.layout,
                runs: runs.unwrap_or(cfg.eval.runs),
                steps: steps.unwrap_or(cfg.eval.steps),
                flight_path_steps: cfg.eval.flight_path_steps,
                seed: cfg.seed,
            };
            let report = evaluate(
                &setup,
                EvalPolicy::Greedy {
                    net: &net,
                    params: &params,
                },
            )?;
            let out = out.unwrap_or_else(|| run_dir(&ckpt).join(format!("eval-seed{seed}")));
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.csv"), report.to_csv())?;
            let json =
                serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Io(e.into()))?;
            std::fs::write(out.join("report.json"), json)?;
            for (i, path) in report.flight_paths.iter().enumerate() {
                std::fs::write(out.join(format!("flightpath_run{i}.csv")), path)?;
            }
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Render {
            seed,
            difficulty,
            out,
        } => {
            for p in write_render(&out, &ScenarioConfig::new(seed, difficulty))? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Matrix {
            seeds,
            max_difficulty,
            tile,
            out,
        } => {
            let diffs: Vec<u32> = (1..=max_difficulty).collect();
            let seeds: Vec<u64> = (0..seeds).collect();
            let img = difficulty_seed_matrix(&ScenarioConfig::default(), &diffs, &seeds, tile, 2)?;
            std::fs::write(&out, img.to_pgm())?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Flightpath {
            traj,
            seed,
            difficulty,
            config,
            out,
        } => {
            let scenario_cfg = match config {
                Some(p) => ScenarioConfig {
                    seed,
                    ..ExperimentConfig::load(&p)?.scenario
                },
                None => ScenarioConfig::new(seed, difficulty),
            };
            let scenario = generate_scenario(&scenario_cfg)?;
            let text = std::fs::read_to_string(&traj)?;
            let points = parse_trajectory(&text)?;
            let img = flight_overlay(&scenario, &points);
            std::fs::create_dir_all(&out)?;
            let pgm = out.join("flightpath.pgm");
            std::fs::write(&pgm, img.to_pgm())?;
            let alt = out.join("altitude.csv");
            std::fs::write(&alt, altitude_profile_csv(&scenario, &points))?;
            println!("{}\n{}", pgm.display(), alt.display());
            Ok(())
        }
    }
}

/// `run/checkpoints/ckpt-N.bin` → `run`.
fn run_dir(ckpt: &Path) -> PathBuf {
    ckpt.parent()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
