use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mihgnn::data::{generate_sequence, load_dir, standard_design, GenParams, NoiseStd, SequenceDataset};
use mihgnn::eval::{evaluate, fbd_sequence, Report};
use mihgnn::hgnn::{count_params, HgnnConfig};
use mihgnn::morphology::{build_graph, parse_urdf, NodeType, RobotModel, A1_LIKE_URDF};
use mihgnn::training::{fit, windows_of, TrainConfig, TrainedModel};
use mihgnn::Task;

#[derive(Parser)]
#[command(name = "mihgnn", version, about = "Morphology-informed graph networks for legged-robot contact perception")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a URDF into its morphology graph and summarize it.
    Graph {
        urdf: PathBuf,
        /// Also write the canonical graph JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the parameter count of a graph network on a URDF's morphology.
    CountParams {
        urdf: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        hidden: usize,
        #[arg(long)]
        task: Task,
    },
    /// Generate synthetic trotting recordings.
    GenData(GenArgs),
    /// Train a model on `<data-dir>/train` with early stopping on `<data-dir>/val`.
    Train {
        #[arg(long)]
        task: Task,
        /// JSON training configuration; `task` may be omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: PathBuf,
        /// Output directory for the checkpoint, config and training log.
        #[arg(long)]
        out: PathBuf,
        /// Robot description; defaults to the bundled 12-joint quadruped.
        #[arg(long)]
        urdf: Option<PathBuf>,
    },
    /// Score a checkpoint on a recording or a directory of recordings.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also write the metrics as `metric,value` CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Floating-base dynamics force estimates for every sample and leg.
    Fbd {
        #[arg(long)]
        urdf: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Ground slope in degrees.
    #[arg(long, default_value_t = 0.0)]
    slope: f64,
    /// Forward speed in m/s; 0 stands still.
    #[arg(long, default_value_t = 0.5)]
    speed: f64,
    /// Seconds of recording.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sensor noise as a multiple of the default noise levels.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Per-footstep ground height jitter in m.
    #[arg(long, default_value_t = 0.0)]
    rough: f64,
    /// Write the full 21-sequence train/val/test design into `out` instead
    /// of one recording.
    #[arg(long)]
    standard_design: bool,
    #[arg(long)]
    urdf: Option<PathBuf>,
    /// Output CSV file, or directory with `--standard-design`.
    #[arg(long)]
    out: PathBuf,
}

/// Errors in how the tool was invoked, as opposed to failures while running.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_robot(path: Option<&Path>) -> Result<RobotModel> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => A1_LIKE_URDF.to_string(),
    };
    Ok(parse_urdf(&text)?)
}

fn load_data(path: &Path) -> Result<Vec<(String, SequenceDataset)>> {
    if path.is_dir() {
        let seqs = load_dir(path).with_context(|| format!("loading {}", path.display()))?;
        if seqs.is_empty() {
            bail!("no .csv recordings in {}", path.display());
        }
        Ok(seqs)
    } else {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let ds = SequenceDataset::load(path).with_context(|| format!("loading {}", path.display()))?;
        Ok(vec![(name, ds)])
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Graph { urdf, json } => {
            let graph = build_graph(&load_robot(Some(&urdf))?)?;
            println!("nodes: {}", graph.num_nodes());
            println!("edges: {}", graph.edges.len());
            for t in NodeType::ALL {
                println!("{t} nodes: {}", graph.nodes_of_type(t).len());
            }
            let relations: Vec<String> = graph.relations().iter().map(|r| r.key()).collect();
            println!("relations: {}", relations.join(" "));
            println!("fingerprint: {}", graph.fingerprint());
            if let Some(path) = json {
                fs::write(&path, graph.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::CountParams { urdf, layers, hidden, task } => {
            let graph = build_graph(&load_robot(Some(&urdf))?)?;
            let cfg = HgnnConfig::new(task, hidden, layers, 0);
            cfg.validate().map_err(|e| UsageError(e.to_string()))?;
            println!("{}", count_params(&graph, &cfg));
        }
        Command::GenData(args) => gen_data(args)?,
        Command::Train { task, config, data_dir, out, urdf } => {
            let cfg = read_config(task, config.as_deref())?;
            let graph = build_graph(&load_robot(urdf.as_deref())?)?;
            let train_seqs: Vec<SequenceDataset> = load_data(&data_dir.join("train"))?.into_iter().map(|(_, d)| d).collect();
            let val_seqs: Vec<SequenceDataset> = load_data(&data_dir.join("val"))?.into_iter().map(|(_, d)| d).collect();
            let (model, mut report) =
                fit(&cfg, &graph, windows_of(&train_seqs, cfg.stride)?, windows_of(&val_seqs, cfg.stride)?)?;
            fs::create_dir_all(&out)?;
            let hash = model.save(&out.join("checkpoint.json"))?;
            report.checkpoint = Some(hash);
            fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
            fs::write(out.join("train_log.csv"), report.log_csv())?;
            fs::write(out.join("train_report.json"), serde_json::to_string_pretty(&report)?)?;
            println!(
                "epochs: {}  best epoch: {}  best val loss: {:.6}  time: {:.1} s",
                report.epochs_run(),
                report.best_epoch,
                report.best_val_loss,
                report.wall_time_s
            );
        }
        Command::Eval { checkpoint, data, report, csv, stride } => {
            if stride == 0 {
                return Err(UsageError("--stride must be at least 1".into()).into());
            }
            let (model, checkpoint_hash) =
                TrainedModel::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let config_hash = match checkpoint.parent().map(|d| d.join("config.json")).filter(|p| p.exists()) {
                Some(p) => TrainConfig::from_json(&fs::read_to_string(&p)?)?.hash(),
                None => String::new(),
            };
            let sequences = load_data(&data)?;
            let metrics = evaluate(&model, &sequences, stride)?;
            let r = Report {
                task: model.task(),
                dataset: data.display().to_string(),
                metrics,
                config_hash,
                checkpoint_hash,
            };
            fs::write(&report, serde_json::to_string_pretty(&r)?).with_context(|| format!("writing {}", report.display()))?;
            if let Some(path) = csv {
                fs::write(&path, r.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", r.to_csv());
        }
        Command::Fbd { urdf, data, out } => {
            let robot = load_robot(Some(&urdf))?;
            let ds = SequenceDataset::load(&data).with_context(|| format!("loading {}", data.display()))?;
            let mut text = String::from("t,leg,fx,fy,fz,flag\n");
            for e in fbd_sequence(&ds, &robot)? {
                match e.force {
                    Some(f) => text.push_str(&format!("{},{},{},{},{},ok\n", e.t, e.leg, f.x, f.y, f.z)),
                    None => text.push_str(&format!("{},{},,,,singular\n", e.t, e.leg)),
                }
            }
            fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn read_config(task: Task, path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else { return Ok(TrainConfig::new(task)) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = value.as_object_mut().ok_or_else(|| UsageError("the config must be a JSON object".into()))?;
    match obj.get("task") {
        None => {
            obj.insert("task".into(), serde_json::to_value(task)?);
        }
        Some(t) if *t == serde_json::to_value(task)? => {}
        Some(t) => return Err(UsageError(format!("--task {task} conflicts with config task {t}")).into()),
    }
    TrainConfig::from_json(&value.to_string()).map_err(|e| UsageError(e.to_string()).into())
}

fn gen_data(args: GenArgs) -> Result<()> {
    let robot = load_robot(args.urdf.as_deref())?;
    if args.standard_design {
        let (specs, split) = standard_design(args.duration, args.seed);
        for (dir, names) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            let dir = args.out.join(dir);
            fs::create_dir_all(&dir)?;
            for spec in specs.iter().filter(|s| names.contains(&s.name)) {
                let params = GenParams { noise: NoiseStd::scaled(args.noise), ..spec.params.clone() };
                generate_sequence(&params, &robot)?.save(&dir.join(format!("{}.csv", spec.name)))?;
                eprintln!("wrote {}/{}.csv", dir.display(), spec.name);
            }
        }
        return Ok(());
    }
    let params = GenParams {
        mu: args.mu,
        slope_deg: args.slope,
        speed: args.speed,
        terrain_jitter: args.rough,
        duration: args.duration,
        noise: NoiseStd::scaled(args.noise),
        seed: args.seed,
        ..GenParams::default()
    };
    params.validate().map_err(|e| UsageError(e.to_string()))?;
    let ds = generate_sequence(&params, &robot)?;
    ds.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} samples to {}", ds.len(), args.out.display());
    Ok(())
}
