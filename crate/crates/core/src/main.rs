use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use langshape::advice::{critique_from_scores, AdviceIndex};
use langshape::env::{FroggerMap, LocalView, NUM_ACTIONS};
use langshape::harness::{
    compare_curves, load_inputs, parse_toml, run_experiment, run_pipeline, write_result, AgentKind, DynamicsMode,
    LearningCurve, PipelineConfig,
};
use langshape::rl::TemperatureSchedule;
use langshape::env::Action;
use langshape::seq2seq::{checkpoint, loss_trace_csv, token_accuracy, train};
use langshape::trainer::{build_dataset, collect_demonstrations, format_demonstrations, parse_demonstrations, Dataset, Grammar};

/// Language-guided exploration for tabular Q-learning in Frogger.
#[derive(Parser)]
#[command(name = "langshape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML configuration; sections [demo], [train] and [experiment] feed the
    /// matching subcommands. Built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(path) => {
                let text = read(path)?;
                parse_toml(&text).with_context(|| format!("reading {}", path.display()))
            }
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a map from the default row template.
    GenMap {
        #[arg(long, default_value_t = 9)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train demonstrators on a map and write their (view, action) pairs.
    Collect {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe demonstrations with the grammar at a given accuracy.
    BuildDataset {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        accuracy: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grammar file; the built-in grammar otherwise.
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the encoder-decoder on a dataset.
    TrainModel {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: bool,
    },
    /// Print the chosen utterance and critique distribution for one view.
    Advise {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Nine cell tokens, row-major, e.g. "ROAD CAR ROAD GRASS GRASS GRASS WALL WALL WALL".
        #[arg(long)]
        view: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long)]
        length_normalize: bool,
    },
    /// Run one agent's replicated learning experiment.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        agent: Option<AgentKind>,
        #[arg(long)]
        dynamics: Option<DynamicsMode>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        demonstrations: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Advice cache file, read if present and rewritten after the run.
        #[arg(long)]
        advice_cache: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Summarise learning curves: AUC, episodes to threshold, sign tests.
    Compare {
        /// Curve CSVs; the agent name is the file stem after its last `_`.
        #[arg(required = true)]
        curves: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole recipe with stage caching.
    Pipeline {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenMap {
            width,
            height,
            density,
            seed,
            out,
        } => {
            let text = FroggerMap::generate(width, height, density, seed)?.to_string();
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Collect {
            config,
            map,
            agents,
            seed,
            out,
        } => {
            let cfg = config.load()?;
            let map = FroggerMap::parse(&read(&map)?)?;
            let pairs = collect_demonstrations(&map, agents.unwrap_or(cfg.demo_agents), seed.unwrap_or(cfg.seed), &cfg.demo)?;
            write(&out, &format_demonstrations(&pairs))?;
            println!("{} pairs written to {}", pairs.len(), out.display());
        }
        Command::BuildDataset {
            demos,
            accuracy,
            seed,
            grammar,
            out,
        } => {
            let pairs = parse_demonstrations(&read(&demos)?)?;
            let grammar = match grammar {
                Some(path) => Grammar::parse(&read(&path)?)?,
                None => Grammar::default_grammar(),
            };
            let dataset = build_dataset(&pairs, &grammar, accuracy, seed)?;
            write(&out, &dataset.to_text())?;
            let stats = dataset.stats();
            println!("{} examples written to {}; {stats:?}", dataset.len(), out.display());
        }
        Command::TrainModel {
            config,
            dataset,
            out,
            loss_csv,
            epochs,
            hidden,
            seed,
            parallel,
        } => {
            let mut cfg = config.load()?.train;
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.hidden = hidden.unwrap_or(cfg.hidden);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.parallel |= parallel;
            let dataset = Dataset::parse(&read(&dataset)?)?;
            let outcome = train(dataset.examples(), &cfg)?;
            checkpoint::save(&out, &outcome.model, &cfg)?;
            if let Some(path) = loss_csv {
                write(&path, &loss_trace_csv(&outcome.trace))?;
            }
            let last = outcome.trace.last().expect("at least one epoch");
            println!(
                "final mean nll {:.6}, token accuracy {:.4}; model written to {}",
                last.mean_nll,
                token_accuracy(&outcome.model, dataset.examples())?,
                out.display()
            );
        }
        Command::Advise {
            model,
            dataset,
            view,
            tau,
            length_normalize,
        } => {
            let view = LocalView::parse_tokens(view.split_whitespace()).map_err(anyhow::Error::msg)?;
            let model = checkpoint::load(&model)?.model;
            let dataset = Dataset::parse(&read(&dataset)?)?;
            let index = AdviceIndex::from_dataset(Arc::new(model), &dataset)?.with_length_normalization(length_normalize);
            let advice = index.select_advice(&view);
            TemperatureSchedule::constant(tau).validate().map_err(anyhow::Error::msg)?;
            let dist = critique_from_scores(&advice.scores, tau);
            println!("utterance: {}", index.utterances()[advice.utterance].join(" "));
            for a in 0..NUM_ACTIONS {
                println!(
                    "{:<6} logprob {:>12.6}  p {:.6}",
                    Action::from_index(a).to_string(),
                    advice.scores[a],
                    dist.probs()[a]
                );
            }
        }
        Command::Run {
            config,
            map,
            agent,
            dynamics,
            episodes,
            replicates,
            seed,
            demonstrations,
            dataset,
            model,
            advice_cache,
            out_dir,
        } => {
            let mut cfg = config.load()?.experiment;
            cfg.map = map.unwrap_or(cfg.map);
            cfg.agent = agent.unwrap_or(cfg.agent);
            cfg.dynamics = dynamics.unwrap_or(cfg.dynamics);
            cfg.episodes = episodes.or(cfg.episodes);
            cfg.replicates = replicates.unwrap_or(cfg.replicates);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.demonstrations = demonstrations.or(cfg.demonstrations);
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.model = model.or(cfg.model);
            cfg.advice_cache = advice_cache.or(cfg.advice_cache);
            if cfg.map.as_os_str().is_empty() {
                bail!("no map given (use --map or set experiment.map)");
            }
            let inputs = load_inputs(&cfg)?;
            let result = run_experiment(&cfg, &inputs)?;
            if let (Some(path), langshape::harness::CritiqueSource::Advice(index)) = (&cfg.advice_cache, &inputs.critique) {
                write(path, &index.cache_to_text())?;
            }
            let map_name = cfg.map.file_stem().map_or("map".into(), |s| s.to_string_lossy().into_owned());
            let stem = format!("{map_name}_{}_{}", cfg.dynamics, cfg.agent);
            write_result(&out_dir, &stem, &result)?;
            let last = result.curve.episodes.len() - 1;
            println!(
                "{stem}: final mean {:.3} ± {:.3}; curve written to {}",
                result.curve.mean(last),
                result.curve.stderr(last),
                out_dir.join(format!("{stem}.csv")).display()
            );
        }
        Command::Compare { curves, out } => {
            let mut loaded = Vec::new();
            for path in &curves {
                let stem = path.file_stem().map_or(String::new(), |s| s.to_string_lossy().into_owned());
                let agent = stem.rsplit('_').next().unwrap_or(&stem).to_string();
                loaded.push(LearningCurve::from_csv(&agent, &read(path)?)?);
            }
            let table = compare_curves(&loaded)?.to_table();
            match out {
                Some(path) => write(&path, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Pipeline { config, seed, out_dir } => {
            let mut cfg = config.load()?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let base = match &config.config {
                Some(path) => path.parent().map(Path::to_path_buf).unwrap_or_default(),
                None => PathBuf::from(env!("CARGO_MANIFEST_DIR")),
            };
            let report = run_pipeline(&cfg, &base, &out_dir)?;
            for (stage, status) in &report.stages {
                println!("{stage:<40} {status:?}");
            }
            println!("{} of {} stages ran; manifest {}", report.ran(), report.stages.len(), report.manifest.display());
        }
    }
    Ok(())
}
