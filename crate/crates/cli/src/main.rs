use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use scenemux::artifact::Stamped;
use scenemux::config::{parse_config, render_config, Assignment, ConfigFile};
use scenemux::dataset::{generate_dataset, synthesize_trace};
use scenemux::decision::{build_allocation_labels, train_decision, DecisionModel};
use scenemux::pipeline::{profile, run_pipeline, RunConfig};
use scenemux::runtime::{summarize, train_baseline, Method};
use scenemux::sampling::{adaptive_sampling, random_sampling};
use scenemux::store::{self, Contender, SimulationReport};
use scenemux::Error;

mod report;

#[derive(Parser)]
#[command(name = "scenemux", version, about = "Scene-adaptive model selection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Sectioned key-value config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one key, e.g. `--set profiling.n=6`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Adaptive,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the scene encoder and build the model repository.
    Profile {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for encoder.json and repository.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect allocation-labelled pools.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        repository: PathBuf,
        #[arg(long, value_enum, default_value = "adaptive")]
        method: Sampler,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the decision head on sampled pools.
    TrainDecision {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        repository: PathBuf,
        #[arg(long)]
        pools: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one method over a spliced test trace.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "anole")]
        baseline: Method,
        /// Required for anole.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Required for anole.
        #[arg(long)]
        repository: Option<PathBuf>,
        /// Required for anole.
        #[arg(long)]
        decision: Option<PathBuf>,
        /// Cache slots; defaults to the config value or the model count.
        #[arg(long)]
        capacity: Option<usize>,
        /// Inclusive capacity range `lo..hi`.
        #[arg(long, value_parser = parse_range)]
        capacity_sweep: Option<(usize, usize)>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate summaries and sweeps across runs.
    Report {
        /// Summary/sweep JSON files or directories to search.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write the aggregate as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration in config-file syntax.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Every stage for a range of seeds, one directory per seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Inclusive seed range `lo..hi`; defaults to the master seed.
        #[arg(long, value_parser = parse_range)]
        seeds: Option<(usize, usize)>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if hi < lo {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

impl ConfigArgs {
    fn resolve(&self) -> scenemux::Result<RunConfig> {
        let mut file = match &self.config {
            Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
            None => ConfigFile::default(),
        };
        for (i, o) in self.overrides.iter().enumerate() {
            let bad = || Error::InvalidConfig(format!("bad --set {o:?}"));
            let (key, value) = o.split_once('=').ok_or_else(bad)?;
            let text = match key.trim().rsplit_once('.') {
                Some((section, k)) => format!("[{section}]\n{k} = {value}"),
                None => format!("{key} = {value}"),
            };
            let parsed = parse_config(&text)?;
            if parsed.seed.is_some() {
                file.seed = parsed.seed;
            }
            file.assignments
                .extend(parsed.assignments.into_iter().map(|a| Assignment { line: i + 1, ..a }));
        }
        file.resolve(self.seed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Simulate {
        baseline: Method::Anole,
        encoder,
        repository,
        decision,
        ..
    } = &cli.command
    {
        if encoder.is_none() || repository.is_none() || decision.is_none() {
            Cli::command()
                .error(
                    ErrorKind::MissingRequiredArgument,
                    "--baseline anole needs --encoder, --repository and --decision",
                )
                .exit();
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn create_parent(path: &Path) -> scenemux::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn run(command: Command) -> scenemux::Result<()> {
    match command {
        Command::Generate { cfg, out } => {
            let cfg = cfg.resolve()?;
            let dataset = generate_dataset(&cfg.generator)?;
            create_parent(&out)?;
            let hash = store::write_dataset_file(&dataset, &out)?;
            println!(
                "{} samples, {} clips ({} seen, {} unseen), {} train / {} valid",
                dataset.samples.len(),
                dataset.splits.seen_clips.len() + dataset.splits.unseen_clips.len(),
                dataset.splits.seen_clips.len(),
                dataset.splits.unseen_clips.len(),
                dataset.train_indices().len(),
                dataset.valid_indices().len(),
            );
            println!("wrote {} ({hash})", out.display());
        }
        Command::Profile { cfg, dataset, out } => {
            let cfg = cfg.resolve()?;
            let (dataset, d) = store::read_dataset_file(&dataset)?;
            let profile = profile(&dataset, &cfg.profiling)?;
            for a in &profile.repository.attempts {
                println!(
                    "k={} cluster={} scenes={:?} f1={:.4} {}",
                    a.k,
                    a.cluster_id,
                    a.member_scene_ids,
                    a.validation_f1,
                    if a.accepted { "accepted" } else { "rejected" }
                );
            }
            std::fs::create_dir_all(&out)?;
            let encoder = Stamped::new((*profile.encoder).clone(), &[("dataset", &d)]);
            let e = store::write_stamped(&out.join(store::ENCODER), &encoder)?;
            let repo = Stamped::new(profile.repository, &[("dataset", &d), ("encoder", &e)]);
            let r = store::write_stamped(&out.join(store::REPOSITORY), &repo)?;
            println!("repository of {} models ({r})", repo.body.len());
        }
        Command::Sample {
            cfg,
            dataset,
            repository,
            method,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let (dataset, d) = store::read_dataset_file(&dataset)?;
            let (repo, r) = store::read_repository(&repository)?;
            repo.require("dataset", &d)?;
            let pools = match method {
                Sampler::Adaptive => adaptive_sampling(&dataset, &repo.body, &cfg.sampling)?,
                Sampler::Random => random_sampling(&dataset, &repo.body, cfg.sampling.kappa, cfg.sampling.seed)?,
            };
            println!(
                "{} samples drawn; positives per model {:?}; cv {:.4}",
                pools.rows.len(),
                pools.positive_counts(),
                pools.positive_cv()
            );
            create_parent(&out)?;
            let p = store::write_stamped(&out, &Stamped::new(pools, &[("dataset", &d), ("repository", &r)]))?;
            println!("wrote {} ({p})", out.display());
        }
        Command::TrainDecision {
            cfg,
            dataset,
            encoder,
            repository,
            pools,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let (dataset, d) = store::read_dataset_file(&dataset)?;
            let (encoder, e) = store::read_encoder(&encoder)?;
            let (repo, r) = store::read_repository(&repository)?;
            let (pools, p) = store::read_pools(&pools)?;
            encoder.require("dataset", &d)?;
            repo.require("encoder", &e)?;
            pools.require("dataset", &d)?;
            pools.require("repository", &r)?;
            let rows = build_allocation_labels(&pools.body)?;
            let model = train_decision(Arc::new(encoder.body), &dataset, &rows, &cfg.decision)?;
            create_parent(&out)?;
            let q = store::write_stamped(
                &out,
                &Stamped::new(model.to_artifact()?, &[("dataset", &d), ("encoder", &e), ("pools", &p)]),
            )?;
            println!(
                "decision head over {} models trained on {} rows; wrote {} ({q})",
                model.num_models(),
                rows.len(),
                out.display()
            );
        }
        Command::Simulate {
            cfg,
            dataset,
            baseline,
            encoder,
            repository,
            decision,
            capacity,
            capacity_sweep,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let (dataset, d) = store::read_dataset_file(&dataset)?;
            let t = &cfg.trace;
            let trace = synthesize_trace(&dataset, t.num_source_clips, t.segment_len, t.num_segments, t.seed)?;
            std::fs::create_dir_all(&out)?;
            let trace_hash = store::write_stamped(
                &out.join(store::TRACE),
                &Stamped::new(store::trace_record(&trace, t), &[("dataset", &d)]),
            )?;
            let mut inputs = vec![("dataset".to_string(), d.clone()), ("trace".to_string(), trace_hash)];

            let adaptive;
            let trained;
            let contender = if baseline == Method::Anole {
                let (enc, e) = store::read_encoder(encoder.as_deref().expect("checked in main"))?;
                let (repo, r) = store::read_repository(repository.as_deref().expect("checked in main"))?;
                let (dec, q) = store::read_decision(decision.as_deref().expect("checked in main"))?;
                enc.require("dataset", &d)?;
                repo.require("dataset", &d)?;
                repo.require("encoder", &e)?;
                dec.require("dataset", &d)?;
                dec.require("encoder", &e)?;
                let model = DecisionModel::from_artifact(dec.body, Arc::new(enc.body))?;
                if model.num_models() != repo.body.len() {
                    return Err(Error::Dimension {
                        expected: repo.body.len(),
                        got: model.num_models(),
                    });
                }
                inputs.push(("decision".into(), q));
                inputs.push(("repository".into(), r));
                adaptive = (model, repo.body);
                Contender::Adaptive {
                    decision: &adaptive.0,
                    repository: &adaptive.1,
                }
            } else {
                trained = train_baseline(&dataset, &cfg.baselines, baseline)?;
                Contender::Baseline(&trained)
            };
            let inputs: Vec<(&str, &str)> = inputs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();

            let nc = dataset.schema.num_classes;
            let capacity = capacity.or(cfg.cache.capacity).unwrap_or(contender.num_models());
            let metrics = contender.run(&trace.samples, capacity, nc, t.window)?;
            let mut csv = Vec::new();
            metrics.write_csv(&mut csv)?;
            std::fs::write(out.join(store::metrics_name(baseline)), csv)?;
            let report = SimulationReport {
                method: baseline,
                seed: cfg.generator.seed,
                capacity,
                num_models: contender.num_models(),
                summary: summarize(&metrics),
            };
            println!(
                "{baseline}: mean window F1 {:.4}, miss rate {:.4}, {} switches, top-5 coverage {:.3}",
                report.summary.mean_window_f1,
                report.summary.miss_rate,
                report.summary.switches,
                report.summary.top5_coverage
            );
            store::write_stamped(&out.join(store::summary_name(baseline)), &Stamped::new(report, &inputs))?;

            if let Some((lo, hi)) = capacity_sweep {
                let sweep = contender.sweep(&trace.samples, lo, hi, nc, t.window)?;
                let sweep = store::sweep_report(baseline, cfg.generator.seed, &sweep);
                for row in &sweep.rows {
                    println!(
                        "  capacity {:>2}: miss rate {:.4}, mean window F1 {:.4}",
                        row.capacity, row.miss_rate, row.mean_window_f1
                    );
                }
                let mut csv = Vec::new();
                sweep.write_csv(&mut csv)?;
                std::fs::write(out.join(store::sweep_csv_name(baseline)), csv)?;
                store::write_stamped(&out.join(store::sweep_name(baseline)), &Stamped::new(sweep, &inputs))?;
            }
        }
        Command::Report { inputs, out } => {
            let agg = report::aggregate(&inputs)?;
            print!("{}", agg.table());
            if let Some(out) = out {
                create_parent(&out)?;
                scenemux::artifact::write_json(&out, &agg)?;
            }
            if !agg.sweeps.iter().all(|s| s.miss_rate_non_increasing) {
                return Err(Error::InvalidConfig(
                    "a capacity sweep has an increasing miss rate".into(),
                ));
            }
        }
        Command::Config { cfg } => {
            let resolved = cfg.resolve()?;
            print!("{}", render_config(&resolved, resolved.generator.seed)?);
        }
        Command::Run { cfg: args, seeds, out } => {
            let base = args.resolve()?;
            let seeds: Vec<u64> = match seeds {
                Some((lo, hi)) => (lo as u64..=hi as u64).collect(),
                None => vec![base.generator.seed],
            };
            let mut dirs = Vec::new();
            for seed in seeds {
                let cfg = ConfigArgs {
                    seed: Some(seed),
                    ..args.clone()
                }
                .resolve()?;
                let run = run_pipeline(&cfg)?;
                let dir = out.join(format!("seed-{seed}"));
                store::write_run(&run, &dir)?;
                println!(
                    "seed {seed}: {}",
                    run.methods
                        .iter()
                        .map(|(m, x)| format!("{m} {:.4}", x.mean_window_f1()))
                        .collect::<Vec<_>>()
                        .join(", ")
                );
                dirs.push(dir);
            }
            let agg = report::aggregate(&dirs)?;
            print!("{}", agg.table());
            scenemux::artifact::write_json(&out.join("report.json"), &agg)?;
        }
    }
    Ok(())
}
