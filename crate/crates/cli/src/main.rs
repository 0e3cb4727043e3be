use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use exactpf::estimators::{draw_mu, transition_density_estimate, EstimatorKind};
use exactpf::experiments::config::DatasetSource;
use exactpf::experiments::{
    bench_estimators, bench_filters, clt_rate_check, render_records, BenchmarkReport, OutputFormat, RunConfig,
};
use exactpf::filter::{run_filter, FilterKind};
use exactpf::rng::SeedTree;
use exactpf::stats::mean_var;

#[derive(Parser)]
#[command(name = "exactpf", version, about = "Exact and random-weight particle filters for diffusions")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent (except for `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Rwpf,
    Eppf,
    Espf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured data set and write it with its truth file.
    Simulate,
    /// Repeated draws of one estimator for a single transition.
    Estimate {
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        xt: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Run one filter on the configured data set and emit its per-step trace.
    Filter {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        particles: Option<usize>,
        /// Data set file (overrides the configured source).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Variance, E[κ] and CV tables for the sine estimators.
    BenchEstimators {
        #[arg(long)]
        draws: Option<Vec<usize>>,
    },
    /// Filter efficiency and ESS comparison on the configured data set.
    BenchFilters {
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Error-rate regression of RWPF filtering means on the particle count.
    CltCheck {
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dataset(cfg: &RunConfig, data: Option<PathBuf>, seed: u64) -> Result<exactpf::experiments::Dataset> {
    let source = match data {
        Some(path) => DatasetSource::File { path },
        None => cfg.dataset.clone(),
    };
    Ok(source.load(seed)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let seed = cfg.seed()?;
    let format: OutputFormat = cli.format.into();
    let out = cli.out.clone().or_else(|| cfg.output.clone());

    match cli.command {
        Command::Simulate => {
            let Some(path) = out else {
                bail!("simulate needs --out (the truth file is written next to it)");
            };
            if matches!(cfg.dataset, DatasetSource::File { .. }) {
                bail!("simulate needs a simulated data source, not a file");
            }
            let d = cfg.dataset.load(seed)?;
            d.write(&path)?;
            eprintln!("wrote {} observations to {}", d.observations.len(), path.display());
        }
        Command::Estimate { draws, x0, xt, t } => {
            let e = &mut cfg.estimate;
            e.draws = draws.unwrap_or(e.draws);
            e.x0 = x0.unwrap_or(e.x0);
            e.xt = xt.unwrap_or(e.xt);
            e.t = t.unwrap_or(e.t);
            if e.draws < 2 {
                bail!("need at least two draws");
            }
            e.estimator.validate()?;
            let model = cfg.model.build()?;
            let seeds = SeedTree::new(seed);
            let mut values = Vec::with_capacity(e.draws);
            let mut kappa = 0u64;
            let mut negative = 0usize;
            for i in 0..e.draws {
                let mut rng = seeds.child(i as u64).rng();
                let est = if e.include_nu {
                    draw_mu(model.as_ref(), true, e.x0, e.xt, e.t, &e.estimator, &mut rng)?
                } else {
                    transition_density_estimate(model.as_ref(), e.x0, e.xt, e.t, &e.estimator, &mut rng)?
                };
                values.push(est.value);
                kappa += est.kappa;
                negative += est.negative as usize;
            }
            let (mean, var) = mean_var(&values);
            let n = values.len() as u64;
            let label = format!("{}@{},{},{}", e.estimator.kind.label(), e.x0, e.xt, e.t);
            let mut report = BenchmarkReport::new(seed);
            report.push(&label, "mean", mean, (var / n as f64).sqrt(), n);
            report.push(&label, "variance", var, 0.0, n);
            report.push(&label, "mean_kappa", kappa as f64 / n as f64, 0.0, n);
            report.push(&label, "negative_count", negative as f64, 0.0, n);
            report.metadata.kappa_total = kappa;
            if !matches!(e.estimator.kind, EstimatorKind::Pe | EstimatorKind::Gpe1 | EstimatorKind::Gpe2) {
                eprintln!("note: {} is not an unbiased estimator", e.estimator.kind.label());
            }
            emit(&report.render(format)?, out.as_ref())?;
        }
        Command::Filter { kind, particles, data } => {
            if let Some(n) = particles {
                cfg.filter.n_particles = n;
            }
            if let Some(k) = kind {
                cfg.filter.kind = match k {
                    Kind::Rwpf => FilterKind::Rwpf,
                    Kind::Eppf => FilterKind::Eppf,
                    Kind::Espf => FilterKind::Espf,
                };
            }
            let d = dataset(&cfg, data, seed)?;
            let fcfg = cfg.filter.filter_config()?;
            let model = d.model.build()?;
            let run = run_filter(
                cfg.filter.kind,
                model.as_ref(),
                &d.prior,
                d.start_time,
                &d.observations,
                &fcfg,
                None,
                SeedTree::new(seed),
                |_, _| {},
            )?;
            if run.total_clamps > 0 {
                eprintln!("warning: {} negative weights were clamped to zero", run.total_clamps);
            }
            emit(&render_records(&run.records, format)?, out.as_ref())?;
        }
        Command::BenchEstimators { draws } => {
            if let Some(d) = draws {
                cfg.bench_estimators.draws = d;
            }
            let report = bench_estimators(&cfg.bench_estimators, seed)?;
            emit(&report.render(format)?, out.as_ref())?;
        }
        Command::BenchFilters { replicates, data } => {
            if let Some(r) = replicates {
                cfg.bench_filters.replicates = r;
            }
            let d = dataset(&cfg, data, seed)?;
            let report = bench_filters(&cfg.bench_filters, &d, seed)?;
            emit(&report.render(format)?, out.as_ref())?;
        }
        Command::CltCheck { replicates, data } => {
            if let Some(r) = replicates {
                cfg.clt.replicates = r;
            }
            let d = dataset(&cfg, data, seed)?;
            let result = clt_rate_check(&cfg.clt, &d, seed)?;
            let report = result.to_report(seed, cfg.clt.replicates);
            emit(&report.render(format)?, out.as_ref())?;
        }
    }
    Ok(())
}
