use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use coop_bench::run::{
    cmd_clustered, cmd_compare, cmd_full, cmd_generate, RunSettings, ScenarioSource,
};
use prosumer_coop::game::DEFAULT_PLAYER_CAP;
use prosumer_coop::model::Coalition;
use prosumer_coop::pipeline::DeclusterMode;
use prosumer_coop::scenario::GeneratorConfig;
use std::path::PathBuf;

/// Cooperative battery-dispatch games for prosumer coalitions: exact
/// nucleolus payoffs, a cluster-then-decluster approximation for large
/// groups, and side-by-side comparison reports.
#[derive(Parser)]
#[command(name = "coopbench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SourceArgs {
    /// Profiles CSV: header `id,t1,...,tR`, one row per prosumer (kWh).
    #[arg(long)]
    profiles: PathBuf,
    /// Scenario config JSON (tariff, storage defaults and overrides).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct CommonArgs {
    /// Directory for payoffs.csv, game_values.csv, clusters.csv,
    /// comparison.csv and report.txt.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Seed for all randomized stages (K-means restarts).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to available parallelism. Results are
    /// identical for any worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Exact-enumeration cap on players.
    #[arg(long, default_value_t = DEFAULT_PLAYER_CAP)]
    cap: usize,
    /// Raise the cap to whatever the run needs, accepting exponential
    /// runtime.
    #[arg(long)]
    acknowledge_long_runtime: bool,
}

#[derive(Args)]
struct ClusterArgs {
    /// Number of clustered players.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Independent K-means restarts.
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Relaxation band above the minimum total Euclidean distance.
    #[arg(long, default_value_t = 0.01)]
    eurelax: f64,
    /// How cluster payoffs are distributed to members.
    #[arg(long, default_value = "efficiency-preserving")]
    mode: DeclusterMode,
}

#[derive(Subcommand)]
enum Command {
    /// Exact model: every coalition's dispatch LP, then the nucleolus.
    Full {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Scalable model: cluster post-dispatch profiles, play the K-player
    /// game, decluster the payoffs.
    Clustered {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Run both models on the same scenario and emit paired payoffs.
    Compare {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Write a synthetic profiles.csv + config.json scenario.
    Generate {
        /// Number of prosumers.
        #[arg(long, default_value_t = 14)]
        n: usize,
        /// Fraction of prosumers with PV.
        #[arg(long, default_value_t = 0.5)]
        pv_fraction: f64,
        /// Fraction of prosumers with a battery.
        #[arg(long, default_value_t = 0.5)]
        es_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn settings(common: &CommonArgs, cluster: Option<&ClusterArgs>) -> RunSettings {
    let mut s = RunSettings {
        seed: common.seed,
        workers: common.workers,
        cap: common.cap,
        acknowledge_long_runtime: common.acknowledge_long_runtime,
        ..Default::default()
    };
    if let Some(c) = cluster {
        s.k = c.k;
        s.kmeans_runs = c.runs;
        s.eurelax = c.eurelax;
        s.mode = c.mode;
    }
    s
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Full { source, common } => {
            let report = cmd_full(
                &ScenarioSource::Files {
                    profiles: source.profiles,
                    config: source.config,
                },
                &settings(&common, None),
                &common.out_dir,
            )?;
            println!(
                "full model: {} prosumers, v(N) = {:.6}, max excess {:.3e}, {} dispatch LPs",
                report.n,
                report.game.value(Coalition::grand(report.n)),
                report.stability.max_excess,
                report.dispatch_lp_solves
            );
            println!("reports in {}", common.out_dir.display());
        }
        Command::Clustered {
            source,
            common,
            cluster,
        } => {
            let report = cmd_clustered(
                &ScenarioSource::Files {
                    profiles: source.profiles,
                    config: source.config,
                },
                &settings(&common, Some(&cluster)),
                &common.out_dir,
            )?;
            println!(
                "clustered pipeline: {} prosumers in {} clusters, payoff total {:.6}, {} dispatch LPs",
                report.n,
                cluster.k,
                report.result.decluster.total,
                report.result.dispatch_lp_solves
            );
            println!("reports in {}", common.out_dir.display());
        }
        Command::Compare {
            source,
            common,
            cluster,
        } => {
            let report = cmd_compare(
                &ScenarioSource::Files {
                    profiles: source.profiles,
                    config: source.config,
                },
                &settings(&common, Some(&cluster)),
                &common.out_dir,
            )?;
            println!(
                "comparison: rms {:.6} ({:.2}% of mean |payoff|), spearman {:.4}, LPs {} vs {}",
                report.rms_deviation,
                100.0 * report.rms_deviation / report.mean_abs_payoff.max(f64::MIN_POSITIVE),
                report.spearman,
                report.full_lp_solves,
                report.clustered_lp_solves
            );
            println!("reports in {}", common.out_dir.display());
        }
        Command::Generate {
            n,
            pv_fraction,
            es_fraction,
            seed,
            out_dir,
        } => {
            if !(0.0..=1.0).contains(&pv_fraction) || !(0.0..=1.0).contains(&es_fraction) {
                bail!("fractions must lie in [0, 1]");
            }
            let cfg = GeneratorConfig {
                n_prosumers: n,
                rng_seed: seed,
                pv_fraction,
                es_fraction,
                ..Default::default()
            };
            let (profiles, config) = cmd_generate(&cfg, &out_dir)?;
            println!("wrote {} and {}", profiles.display(), config.display());
        }
    }
    Ok(())
}
