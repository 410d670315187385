//! Experiment orchestration behind the CLI subcommands. Each command
//! resolves a scenario, runs its model(s), writes the report files into the
//! output directory and returns the structured results.

use crate::report::{
    write_clusters_csv, write_comparison_csv, write_game_values_csv, write_payoffs_csv,
    ClusterCensus, ClusterRow, ComparisonRow, DerFlags, PayoffRow, StageTimings,
};
use crate::stats::{max_abs_deviation, mean_abs, rms_deviation, spearman};
use anyhow::{bail, Context, Result};
use prosumer_coop::dispatch::CostEvaluator;
use prosumer_coop::game::{
    build_game_capped, nucleolus_capped, shapley, stability_report, CoalitionGame,
    StabilityReport, DEFAULT_PLAYER_CAP,
};
use prosumer_coop::model::{Coalition, Scenario};
use prosumer_coop::pipeline::{run_pipeline_with, DeclusterMode, PipelineOptions, PipelineResult};
use prosumer_coop::scenario::{
    generate_scenario, load_scenario_csv, scenario_config_of, write_profiles_csv, GeneratorConfig,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Where the scenario comes from.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    Files { profiles: PathBuf, config: PathBuf },
    Generated(GeneratorConfig),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Files { profiles, config } => {
                load_scenario_csv(profiles, config).context("stage scenario-load")
            }
            ScenarioSource::Generated(cfg) => Ok(generate_scenario(cfg)
                .context("stage scenario-generate")?
                .scenario),
        }
    }
}

/// Flags shared by the model-running commands.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub k: usize,
    pub kmeans_runs: usize,
    pub eurelax: f64,
    pub seed: u64,
    pub mode: DeclusterMode,
    pub workers: Option<usize>,
    pub cap: usize,
    /// Raises the cap to whatever the scenario needs.
    pub acknowledge_long_runtime: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            k: 8,
            kmeans_runs: 1000,
            eurelax: 0.01,
            seed: 0,
            mode: DeclusterMode::EfficiencyPreserving,
            workers: None,
            cap: DEFAULT_PLAYER_CAP,
            acknowledge_long_runtime: false,
        }
    }
}

impl RunSettings {
    fn effective_cap(&self, needed: usize) -> usize {
        if self.acknowledge_long_runtime {
            self.cap.max(needed)
        } else {
            self.cap
        }
    }

    /// Runs `f` inside a worker pool of the requested size; results must
    /// not depend on the worker count (and tests assert they do not).
    pub fn with_workers<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            None => Ok(f()),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .context("building worker pool")?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Full-model run: exact game, nucleolus, Shapley comparator, stability.
#[derive(Debug)]
pub struct FullModelReport {
    pub n: usize,
    pub game: CoalitionGame,
    pub nucleolus: Vec<f64>,
    pub shapley: Vec<f64>,
    pub stability: StabilityReport,
    pub dispatch_lp_solves: usize,
    pub nucleolus_lp_solves: usize,
    pub nucleolus_rounds: usize,
    pub timings: StageTimings,
}

impl FullModelReport {
    pub fn total_lp_solves(&self) -> usize {
        self.dispatch_lp_solves + self.nucleolus_lp_solves
    }
}

pub fn run_full_model(scenario: &Scenario, settings: &RunSettings) -> Result<FullModelReport> {
    let n = scenario.n_prosumers();
    let cap = settings.effective_cap(n);
    if n > cap {
        bail!(
            "stage full-game: {n} prosumers exceed the cap of {cap}; \
             use the `clustered` subcommand or pass --acknowledge-long-runtime"
        );
    }
    let mut timings = StageTimings::default();

    let evaluator = CostEvaluator::new(scenario);
    let start = Instant::now();
    let game = settings
        .with_workers(|| build_game_capped(&evaluator, cap))?
        .context("stage full-game")?;
    timings.record("game-build", start.elapsed().as_secs_f64() * 1e3);

    let start = Instant::now();
    let nucleolus_outcome = nucleolus_capped(&game, cap).context("stage full-nucleolus")?;
    timings.record("nucleolus", start.elapsed().as_secs_f64() * 1e3);

    let start = Instant::now();
    let shapley_alloc = shapley(&game);
    timings.record("shapley", start.elapsed().as_secs_f64() * 1e3);

    let stability = stability_report(&nucleolus_outcome.allocation.payoffs, &game);

    Ok(FullModelReport {
        n,
        game,
        nucleolus: nucleolus_outcome.allocation.payoffs,
        shapley: shapley_alloc.payoffs,
        stability,
        dispatch_lp_solves: evaluator.lp_solves(),
        nucleolus_lp_solves: nucleolus_outcome.lp_solves,
        nucleolus_rounds: nucleolus_outcome.rounds,
        timings,
    })
}

/// Clustered-pipeline run plus census.
#[derive(Debug)]
pub struct ClusteredReport {
    pub n: usize,
    pub result: PipelineResult,
    pub der: DerFlags,
    pub census: ClusterCensus,
    pub timings: StageTimings,
}

pub fn run_clustered_model(scenario: &Scenario, settings: &RunSettings) -> Result<ClusteredReport> {
    let n = scenario.n_prosumers();
    let cap = settings.effective_cap(settings.k);
    if settings.k > cap {
        bail!(
            "stage clustering: k={} exceeds the cap of {cap}; \
             pass --acknowledge-long-runtime to override",
            settings.k
        );
    }
    if settings.k > n {
        bail!("stage clustering: k={} exceeds the {n} prosumers", settings.k);
    }

    let mut timings = StageTimings::default();
    let opts = PipelineOptions {
        k: settings.k,
        kmeans_runs: settings.kmeans_runs,
        eurelax: settings.eurelax,
        seed: settings.seed,
        mode: settings.mode,
        cap,
    };

    let evaluator = CostEvaluator::new(scenario);
    let start = Instant::now();
    let result = settings
        .with_workers(|| run_pipeline_with(scenario, &opts, &evaluator))?
        .context("stage pipeline")?;
    timings.record("pipeline", start.elapsed().as_secs_f64() * 1e3);

    let der = DerFlags::infer(scenario);
    let census = ClusterCensus::new(&result.selection.chosen.assignment, settings.k, &der);

    Ok(ClusteredReport {
        n,
        result,
        der,
        census,
        timings,
    })
}

/// Side-by-side run of both models on the identical scenario.
#[derive(Debug)]
pub struct ComparisonReport {
    pub full: FullModelReport,
    pub clustered: ClusteredReport,
    pub rows: Vec<ComparisonRow>,
    pub rms_deviation: f64,
    pub max_abs_deviation: f64,
    pub mean_abs_payoff: f64,
    pub spearman: f64,
    pub full_lp_solves: usize,
    pub clustered_lp_solves: usize,
}

pub fn run_comparison(scenario: &Scenario, settings: &RunSettings) -> Result<ComparisonReport> {
    // The two models use independent evaluators: the full side never sees
    // clustering outputs or shares cached costs with it.
    let full = run_full_model(scenario, settings)?;
    let clustered = run_clustered_model(scenario, settings)?;

    let rows: Vec<ComparisonRow> = scenario
        .prosumers
        .iter()
        .enumerate()
        .map(|(i, p)| ComparisonRow {
            id: p.id.clone(),
            full_nucleolus: full.nucleolus[i],
            clustered_payoff: clustered.result.prosumer_payoffs()[i],
        })
        .collect();

    let full_x: Vec<f64> = rows.iter().map(|r| r.full_nucleolus).collect();
    let cl_x: Vec<f64> = rows.iter().map(|r| r.clustered_payoff).collect();

    Ok(ComparisonReport {
        rms_deviation: rms_deviation(&full_x, &cl_x),
        max_abs_deviation: max_abs_deviation(&full_x, &cl_x),
        mean_abs_payoff: mean_abs(&full_x),
        spearman: spearman(&full_x, &cl_x),
        full_lp_solves: full.total_lp_solves(),
        clustered_lp_solves: clustered.result.total_lp_solves(),
        full,
        clustered,
        rows,
    })
}

fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))
}

/// `full` subcommand: writes payoffs.csv, game_values.csv and report.txt.
pub fn cmd_full(source: &ScenarioSource, settings: &RunSettings, out_dir: &Path) -> Result<FullModelReport> {
    ensure_out_dir(out_dir)?;
    let scenario = source.load()?;
    let report = run_full_model(&scenario, settings)?;

    let rows: Vec<PayoffRow> = scenario
        .prosumers
        .iter()
        .enumerate()
        .map(|(i, p)| PayoffRow {
            id: p.id.clone(),
            payoff: report.nucleolus[i],
            shapley: Some(report.shapley[i]),
        })
        .collect();
    write_payoffs_csv(&out_dir.join("payoffs.csv"), &rows)?;
    write_game_values_csv(&out_dir.join("game_values.csv"), &report.game.values)?;

    let grand = report.game.value(Coalition::grand(report.n));
    let mut text = String::new();
    text.push_str("== full model ==\n");
    text.push_str(&format!("prosumers            {}\n", report.n));
    text.push_str(&format!("grand coalition value {:.6}\n", grand));
    text.push_str(&format!(
        "nucleolus sum        {:.6}\n",
        report.nucleolus.iter().sum::<f64>()
    ));
    text.push_str(&format!(
        "max excess           {:.3e} at {}\n",
        report.stability.max_excess, report.stability.argmax
    ));
    text.push_str(&format!(
        "dispatch LP solves   {}\n",
        report.dispatch_lp_solves
    ));
    text.push_str(&format!(
        "nucleolus LP solves  {} over {} rounds\n",
        report.nucleolus_lp_solves, report.nucleolus_rounds
    ));
    text.push_str(&render_settings(settings));
    text.push_str("stage timings:\n");
    text.push_str(&report.timings.render());
    std::fs::write(out_dir.join("report.txt"), text)?;
    Ok(report)
}

/// `clustered` subcommand: payoffs.csv, game_values.csv (cluster game),
/// clusters.csv and report.txt.
pub fn cmd_clustered(
    source: &ScenarioSource,
    settings: &RunSettings,
    out_dir: &Path,
) -> Result<ClusteredReport> {
    ensure_out_dir(out_dir)?;
    let scenario = source.load()?;
    let report = run_clustered_model(&scenario, settings)?;

    let rows: Vec<PayoffRow> = scenario
        .prosumers
        .iter()
        .enumerate()
        .map(|(i, p)| PayoffRow {
            id: p.id.clone(),
            payoff: report.result.prosumer_payoffs()[i],
            shapley: None,
        })
        .collect();
    write_payoffs_csv(&out_dir.join("payoffs.csv"), &rows)?;
    write_game_values_csv(
        &out_dir.join("game_values.csv"),
        &report.result.cluster_game.values,
    )?;

    let cluster_rows: Vec<ClusterRow> = scenario
        .prosumers
        .iter()
        .enumerate()
        .map(|(i, p)| ClusterRow {
            id: p.id.clone(),
            cluster: report.result.selection.chosen.assignment[i],
            pv: report.der.pv[i],
            es: report.der.es[i],
        })
        .collect();
    write_clusters_csv(&out_dir.join("clusters.csv"), &cluster_rows)?;

    std::fs::write(out_dir.join("report.txt"), render_clustered_report(&report, settings))?;
    Ok(report)
}

fn render_clustered_report(report: &ClusteredReport, settings: &RunSettings) -> String {
    let result = &report.result;
    let mut text = String::new();
    text.push_str("== clustered pipeline ==\n");
    text.push_str(&format!("prosumers            {}\n", report.n));
    text.push_str(&format!("clusters             {}\n", result.selection.chosen.k));
    text.push_str(&format!("grand dispatch cost  {:.6}\n", result.grand_cost));
    text.push_str(&format!(
        "kmeans: min D {:.6}, chosen run {} (D {:.6}), band {} of {} runs\n",
        result.selection.min_distance,
        result.selection.chosen_run,
        result.selection.chosen.total_distance,
        result.selection.band_count,
        result.selection.runs.len(),
    ));
    text.push_str(&format!("cluster sizes        {:?}\n", result.selection.chosen.sizes));
    text.push_str(&format!(
        "cluster values v(cl) {:?}\n",
        result.cluster_singleton_values
    ));
    text.push_str(&format!("cluster nucleolus    {:?}\n", result.cluster_payoffs));
    text.push_str(&format!("decluster mode       {}\n", result.mode.name()));
    text.push_str(&format!("payoff total         {:.6}\n", result.decluster.total));
    if !result.decluster.equal_split_clusters.is_empty() {
        text.push_str(&format!(
            "equal-split fallback in clusters {:?}\n",
            result.decluster.equal_split_clusters
        ));
    }
    text.push_str(&format!(
        "dispatch requests    {} (grand 1 + N {} + 2^k-1 {})\n",
        result.dispatch_requests,
        report.n,
        (1usize << result.selection.chosen.k) - 1
    ));
    text.push_str(&format!("dispatch LP solves   {}\n", result.dispatch_lp_solves));
    text.push_str(&format!(
        "nucleolus LP solves  {} over {} rounds\n",
        result.nucleolus_lp_solves, result.nucleolus_rounds
    ));
    text.push_str(&render_settings(settings));
    text.push_str("DER census:\n");
    text.push_str(&report.census.render());
    text.push_str("stage timings:\n");
    text.push_str(&report.timings.render());
    text
}

/// `compare` subcommand: everything both models emit plus comparison.csv
/// and deviation statistics.
pub fn cmd_compare(
    source: &ScenarioSource,
    settings: &RunSettings,
    out_dir: &Path,
) -> Result<ComparisonReport> {
    ensure_out_dir(out_dir)?;
    let scenario = source.load()?;
    let report = run_comparison(&scenario, settings)?;

    write_comparison_csv(&out_dir.join("comparison.csv"), &report.rows)?;
    let payoff_rows: Vec<PayoffRow> = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| PayoffRow {
            id: r.id.clone(),
            payoff: r.full_nucleolus,
            shapley: Some(report.full.shapley[i]),
        })
        .collect();
    write_payoffs_csv(&out_dir.join("payoffs.csv"), &payoff_rows)?;
    write_game_values_csv(&out_dir.join("game_values.csv"), &report.full.game.values)?;
    let cluster_rows: Vec<ClusterRow> = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| ClusterRow {
            id: r.id.clone(),
            cluster: report.clustered.result.selection.chosen.assignment[i],
            pv: report.clustered.der.pv[i],
            es: report.clustered.der.es[i],
        })
        .collect();
    write_clusters_csv(&out_dir.join("clusters.csv"), &cluster_rows)?;

    let mut text = String::new();
    text.push_str("== full vs clustered comparison ==\n");
    text.push_str(&format!("prosumers            {}\n", report.full.n));
    text.push_str(&format!("clusters             {}\n", settings.k));
    text.push_str(&format!("rms deviation        {:.6}\n", report.rms_deviation));
    text.push_str(&format!("max abs deviation    {:.6}\n", report.max_abs_deviation));
    text.push_str(&format!("mean |payoff|        {:.6}\n", report.mean_abs_payoff));
    text.push_str(&format!(
        "rms / mean |payoff|  {:.4}\n",
        report.rms_deviation / report.mean_abs_payoff.max(f64::MIN_POSITIVE)
    ));
    text.push_str(&format!("spearman rank corr   {:.4}\n", report.spearman));
    text.push_str(&format!("full LP solves       {}\n", report.full_lp_solves));
    text.push_str(&format!("clustered LP solves  {}\n", report.clustered_lp_solves));
    text.push_str(&render_settings(settings));
    text.push_str("DER census (clustered side):\n");
    text.push_str(&report.clustered.census.render());
    std::fs::write(out_dir.join("report.txt"), text)?;
    Ok(report)
}

/// `generate` subcommand: writes profiles.csv and config.json consumable by
/// the other subcommands.
pub fn cmd_generate(cfg: &GeneratorConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    ensure_out_dir(out_dir)?;
    let generated = generate_scenario(cfg).context("stage scenario-generate")?;
    let profiles_path = out_dir.join("profiles.csv");
    let config_path = out_dir.join("config.json");
    std::fs::write(&profiles_path, write_profiles_csv(&generated.scenario))?;
    let config = scenario_config_of(&generated.scenario);
    std::fs::write(&config_path, serde_json::to_string_pretty(&config)?)?;

    let census = generated.der_census();
    let mut text = String::new();
    text.push_str("== generated scenario ==\n");
    text.push_str(&format!("prosumers            {}\n", cfg.n_prosumers));
    text.push_str(&format!("rng seed             {}\n", cfg.rng_seed));
    text.push_str(&format!(
        "DER census           neither {} / pv-only {} / es-only {} / both {}\n",
        census[0], census[1], census[2], census[3]
    ));
    text.push_str(&format!("profiles             {}\n", profiles_path.display()));
    text.push_str(&format!("config               {}\n", config_path.display()));
    std::fs::write(out_dir.join("report.txt"), text)?;
    Ok((profiles_path, config_path))
}

fn render_settings(settings: &RunSettings) -> String {
    format!(
        "settings: k={} runs={} eurelax={} seed={} mode={} workers={}\n",
        settings.k,
        settings.kmeans_runs,
        settings.eurelax,
        settings.seed,
        settings.mode.name(),
        settings
            .workers
            .map_or("auto".to_string(), |w| w.to_string()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{read_clusters_csv, read_comparison_csv, read_game_values_csv, read_payoffs_csv};
    use tempfile::tempdir;

    fn generated_source(n: usize, seed: u64) -> ScenarioSource {
        ScenarioSource::Generated(GeneratorConfig {
            n_prosumers: n,
            rng_seed: seed,
            ..Default::default()
        })
    }

    #[test]
    fn full_emits_consistent_files() {
        let dir = tempdir().unwrap();
        let settings = RunSettings {
            kmeans_runs: 20,
            ..Default::default()
        };
        let report = cmd_full(&generated_source(4, 8), &settings, dir.path()).unwrap();
        assert_eq!(report.dispatch_lp_solves, 15);

        let payoffs = read_payoffs_csv(&dir.path().join("payoffs.csv")).unwrap();
        assert_eq!(payoffs.len(), 4);
        let total: f64 = payoffs.iter().map(|r| r.payoff).sum();
        let grand = report.game.value(Coalition::grand(4));
        assert!((total - grand).abs() < 1e-6);

        let values = read_game_values_csv(&dir.path().join("game_values.csv")).unwrap();
        assert_eq!(values, report.game.values);
        assert!(dir.path().join("report.txt").exists());
    }

    #[test]
    fn symmetric_prosumers_get_equal_payoffs() {
        use prosumer_coop::model::{validate_scenario, Prosumer, Scenario, StorageSpec, TariffSchedule};
        let battery = StorageSpec {
            capacity_kwh: 2.0,
            charge_limit_kwh: 1.0,
            discharge_limit_kwh: -1.0,
            eff_in: 0.95,
            eff_out: 0.95,
            soc0: 0.5,
            soc_min: 0.1,
            soc_max: 0.9,
        };
        let scenario = validate_scenario(Scenario {
            prosumers: vec![
                Prosumer::new("twin-a", vec![1.0, 0.2, 0.8, 0.1]).with_storage(battery.clone()),
                Prosumer::new("twin-b", vec![1.0, 0.2, 0.8, 0.1]).with_storage(battery),
            ],
            tariff: TariffSchedule {
                import_price: vec![0.072, 0.1681, 0.1681, 0.1681],
                export_price: vec![0.0485; 4],
            },
            horizon: 4,
            interval_hours: 0.5,
        })
        .unwrap();
        let report = run_full_model(&scenario, &RunSettings::default()).unwrap();
        assert!((report.nucleolus[0] - report.nucleolus[1]).abs() < 1e-9);
        assert!((report.shapley[0] - report.shapley[1]).abs() < 1e-9);
    }

    #[test]
    fn full_refuses_above_cap_with_guidance() {
        let settings = RunSettings {
            cap: 3,
            ..Default::default()
        };
        let dir = tempdir().unwrap();
        let err = cmd_full(&generated_source(4, 8), &settings, dir.path()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("clustered"), "got: {msg}");

        let permissive = RunSettings {
            cap: 3,
            acknowledge_long_runtime: true,
            kmeans_runs: 10,
            ..Default::default()
        };
        assert!(cmd_full(&generated_source(4, 8), &permissive, dir.path()).is_ok());
    }

    #[test]
    fn clustered_emits_census_and_clusters() {
        let dir = tempdir().unwrap();
        let settings = RunSettings {
            k: 3,
            kmeans_runs: 40,
            seed: 5,
            ..Default::default()
        };
        let report = cmd_clustered(&generated_source(10, 77), &settings, dir.path()).unwrap();
        let rows = read_clusters_csv(&dir.path().join("clusters.csv")).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(report.census.prosumers.iter().sum::<usize>(), 10);
        // Census consistent with rows.
        for j in 0..3 {
            let count = rows.iter().filter(|r| r.cluster == j).count();
            assert_eq!(count, report.census.prosumers[j]);
        }
        let payoffs = read_payoffs_csv(&dir.path().join("payoffs.csv")).unwrap();
        assert!((payoffs.iter().map(|r| r.payoff).sum::<f64>()
            - report.result.decluster.total)
            .abs()
            < 1e-9);
    }

    #[test]
    fn compare_identity_clustering_gives_zero_deviation() {
        let dir = tempdir().unwrap();
        let settings = RunSettings {
            k: 5,
            kmeans_runs: 30,
            seed: 3,
            ..Default::default()
        };
        let report = cmd_compare(&generated_source(5, 21), &settings, dir.path()).unwrap();
        assert!(report.max_abs_deviation < 1e-6, "{}", report.max_abs_deviation);
        assert!(report.rms_deviation < 1e-6);
        let rows = read_comparison_csv(&dir.path().join("comparison.csv")).unwrap();
        assert_eq!(rows.len(), 5);
        // The clustered side does strictly fewer LP solves only when k < N;
        // at k = N the counts tie on dispatch but the full side also pays
        // nucleolus rounds over 2^N - 2 constraints.
        assert!(report.clustered_lp_solves <= report.full_lp_solves);
    }

    #[test]
    fn compare_k_smaller_than_n_uses_fewer_lps() {
        let dir = tempdir().unwrap();
        let settings = RunSettings {
            k: 3,
            kmeans_runs: 30,
            seed: 3,
            ..Default::default()
        };
        let report = cmd_compare(&generated_source(7, 4), &settings, dir.path()).unwrap();
        assert!(report.clustered_lp_solves < report.full_lp_solves);
        assert_eq!(report.full.dispatch_lp_solves, (1 << 7) - 1);
        assert_eq!(report.clustered.result.dispatch_requests, 1 + 7 + ((1 << 3) - 1));
    }

    #[test]
    fn generate_then_load_roundtrip() {
        let dir = tempdir().unwrap();
        let cfg = GeneratorConfig {
            n_prosumers: 6,
            rng_seed: 2,
            ..Default::default()
        };
        let (profiles, config) = cmd_generate(&cfg, dir.path()).unwrap();
        let source = ScenarioSource::Files { profiles, config };
        let scenario = source.load().unwrap();
        assert_eq!(scenario.n_prosumers(), 6);
        let direct = generate_scenario(&cfg).unwrap().scenario;
        for (a, b) in scenario.prosumers.iter().zip(&direct.prosumers) {
            assert_eq!(a.id, b.id);
            for (x, y) in a.net_load.iter().zip(&b.net_load) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_worker_matches_default_parallelism() {
        let source = generated_source(5, 13);
        let scenario = source.load().unwrap();
        let mut settings = RunSettings {
            k: 3,
            kmeans_runs: 25,
            seed: 9,
            ..Default::default()
        };
        let default_run = run_clustered_model(&scenario, &settings).unwrap();
        settings.workers = Some(1);
        let single = run_clustered_model(&scenario, &settings).unwrap();
        assert_eq!(
            default_run.result.prosumer_payoffs(),
            single.result.prosumer_payoffs()
        );
        assert_eq!(
            default_run.result.selection.chosen.assignment,
            single.result.selection.chosen.assignment
        );
    }
}
