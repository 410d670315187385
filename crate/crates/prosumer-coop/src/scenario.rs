//! Scenario construction: a seeded synthetic generator reproducing the
//! half-hourly residential setup (Economy 7 import tariff, flat export
//! tariff, 7 kWh batteries, 50/50 independent PV and storage adoption), and
//! a CSV/JSON ingestion path for external profile data.

use crate::model::{
    validate_scenario, Prosumer, Scenario, ScenarioErrors, StorageSpec, TariffSchedule,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Half-hourly intervals over 24 hours.
pub const DEFAULT_HORIZON: usize = 48;
pub const DEFAULT_INTERVAL_HOURS: f64 = 0.5;

/// Economy 7 import rate: cheap midnight-7am, standard 7am-midnight.
pub const ECONOMY7_LOW: f64 = 0.072;
pub const ECONOMY7_HIGH: f64 = 0.1681;
/// Flat export (feed-in) rate.
pub const EXPORT_RATE: f64 = 0.0485;

/// Tariff selection for generated and file-based scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TariffConfig {
    /// Named preset; currently `economy7`.
    Preset(String),
    Explicit {
        import: Vec<f64>,
        export: Vec<f64>,
    },
}

impl TariffConfig {
    pub fn build(&self, horizon: usize) -> Result<TariffSchedule, ScenarioLoadError> {
        match self {
            TariffConfig::Preset(name) if name == "economy7" => {
                Ok(economy7_tariff(horizon))
            }
            TariffConfig::Preset(name) => Err(ScenarioLoadError::UnknownTariffPreset {
                name: name.clone(),
            }),
            TariffConfig::Explicit { import, export } => Ok(TariffSchedule {
                import_price: import.clone(),
                export_price: export.clone(),
            }),
        }
    }
}

/// The Economy 7 schedule over an arbitrary horizon: the first 7 of every
/// 24 hours are cheap.
pub fn economy7_tariff(horizon: usize) -> TariffSchedule {
    let intervals_per_hour = 1.0 / DEFAULT_INTERVAL_HOURS;
    let import_price = (0..horizon)
        .map(|t| {
            let hour = (t as f64 / intervals_per_hour) % 24.0;
            if hour < 7.0 {
                ECONOMY7_LOW
            } else {
                ECONOMY7_HIGH
            }
        })
        .collect();
    TariffSchedule {
        import_price,
        export_price: vec![EXPORT_RATE; horizon],
    }
}

/// The 7 kWh residential battery: 3.5 kW charge / 3.2 kW discharge
/// converted to per-interval energy, 95% efficiencies, half-full start,
/// 20-95% SoC band.
pub fn preset_storage() -> StorageSpec {
    StorageSpec {
        capacity_kwh: 7.0,
        charge_limit_kwh: 3.5 * DEFAULT_INTERVAL_HOURS,
        discharge_limit_kwh: -3.2 * DEFAULT_INTERVAL_HOURS,
        eff_in: 0.95,
        eff_out: 0.95,
        soc0: 0.5,
        soc_min: 0.20,
        soc_max: 0.95,
    }
}

/// Synthetic-scenario knobs. Household magnitudes are calibration defaults,
/// not measured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_prosumers: usize,
    pub rng_seed: u64,
    /// Probability a prosumer owns PV.
    pub pv_fraction: f64,
    /// Probability a prosumer owns a battery; independent of PV.
    pub es_fraction: f64,
    /// Always-on consumption per interval, kWh.
    pub base_load_kwh: f64,
    /// Extra consumption at the morning peak, kWh per interval.
    pub morning_peak_kwh: f64,
    /// Extra consumption at the evening peak, kWh per interval.
    pub evening_peak_kwh: f64,
    /// Relative uniform jitter on consumption.
    pub load_noise: f64,
    /// PV system size in kW at clear-sky peak.
    pub pv_peak_kw: f64,
    /// First interval with PV output.
    pub pv_sunrise: usize,
    /// First interval after sunset.
    pub pv_sunset: usize,
    pub tariff: TariffConfig,
    pub storage: StorageSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_prosumers: 14,
            rng_seed: 1,
            pv_fraction: 0.5,
            es_fraction: 0.5,
            base_load_kwh: 0.15,
            morning_peak_kwh: 0.35,
            evening_peak_kwh: 0.55,
            load_noise: 0.12,
            pv_peak_kw: 4.0,
            pv_sunrise: 10,
            pv_sunset: 42,
            tariff: TariffConfig::Preset("economy7".to_string()),
            storage: preset_storage(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("n_prosumers must be at least 1")]
    NoProsumers,
    #[error("pv_fraction and es_fraction must lie in [0, 1]")]
    BadFraction,
    #[error("tariff config: {0}")]
    Tariff(String),
    #[error("generated scenario failed validation: {0}")]
    Invalid(#[from] ScenarioErrors),
}

/// A generated scenario plus the DER ownership that produced it (net loads
/// alone cannot recover ownership exactly).
#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub scenario: Scenario,
    pub pv_owner: Vec<bool>,
    pub es_owner: Vec<bool>,
}

impl GeneratedScenario {
    /// Counts of (neither, pv only, es only, both).
    pub fn der_census(&self) -> [usize; 4] {
        let mut census = [0usize; 4];
        for i in 0..self.scenario.n_prosumers() {
            census[der_class(self.pv_owner[i], self.es_owner[i])] += 1;
        }
        census
    }
}

/// Index of the (PV, ES) combination: 0 neither, 1 PV only, 2 ES only, 3 both.
pub fn der_class(pv: bool, es: bool) -> usize {
    (pv as usize) | ((es as usize) << 1)
}

/// Deterministically generates a validated scenario from the config.
pub fn generate_scenario(cfg: &GeneratorConfig) -> Result<GeneratedScenario, GeneratorError> {
    if cfg.n_prosumers == 0 {
        return Err(GeneratorError::NoProsumers);
    }
    let fractions_ok = (0.0..=1.0).contains(&cfg.pv_fraction)
        && (0.0..=1.0).contains(&cfg.es_fraction);
    if !fractions_ok {
        return Err(GeneratorError::BadFraction);
    }

    let r = DEFAULT_HORIZON;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut prosumers = Vec::with_capacity(cfg.n_prosumers);
    let mut pv_owner = Vec::with_capacity(cfg.n_prosumers);
    let mut es_owner = Vec::with_capacity(cfg.n_prosumers);

    for i in 0..cfg.n_prosumers {
        let has_pv = rng.random::<f64>() < cfg.pv_fraction;
        let has_es = rng.random::<f64>() < cfg.es_fraction;
        // Household-to-household variety lives in the consumption side; the
        // PV trace is one shared clear-day simulation, as for a single
        // installation design replicated across the community.
        let load_scale = 0.85 + 0.3 * rng.random::<f64>();
        let morning_center = 15.0 + 2.0 * rng.random::<f64>(); // 7:30-8:30
        let evening_center = 36.0 + 3.0 * rng.random::<f64>(); // 18:00-19:30

        let mut net_load = Vec::with_capacity(r);
        for t in 0..r {
            let tt = t as f64;
            let morning = gauss_bump(tt, morning_center, 2.5);
            let evening = gauss_bump(tt, evening_center, 3.5);
            let mut load = cfg.base_load_kwh
                + cfg.morning_peak_kwh * morning
                + cfg.evening_peak_kwh * evening;
            load *= load_scale * (1.0 + cfg.load_noise * (2.0 * rng.random::<f64>() - 1.0));
            load = load.max(0.0);

            let pv = if has_pv {
                cfg.pv_peak_kw
                    * DEFAULT_INTERVAL_HOURS
                    * clear_day_shape(t, cfg.pv_sunrise, cfg.pv_sunset)
            } else {
                0.0
            };
            net_load.push(load - pv);
        }

        let storage = if has_es {
            cfg.storage.clone()
        } else {
            StorageSpec::none()
        };
        prosumers.push(Prosumer {
            id: format!("p{i}"),
            net_load,
            storage,
        });
        pv_owner.push(has_pv);
        es_owner.push(has_es);
    }

    let tariff = cfg
        .tariff
        .build(r)
        .map_err(|e| GeneratorError::Tariff(e.to_string()))?;
    let scenario = validate_scenario(Scenario {
        prosumers,
        tariff,
        horizon: r,
        interval_hours: DEFAULT_INTERVAL_HOURS,
    })?;
    Ok(GeneratedScenario {
        scenario,
        pv_owner,
        es_owner,
    })
}

fn gauss_bump(t: f64, center: f64, width: f64) -> f64 {
    let z = (t - center) / width;
    (-0.5 * z * z).exp()
}

/// Clear-day bell: zero outside (sunrise, sunset), sine-squared inside.
fn clear_day_shape(t: usize, sunrise: usize, sunset: usize) -> f64 {
    if t <= sunrise || t >= sunset || sunset <= sunrise {
        return 0.0;
    }
    let span = (sunset - sunrise) as f64;
    let x = (t - sunrise) as f64 / span;
    (std::f64::consts::PI * x).sin().powi(2)
}

/// Keyed scenario config accompanying a profiles CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_interval")]
    pub interval_hours: f64,
    pub tariff: TariffConfig,
    /// Battery applied to every prosumer unless overridden; absent means no
    /// storage.
    #[serde(default)]
    pub storage_default: Option<StorageSpec>,
    /// Per-prosumer battery overrides by id; an explicit null strips the
    /// default.
    #[serde(default)]
    pub storage_overrides: BTreeMap<String, Option<StorageSpec>>,
}

fn default_interval() -> f64 {
    DEFAULT_INTERVAL_HOURS
}

#[derive(Debug, Error)]
pub enum ScenarioLoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `id,t1,...,tR`, got {actual} field(s) for {expected}")]
    WrongFieldCount {
        path: String,
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{path}:{line}: could not parse `{token}` as a number")]
    BadNumber {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path}: missing header line")]
    MissingHeader { path: String },
    #[error("{path}: no profile rows")]
    NoRows { path: String },
    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
    #[error("unknown tariff preset `{name}` (available: economy7)")]
    UnknownTariffPreset { name: String },
    #[error("storage override for `{id}` matches no prosumer in the profiles file")]
    UnknownOverride { id: String },
    #[error("loaded scenario failed validation: {0}")]
    Invalid(#[from] ScenarioErrors),
}

/// Loads a scenario from a profiles CSV (`id,t1,...,tR`, one row per
/// prosumer) and a JSON config carrying tariff and storage settings. The
/// result is validated.
pub fn load_scenario_csv(
    profiles_path: &Path,
    config_path: &Path,
) -> Result<Scenario, ScenarioLoadError> {
    let profiles_text =
        std::fs::read_to_string(profiles_path).map_err(|source| ScenarioLoadError::Io {
            path: profiles_path.display().to_string(),
            source,
        })?;
    let config_text =
        std::fs::read_to_string(config_path).map_err(|source| ScenarioLoadError::Io {
            path: config_path.display().to_string(),
            source,
        })?;
    let config: ScenarioConfig = serde_json::from_str(&config_text)?;
    let path = profiles_path.display().to_string();

    let mut lines = profiles_text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ScenarioLoadError::MissingHeader { path: path.clone() })?;
    let horizon = header.split(',').count().saturating_sub(1);
    if horizon == 0 {
        return Err(ScenarioLoadError::MissingHeader { path });
    }

    let mut prosumers = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != horizon + 1 {
            return Err(ScenarioLoadError::WrongFieldCount {
                path,
                line: line_no,
                expected: horizon + 1,
                actual: fields.len(),
            });
        }
        let id = fields[0].trim().to_string();
        let mut net_load = Vec::with_capacity(horizon);
        for token in &fields[1..] {
            let value: f64 = token.trim().parse().map_err(|_| ScenarioLoadError::BadNumber {
                path: path.clone(),
                line: line_no,
                token: token.trim().to_string(),
            })?;
            net_load.push(value);
        }
        let storage = match config.storage_overrides.get(&id) {
            Some(Some(spec)) => spec.clone(),
            Some(None) => StorageSpec::none(),
            None => config
                .storage_default
                .clone()
                .unwrap_or_else(StorageSpec::none),
        };
        prosumers.push(Prosumer {
            id,
            net_load,
            storage,
        });
    }
    if prosumers.is_empty() {
        return Err(ScenarioLoadError::NoRows { path });
    }
    for id in config.storage_overrides.keys() {
        if !prosumers.iter().any(|p| &p.id == id) {
            return Err(ScenarioLoadError::UnknownOverride { id: id.clone() });
        }
    }

    let tariff = config.tariff.build(horizon)?;
    Ok(validate_scenario(Scenario {
        prosumers,
        tariff,
        horizon,
        interval_hours: config.interval_hours,
    })?)
}

/// Writes the profiles CSV consumed by [`load_scenario_csv`]. Values use
/// shortest-roundtrip formatting, so a write/load cycle is lossless.
pub fn write_profiles_csv(scenario: &Scenario) -> String {
    let mut out = String::from("id");
    for t in 1..=scenario.horizon {
        let _ = write!(out, ",t{t}");
    }
    out.push('\n');
    for p in &scenario.prosumers {
        out.push_str(&p.id);
        for q in &p.net_load {
            let _ = write!(out, ",{q}");
        }
        out.push('\n');
    }
    out
}

/// Extracts a [`ScenarioConfig`] that reproduces the scenario's tariff and
/// storage when paired with [`write_profiles_csv`].
pub fn scenario_config_of(scenario: &Scenario) -> ScenarioConfig {
    let mut storage_overrides = BTreeMap::new();
    for p in &scenario.prosumers {
        storage_overrides.insert(p.id.clone(), Some(p.storage.clone()));
    }
    ScenarioConfig {
        interval_hours: scenario.interval_hours,
        tariff: TariffConfig::Explicit {
            import: scenario.tariff.import_price.clone(),
            export: scenario.tariff.export_price.clone(),
        },
        storage_default: None,
        storage_overrides,
    }
}
