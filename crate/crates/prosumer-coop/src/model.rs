//! Domain types shared across the crate: scenarios, prosumers, storage,
//! tariffs and coalitions.
//!
//! All energy quantities are kWh per interval and all prices are £/kWh.
//! Battery power ratings are converted to per-interval energy at ingestion,
//! so the interval length is metadata only. Types are immutable after
//! validation and safe to share across worker threads.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Battery parameters for one prosumer.
///
/// A prosumer without storage carries a zero-capacity spec (zero limits),
/// which keeps the dispatch builder on a single code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    /// Energy capacity in kWh.
    pub capacity_kwh: f64,
    /// Maximum charge energy per interval, kWh (>= 0).
    pub charge_limit_kwh: f64,
    /// Maximum discharge energy per interval, kWh (<= 0).
    pub discharge_limit_kwh: f64,
    /// Charge efficiency, in (0, 1].
    pub eff_in: f64,
    /// Discharge efficiency, in (0, 1].
    pub eff_out: f64,
    /// Initial state of charge as a fraction of capacity.
    pub soc0: f64,
    /// Lowest allowed state of charge fraction.
    pub soc_min: f64,
    /// Highest allowed state of charge fraction.
    pub soc_max: f64,
}

impl StorageSpec {
    /// The zero-capacity spec used for prosumers without a battery.
    pub fn none() -> Self {
        StorageSpec {
            capacity_kwh: 0.0,
            charge_limit_kwh: 0.0,
            discharge_limit_kwh: 0.0,
            eff_in: 1.0,
            eff_out: 1.0,
            soc0: 0.0,
            soc_min: 0.0,
            soc_max: 1.0,
        }
    }

    pub fn has_capacity(&self) -> bool {
        self.capacity_kwh > 0.0
    }
}

impl Default for StorageSpec {
    fn default() -> Self {
        StorageSpec::none()
    }
}

/// One participant: a net-load profile plus (possibly zero) storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prosumer {
    pub id: String,
    /// Net energy per interval in kWh: positive = consumption, negative =
    /// generation.
    pub net_load: Vec<f64>,
    #[serde(default)]
    pub storage: StorageSpec,
}

impl Prosumer {
    pub fn new(id: impl Into<String>, net_load: Vec<f64>) -> Self {
        Prosumer {
            id: id.into(),
            net_load,
            storage: StorageSpec::none(),
        }
    }

    pub fn with_storage(mut self, storage: StorageSpec) -> Self {
        self.storage = storage;
        self
    }
}

/// Import/export price vectors over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    /// Import (buy) price per interval, £/kWh.
    pub import_price: Vec<f64>,
    /// Export (sell) price per interval, £/kWh.
    pub export_price: Vec<f64>,
}

impl TariffSchedule {
    pub fn flat(horizon: usize, import: f64, export: f64) -> Self {
        TariffSchedule {
            import_price: vec![import; horizon],
            export_price: vec![export; horizon],
        }
    }
}

/// The full game input: prosumers, tariff and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub prosumers: Vec<Prosumer>,
    pub tariff: TariffSchedule,
    /// Number of intervals.
    pub horizon: usize,
    /// Hours per interval; metadata only.
    pub interval_hours: f64,
}

impl Scenario {
    pub fn n_prosumers(&self) -> usize {
        self.prosumers.len()
    }

    /// The coalition of all prosumers.
    pub fn grand_coalition(&self) -> Coalition {
        Coalition::grand(self.prosumers.len())
    }
}

/// A set of prosumer indices encoded as a bitmask over `[0, N)`.
///
/// Backed by four 64-bit words: exact game enumeration caps players far
/// below that, but the clustered pipeline dispatches unions over scenarios
/// with hundreds of prosumers.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition([u64; 4]);

impl Coalition {
    pub const MAX_PLAYERS: usize = 256;

    pub fn empty() -> Self {
        Coalition([0; 4])
    }

    pub fn singleton(player: usize) -> Self {
        assert!(player < Self::MAX_PLAYERS);
        let mut bits = [0u64; 4];
        bits[player / 64] = 1u64 << (player % 64);
        Coalition(bits)
    }

    /// Coalition containing every player in `[0, n)`.
    pub fn grand(n: usize) -> Self {
        assert!(
            n <= Self::MAX_PLAYERS,
            "coalition is limited to {} players",
            Self::MAX_PLAYERS
        );
        let mut bits = [0u64; 4];
        for (w, word) in bits.iter_mut().enumerate() {
            let low = w * 64;
            if n > low {
                let in_word = (n - low).min(64);
                *word = if in_word == 64 {
                    u64::MAX
                } else {
                    (1u64 << in_word) - 1
                };
            }
        }
        Coalition(bits)
    }

    pub fn from_mask(mask: u64) -> Self {
        Coalition([mask, 0, 0, 0])
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Self {
        let mut bits = [0u64; 4];
        for m in members {
            assert!(m < Self::MAX_PLAYERS);
            bits[m / 64] |= 1u64 << (m % 64);
        }
        Coalition(bits)
    }

    /// The low 64-bit word as a plain bitmask; valid for the enumerated
    /// game paths, which cap players well below 64.
    pub fn mask(self) -> u64 {
        debug_assert!(
            self.0[1] == 0 && self.0[2] == 0 && self.0[3] == 0,
            "mask() on a coalition with members beyond player 63"
        );
        self.0[0]
    }

    pub fn contains(self, player: usize) -> bool {
        player < Self::MAX_PLAYERS && self.0[player / 64] & (1u64 << (player % 64)) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == [0; 4]
    }

    pub fn size(self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .all(|(a, b)| a & !b == 0)
    }

    pub fn union(self, other: Coalition) -> Coalition {
        let mut bits = [0u64; 4];
        for (out, (a, b)) in bits.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *out = a | b;
        }
        Coalition(bits)
    }

    /// Member indices in ascending order.
    pub fn members(self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size());
        for (w, &word) in self.0.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out.push(w * 64 + bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
        }
        out
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, m) in self.members().into_iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// A single invariant violation found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioIssue {
    #[error("horizon must be at least 1 interval")]
    EmptyHorizon,
    #[error("interval length must be positive, got {0}")]
    NonPositiveInterval(f64),
    #[error("prosumer `{id}`: profile has {actual} values, expected horizon {expected}")]
    ProfileLength {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("prosumer `{id}`: non-finite net load at interval {t}")]
    NonFiniteLoad { id: String, t: usize },
    #[error("duplicate prosumer id `{id}`")]
    DuplicateId { id: String },
    #[error("tariff import vector has {actual} values, expected horizon {expected}")]
    ImportLength { expected: usize, actual: usize },
    #[error("tariff export vector has {actual} values, expected horizon {expected}")]
    ExportLength { expected: usize, actual: usize },
    #[error("tariff inversion at interval {t}: export {export} exceeds import {import}")]
    TariffInversion { t: usize, import: f64, export: f64 },
    #[error("negative price at interval {t}")]
    NegativePrice { t: usize },
    #[error("non-finite price at interval {t}")]
    NonFinitePrice { t: usize },
    #[error("prosumer `{id}`: negative storage capacity {capacity}")]
    NegativeCapacity { id: String, capacity: f64 },
    #[error("prosumer `{id}`: charge/discharge limits must satisfy discharge <= 0 <= charge, got [{discharge}, {charge}]")]
    PowerLimits {
        id: String,
        charge: f64,
        discharge: f64,
    },
    #[error("prosumer `{id}`: efficiency must be in (0, 1], got in={eff_in}, out={eff_out}")]
    Efficiency { id: String, eff_in: f64, eff_out: f64 },
    #[error("prosumer `{id}`: SoC bounds inconsistent (min={soc_min}, init={soc0}, max={soc_max})")]
    SocBounds {
        id: String,
        soc_min: f64,
        soc0: f64,
        soc_max: f64,
    },
}

/// Full list of violations; `validate_scenario` never stops at the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ScenarioErrors(pub Vec<ScenarioIssue>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario failed validation with {} issue(s):", self.0.len())?;
        for issue in &self.0 {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

/// Checks every type invariant and returns the scenario unchanged if all
/// hold, otherwise the complete list of violations.
pub fn validate_scenario(scenario: Scenario) -> Result<Scenario, ScenarioErrors> {
    let mut issues = Vec::new();
    let r = scenario.horizon;

    if r == 0 {
        issues.push(ScenarioIssue::EmptyHorizon);
    }
    // NaN must fail these checks too, hence the explicit is_nan guards.
    if scenario.interval_hours <= 0.0 || scenario.interval_hours.is_nan() {
        issues.push(ScenarioIssue::NonPositiveInterval(scenario.interval_hours));
    }

    let mut seen = std::collections::HashSet::new();
    for p in &scenario.prosumers {
        if !seen.insert(p.id.as_str()) {
            issues.push(ScenarioIssue::DuplicateId { id: p.id.clone() });
        }
        if p.net_load.len() != r {
            issues.push(ScenarioIssue::ProfileLength {
                id: p.id.clone(),
                expected: r,
                actual: p.net_load.len(),
            });
        }
        for (t, q) in p.net_load.iter().enumerate() {
            if !q.is_finite() {
                issues.push(ScenarioIssue::NonFiniteLoad { id: p.id.clone(), t });
            }
        }

        let s = &p.storage;
        if s.capacity_kwh < 0.0 || s.capacity_kwh.is_nan() {
            issues.push(ScenarioIssue::NegativeCapacity {
                id: p.id.clone(),
                capacity: s.capacity_kwh,
            });
        }
        let limits_ok = s.discharge_limit_kwh <= 0.0 && s.charge_limit_kwh >= 0.0;
        if !limits_ok {
            issues.push(ScenarioIssue::PowerLimits {
                id: p.id.clone(),
                charge: s.charge_limit_kwh,
                discharge: s.discharge_limit_kwh,
            });
        }
        if !(s.eff_in > 0.0 && s.eff_in <= 1.0 && s.eff_out > 0.0 && s.eff_out <= 1.0) {
            issues.push(ScenarioIssue::Efficiency {
                id: p.id.clone(),
                eff_in: s.eff_in,
                eff_out: s.eff_out,
            });
        }
        let soc_ok = 0.0 <= s.soc_min
            && s.soc_min <= s.soc0
            && s.soc0 <= s.soc_max
            && s.soc_max <= 1.0;
        if !soc_ok {
            issues.push(ScenarioIssue::SocBounds {
                id: p.id.clone(),
                soc_min: s.soc_min,
                soc0: s.soc0,
                soc_max: s.soc_max,
            });
        }
    }

    if scenario.tariff.import_price.len() != r {
        issues.push(ScenarioIssue::ImportLength {
            expected: r,
            actual: scenario.tariff.import_price.len(),
        });
    }
    if scenario.tariff.export_price.len() != r {
        issues.push(ScenarioIssue::ExportLength {
            expected: r,
            actual: scenario.tariff.export_price.len(),
        });
    }
    let pairs = scenario
        .tariff
        .import_price
        .iter()
        .zip(scenario.tariff.export_price.iter());
    for (t, (&pb, &ps)) in pairs.enumerate() {
        if !pb.is_finite() || !ps.is_finite() {
            issues.push(ScenarioIssue::NonFinitePrice { t });
            continue;
        }
        if ps < 0.0 || pb < 0.0 {
            issues.push(ScenarioIssue::NegativePrice { t });
        }
        if ps > pb {
            issues.push(ScenarioIssue::TariffInversion {
                t,
                import: pb,
                export: ps,
            });
        }
    }

    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioErrors(issues))
    }
}
