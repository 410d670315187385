//! Report structures and their CSV/text emission. Every CSV written here
//! re-parses into the structure that produced it.

use anyhow::{bail, Context, Result};
use prosumer_coop::model::Scenario;
use std::fmt::Write as _;
use std::path::Path;

/// Per-prosumer DER ownership used for the census tables. ES ownership is
/// read off the storage spec; PV ownership is inferred from any negative
/// net-load interval unless the generator supplied the flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerFlags {
    pub pv: Vec<bool>,
    pub es: Vec<bool>,
}

impl DerFlags {
    pub fn infer(scenario: &Scenario) -> Self {
        let pv = scenario
            .prosumers
            .iter()
            .map(|p| p.net_load.iter().any(|&q| q < -1e-9))
            .collect();
        let es = scenario
            .prosumers
            .iter()
            .map(|p| p.storage.has_capacity())
            .collect();
        DerFlags { pv, es }
    }
}

/// PV/ES counts per cluster, in the shape of the case study's census table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterCensus {
    pub prosumers: Vec<usize>,
    pub pv_units: Vec<usize>,
    pub es_systems: Vec<usize>,
}

impl ClusterCensus {
    pub fn new(assignment: &[usize], k: usize, der: &DerFlags) -> Self {
        let mut census = ClusterCensus {
            prosumers: vec![0; k],
            pv_units: vec![0; k],
            es_systems: vec![0; k],
        };
        for (i, &cluster) in assignment.iter().enumerate() {
            census.prosumers[cluster] += 1;
            if der.pv[i] {
                census.pv_units[cluster] += 1;
            }
            if der.es[i] {
                census.es_systems[cluster] += 1;
            }
        }
        census
    }

    pub fn render(&self) -> String {
        let k = self.prosumers.len();
        let mut out = String::new();
        let _ = write!(out, "{:<18}", "cluster");
        for j in 1..=k {
            let _ = write!(out, "{j:>6}");
        }
        out.push('\n');
        for (label, row) in [
            ("prosumers", &self.prosumers),
            ("pv units", &self.pv_units),
            ("es systems", &self.es_systems),
        ] {
            let _ = write!(out, "{label:<18}");
            for v in row {
                let _ = write!(out, "{v:>6}");
            }
            out.push('\n');
        }
        out
    }
}

/// One row of `payoffs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffRow {
    pub id: String,
    pub payoff: f64,
    /// Present only in full-model reports.
    pub shapley: Option<f64>,
}

pub fn write_payoffs_csv(path: &Path, rows: &[PayoffRow]) -> Result<()> {
    let with_shapley = rows.iter().any(|r| r.shapley.is_some());
    let mut out = String::from(if with_shapley {
        "id,payoff,shapley\n"
    } else {
        "id,payoff\n"
    });
    for r in rows {
        match (with_shapley, r.shapley) {
            (true, Some(s)) => {
                let _ = writeln!(out, "{},{},{}", r.id, r.payoff, s);
            }
            (true, None) => bail!("mixed shapley presence in payoff rows"),
            (false, _) => {
                let _ = writeln!(out, "{},{}", r.id, r.payoff);
            }
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_payoffs_csv(path: &Path) -> Result<Vec<PayoffRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty payoffs csv")?;
    let with_shapley = match header {
        "id,payoff" => false,
        "id,payoff,shapley" => true,
        other => bail!("unexpected payoffs header `{other}`"),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if with_shapley { 3 } else { 2 };
        if fields.len() != expected {
            bail!("payoffs line {}: expected {expected} fields", i + 2);
        }
        rows.push(PayoffRow {
            id: fields[0].to_string(),
            payoff: fields[1].parse().context("payoff value")?,
            shapley: if with_shapley {
                Some(fields[2].parse().context("shapley value")?)
            } else {
                None
            },
        });
    }
    Ok(rows)
}

/// `game_values.csv`: the characteristic function by coalition bitmask.
pub fn write_game_values_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::from("mask,value\n");
    for (mask, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{mask},{v}");
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_game_values_csv(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty game values csv")?;
    if header != "mask,value" {
        bail!("unexpected game values header `{header}`");
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (mask, value) = line
            .split_once(',')
            .with_context(|| format!("game values line {}", i + 2))?;
        let mask: usize = mask.parse().context("mask")?;
        if mask != values.len() {
            bail!("game values out of order at mask {mask}");
        }
        values.push(value.parse::<f64>().context("value")?);
    }
    Ok(values)
}

/// One row of `clusters.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRow {
    pub id: String,
    pub cluster: usize,
    pub pv: bool,
    pub es: bool,
}

pub fn write_clusters_csv(path: &Path, rows: &[ClusterRow]) -> Result<()> {
    let mut out = String::from("id,cluster,pv,es\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.id, r.cluster, r.pv as u8, r.es as u8
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_clusters_csv(path: &Path) -> Result<Vec<ClusterRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty clusters csv")?;
    if header != "id,cluster,pv,es" {
        bail!("unexpected clusters header `{header}`");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("clusters line {}: expected 4 fields", i + 2);
        }
        rows.push(ClusterRow {
            id: fields[0].to_string(),
            cluster: fields[1].parse().context("cluster index")?,
            pv: fields[2] == "1",
            es: fields[3] == "1",
        });
    }
    Ok(rows)
}

/// One row of `comparison.csv`: a prosumer's payoff under both models;
/// plot-ready for the diagonal scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub id: String,
    pub full_nucleolus: f64,
    pub clustered_payoff: f64,
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = String::from("id,full_nucleolus,clustered_payoff\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.id, r.full_nucleolus, r.clustered_payoff);
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_comparison_csv(path: &Path) -> Result<Vec<ComparisonRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty comparison csv")?;
    if header != "id,full_nucleolus,clustered_payoff" {
        bail!("unexpected comparison header `{header}`");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("comparison line {}: expected 3 fields", i + 2);
        }
        rows.push(ComparisonRow {
            id: fields[0].to_string(),
            full_nucleolus: fields[1].parse().context("full payoff")?,
            clustered_payoff: fields[2].parse().context("clustered payoff")?,
        });
    }
    Ok(rows)
}

/// Wall-clock per named stage, milliseconds.
#[derive(Debug, Clone, Default)]
pub struct StageTimings(pub Vec<(String, f64)>);

impl StageTimings {
    pub fn record(&mut self, stage: &str, ms: f64) {
        self.0.push((stage.to_string(), ms));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (stage, ms) in &self.0 {
            let _ = writeln!(out, "  {stage:<24} {ms:>10.1} ms");
        }
        out
    }
}
