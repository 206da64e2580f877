//! Operational-availability computation and trace-level aggregation.
//!
//! A0 = MUT / (MUT + MDT) with MUT = OT + ST and MDT = TCM + TPM, all
//! measured in ticks. Curves are cumulative by default: the point at tick t
//! uses the counters accumulated through t.

use serde::{Deserialize, Serialize};

use crate::engine::SimulationTrace;

/// The four time counters of one business.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeCounters {
    /// Ticks operating (called a service that was up).
    pub ot: u64,
    /// Ticks standing by (issued no call).
    pub st: u64,
    /// Ticks blocked by failed agents.
    pub tcm: u64,
    /// Ticks blocked solely by agents under preventive maintenance.
    pub tpm: u64,
}

impl TimeCounters {
    /// Mean up time: OT + ST.
    pub fn mut_ticks(&self) -> u64 {
        self.ot + self.st
    }

    /// Mean down time: TCM + TPM.
    pub fn mdt_ticks(&self) -> u64 {
        self.tcm + self.tpm
    }

    pub fn total(&self) -> u64 {
        self.mut_ticks() + self.mdt_ticks()
    }
}

/// One point of an availability curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityPoint {
    pub tick: u64,
    /// Cumulative A0 per business, in the trace's business order.
    pub per_business: Vec<f64>,
    /// Arithmetic mean of the per-business values (equal business weights).
    pub system: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("availability undefined: all counters zero")]
    UndefinedMetric,
    #[error("trace holds no samples")]
    EmptySeries,
    #[error("traces differ in shape: {0}")]
    Shape(String),
}

/// Eq. of record: (OT + ST) / (OT + ST + TCM + TPM).
pub fn operational_availability(c: &TimeCounters) -> Result<f64, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::UndefinedMetric);
    }
    Ok(c.mut_ticks() as f64 / total as f64)
}

/// The cumulative availability curve of a completed run, one point per tick.
pub fn availability_series(
    trace: &SimulationTrace,
) -> Result<Vec<AvailabilityPoint>, MetricsError> {
    if trace.samples.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    Ok(trace.samples.clone())
}

/// Windowed variant: point t averages up-ticks over the trailing `window`
/// ticks instead of the whole prefix. Offered as an option; cumulative is the
/// default reading.
pub fn windowed_availability_series(
    trace: &SimulationTrace,
    window: u64,
) -> Result<Vec<AvailabilityPoint>, MetricsError> {
    if trace.samples.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let w = window.max(1);
    let n_bus = trace.business_ids.len();
    // Recover per-tick up indicators from the cumulative series:
    // up_b(t) = t * A_b(t) - (t-1) * A_b(t-1), rounded to the nearest tick.
    let mut up: Vec<Vec<f64>> = vec![Vec::with_capacity(trace.samples.len()); n_bus];
    let mut prev = vec![0.0_f64; n_bus];
    for point in &trace.samples {
        for b in 0..n_bus {
            let cum = point.per_business[b] * point.tick as f64;
            up[b].push((cum - prev[b]).round());
            prev[b] = cum;
        }
    }
    let mut out = Vec::with_capacity(trace.samples.len());
    for (i, point) in trace.samples.iter().enumerate() {
        let lo = (i + 1).saturating_sub(w as usize);
        let len = (i + 1 - lo) as f64;
        let per_business: Vec<f64> = (0..n_bus)
            .map(|b| up[b][lo..=i].iter().sum::<f64>() / len)
            .collect();
        let system = per_business.iter().sum::<f64>() / n_bus as f64;
        out.push(AvailabilityPoint {
            tick: point.tick,
            per_business,
            system,
        });
    }
    Ok(out)
}

/// Paired comparison of a reconfiguration-enabled run against its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ticks: Vec<u64>,
    pub reconfig: Vec<f64>,
    pub baseline: Vec<f64>,
    /// Per-tick reconfig minus baseline system A0.
    pub gap: Vec<f64>,
    pub min_gap: f64,
    /// Mean gap over the second half minus mean over the first half.
    pub gap_trend: f64,
}

pub fn compare(
    reconfig: &SimulationTrace,
    baseline: &SimulationTrace,
) -> Result<ComparisonReport, MetricsError> {
    if reconfig.samples.len() != baseline.samples.len() {
        return Err(MetricsError::Shape(format!(
            "horizons differ: {} vs {}",
            reconfig.samples.len(),
            baseline.samples.len()
        )));
    }
    if reconfig.business_ids != baseline.business_ids {
        return Err(MetricsError::Shape("business ids differ".to_string()));
    }
    if reconfig.samples.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let ticks: Vec<u64> = reconfig.samples.iter().map(|p| p.tick).collect();
    let re: Vec<f64> = reconfig.samples.iter().map(|p| p.system).collect();
    let base: Vec<f64> = baseline.samples.iter().map(|p| p.system).collect();
    let gap: Vec<f64> = re.iter().zip(&base).map(|(a, b)| a - b).collect();
    let min_gap = gap.iter().copied().fold(f64::INFINITY, f64::min);
    let half = gap.len() / 2;
    let gap_trend = if half == 0 {
        0.0
    } else {
        let first = gap[..half].iter().sum::<f64>() / half as f64;
        let second = gap[half..].iter().sum::<f64>() / (gap.len() - half) as f64;
        second - first
    };
    Ok(ComparisonReport {
        ticks,
        reconfig: re,
        baseline: base,
        gap,
        min_gap,
        gap_trend,
    })
}
