//! Closed-loop scores and the relative degradation statistic.
//!
//! Driving Score is route completion discounted multiplicatively per
//! infraction. Efficiency and Comfort are diagnostics and never feed RD.

use serde::{Deserialize, Serialize};

use crate::world::{Infraction, InfractionKind, RouteStatus};

/// Multiplicative penalty per infraction kind. Kinds without a coefficient
/// (blocked, timeout) only cap completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Penalties {
    pub collision_vehicle: f64,
    pub collision_static: f64,
    pub red_light: f64,
    pub route_deviation: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Self {
            collision_vehicle: 0.60,
            collision_static: 0.65,
            red_light: 0.70,
            route_deviation: 0.70,
        }
    }
}

impl Penalties {
    pub fn coefficient(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::CollisionVehicle => self.collision_vehicle,
            InfractionKind::CollisionStatic => self.collision_static,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::RouteDeviation => self.route_deviation,
            InfractionKind::Blocked | InfractionKind::Timeout => 1.0,
        }
    }
}

/// Thresholds for a tick to count as comfortable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComfortLimits {
    pub accel: f64,
    pub jerk: f64,
    pub lateral_accel: f64,
}

impl Default for ComfortLimits {
    fn default() -> Self {
        Self {
            accel: 3.0,
            jerk: 5.0,
            lateral_accel: 4.0,
        }
    }
}

/// Accumulates per-tick motion into efficiency and comfort statistics.
#[derive(Debug, Clone)]
pub struct MotionStats {
    limits: ComfortLimits,
    reference_speed: f64,
    dt: f64,
    ticks: u64,
    speed_ratio_sum: f64,
    comfortable: u64,
    last_accel: Option<f64>,
}

impl MotionStats {
    pub fn new(limits: ComfortLimits, reference_speed: f64, rate_hz: u32) -> Self {
        Self {
            limits,
            reference_speed,
            dt: 1.0 / rate_hz as f64,
            ticks: 0,
            speed_ratio_sum: 0.0,
            comfortable: 0,
            last_accel: None,
        }
    }

    /// Records one tick. Jerk is taken as zero on the first tick.
    pub fn push(&mut self, speed: f64, accel: f64, lateral_accel: f64) {
        let jerk = self.last_accel.map_or(0.0, |a| (accel - a) / self.dt);
        self.last_accel = Some(accel);
        self.ticks += 1;
        if self.reference_speed > 0.0 {
            self.speed_ratio_sum += speed / self.reference_speed;
        }
        let ok = accel.abs() <= self.limits.accel
            && jerk.abs() <= self.limits.jerk
            && lateral_accel.abs() <= self.limits.lateral_accel;
        if ok {
            self.comfortable += 1;
        }
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn mean_speed_ratio(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.speed_ratio_sum / self.ticks as f64
        }
    }

    pub fn comfort_fraction(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.comfortable as f64 / self.ticks as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failed,
}

/// Outcome of one route rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub route_id: String,
    pub completion: f64,
    pub infractions: Vec<Infraction>,
    pub mean_speed_ratio: f64,
    pub comfort_fraction: f64,
    pub driving_ticks: u64,
    pub status: RouteStatus,
    pub outcome: Outcome,
    /// Set when the rollout itself failed (not a driving failure).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RouteResult {
    pub fn new(
        route_id: impl Into<String>,
        completion: f64,
        infractions: Vec<Infraction>,
        stats: &MotionStats,
        status: RouteStatus,
    ) -> Self {
        let completion = completion.clamp(0.0, 1.0);
        let outcome = if completion >= 1.0 && infractions.is_empty() {
            Outcome::Success
        } else {
            Outcome::Failed
        };
        Self {
            route_id: route_id.into(),
            completion,
            infractions,
            mean_speed_ratio: stats.mean_speed_ratio(),
            comfort_fraction: stats.comfort_fraction(),
            driving_ticks: stats.ticks(),
            status,
            outcome,
            error: None,
        }
    }

    /// Placeholder for a rollout that could not be completed.
    pub fn errored(route_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            route_id: route_id.into(),
            completion: 0.0,
            infractions: Vec::new(),
            mean_speed_ratio: 0.0,
            comfort_fraction: 0.0,
            driving_ticks: 0,
            status: RouteStatus::Running,
            outcome: Outcome::Failed,
            error: Some(message.into()),
        }
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn count(&self, kind: InfractionKind) -> usize {
        self.infractions.iter().filter(|i| i.kind == kind).count()
    }
}

pub fn driving_score(result: &RouteResult, penalties: &Penalties) -> f64 {
    let factor: f64 = result
        .infractions
        .iter()
        .map(|i| penalties.coefficient(i.kind))
        .product();
    (100.0 * result.completion.clamp(0.0, 1.0) * factor).clamp(0.0, 100.0)
}

/// A diagnostic score with a flag for runs that had no ticks to average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub value: f64,
    pub no_data: bool,
}

pub fn efficiency(result: &RouteResult) -> Diagnostic {
    Diagnostic {
        value: 100.0 * result.mean_speed_ratio,
        no_data: result.driving_ticks == 0,
    }
}

pub fn comfort(result: &RouteResult) -> Diagnostic {
    Diagnostic {
        value: 100.0 * result.comfort_fraction,
        no_data: result.driving_ticks == 0,
    }
}

/// `1 - ds_perturbed / ds_clean`; `None` when the clean score is not positive.
pub fn robustness_degradation(ds_perturbed: f64, ds_clean: f64) -> Option<f64> {
    (ds_clean > 0.0 && ds_clean.is_finite()).then(|| 1.0 - ds_perturbed / ds_clean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Baseline,
    Perturbation,
    Latency,
}

/// One table row: a setting scored over a route suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRow {
    pub setting: String,
    pub label: String,
    pub kind: RowKind,
    pub rd: Option<f64>,
    pub ds: f64,
    pub sr: f64,
    pub eff: f64,
    pub comf: f64,
    /// Every route finished without a rollout error.
    pub completed: bool,
    pub routes: usize,
    pub failed_routes: Vec<String>,
}

impl SettingRow {
    /// Scores a setting from its route results. `ds_clean` is the policy's
    /// own baseline DS (pass `None` for the baseline itself).
    pub fn from_results(
        setting: impl Into<String>,
        label: impl Into<String>,
        kind: RowKind,
        results: &[RouteResult],
        penalties: &Penalties,
        ds_clean: Option<f64>,
    ) -> Self {
        let n = results.len().max(1) as f64;
        let mean = |f: &dyn Fn(&RouteResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        let ds = mean(&|r| driving_score(r, penalties));
        let sr = 100.0 * mean(&|r| if r.is_success() { 1.0 } else { 0.0 });
        let eff = mean(&|r| efficiency(r).value);
        let comf = mean(&|r| comfort(r).value);
        let failed_routes: Vec<String> = results
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.route_id.clone())
            .collect();
        let rd = match ds_clean {
            None => Some(0.0),
            Some(clean) => robustness_degradation(ds, clean),
        };
        Self {
            setting: setting.into(),
            label: label.into(),
            kind,
            rd,
            ds,
            sr,
            eff,
            comf,
            completed: failed_routes.is_empty() && !results.is_empty(),
            routes: results.len(),
            failed_routes,
        }
    }

    /// `[RD, DS, SR, Eff, Comf]`, RD as NaN when undefined.
    pub fn columns(&self) -> [f64; 5] {
        [
            self.rd.unwrap_or(f64::NAN),
            self.ds,
            self.sr,
            self.eff,
            self.comf,
        ]
    }
}

/// Per-column means over a row set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub rd: Option<f64>,
    pub ds: f64,
    pub sr: f64,
    pub eff: f64,
    pub comf: f64,
    pub rows: usize,
}

impl AggregateRow {
    pub fn columns(&self) -> [f64; 5] {
        [
            self.rd.unwrap_or(f64::NAN),
            self.ds,
            self.sr,
            self.eff,
            self.comf,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub avg_perturb: Option<AggregateRow>,
    pub avg_latency: Option<AggregateRow>,
    pub avg_all: Option<AggregateRow>,
}

/// Arithmetic mean of each column. RD averages the rows where it is defined.
pub fn mean_columns(rows: &[[f64; 5]]) -> Option<AggregateRow> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let col = |i: usize| rows.iter().map(|r| r[i]).sum::<f64>() / n;
    let rds: Vec<f64> = rows
        .iter()
        .map(|r| r[0])
        .filter(|v| v.is_finite())
        .collect();
    Some(AggregateRow {
        rd: (!rds.is_empty()).then(|| rds.iter().sum::<f64>() / rds.len() as f64),
        ds: col(1),
        sr: col(2),
        eff: col(3),
        comf: col(4),
        rows: rows.len(),
    })
}

/// Averages completed non-latency, latency, and all perturbation rows.
/// Baseline rows and incomplete rows are ignored.
pub fn aggregate(rows: &[SettingRow]) -> Aggregates {
    let pick = |f: &dyn Fn(RowKind) -> bool| -> Vec<[f64; 5]> {
        rows.iter()
            .filter(|r| r.completed && f(r.kind))
            .map(|r| r.columns())
            .collect()
    };
    Aggregates {
        avg_perturb: mean_columns(&pick(&|k| k == RowKind::Perturbation)),
        avg_latency: mean_columns(&pick(&|k| k == RowKind::Latency)),
        avg_all: mean_columns(&pick(&|k| k != RowKind::Baseline)),
    }
}

/// All rows for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: String,
    pub baseline: SettingRow,
    pub rows: Vec<SettingRow>,
    pub aggregates: Aggregates,
}

impl PolicyReport {
    pub fn new(policy: impl Into<String>, baseline: SettingRow, rows: Vec<SettingRow>) -> Self {
        let aggregates = aggregate(&rows);
        Self {
            policy: policy.into(),
            baseline,
            rows,
            aggregates,
        }
    }

    pub fn row(&self, setting: &str) -> Option<&SettingRow> {
        if self.baseline.setting == setting {
            return Some(&self.baseline);
        }
        self.rows.iter().find(|r| r.setting == setting)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub policies: Vec<PolicyReport>,
}

impl RobustnessReport {
    pub fn policy(&self, name: &str) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.policy == name)
    }
}
