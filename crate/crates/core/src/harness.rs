//! Closed-loop evaluation: single rollouts, matched sweeps, and run records.
//!
//! Per tick a rollout does
//!
//! ```text
//! observe -> observation processors -> policy -> action buffer -> step
//! ```
//!
//! Random streams hang off `SeedTree(seed) / route_id / family`, so every
//! policy meets the same masks, bursts and noise on a given route.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{make_policy_with, PolicySpec};
use crate::error::{Error, Result};
use crate::latency::{ActionBuffer, LatencySpec};
use crate::metrics::{
    ComfortLimits, MotionStats, Penalties, PolicyReport, RobustnessReport, RouteResult, RowKind,
    SettingRow,
};
use crate::perturb::{Family, ObsPipeline, PerturbationLog, PerturbationSpec};
use crate::seed::SeedTree;
use crate::types::{hex64, Action, Raster};
use crate::world::{Infraction, RouteSpec, Simulator, WorldConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Observation-side and action-side configuration of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Setting {
    pub perturbations: Vec<PerturbationSpec>,
    pub latency: LatencySpec,
}

impl Setting {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn perturbation(spec: PerturbationSpec) -> Self {
        Self {
            perturbations: vec![spec],
            latency: LatencySpec::immediate(),
        }
    }

    pub fn latency_ms(ms: f64) -> Self {
        Self {
            perturbations: Vec::new(),
            latency: LatencySpec::fixed(ms),
        }
    }

    fn active(&self) -> impl Iterator<Item = &PerturbationSpec> {
        self.perturbations
            .iter()
            .filter(|p| p.family != Family::None)
    }

    pub fn is_baseline(&self) -> bool {
        self.active().next().is_none() && self.latency.is_identity()
    }

    pub fn kind(&self) -> RowKind {
        if self.is_baseline() {
            RowKind::Baseline
        } else if self.active().next().is_none() {
            RowKind::Latency
        } else {
            RowKind::Perturbation
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.perturbations {
            p.validate()?;
        }
        self.latency.validate()
    }

    /// Path-safe label such as `gps-15m` or `latency-200ms`.
    pub fn label(&self) -> String {
        if self.is_baseline() {
            return "baseline".into();
        }
        let mut parts: Vec<String> = self.active().map(|p| p.label()).collect();
        if !self.latency.is_identity() {
            parts.push(self.latency.label());
        }
        parts.join("+")
    }

    pub fn display_label(&self, rate_hz: u32) -> String {
        if self.is_baseline() {
            return "Baseline".into();
        }
        let mut parts: Vec<String> = self.active().map(|p| p.display_label(rate_hz)).collect();
        if !self.latency.is_identity() {
            parts.push(self.latency.display_label());
        }
        parts.join(" + ")
    }

    /// Parses `none`, `occlusion:0.5`, `burst:20`, `gps:5`, `speed:0.2` or
    /// `latency:100`. Components may be joined with `+`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "none" || text == "baseline" {
            return Ok(Self::baseline());
        }
        let mut setting = Self::baseline();
        for part in text.split('+') {
            let (name, value) = part.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("setting {part:?} is not of the form family:value"))
            })?;
            let v: f64 = value.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("setting {part:?}: {value:?} is not a number"))
            })?;
            match name.trim() {
                "occlusion" => setting.perturbations.push(PerturbationSpec::occlusion(v)),
                "burst" => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "burst length must be a positive whole number of ticks, got {value}"
                        )));
                    }
                    setting
                        .perturbations
                        .push(PerturbationSpec::burst(v as u64))
                }
                "gps" => setting.perturbations.push(PerturbationSpec::gps(v)),
                "speed" => setting.perturbations.push(PerturbationSpec::speed(v)),
                "latency" => setting.latency = LatencySpec::fixed(v),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown perturbation family {other:?}"
                    )))
                }
            }
        }
        setting.validate()?;
        Ok(setting)
    }
}

/// The evaluation grid: two severities per observation family and three
/// fixed latencies.
pub fn paper_preset() -> Vec<Setting> {
    vec![
        Setting::perturbation(PerturbationSpec::occlusion(0.5)),
        Setting::perturbation(PerturbationSpec::occlusion(0.8)),
        Setting::perturbation(PerturbationSpec::burst(20)),
        Setting::perturbation(PerturbationSpec::burst(60)),
        Setting::perturbation(PerturbationSpec::gps(5.0)),
        Setting::perturbation(PerturbationSpec::gps(15.0)),
        Setting::perturbation(PerturbationSpec::speed(0.5)),
        Setting::perturbation(PerturbationSpec::speed(0.2)),
        Setting::latency_ms(100.0),
        Setting::latency_ms(200.0),
        Setting::latency_ms(500.0),
    ]
}

/// Parses a comma-separated settings list, or a preset name.
pub fn parse_settings(text: &str) -> Result<Vec<Setting>> {
    match text.trim() {
        "paper" => Ok(paper_preset()),
        "none" | "" => Ok(Vec::new()),
        list => list.split(',').map(Setting::parse).collect(),
    }
}

/// Everything a rollout needs besides the policy, route and setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub penalties: Penalties,
    pub comfort: ComfortLimits,
    /// Per-policy gain overrides; calibration still comes from `world`.
    pub policies: BTreeMap<String, PolicyOverrides>,
    /// Log the perturbed camera raster on every tick.
    pub record_rasters: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: crate::seed::DEFAULT_SEED,
            world: WorldConfig::default(),
            penalties: Penalties::default(),
            comfort: ComfortLimits::default(),
            policies: BTreeMap::new(),
            record_rasters: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyOverrides {
    pub lookahead: Option<f64>,
    pub speed_gain: Option<f64>,
    pub overspeed_brake_gain: Option<f64>,
    pub cruise_speed: Option<f64>,
    pub comfort_lateral_accel: Option<f64>,
    pub comfort_decel: Option<f64>,
    pub reaction_time: Option<f64>,
    pub brake_threshold: Option<f64>,
    pub stop_line_threshold: Option<f64>,
}

impl EvalConfig {
    pub fn policy_spec(&self, name: &str) -> PolicySpec {
        let mut spec = PolicySpec::calibrated(name, &self.world);
        if let Some(o) = self.policies.get(name) {
            let set = |dst: &mut f64, v: Option<f64>| {
                if let Some(v) = v {
                    *dst = v;
                }
            };
            set(&mut spec.lookahead, o.lookahead);
            set(&mut spec.speed_gain, o.speed_gain);
            set(&mut spec.overspeed_brake_gain, o.overspeed_brake_gain);
            set(&mut spec.cruise_speed, o.cruise_speed);
            set(&mut spec.comfort_lateral_accel, o.comfort_lateral_accel);
            set(&mut spec.comfort_decel, o.comfort_decel);
            set(&mut spec.reaction_time, o.reaction_time);
            set(&mut spec.brake_threshold, o.brake_threshold);
            set(&mut spec.stop_line_threshold, o.stop_line_threshold);
        }
        spec
    }

    pub fn rate_hz(&self) -> u32 {
        self.world.rate_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub version: String,
    pub policy: String,
    pub route: String,
    pub setting_label: String,
    pub setting: Setting,
    pub kind: RowKind,
    pub seed: u64,
    pub seed_path: Vec<String>,
    pub policy_spec: PolicySpec,
    pub world: WorldConfig,
    pub penalties: Penalties,
    pub comfort: ComfortLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub clean: String,
    pub perturbed: String,
    pub fresh: Action,
    pub applied: Action,
    /// Ego state after the applied action.
    pub ego: PoseRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infractions: Vec<Infraction>,
    #[serde(default, skip_serializing_if = "PerturbationLog::is_empty")]
    pub perturbation: PerturbationLog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Raster>,
}

/// Full evidence trail of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RecordHeader,
    pub ticks: Vec<TickRecord>,
    pub result: RouteResult,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(Box<RecordHeader>),
    Tick(Box<TickRecord>),
    Summary { result: RouteResult },
}

impl RunRecord {
    pub fn header_line(header: &RecordHeader) -> Result<String> {
        Ok(serde_json::to_string(&Line::Header(Box::new(
            header.clone(),
        )))?)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = Self::header_line(&self.header)?;
        out.push('\n');
        for t in &self.ticks {
            out.push_str(&serde_json::to_string(&Line::Tick(Box::new(t.clone())))?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Line::Summary {
            result: self.result.clone(),
        })?);
        out.push('\n');
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = self.to_jsonl()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = None;
        let mut ticks = Vec::new();
        let mut result = None;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            match serde_json::from_str::<Line>(&line)? {
                Line::Header(h) => header = Some(*h),
                Line::Tick(t) => ticks.push(*t),
                Line::Summary { result: r } => result = Some(r),
            }
        }
        let bad = |reason: &str| Error::Parse {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        Ok(Self {
            header: header.ok_or_else(|| bad("missing header line"))?,
            ticks,
            result: result.ok_or_else(|| bad("missing summary line"))?,
        })
    }

    /// Header and summary only, without parsing every tick.
    pub fn read_summary(path: &Path) -> Result<(String, RecordHeader, RouteResult)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::Parse {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        let first = text.lines().next().ok_or_else(|| bad("empty record"))?;
        let last = text.lines().last().ok_or_else(|| bad("empty record"))?;
        let header = match serde_json::from_str::<Line>(first)? {
            Line::Header(h) => *h,
            _ => return Err(bad("first line is not a header")),
        };
        let result = match serde_json::from_str::<Line>(last)? {
            Line::Summary { result } => result,
            _ => return Err(bad("last line is not a summary")),
        };
        Ok((first.to_string(), header, result))
    }
}

fn seed_path(route: &RouteSpec) -> Vec<String> {
    vec![route.id.clone()]
}

pub fn record_header(
    policy: &str,
    route: &RouteSpec,
    setting: &Setting,
    cfg: &EvalConfig,
) -> RecordHeader {
    RecordHeader {
        version: VERSION.to_string(),
        policy: policy.to_string(),
        route: route.id.clone(),
        setting_label: setting.label(),
        setting: setting.clone(),
        kind: setting.kind(),
        seed: cfg.seed,
        seed_path: seed_path(route),
        policy_spec: cfg.policy_spec(policy),
        world: cfg.world.clone(),
        penalties: cfg.penalties.clone(),
        comfort: cfg.comfort.clone(),
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "policy panicked".into()
    }
}

/// Runs one route under one setting.
///
/// A policy that panics ends the rollout; the result is marked failed with
/// the message and the partial record is kept.
pub fn run_route(
    policy: &str,
    route: &Arc<RouteSpec>,
    setting: &Setting,
    cfg: &EvalConfig,
) -> Result<RunRecord> {
    setting.validate()?;
    let header = record_header(policy, route, setting, cfg);
    let sim = Simulator::new(route.clone(), cfg.world.clone());
    let mut agent = make_policy_with(header.policy_spec.clone())?;
    agent.reset(sim.start_pose());
    let tree = SeedTree::new(cfg.seed).child(route.id.clone());
    let mut pipeline = ObsPipeline::new(&setting.perturbations, &tree)?;
    let mut buffer = ActionBuffer::new(&setting.latency, cfg.rate_hz(), Action::full_brake(0))?;
    let mut stats = MotionStats::new(cfg.comfort.clone(), route.speed_limit, cfg.rate_hz());

    let mut state = sim.initial_state();
    let mut ticks = Vec::new();
    let limit = sim.time_budget_ticks() + 2;
    while !state.status.is_terminal() && state.tick.index <= limit {
        let tick = state.tick.index;
        let clean = sim.observe(&state);
        let (obs, log) = pipeline.process(&clean)?;
        let fresh = match catch_unwind(AssertUnwindSafe(|| agent.act(&obs))) {
            Ok(a) => a,
            Err(payload) => {
                let mut result = RouteResult::errored(&route.id, panic_message(payload));
                result.completion = state.completion(sim.route());
                return Ok(RunRecord {
                    header,
                    ticks,
                    result,
                });
            }
        };
        let applied = buffer.push_then_pop(fresh, tick);
        let next = sim.step(&state, &applied);
        stats.push(next.ego.speed, next.ego.acceleration, next.lateral_accel);
        ticks.push(TickRecord {
            tick,
            clean: hex64(clean.digest()),
            perturbed: hex64(obs.digest()),
            fresh,
            applied,
            ego: PoseRecord {
                x: next.ego.position.x,
                y: next.ego.position.y,
                heading: next.ego.heading,
                speed: next.ego.speed,
            },
            infractions: next.infractions[state.infractions.len()..].to_vec(),
            perturbation: log,
            camera: cfg.record_rasters.then(|| obs.camera.clone()),
        });
        state = next;
    }
    let result = RouteResult::new(
        &route.id,
        state.completion(sim.route()),
        state.infractions.clone(),
        &stats,
        state.status,
    );
    Ok(RunRecord {
        header,
        ticks,
        result,
    })
}

/// One tick of a rollout with no processors and no action buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct BareTick {
    pub tick: u64,
    pub digest: String,
    pub action: Action,
    pub ego: PoseRecord,
}

/// Reference loop used to check that the identity setting is transparent:
/// observe, act, step, nothing else.
pub fn run_route_bare(
    policy: &str,
    route: &Arc<RouteSpec>,
    cfg: &EvalConfig,
) -> Result<Vec<BareTick>> {
    let sim = Simulator::new(route.clone(), cfg.world.clone());
    let mut agent = make_policy_with(cfg.policy_spec(policy))?;
    agent.reset(sim.start_pose());
    let mut state = sim.initial_state();
    let mut out = Vec::new();
    let limit = sim.time_budget_ticks() + 2;
    while !state.status.is_terminal() && state.tick.index <= limit {
        let obs = sim.observe(&state);
        let action = agent.act(&obs);
        state = sim.step(&state, &action);
        out.push(BareTick {
            tick: obs.stamp,
            digest: hex64(obs.digest()),
            action,
            ego: PoseRecord {
                x: state.ego.position.x,
                y: state.ego.position.y,
                heading: state.ego.heading,
                speed: state.ego.speed,
            },
        });
    }
    Ok(out)
}

/// A full evaluation grid.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub name: String,
    pub policies: Vec<String>,
    pub routes: Vec<Arc<RouteSpec>>,
    /// Perturbed settings; the baseline is always added and run first.
    pub settings: Vec<Setting>,
    pub config: EvalConfig,
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
    pub resume: bool,
}

impl SweepSpec {
    pub fn sweep_dir(&self) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(&self.name))
    }

    pub fn record_path(&self, policy: &str, setting: &Setting, route: &str) -> Option<PathBuf> {
        self.sweep_dir().map(|d| {
            d.join(policy)
                .join(setting.label())
                .join(format!("{route}.jsonl"))
        })
    }
}

struct Job<'a> {
    policy: &'a str,
    setting: &'a Setting,
    route: &'a Arc<RouteSpec>,
}

fn run_job(spec: &SweepSpec, job: &Job<'_>) -> Result<RouteResult> {
    let path = spec.record_path(job.policy, job.setting, &job.route.id);
    if spec.resume {
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let header = record_header(job.policy, job.route, job.setting, &spec.config);
            let expected = RunRecord::header_line(&header)?;
            if let Ok((line, _, result)) = RunRecord::read_summary(p) {
                if line == expected {
                    return Ok(result);
                }
            }
        }
    }
    let record = match run_route(job.policy, job.route, job.setting, &spec.config) {
        Ok(r) => r,
        Err(e) => return Ok(RouteResult::errored(&job.route.id, e.to_string())),
    };
    if let Some(p) = path {
        record.write(&p)?;
    }
    Ok(record.result)
}

fn run_jobs(spec: &SweepSpec, jobs: &[Job<'_>]) -> Result<Vec<RouteResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|j| run_job(spec, j)).collect())
}

/// Runs the baseline then every setting for every policy and scores them.
pub fn run_sweep(spec: &SweepSpec) -> Result<RobustnessReport> {
    for s in &spec.settings {
        s.validate()?;
    }
    let baseline = Setting::baseline();
    let settings: Vec<&Setting> = spec.settings.iter().filter(|s| !s.is_baseline()).collect();

    let mut clean_jobs = Vec::new();
    for p in &spec.policies {
        for r in &spec.routes {
            clean_jobs.push(Job {
                policy: p,
                setting: &baseline,
                route: r,
            });
        }
    }
    let clean = run_jobs(spec, &clean_jobs)?;

    let mut perturbed_jobs = Vec::new();
    for p in &spec.policies {
        for s in &settings {
            for r in &spec.routes {
                perturbed_jobs.push(Job {
                    policy: p,
                    setting: s,
                    route: r,
                });
            }
        }
    }
    let perturbed = run_jobs(spec, &perturbed_jobs)?;

    let n = spec.routes.len();
    let rate = spec.config.rate_hz();
    let mut report = RobustnessReport::default();
    for (pi, policy) in spec.policies.iter().enumerate() {
        let base_results = &clean[pi * n..(pi + 1) * n];
        let base = SettingRow::from_results(
            baseline.label(),
            baseline.display_label(rate),
            RowKind::Baseline,
            base_results,
            &spec.config.penalties,
            None,
        );
        let mut rows = Vec::new();
        for (si, s) in settings.iter().enumerate() {
            let start = (pi * settings.len() + si) * n;
            rows.push(SettingRow::from_results(
                s.label(),
                s.display_label(rate),
                s.kind(),
                &perturbed[start..start + n],
                &spec.config.penalties,
                Some(base.ds),
            ));
        }
        report
            .policies
            .push(PolicyReport::new(policy.clone(), base, rows));
    }
    Ok(report)
}

/// Rebuilds a report from the run records under a sweep directory.
///
/// Settings are ordered as in `order` when given, otherwise by label.
pub fn load_sweep(dir: &Path, order: Option<&[Setting]>) -> Result<RobustnessReport> {
    type Key = (String, String);
    let mut groups: BTreeMap<Key, (RecordHeader, Vec<RouteResult>)> = BTreeMap::new();
    let policies = read_dir_sorted(dir)?;
    for pdir in policies.iter().filter(|p| p.is_dir()) {
        for sdir in read_dir_sorted(pdir)?.iter().filter(|p| p.is_dir()) {
            for file in read_dir_sorted(sdir)? {
                if file.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                    continue;
                }
                let (_, header, result) = RunRecord::read_summary(&file)?;
                let key = (header.policy.clone(), header.setting_label.clone());
                groups
                    .entry(key)
                    .or_insert_with(|| (header.clone(), Vec::new()))
                    .1
                    .push(result);
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::Config(format!(
            "no run records under {}",
            dir.display()
        )));
    }
    let mut report = RobustnessReport::default();
    let policy_names: Vec<String> = {
        let mut v: Vec<String> = groups.keys().map(|(p, _)| p.clone()).collect();
        v.dedup();
        v
    };
    for policy in policy_names {
        let Some((bh, bres)) = groups.get(&(policy.clone(), "baseline".into())) else {
            return Err(Error::Config(format!(
                "policy {policy} has no baseline records"
            )));
        };
        let rate = bh.world.rate_hz;
        let base = SettingRow::from_results(
            "baseline",
            "Baseline",
            RowKind::Baseline,
            bres,
            &bh.penalties,
            None,
        );
        let mut labels: Vec<String> = groups
            .keys()
            .filter(|(p, s)| *p == policy && s != "baseline")
            .map(|(_, s)| s.clone())
            .collect();
        if let Some(order) = order {
            let rank = |l: &String| {
                order
                    .iter()
                    .position(|s| s.label() == *l)
                    .unwrap_or(usize::MAX)
            };
            labels.sort_by_key(|l| (rank(l), l.clone()));
        }
        let rows = labels
            .iter()
            .map(|l| {
                let (h, res) = &groups[&(policy.clone(), l.clone())];
                SettingRow::from_results(
                    l.clone(),
                    h.setting.display_label(rate),
                    h.kind,
                    res,
                    &h.penalties,
                    Some(base.ds),
                )
            })
            .collect();
        report.policies.push(PolicyReport::new(policy, base, rows));
    }
    Ok(report)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::RouteSuite;

    fn route(id: &str) -> Arc<RouteSpec> {
        Arc::new(RouteSuite::bundled().get(id).unwrap().clone())
    }

    #[test]
    fn setting_labels_and_kinds() {
        assert_eq!(Setting::baseline().label(), "baseline");
        assert_eq!(Setting::latency_ms(100.0).label(), "latency-100ms");
        assert_eq!(Setting::latency_ms(100.0).kind(), RowKind::Latency);
        assert_eq!(Setting::latency_ms(0.0).kind(), RowKind::Baseline);
        let g = Setting::parse("gps:15").unwrap();
        assert_eq!(g.label(), "gps-15m");
        assert_eq!(g.kind(), RowKind::Perturbation);
        assert_eq!(
            Setting::parse("burst:60").unwrap().display_label(20),
            "Burst 3s"
        );
        assert!(Setting::parse("occlusion:1.0").is_err());
        assert!(Setting::parse("fog:1").is_err());
        assert!(Setting::parse("burst:2.5").is_err());
        let both = Setting::parse("gps:5+latency:200").unwrap();
        assert_eq!(both.label(), "gps-5m+latency-200ms");
    }

    #[test]
    fn paper_preset_grid() {
        let p = paper_preset();
        assert_eq!(p.len(), 11);
        let labels: Vec<String> = p.iter().map(|s| s.label()).collect();
        assert_eq!(
            labels,
            [
                "occlusion-0.5",
                "occlusion-0.8",
                "burst-20t",
                "burst-60t",
                "gps-5m",
                "gps-15m",
                "speed-n0.5",
                "speed-n0.2",
                "latency-100ms",
                "latency-200ms",
                "latency-500ms"
            ]
        );
        assert_eq!(p.iter().filter(|s| s.kind() == RowKind::Latency).count(), 3);
        assert!(parse_settings("none").unwrap().is_empty());
    }

    #[test]
    fn identity_setting_matches_bare_loop() {
        let cfg = EvalConfig::default();
        let r = route("lead_stop_01");
        let rec = run_route("full-pursuit", &r, &Setting::baseline(), &cfg).unwrap();
        let bare = run_route_bare("full-pursuit", &r, &cfg).unwrap();
        assert_eq!(rec.ticks.len(), bare.len());
        for (t, b) in rec.ticks.iter().zip(&bare) {
            assert_eq!(t.clean, t.perturbed);
            assert_eq!(t.perturbed, b.digest);
            assert_eq!(t.applied, b.action);
            assert_eq!(t.ego, b.ego);
        }
    }

    #[test]
    fn deadreckon_ignores_gps_noise() {
        let cfg = EvalConfig::default();
        let r = route("curve_01");
        let clean = run_route("deadreckon", &r, &Setting::baseline(), &cfg).unwrap();
        let noisy = run_route(
            "deadreckon",
            &r,
            &Setting::perturbation(PerturbationSpec::gps(15.0)),
            &cfg,
        )
        .unwrap();
        assert_eq!(clean.ticks.len(), noisy.ticks.len());
        for (a, b) in clean.ticks.iter().zip(&noisy.ticks) {
            assert_eq!(a.applied, b.applied);
        }
    }

    #[test]
    fn record_round_trips() {
        let cfg = EvalConfig::default();
        let r = route("straight_01");
        let rec = run_route(
            "blind-follower",
            &r,
            &Setting::parse("occlusion:0.5").unwrap(),
            &cfg,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        rec.write(&p).unwrap();
        let back = RunRecord::read(&p).unwrap();
        assert_eq!(back.header, rec.header);
        assert_eq!(back.result, rec.result);
        assert_eq!(back.ticks.len(), rec.ticks.len());
        assert_eq!(back.to_jsonl().unwrap(), rec.to_jsonl().unwrap());
    }

    #[test]
    fn empty_settings_give_baseline_only() {
        let spec = SweepSpec {
            name: "t".into(),
            policies: vec!["full-pursuit".into()],
            routes: vec![route("straight_01")],
            settings: vec![],
            config: EvalConfig::default(),
            out_dir: None,
            jobs: 1,
            resume: false,
        };
        let rep = run_sweep(&spec).unwrap();
        assert_eq!(rep.policies.len(), 1);
        assert!(rep.policies[0].rows.is_empty());
        assert_eq!(rep.policies[0].baseline.rd, Some(0.0));
    }
}
