//! Layered configuration: TOML file, then command-line flags, then
//! environment variables. Later layers override earlier ones field by field.
//!
//! ```toml
//! seed = 7
//! sim_rate = 20
//! jobs = 4
//!
//! [robustness]
//! enable = true
//! partial_obs_ratio = 0.5
//!
//! [latency]
//! enable = true
//! ms = 200
//!
//! [run]
//! policy = "full-pursuit"
//! route = "curve_01"
//!
//! [sweep]
//! preset = "paper"
//! policies = ["all"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{paper_preset, parse_settings, EvalConfig, PolicyOverrides, Setting};
use crate::latency::{load_trace, LatencySpec};
use crate::metrics::{ComfortLimits, Penalties};
use crate::perturb::{Family, PerturbationSpec};
use crate::world::WorldConfig;

/// Environment variables read on top of the file and flags.
pub const ENV_VARS: [(&str, &str); 11] = [
    (
        "ROBUSTNESS_ENABLE",
        "enable observation-side perturbations (bool)",
    ),
    (
        "ROBUSTNESS_SEED",
        "global seed for every perturbation stream (u64)",
    ),
    ("BURST_MAX_TICKS", "cached burst length in ticks"),
    ("BURST_PROBABILITY", "per-tick burst onset probability"),
    ("PARTIAL_OBS_RATIO", "occluded fraction of the camera image"),
    (
        "GPS_NOISE_STD",
        "GPS noise standard deviation per axis, metres",
    ),
    ("SPEED_BIAS_MEAN", "mean of the speed multiplier"),
    (
        "SPEED_BIAS_STD",
        "standard deviation of the speed multiplier",
    ),
    (
        "INFERENCE_LATENCY_ENABLE",
        "enable action-side latency (bool)",
    ),
    (
        "INFERENCE_LATENCY_MS",
        "fixed inference latency, milliseconds",
    ),
    ("SIM_RATE", "simulation and control rate, Hz"),
];

/// Variables a preset sweep honours; the rest define single runs only.
pub const SWEEP_ENV_VARS: [&str; 4] = [
    "ROBUSTNESS_SEED",
    "SIM_RATE",
    "BURST_PROBABILITY",
    "SPEED_BIAS_STD",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub enable: Option<bool>,
    pub burst_max_ticks: Option<u64>,
    pub burst_probability: Option<f64>,
    pub burst_streams: Option<usize>,
    pub burst_schedule: Option<Vec<u64>>,
    pub partial_obs_ratio: Option<f64>,
    pub mask_fill: Option<f32>,
    pub mask_resample_ticks: Option<u64>,
    pub gps_noise_std: Option<f64>,
    pub speed_bias_mean: Option<f64>,
    pub speed_bias_std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub enable: Option<bool>,
    pub ms: Option<f64>,
    /// Per-tick inference times; switches to realtime mode.
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub policy: Option<String>,
    pub route: Option<String>,
    /// Where to write the run record.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub name: Option<String>,
    pub preset: Option<String>,
    /// Comma-separated settings, e.g. `gps:5,latency:100`.
    pub settings: Option<String>,
    pub policies: Option<Vec<String>>,
    pub out_dir: Option<PathBuf>,
    pub resume: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub sim_rate: Option<u32>,
    pub jobs: Option<usize>,
    /// Directory of route files; the bundled suite when unset.
    pub routes_dir: Option<PathBuf>,
    pub record_rasters: Option<bool>,
    pub robustness: RobustnessConfig,
    pub latency: LatencyConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub world: Option<WorldConfig>,
    pub penalties: Option<Penalties>,
    pub comfort: Option<ComfortLimits>,
    pub policies: BTreeMap<String, PolicyOverrides>,
}

fn over<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
    if src.is_some() {
        *dst = src.clone();
    }
}

/// Accepts `1/true/yes/on` and `0/false/no/off`, case-insensitively.
pub fn parse_bool(text: &str) -> Option<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn env_value<T: std::str::FromStr>(name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{name}={raw:?} is not a valid value")))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Overlays every field set in `other`.
    pub fn merge(&mut self, other: &Config) {
        over(&mut self.seed, &other.seed);
        over(&mut self.sim_rate, &other.sim_rate);
        over(&mut self.jobs, &other.jobs);
        over(&mut self.routes_dir, &other.routes_dir);
        over(&mut self.record_rasters, &other.record_rasters);

        let (r, o) = (&mut self.robustness, &other.robustness);
        over(&mut r.enable, &o.enable);
        over(&mut r.burst_max_ticks, &o.burst_max_ticks);
        over(&mut r.burst_probability, &o.burst_probability);
        over(&mut r.burst_streams, &o.burst_streams);
        over(&mut r.burst_schedule, &o.burst_schedule);
        over(&mut r.partial_obs_ratio, &o.partial_obs_ratio);
        over(&mut r.mask_fill, &o.mask_fill);
        over(&mut r.mask_resample_ticks, &o.mask_resample_ticks);
        over(&mut r.gps_noise_std, &o.gps_noise_std);
        over(&mut r.speed_bias_mean, &o.speed_bias_mean);
        over(&mut r.speed_bias_std, &o.speed_bias_std);

        over(&mut self.latency.enable, &other.latency.enable);
        over(&mut self.latency.ms, &other.latency.ms);
        over(&mut self.latency.trace, &other.latency.trace);

        over(&mut self.run.policy, &other.run.policy);
        over(&mut self.run.route, &other.run.route);
        over(&mut self.run.out, &other.run.out);

        let (s, o) = (&mut self.sweep, &other.sweep);
        over(&mut s.name, &o.name);
        over(&mut s.preset, &o.preset);
        over(&mut s.settings, &o.settings);
        over(&mut s.policies, &o.policies);
        over(&mut s.out_dir, &o.out_dir);
        over(&mut s.resume, &o.resume);

        over(&mut self.world, &other.world);
        over(&mut self.penalties, &other.penalties);
        over(&mut self.comfort, &other.comfort);
        for (k, v) in &other.policies {
            self.policies.insert(k.clone(), v.clone());
        }
    }

    /// Builds the environment layer from `lookup` (normally `std::env::var`).
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut c = Config::default();
        let get = |name: &str| lookup(name).filter(|v| !v.trim().is_empty());
        let flag = |name: &str| -> Result<Option<bool>> {
            get(name)
                .map(|v| {
                    parse_bool(&v)
                        .ok_or_else(|| Error::Config(format!("{name}={v:?} is not a boolean")))
                })
                .transpose()
        };
        c.robustness.enable = flag("ROBUSTNESS_ENABLE")?;
        c.latency.enable = flag("INFERENCE_LATENCY_ENABLE")?;
        macro_rules! num {
            ($dst:expr, $name:literal) => {
                if let Some(v) = get($name) {
                    $dst = Some(env_value($name, &v)?);
                }
            };
        }
        num!(c.seed, "ROBUSTNESS_SEED");
        num!(c.sim_rate, "SIM_RATE");
        num!(c.robustness.burst_max_ticks, "BURST_MAX_TICKS");
        num!(c.robustness.burst_probability, "BURST_PROBABILITY");
        num!(c.robustness.partial_obs_ratio, "PARTIAL_OBS_RATIO");
        num!(c.robustness.gps_noise_std, "GPS_NOISE_STD");
        num!(c.robustness.speed_bias_mean, "SPEED_BIAS_MEAN");
        num!(c.robustness.speed_bias_std, "SPEED_BIAS_STD");
        num!(c.latency.ms, "INFERENCE_LATENCY_MS");
        Ok(c)
    }

    /// Only the fields a preset sweep takes from the environment.
    pub fn sweep_env_subset(&self) -> Config {
        let mut c = Config {
            seed: self.seed,
            sim_rate: self.sim_rate,
            ..Config::default()
        };
        c.robustness.burst_probability = self.robustness.burst_probability;
        c.robustness.speed_bias_std = self.robustness.speed_bias_std;
        c
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let mut world = self.world.clone().unwrap_or_default();
        if let Some(rate) = self.sim_rate {
            if rate == 0 {
                return Err(Error::Config("sim_rate must be positive".into()));
            }
            world = world.with_rate(rate);
        }
        let mut cfg = EvalConfig {
            world,
            policies: self.policies.clone(),
            ..EvalConfig::default()
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(p) = &self.penalties {
            cfg.penalties = p.clone();
        }
        if let Some(c) = &self.comfort {
            cfg.comfort = c.clone();
        }
        cfg.record_rasters = self.record_rasters.unwrap_or(false);
        Ok(cfg)
    }

    /// Applies the shared knobs (probability, stream count, mask options,
    /// speed spread) to a family spec.
    fn tune(&self, mut spec: PerturbationSpec) -> PerturbationSpec {
        let r = &self.robustness;
        match spec.family {
            Family::Burst => {
                if let Some(p) = r.burst_probability {
                    spec.burst_probability = p;
                }
                if let Some(n) = r.burst_streams {
                    spec.burst_streams = n;
                }
                if let Some(s) = &r.burst_schedule {
                    spec.burst_schedule = s.clone();
                }
            }
            Family::Occlusion => {
                if let Some(f) = r.mask_fill {
                    spec.mask_fill = f;
                }
                if let Some(k) = r.mask_resample_ticks {
                    spec.mask_resample_ticks = k;
                }
            }
            Family::Speed => {
                if let Some(s) = r.speed_bias_std {
                    spec.speed_std = s;
                }
            }
            Family::Gps | Family::None => {}
        }
        spec
    }

    /// The setting of a single run. Observation families are active only
    /// when enabled and given a severity; latency only when enabled.
    pub fn run_setting(&self) -> Result<Setting> {
        let r = &self.robustness;
        let mut setting = Setting::baseline();
        if r.enable.unwrap_or(false) {
            if let Some(ticks) = r.burst_max_ticks.filter(|&t| t > 0) {
                setting
                    .perturbations
                    .push(self.tune(PerturbationSpec::burst(ticks)));
            }
            if let Some(ratio) = r.partial_obs_ratio.filter(|&v| v > 0.0) {
                setting
                    .perturbations
                    .push(self.tune(PerturbationSpec::occlusion(ratio)));
            }
            if let Some(std) = r.gps_noise_std.filter(|&v| v > 0.0) {
                setting
                    .perturbations
                    .push(self.tune(PerturbationSpec::gps(std)));
            }
            if let Some(mu) = r.speed_bias_mean {
                setting
                    .perturbations
                    .push(self.tune(PerturbationSpec::speed(mu)));
            }
        }
        if self.latency.enable.unwrap_or(false) {
            setting.latency = match (&self.latency.trace, self.latency.ms) {
                (Some(path), _) => LatencySpec::realtime(load_trace(path)?),
                (None, Some(ms)) => LatencySpec::fixed(ms),
                (None, None) => {
                    return Err(Error::Config(
                        "latency is enabled but neither a latency in ms nor a trace is set".into(),
                    ))
                }
            };
        }
        setting.validate()?;
        Ok(setting)
    }

    /// Settings of a sweep: an explicit list wins over a preset; with
    /// neither the `paper` preset is used.
    pub fn sweep_settings(&self) -> Result<Vec<Setting>> {
        let base = match (&self.sweep.settings, &self.sweep.preset) {
            (Some(list), _) => parse_settings(list)?,
            (None, Some(preset)) => match preset.as_str() {
                "paper" => paper_preset(),
                "none" => Vec::new(),
                other => return Err(Error::Config(format!("unknown preset {other:?}"))),
            },
            (None, None) => paper_preset(),
        };
        let settings: Vec<Setting> = base
            .into_iter()
            .map(|mut s| {
                s.perturbations = s.perturbations.into_iter().map(|p| self.tune(p)).collect();
                s
            })
            .collect();
        for s in &settings {
            s.validate()?;
        }
        Ok(settings)
    }

    pub fn sweep_policies(&self) -> Vec<String> {
        self.sweep
            .policies
            .clone()
            .unwrap_or_else(|| vec!["all".to_string()])
    }
}

/// Help text listing every environment variable.
pub fn env_help() -> String {
    let mut s = String::from("Environment variables (override config file and flags):\n");
    for (name, what) in ENV_VARS {
        s.push_str(&format!("  {name:<26} {what}\n"));
    }
    s.push_str(&format!(
        "Sweeps read only {} from the environment.\n",
        SWEEP_ENV_VARS.join(", ")
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::LatencyMode;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: BTreeMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn bool_spellings() {
        for t in ["1", "true", "YES", "On"] {
            assert_eq!(parse_bool(t), Some(true));
        }
        for f in ["0", "false", "no", "OFF"] {
            assert_eq!(parse_bool(f), Some(false));
        }
        assert_eq!(parse_bool("maybe"), None);
    }

    #[test]
    fn env_overrides_file_and_flags() {
        let mut file = Config::from_toml_str(
            "seed = 1\n[robustness]\nenable = true\ngps_noise_std = 5.0\n",
            Path::new("c.toml"),
        )
        .unwrap();
        let mut flags = Config {
            seed: Some(2),
            ..Config::default()
        };
        flags.robustness.gps_noise_std = Some(10.0);
        file.merge(&flags);
        assert_eq!(file.seed, Some(2));
        let e =
            Config::from_env(env(&[("GPS_NOISE_STD", "15"), ("ROBUSTNESS_SEED", "9")])).unwrap();
        file.merge(&e);
        assert_eq!(file.seed, Some(9));
        let s = file.run_setting().unwrap();
        assert_eq!(s.perturbations, vec![PerturbationSpec::gps(15.0)]);
    }

    #[test]
    fn disabled_robustness_is_clean() {
        let c = Config::from_env(env(&[
            ("ROBUSTNESS_ENABLE", "off"),
            ("PARTIAL_OBS_RATIO", "0.5"),
        ]))
        .unwrap();
        assert!(c.run_setting().unwrap().is_baseline());
    }

    #[test]
    fn latency_env() {
        let c = Config::from_env(env(&[
            ("INFERENCE_LATENCY_ENABLE", "1"),
            ("INFERENCE_LATENCY_MS", "500"),
            ("SIM_RATE", "20"),
        ]))
        .unwrap();
        let s = c.run_setting().unwrap();
        assert_eq!(s.latency.mode, LatencyMode::Fixed);
        assert_eq!(s.latency.latency_ms, 500.0);
        assert_eq!(c.eval_config().unwrap().rate_hz(), 20);
    }

    #[test]
    fn bad_env_values_are_errors() {
        assert!(Config::from_env(env(&[("ROBUSTNESS_ENABLE", "sure")])).is_err());
        assert!(Config::from_env(env(&[("SIM_RATE", "fast")])).is_err());
        let c = Config::from_env(env(&[("INFERENCE_LATENCY_ENABLE", "yes")])).unwrap();
        assert!(c.run_setting().is_err());
    }

    #[test]
    fn sweep_subset_keeps_shared_knobs_only() {
        let c = Config::from_env(env(&[
            ("ROBUSTNESS_SEED", "3"),
            ("BURST_PROBABILITY", "0.2"),
            ("GPS_NOISE_STD", "15"),
            ("SPEED_BIAS_STD", "0.1"),
        ]))
        .unwrap()
        .sweep_env_subset();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.robustness.gps_noise_std, None);
        let settings = c.sweep_settings().unwrap();
        assert_eq!(settings.len(), 11);
        let burst = &settings[2].perturbations[0];
        assert_eq!(burst.burst_probability, 0.2);
        let speed = &settings[6].perturbations[0];
        assert_eq!(speed.speed_std, 0.1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml_str("sedd = 1\n", Path::new("x.toml")).is_err());
        assert!(Config::from_toml_str("[sweep]\npreset = 1\n", Path::new("x.toml")).is_err());
    }

    #[test]
    fn help_lists_every_variable() {
        let h = env_help();
        for (name, _) in ENV_VARS {
            assert!(h.contains(name));
        }
    }
}
