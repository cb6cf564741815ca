//! Action-path delay: immediate, fixed-delay FIFO, and realtime scheduling.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Action;

/// Converts a latency in milliseconds to whole simulator ticks, rounding down.
pub fn ticks_from_ms(latency_ms: f64, rate_hz: u32) -> u64 {
    debug_assert!(latency_ms >= 0.0);
    // Guard keeps exact products such as 0.3 * 20 from rounding under.
    (latency_ms * rate_hz as f64 / 1000.0 + 1e-9)
        .floor()
        .max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    Immediate,
    Fixed,
    Realtime,
}

/// Latency setting of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySpec {
    pub mode: LatencyMode,
    pub latency_ms: f64,
    /// Per-tick inference times for realtime mode, cycled when shorter
    /// than the run. Empty means a constant `latency_ms`.
    pub trace_ms: Vec<f64>,
}

impl Default for LatencySpec {
    fn default() -> Self {
        Self {
            mode: LatencyMode::Immediate,
            latency_ms: 0.0,
            trace_ms: Vec::new(),
        }
    }
}

impl LatencySpec {
    pub fn immediate() -> Self {
        Self::default()
    }

    pub fn fixed(latency_ms: f64) -> Self {
        Self {
            mode: LatencyMode::Fixed,
            latency_ms,
            trace_ms: Vec::new(),
        }
    }

    pub fn realtime(trace_ms: Vec<f64>) -> Self {
        Self {
            mode: LatencyMode::Realtime,
            latency_ms: 0.0,
            trace_ms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.latency_ms) {
            return Err(Error::InvalidArgument(format!(
                "latency must be finite and >= 0 ms, got {}",
                self.latency_ms
            )));
        }
        if let Some(v) = self.trace_ms.iter().find(|v| !ok(**v)) {
            return Err(Error::InvalidArgument(format!(
                "bad inference time in trace: {v}"
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        match self.mode {
            LatencyMode::Immediate => true,
            LatencyMode::Fixed => self.latency_ms == 0.0,
            LatencyMode::Realtime => false,
        }
    }

    pub fn label(&self) -> String {
        match self.mode {
            LatencyMode::Immediate => "immediate".into(),
            LatencyMode::Fixed => format!("latency-{}ms", self.latency_ms),
            LatencyMode::Realtime => "latency-realtime".into(),
        }
    }

    pub fn display_label(&self) -> String {
        match self.mode {
            LatencyMode::Immediate => "Immediate".into(),
            LatencyMode::Fixed => format!("Latency {} ms", self.latency_ms),
            LatencyMode::Realtime => "Latency realtime".into(),
        }
    }

    fn measured_ms(&self, tick: u64) -> f64 {
        if self.trace_ms.is_empty() {
            self.latency_ms
        } else {
            self.trace_ms[(tick % self.trace_ms.len() as u64) as usize]
        }
    }
}

/// Reads an inference-time trace: one millisecond value per line; blank
/// lines and `#` comments are skipped.
pub fn load_trace(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            reason: format!("line {}: not a number: {line:?}", i + 1),
        })?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                reason: format!("line {}: inference time must be >= 0", i + 1),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            reason: "trace is empty".into(),
        });
    }
    Ok(out)
}

/// Sits between the policy and the simulator. One per rollout.
#[derive(Debug, Clone)]
pub struct ActionBuffer {
    mode: LatencyMode,
    delay_ticks: u64,
    rate_hz: u32,
    queue: VecDeque<Action>,
    /// Realtime mode: `(landing tick, action)` in creation order.
    in_flight: VecDeque<(u64, Action)>,
    last_applied: Action,
    warmup_action: Action,
    spec: LatencySpec,
}

impl ActionBuffer {
    pub fn new(spec: &LatencySpec, rate_hz: u32, warmup_action: Action) -> Result<Self> {
        spec.validate()?;
        let delay_ticks = match spec.mode {
            LatencyMode::Fixed => ticks_from_ms(spec.latency_ms, rate_hz),
            _ => 0,
        };
        Ok(Self {
            mode: spec.mode,
            delay_ticks,
            rate_hz,
            queue: VecDeque::with_capacity(delay_ticks as usize + 1),
            in_flight: VecDeque::new(),
            last_applied: warmup_action,
            warmup_action,
            spec: spec.clone(),
        })
    }

    /// Fixed-delay buffer with `delay_ticks` and a full-brake warmup.
    pub fn fixed_ticks(delay_ticks: u64) -> Self {
        let warmup = Action::full_brake(0);
        Self {
            mode: LatencyMode::Fixed,
            delay_ticks,
            rate_hz: crate::types::DEFAULT_SIM_RATE_HZ,
            queue: VecDeque::with_capacity(delay_ticks as usize + 1),
            in_flight: VecDeque::new(),
            last_applied: warmup,
            warmup_action: warmup,
            spec: LatencySpec::fixed(0.0),
        }
    }

    pub fn mode(&self) -> LatencyMode {
        self.mode
    }

    pub fn delay_ticks(&self) -> u64 {
        self.delay_ticks
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn last_applied(&self) -> Action {
        self.last_applied
    }

    pub fn warmup_action(&self) -> Action {
        self.warmup_action
    }

    /// Submits the action computed at `tick` and returns the one to execute.
    ///
    /// Called once per tick with consecutive ticks starting at 0.
    pub fn push_then_pop(&mut self, fresh: Action, tick: u64) -> Action {
        debug_assert_eq!(fresh.created_tick, tick);
        match self.mode {
            LatencyMode::Immediate => {
                self.last_applied = fresh;
                fresh
            }
            LatencyMode::Fixed => {
                self.queue.push_back(fresh);
                let out = if tick >= self.delay_ticks {
                    self.queue
                        .pop_front()
                        .expect("queue holds delay + 1 actions")
                } else {
                    self.warmup_action
                };
                self.last_applied = out;
                out
            }
            LatencyMode::Realtime => {
                let ms = self.spec.measured_ms(tick);
                self.realtime_apply(fresh, ms, tick)
            }
        }
    }

    /// Realtime scheduling with a measured inference time for `fresh`.
    ///
    /// The action becomes available `floor(ms * rate / 1000)` ticks after it
    /// was created. Each tick executes the newest available action, or
    /// repeats the last executed one when nothing new has landed.
    pub fn realtime_apply(
        &mut self,
        fresh: Action,
        measured_inference_ms: f64,
        tick: u64,
    ) -> Action {
        let land = tick + ticks_from_ms(measured_inference_ms.max(0.0), self.rate_hz);
        self.in_flight.push_back((land, fresh));
        let mut newest: Option<Action> = None;
        self.in_flight.retain(|&(at, a)| {
            if at <= tick {
                if newest.is_none_or(|n| a.created_tick > n.created_tick) {
                    newest = Some(a);
                }
                false
            } else {
                true
            }
        });
        if let Some(a) = newest {
            // Anything older than what just landed is obsolete.
            self.in_flight
                .retain(|&(_, b)| b.created_tick > a.created_tick);
            self.last_applied = a;
        }
        self.last_applied
    }
}
