//! Observation-path processors: cached burst frame drop, occlusion masking,
//! GPS noise and speed noise.
//!
//! Processors sit between `Simulator::observe` and the policy. They take an
//! observation and a per-tick random stream and return a new observation;
//! they never see the world state. Every draw comes from
//! `family_stream.fork(tick)`, so the perturbation at a tick depends only on
//! `(seed, route, family, tick)` and is shared by every policy on that route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{sample_gaussian, SeedTree, Stream};
use crate::types::{Observation, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    None,
    Burst,
    Occlusion,
    Gps,
    Speed,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::None => "none",
            Family::Burst => "burst",
            Family::Occlusion => "occlusion",
            Family::Gps => "gps",
            Family::Speed => "speed",
        }
    }
}

/// One perturbation family and its severity. Only the fields of `family`
/// are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub family: Family,
    pub burst_len_ticks: u64,
    pub burst_probability: f64,
    /// Forced onset ticks. When non-empty the probability is ignored.
    pub burst_schedule: Vec<u64>,
    /// Number of independent camera streams, as equal vertical strips.
    pub burst_streams: usize,
    pub mask_ratio: f64,
    pub mask_fill: f32,
    pub mask_resample_ticks: u64,
    pub gps_std: f64,
    pub speed_mu: f64,
    pub speed_std: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            family: Family::None,
            burst_len_ticks: 20,
            burst_probability: 0.1,
            burst_schedule: Vec::new(),
            burst_streams: 1,
            mask_ratio: 0.0,
            mask_fill: 0.0,
            mask_resample_ticks: 1,
            gps_std: 0.0,
            speed_mu: 1.0,
            speed_std: 0.2,
        }
    }
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn burst(len_ticks: u64) -> Self {
        Self {
            family: Family::Burst,
            burst_len_ticks: len_ticks,
            ..Self::default()
        }
    }

    pub fn occlusion(ratio: f64) -> Self {
        Self {
            family: Family::Occlusion,
            mask_ratio: ratio,
            ..Self::default()
        }
    }

    pub fn gps(std: f64) -> Self {
        Self {
            family: Family::Gps,
            gps_std: std,
            ..Self::default()
        }
    }

    pub fn speed(mu: f64) -> Self {
        Self {
            family: Family::Speed,
            speed_mu: mu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self.family {
            Family::None => Ok(()),
            Family::Burst => {
                if self.burst_len_ticks == 0 {
                    return bad("burst length must be at least one tick".into());
                }
                if !(0.0..=1.0).contains(&self.burst_probability) {
                    return bad(format!(
                        "burst probability must be in [0, 1], got {}",
                        self.burst_probability
                    ));
                }
                if self.burst_streams == 0 {
                    return bad("burst needs at least one stream".into());
                }
                Ok(())
            }
            Family::Occlusion => {
                if !(0.0..1.0).contains(&self.mask_ratio) {
                    return bad(format!(
                        "mask ratio must be in [0, 1), got {}",
                        self.mask_ratio
                    ));
                }
                if self.mask_resample_ticks == 0 {
                    return bad("mask resample period must be positive".into());
                }
                if !(0.0..=1.0).contains(&self.mask_fill) {
                    return bad(format!(
                        "mask fill must be in [0, 1], got {}",
                        self.mask_fill
                    ));
                }
                Ok(())
            }
            Family::Gps => {
                if !(self.gps_std >= 0.0 && self.gps_std.is_finite()) {
                    return bad(format!(
                        "gps std must be finite and >= 0, got {}",
                        self.gps_std
                    ));
                }
                Ok(())
            }
            Family::Speed => {
                if !self.speed_mu.is_finite() {
                    return bad(format!("speed mean must be finite, got {}", self.speed_mu));
                }
                if !(self.speed_std >= 0.0 && self.speed_std.is_finite()) {
                    return bad(format!(
                        "speed std must be finite and >= 0, got {}",
                        self.speed_std
                    ));
                }
                Ok(())
            }
        }
    }

    /// Short machine label used in paths and CSV, e.g. `occlusion-0.5`.
    pub fn label(&self) -> String {
        match self.family {
            Family::None => "baseline".into(),
            Family::Burst => format!("burst-{}t", self.burst_len_ticks),
            Family::Occlusion => format!("occlusion-{}", self.mask_ratio),
            Family::Gps => format!("gps-{}m", self.gps_std),
            Family::Speed => format!("speed-n{}", self.speed_mu),
        }
    }

    /// Row label for human-readable tables.
    pub fn display_label(&self, rate_hz: u32) -> String {
        match self.family {
            Family::None => "Baseline".into(),
            Family::Burst => {
                format!("Burst {}s", self.burst_len_ticks as f64 / rate_hz as f64)
            }
            Family::Occlusion => format!("Occlusion {}", self.mask_ratio),
            Family::Gps => format!("GPS {} m", self.gps_std),
            Family::Speed => format!("Speed-N({})", self.speed_mu),
        }
    }
}

/// Burst processor state for one camera stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BurstState {
    pub active: bool,
    /// Ticks of the current burst still to be emitted.
    pub remaining: u64,
    /// Most recent frame that was delivered fresh.
    pub cached_frame: Option<Raster>,
    pub cached_from_tick: Option<u64>,
}

/// One tick of the burst processor on a single frame.
///
/// Fresh ticks refresh the cache. A burst can start at tick `t` only if
/// the frame of `t - 1` was fresh; it then emits that cached frame for
/// exactly `burst_len_ticks` ticks. `draw` is a uniform in `[0, 1)`.
fn burst_frame(
    frame: &Raster,
    state: &BurstState,
    spec: &PerturbationSpec,
    tick: u64,
    draw: f64,
) -> (Raster, BurstState) {
    let mut next = state.clone();
    if state.active {
        next.remaining -= 1;
        next.active = next.remaining > 0;
        let cached = state
            .cached_frame
            .clone()
            .expect("active burst has a cache");
        return (cached, next);
    }
    let eligible = tick > 0 && state.cached_from_tick == Some(tick - 1);
    let start = eligible
        && if spec.burst_schedule.is_empty() {
            draw < spec.burst_probability
        } else {
            spec.burst_schedule.contains(&tick)
        };
    if start {
        next.remaining = spec.burst_len_ticks - 1;
        next.active = next.remaining > 0;
        let cached = state
            .cached_frame
            .clone()
            .expect("eligible implies a cache");
        return (cached, next);
    }
    next.cached_frame = Some(frame.clone());
    next.cached_from_tick = Some(tick);
    (frame.clone(), next)
}

/// Camera burst frame drop for a single stream.
///
/// `stream` must be the burst stream forked at `obs.stamp`. Only the camera
/// is touched; the stamp keeps advancing.
pub fn apply_burst(
    obs: &Observation,
    state: &BurstState,
    spec: &PerturbationSpec,
    stream: &mut Stream,
) -> (Observation, BurstState) {
    let draw = stream.next_f64();
    let (camera, next) = burst_frame(&obs.camera, state, spec, obs.stamp, draw);
    let mut out = obs.clone();
    out.camera = camera;
    (out, next)
}

/// Column range of strip `i` out of `n` over `width` columns.
pub fn strip_columns(width: usize, n: usize, i: usize) -> (usize, usize) {
    (i * width / n, (i + 1) * width / n)
}

fn crop_columns(r: &Raster, c0: usize, c1: usize) -> Raster {
    let mut out = Raster::filled(c1 - c0, r.height, 0.0);
    for row in 0..r.height {
        for col in c0..c1 {
            out.set(col - c0, row, r.get(col, row));
        }
    }
    out
}

fn paste_columns(dst: &mut Raster, src: &Raster, c0: usize) {
    for row in 0..src.height {
        for col in 0..src.width {
            dst.set(c0 + col, row, src.get(col, row));
        }
    }
}

/// Pixel region blacked out by the occlusion processor.
///
/// The region is `rows` full rows of width `w` plus, when the target count
/// is not a multiple of `w`, one partial row of `count - rows * w` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub count: usize,
}

impl MaskRect {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        if col < self.x || col >= self.x + self.w || row < self.y || row >= self.y + self.h {
            return false;
        }
        let index = (row - self.y) * self.w + (col - self.x);
        index < self.count
    }
}

/// Target masked pixel count, `ceil(r * W * H)`.
pub fn mask_pixel_count(ratio: f64, width: usize, height: usize) -> usize {
    // The guard absorbs representation error such as 0.3 * 4096 landing just
    // above an integer.
    let exact = ratio * (width * height) as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(width * height)
}

/// Samples a mask covering exactly `mask_pixel_count(ratio, W, H)` pixels.
pub fn sample_mask(ratio: f64, width: usize, height: usize, stream: &mut Stream) -> MaskRect {
    let n = mask_pixel_count(ratio, width, height);
    if n == 0 {
        return MaskRect {
            x: 0,
            y: 0,
            w: 0,
            h: 0,
            count: 0,
        };
    }
    let aspect = stream.uniform(0.5, 2.0);
    let h0 = ((n as f64 / aspect).sqrt().round() as usize).clamp(1, height);
    let w = n.div_ceil(h0).min(width);
    let h = n.div_ceil(w);
    let x = stream.below_inclusive((width - w) as u64) as usize;
    let y = stream.below_inclusive((height - h) as u64) as usize;
    MaskRect {
        x,
        y,
        w,
        h,
        count: n,
    }
}

fn paint_mask(raster: &mut Raster, mask: &MaskRect, fill: f32) {
    for i in 0..mask.count {
        raster.set(mask.x + i % mask.w, mask.y + i / mask.w, fill);
    }
}

/// Partial observation: blacks out a sampled region of the camera.
///
/// `stream` must be the occlusion stream forked at the mask's sample tick.
pub fn apply_occlusion(
    obs: &Observation,
    spec: &PerturbationSpec,
    stream: &mut Stream,
) -> Result<(Observation, MaskRect)> {
    if !(0.0..1.0).contains(&spec.mask_ratio) {
        return Err(Error::InvalidArgument(format!(
            "mask ratio must be in [0, 1), got {}",
            spec.mask_ratio
        )));
    }
    let mask = sample_mask(spec.mask_ratio, obs.camera.width, obs.camera.height, stream);
    let mut out = obs.clone();
    paint_mask(&mut out.camera, &mask, spec.mask_fill);
    Ok((out, mask))
}

/// Additive white Gaussian noise on each GPS axis.
pub fn apply_gps_noise(
    obs: &Observation,
    spec: &PerturbationSpec,
    stream: &mut Stream,
) -> Result<(Observation, [f64; 2])> {
    let ex = sample_gaussian(stream, 0.0, spec.gps_std)?;
    let ey = sample_gaussian(stream, 0.0, spec.gps_std)?;
    let mut out = obs.clone();
    out.gps.x += ex;
    out.gps.y += ey;
    Ok((out, [ex, ey]))
}

/// Multiplicative Gaussian noise on the speed reading, clamped at zero.
/// Returns the pre-clamp multiplier.
pub fn apply_speed_noise(
    obs: &Observation,
    spec: &PerturbationSpec,
    stream: &mut Stream,
) -> Result<(Observation, f64)> {
    let eta = sample_gaussian(stream, spec.speed_mu, spec.speed_std)?;
    let mut out = obs.clone();
    out.speed = (eta * obs.speed).max(0.0);
    Ok((out, eta))
}

/// What the processors did at one tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationLog {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_frozen: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_frame_tick: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskRect>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gps_noise: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed_eta: Option<f64>,
}

impl PerturbationLog {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

struct Stage {
    spec: PerturbationSpec,
    stream: Stream,
    bursts: Vec<BurstState>,
}

/// Ordered chain of processors owned by one rollout.
pub struct ObsPipeline {
    stages: Vec<Stage>,
}

impl ObsPipeline {
    /// Builds the chain for `specs` with streams derived below `route_tree`.
    /// Families of kind `none` are dropped.
    pub fn new(specs: &[PerturbationSpec], route_tree: &SeedTree) -> Result<Self> {
        let mut stages = Vec::new();
        for spec in specs.iter().filter(|s| s.family != Family::None) {
            spec.validate()?;
            let stream = route_tree.derive_stream(spec.family.as_str())?;
            let n = if spec.family == Family::Burst {
                spec.burst_streams
            } else {
                0
            };
            stages.push(Stage {
                spec: spec.clone(),
                stream,
                bursts: vec![BurstState::default(); n],
            });
        }
        Ok(Self { stages })
    }

    pub fn is_identity(&self) -> bool {
        self.stages.is_empty()
    }

    /// Applies every stage in order to the clean observation.
    pub fn process(&mut self, clean: &Observation) -> Result<(Observation, PerturbationLog)> {
        let tick = clean.stamp;
        let mut obs = clean.clone();
        let mut log = PerturbationLog::default();
        for stage in &mut self.stages {
            let spec = &stage.spec;
            match spec.family {
                Family::None => {}
                Family::Burst => {
                    let n = stage.bursts.len();
                    let mut frozen = Vec::with_capacity(n);
                    let mut frame_tick = Vec::with_capacity(n);
                    let mut camera = obs.camera.clone();
                    for (i, state) in stage.bursts.iter_mut().enumerate() {
                        let mut s = stage.stream.fork(i as u64).fork(tick);
                        let (c0, c1) = strip_columns(obs.camera.width, n, i);
                        let strip = if n == 1 {
                            obs.camera.clone()
                        } else {
                            crop_columns(&obs.camera, c0, c1)
                        };
                        let (out, next) = burst_frame(&strip, state, spec, tick, s.next_f64());
                        let stale = next.cached_from_tick != Some(tick);
                        frozen.push(stale);
                        frame_tick.push(next.cached_from_tick.unwrap_or(tick));
                        if stale {
                            paste_columns(&mut camera, &out, c0);
                        }
                        *state = next;
                    }
                    obs.camera = camera;
                    log.burst_frozen = Some(frozen);
                    log.burst_frame_tick = Some(frame_tick);
                }
                Family::Occlusion => {
                    let sample_tick = tick - tick % spec.mask_resample_ticks;
                    let mut s = stage.stream.fork(sample_tick);
                    let (out, mask) = apply_occlusion(&obs, spec, &mut s)?;
                    obs = out;
                    log.mask = Some(mask);
                }
                Family::Gps => {
                    let mut s = stage.stream.fork(tick);
                    let (out, eps) = apply_gps_noise(&obs, spec, &mut s)?;
                    obs = out;
                    log.gps_noise = Some(eps);
                }
                Family::Speed => {
                    let mut s = stage.stream.fork(tick);
                    let (out, eta) = apply_speed_noise(&obs, spec, &mut s)?;
                    obs = out;
                    log.speed_eta = Some(eta);
                }
            }
        }
        Ok((obs, log))
    }
}
