//! Self-checks of the perturbation and metric code against independent
//! oracles: sample moments, whiteness, mask pixel counts, the FIFO shift,
//! the burst contract and the published RD/aggregate fixture.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::latency::{ticks_from_ms, ActionBuffer};
use crate::metrics::{mean_columns, robustness_degradation};
use crate::perturb::{ObsPipeline, PerturbationLog, PerturbationSpec};
use crate::reference::PUBLISHED;
use crate::seed::SeedTree;
use crate::types::{Action, Observation, Raster, Vec2};

pub const CHECKS: [&str; 6] = [
    "gaussian-moments",
    "gps-whiteness",
    "mask-count",
    "fifo-shift",
    "burst-contract",
    "rd-fixture",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Number of noise samples per severity.
pub const NOISE_SAMPLES: usize = 100_000;

fn obs(stamp: u64, camera: Raster) -> Observation {
    Observation {
        camera,
        gps: Vec2::new(10.0, -4.0),
        speed: 8.0,
        target_point: Vec2::new(18.0, -4.0),
        compass: 0.0,
        stamp,
    }
}

/// Per-tick logs of one processor on a tiny static observation.
fn noise_logs(spec: PerturbationSpec, seed: u64, n: usize) -> Result<Vec<PerturbationLog>> {
    let tree = SeedTree::new(seed).child("verify");
    let mut pipe = ObsPipeline::new(&[spec], &tree)?;
    let cam = Raster::filled(2, 2, 0.5);
    (0..n as u64)
        .map(|t| pipe.process(&obs(t, cam.clone())).map(|(_, log)| log))
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Sample lag-1 autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let cov: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

fn gps_axes(std: f64, seed: u64, fault: bool) -> Result<[Vec<f64>; 2]> {
    let logs = noise_logs(PerturbationSpec::gps(std), seed, NOISE_SAMPLES)?;
    let scale = if fault { 1.1 } else { 1.0 };
    let mut xs = Vec::with_capacity(logs.len());
    let mut ys = Vec::with_capacity(logs.len());
    for l in logs {
        let [x, y] = l.gps_noise.expect("gps stage logs its noise");
        xs.push(x * scale);
        ys.push(y * scale);
    }
    Ok([xs, ys])
}

fn gaussian_moments(seed: u64, fault: bool) -> Result<CheckResult> {
    let mut notes = Vec::new();
    let mut ok = true;
    for std in [5.0, 15.0] {
        for (axis, xs) in ["x", "y"].iter().zip(gps_axes(std, seed, fault)?) {
            let (m, s) = mean_std(&xs);
            let good =
                (s / std - 1.0).abs() < 0.02 && m.abs() < 4.0 * std / (xs.len() as f64).sqrt();
            ok &= good;
            notes.push(format!("gps {std} m {axis}: mean {m:.4} std {s:.4}"));
        }
    }
    for mu in [0.2, 0.5] {
        let logs = noise_logs(PerturbationSpec::speed(mu), seed, NOISE_SAMPLES)?;
        let etas: Vec<f64> = logs
            .iter()
            .map(|l| l.speed_eta.expect("speed stage logs eta"))
            .collect();
        let (m, s) = mean_std(&etas);
        let m = if fault { m * 1.1 } else { m };
        let good = (m / mu - 1.0).abs() < 0.025 && (s / 0.2 - 1.0).abs() < 0.05;
        ok &= good;
        notes.push(format!("speed mu {mu}: mean {m:.4} std {s:.4}"));
    }
    Ok(CheckResult {
        name: "gaussian-moments".into(),
        passed: ok,
        detail: notes.join("; "),
    })
}

fn gps_whiteness(seed: u64, fault: bool) -> Result<CheckResult> {
    let mut notes = Vec::new();
    let mut ok = true;
    for std in [5.0, 15.0] {
        for (axis, mut xs) in ["x", "y"].iter().zip(gps_axes(std, seed, false)?) {
            if fault {
                // A one-tick moving average is strongly correlated.
                xs = xs.windows(2).map(|w| w[0] + w[1]).collect();
            }
            let rho = lag1_autocorrelation(&xs);
            ok &= rho.abs() < 0.02;
            notes.push(format!("gps {std} m {axis}: rho {rho:+.4}"));
        }
    }
    Ok(CheckResult {
        name: "gps-whiteness".into(),
        passed: ok,
        detail: notes.join("; "),
    })
}

fn mask_count(seed: u64, fault: bool) -> Result<CheckResult> {
    let tree = SeedTree::new(seed).child("verify");
    let clean = Raster::filled(64, 64, 0.5);
    let mut bad = Vec::new();
    for i in 1..=9 {
        let r = i as f64 / 10.0;
        let expected = (r * 64.0 * 64.0).ceil() as usize + usize::from(fault);
        let mut pipe = ObsPipeline::new(&[PerturbationSpec::occlusion(r)], &tree)?;
        for t in 0..50 {
            let (out, log) = pipe.process(&obs(t, clean.clone()))?;
            let masked = out.camera.count(0.0);
            let logged = log.mask.map(|m| m.count).unwrap_or(0);
            if masked != expected || logged != masked {
                bad.push(format!("r {r} tick {t}: {masked} px, expected {expected}"));
            }
        }
    }
    Ok(CheckResult {
        name: "mask-count".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "ratios 0.1..0.9 x 50 ticks exact".into()
        } else {
            bad.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    })
}

fn fifo_shift(seed: u64, fault: bool) -> Result<CheckResult> {
    let mut stream = SeedTree::new(seed).derive_stream("verify-fifo")?;
    let mut bad = Vec::new();
    for case in 0..500 {
        let delay = stream.below_inclusive(50);
        let len = 1 + stream.below_inclusive(200) as usize;
        let mut buf = ActionBuffer::fixed_ticks(delay);
        let fresh: Vec<Action> = (0..len as u64)
            .map(|t| {
                Action::clamped(
                    stream.next_f64(),
                    stream.next_f64(),
                    stream.uniform(-1.0, 1.0),
                    t,
                )
            })
            .collect();
        let check_delay = delay + u64::from(fault);
        for (t, a) in fresh.iter().enumerate() {
            let applied = buf.push_then_pop(*a, t as u64);
            let expected = if (t as u64) < check_delay {
                buf.warmup_action()
            } else {
                fresh[t - check_delay as usize]
            };
            if applied != expected {
                bad.push(format!("case {case} delay {delay} tick {t}"));
                break;
            }
        }
    }
    let ticks: Vec<u64> = [100.0, 200.0, 500.0]
        .iter()
        .map(|&ms| ticks_from_ms(ms, 20))
        .collect();
    if ticks != [2, 4, 10] {
        bad.push(format!("ticks_from_ms gave {ticks:?}"));
    }
    Ok(CheckResult {
        name: "fifo-shift".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "500 sequences, delay 0..=50; 100/200/500 ms -> 2/4/10 ticks".into()
        } else {
            bad.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    })
}

/// A frame that encodes its tick and is never all zero.
fn tagged_frame(tick: u64) -> Raster {
    let mut r = Raster::filled(8, 8, 0.25);
    r.set((tick % 8) as usize, ((tick / 8) % 8) as usize, 1.0);
    r.set(0, 7, (tick % 1000) as f32 / 1000.0 + 0.001);
    r
}

/// Runs a forced burst of `len` ticks starting at `onset` and checks that
/// exactly those ticks re-emit the frame of `onset - 1`.
pub fn burst_contract_violations(
    len: u64,
    onset: u64,
    ticks: u64,
    expect_len: u64,
) -> Result<Vec<String>> {
    let mut spec = PerturbationSpec::burst(len);
    spec.burst_schedule = vec![onset];
    let mut pipe = ObsPipeline::new(&[spec], &SeedTree::new(0).child("verify"))?;
    let mut bad = Vec::new();
    let mut last_stamp = None;
    for t in 0..ticks {
        let (out, _) = pipe.process(&obs(t, tagged_frame(t)))?;
        let frozen = (onset..onset + expect_len).contains(&t);
        let source = if frozen { onset - 1 } else { t };
        if out.camera != tagged_frame(source) {
            bad.push(format!(
                "burst {len}: tick {t} does not show frame {source}"
            ));
        }
        if out.camera.is_all_zero() {
            bad.push(format!("burst {len}: tick {t} is all zero"));
        }
        if last_stamp.is_some_and(|s| out.stamp <= s) {
            bad.push(format!("burst {len}: stamp did not advance at {t}"));
        }
        last_stamp = Some(out.stamp);
    }
    Ok(bad)
}

fn burst_contract(fault: bool) -> Result<CheckResult> {
    let mut bad = Vec::new();
    for len in [20, 60] {
        bad.extend(burst_contract_violations(
            len,
            30,
            200,
            len + u64::from(fault),
        )?);
    }
    Ok(CheckResult {
        name: "burst-contract".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "20- and 60-tick bursts re-emit the last fresh frame exactly".into()
        } else {
            bad.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    })
}

/// Recomputes every published RD and average row from the published DS
/// and per-row values.
pub fn rd_fixture_mismatches(fault: bool) -> Vec<String> {
    let mut bad = Vec::new();
    for m in &PUBLISHED {
        let base = m.baseline_ds() + if fault { 1.0 } else { 0.0 };
        for row in m.rows {
            let rd = robustness_degradation(row.values[1], base);
            match rd {
                Some(rd) if (rd - row.values[0]).abs() <= 0.005 + 1e-9 => {}
                _ => bad.push(format!(
                    "{} {}: RD {rd:?} vs {}",
                    m.model, row.setting, row.values[0]
                )),
            }
        }
        let pick = |f: &dyn Fn(bool) -> bool| -> Vec<[f64; 5]> {
            m.rows
                .iter()
                .filter(|r| f(r.latency))
                .map(|r| r.values)
                .collect()
        };
        let sets = [
            ("Avg. perturb", pick(&|l| !l), m.avg_perturb),
            ("Avg. latency", pick(&|l| l), m.avg_latency),
            ("Avg. all", pick(&|_| true), m.avg_all),
        ];
        for (name, rows, published) in sets {
            let agg = mean_columns(&rows).expect("non-empty row set").columns();
            for (i, col) in ["RD", "DS", "SR", "Eff", "Comf"].iter().enumerate() {
                if (agg[i] - published[i]).abs() > 0.01 + 1e-9 {
                    bad.push(format!(
                        "{} {name} {col}: {:.4} vs {}",
                        m.model, agg[i], published[i]
                    ));
                }
            }
        }
    }
    bad
}

fn rd_fixture(fault: bool) -> CheckResult {
    let bad = rd_fixture_mismatches(fault);
    CheckResult {
        name: "rd-fixture".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "all RD values and average rows reproduced".into()
        } else {
            format!("{} mismatches, e.g. {}", bad.len(), bad[0])
        },
    }
}

/// Runs the named checks (all when `names` is empty). `fault` names a check
/// whose inputs are deliberately corrupted, to prove the check can fail.
pub fn run_checks(names: &[String], seed: u64, fault: Option<&str>) -> Result<Vec<CheckResult>> {
    for n in names.iter().map(String::as_str).chain(fault) {
        if !CHECKS.contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "unknown check {n:?}; known checks: {}",
                CHECKS.join(", ")
            )));
        }
    }
    let selected: Vec<&str> = if names.is_empty() {
        CHECKS.to_vec()
    } else {
        CHECKS
            .iter()
            .copied()
            .filter(|c| names.iter().any(|n| n == c))
            .collect()
    };
    selected
        .into_iter()
        .map(|name| {
            let f = fault == Some(name);
            match name {
                "gaussian-moments" => gaussian_moments(seed, f),
                "gps-whiteness" => gps_whiteness(seed, f),
                "mask-count" => mask_count(seed, f),
                "fifo-shift" => fifo_shift(seed, f),
                "burst-contract" => burst_contract(f),
                "rd-fixture" => Ok(rd_fixture(f)),
                _ => unreachable!("validated above"),
            }
        })
        .collect()
}
