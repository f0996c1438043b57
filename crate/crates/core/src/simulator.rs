//! Synthetic box-regression benchmark.
//!
//! Each scenario pairs an anchor with a target box. The anchor's corners are
//! moved by plain gradient descent on one loss; the mean loss and mean corner
//! error over all scenarios are recorded at every iteration.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Box};
use crate::losses::{self, LossKind};

/// Which reading of the floating learning-rate rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FloatRule {
    /// Raise the rate when the loss failed to decrease over the window.
    #[default]
    Prose,
    /// Raise the rate when the loss did decrease over the window.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrPolicy {
    #[default]
    Fixed,
    /// Multiply the rate by `decay_gamma` after every iteration.
    Decayed,
    /// Decayed, plus the floating bump checked every `float_window` iterations.
    Floating,
}

/// Targets are centered at the origin with area `scale²` and the given
/// width/height ratio. Anchors take every aspect ratio in the list, a size
/// jittered around the target's scale, and a center on a radial grid
/// (radii in units of the target diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioGrid {
    pub target_scales: Vec<f64>,
    pub aspect_ratios: Vec<f64>,
    pub radii: Vec<f64>,
    pub angles: usize,
    pub anchor_scale_jitter: (f64, f64),
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            target_scales: vec![1.0, 2.0],
            aspect_ratios: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            radii: vec![0.0, 0.25, 0.5, 1.0],
            angles: 8,
            anchor_scale_jitter: (0.5, 1.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub grid: ScenarioGrid,
    /// Loss names as accepted by `LossKind::from_str`.
    pub losses: Vec<String>,
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_policy: LrPolicy,
    pub decay_gamma: f64,
    pub float_window: usize,
    pub float_factor: f64,
    pub float_rule: FloatRule,
    /// Pick each loss's fixed rate from `lr_grid` by final corner error.
    pub tune: bool,
    pub lr_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            grid: ScenarioGrid::default(),
            losses: ["iou_log", "giou", "diou", "ciou", "cdiou"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            iterations: 200,
            learning_rate: 0.1,
            lr_policy: LrPolicy::Fixed,
            decay_gamma: 0.99,
            float_window: 5,
            float_factor: 1.05,
            float_rule: FloatRule::Prose,
            tune: true,
            lr_grid: vec![1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0],
            seed: 42,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::domain("iteration budget must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if self.lr_policy == LrPolicy::Floating {
            if !(self.float_factor > 1.0) {
                return Err(Error::domain("floating factor must exceed 1"));
            }
            if self.float_window == 0 {
                return Err(Error::domain("floating window must be at least 1"));
            }
        }
        if self.lr_policy != LrPolicy::Fixed && !(self.decay_gamma > 0.0) {
            return Err(Error::domain("decay gamma must be positive"));
        }
        if self.tune && self.lr_grid.iter().any(|&lr| !(lr > 0.0)) {
            return Err(Error::domain("learning-rate grid entries must be positive"));
        }
        if self.tune && self.lr_grid.is_empty() {
            return Err(Error::domain("learning-rate grid is empty"));
        }
        if self.losses.is_empty() {
            return Err(Error::domain("no losses to simulate"));
        }
        self.loss_kinds()?;
        Ok(())
    }

    pub fn loss_kinds(&self) -> Result<Vec<LossKind>> {
        self.losses.iter().map(|s| s.parse()).collect()
    }
}

/// One anchor/target pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scenario {
    pub anchor: Box,
    pub target: Box,
}

/// Expands the grid into scenarios. The order is fixed by the grid and the
/// seed only drives the anchor size jitter.
pub fn generate_scenarios(config: &SimulationConfig) -> Result<Vec<Scenario>> {
    let grid = &config.grid;
    if grid.target_scales.is_empty() || grid.aspect_ratios.is_empty() || grid.radii.is_empty() {
        return Err(Error::domain("scenario grid has an empty axis"));
    }
    let (jlo, jhi) = grid.anchor_scale_jitter;
    if grid.target_scales.iter().any(|&s| !(s > 0.0))
        || grid.aspect_ratios.iter().any(|&r| !(r > 0.0))
        || grid.radii.iter().any(|&r| !(r >= 0.0))
        || !(jlo > 0.0 && jhi >= jlo)
    {
        return Err(Error::domain("scenario grid values must be positive"));
    }
    if grid.angles == 0 && grid.radii.iter().any(|&r| r > 0.0) {
        return Err(Error::domain("a positive radius needs at least one angle"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for &scale in &grid.target_scales {
        for &ratio in &grid.aspect_ratios {
            let target = Box::from_center(0.0, 0.0, scale * ratio.sqrt(), scale / ratio.sqrt());
            let diag = target.diagonal();
            for &anchor_ratio in &grid.aspect_ratios {
                for &radius in &grid.radii {
                    let n_angles = if radius == 0.0 { 1 } else { grid.angles };
                    for a in 0..n_angles {
                        let theta = std::f64::consts::TAU * a as f64 / n_angles as f64;
                        let (cx, cy) = (radius * diag * theta.cos(), radius * diag * theta.sin());
                        let jitter = if jhi > jlo {
                            rng.gen_range(jlo..jhi)
                        } else {
                            jlo
                        };
                        let s = scale * jitter;
                        let anchor = Box::from_center(
                            cx,
                            cy,
                            s * anchor_ratio.sqrt(),
                            s / anchor_ratio.sqrt(),
                        );
                        out.push(Scenario { anchor, target });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Floating learning-rate rule. With `k` iterations of history beyond the
/// current one, compares `loss_i - loss_{i-k}` with zero and scales the rate
/// by `factor` when the rule fires.
pub fn floating_lr_step(
    lr: f64,
    loss_history: &[f64],
    k: usize,
    factor: f64,
    rule: FloatRule,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("floating window must be at least 1"));
    }
    let n = loss_history.len();
    if n < k + 1 {
        return Ok(lr);
    }
    let change = loss_history[n - 1] - loss_history[n - 1 - k];
    let fire = match rule {
        FloatRule::Prose => change >= 0.0,
        FloatRule::Literal => change < 0.0,
    };
    Ok(if fire { factor * lr } else { lr })
}

/// Learning-rate trace for a recorded mean-loss history: `trace[i]` is the
/// rate used for the step taken after observing `history[i]`.
pub fn replay_lr_trace(config: &SimulationConfig, lr0: f64, history: &[f64]) -> Result<Vec<f64>> {
    let mut lr = lr0;
    let mut trace = Vec::with_capacity(history.len());
    for i in 0..history.len() {
        trace.push(lr);
        lr = next_lr(config, lr, &history[..=i], i)?;
    }
    Ok(trace)
}

fn next_lr(config: &SimulationConfig, lr: f64, history: &[f64], i: usize) -> Result<f64> {
    Ok(match config.lr_policy {
        LrPolicy::Fixed => lr,
        LrPolicy::Decayed => lr * config.decay_gamma,
        LrPolicy::Floating => {
            let lr = lr * config.decay_gamma;
            let k = config.float_window;
            if i > 0 && i.is_multiple_of(k) {
                floating_lr_step(lr, history, k, config.float_factor, config.float_rule)?
            } else {
                lr
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_loss: f64,
    pub mean_corner_error: f64,
    /// Mean over scenarios of corner error divided by the target diagonal.
    pub mean_relative_error: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCurve {
    pub loss: String,
    pub initial_lr: f64,
    pub points: Vec<CurvePoint>,
    /// First iteration whose mean corner error is below the report threshold.
    pub iterations_to_threshold: Option<usize>,
    /// Scenarios stopped early because a step produced a non-finite value.
    pub aborted: Vec<usize>,
}

impl LossCurve {
    pub fn final_point(&self) -> &CurvePoint {
        self.points.last().expect("curves are never empty")
    }

    pub fn final_corner_error(&self) -> f64 {
        self.final_point().mean_corner_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningEntry {
    pub loss: String,
    pub lr: f64,
    pub final_corner_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenarios: usize,
    pub iterations: usize,
    /// One tenth of the mean target diagonal.
    pub threshold: f64,
    pub curves: Vec<LossCurve>,
    pub tuning: Vec<TuningEntry>,
}

impl SimulationReport {
    pub fn curve(&self, loss: &str) -> Option<&LossCurve> {
        self.curves.iter().find(|c| c.loss == loss)
    }

    /// `loss,iteration,mean_loss,mean_corner_error,lr`, six decimals.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("loss,iteration,mean_loss,mean_corner_error,lr\n");
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6}",
                    c.loss, p.iteration, p.mean_loss, p.mean_corner_error, p.lr
                );
            }
        }
        out
    }

    pub fn summary(&self) -> Summary {
        Summary {
            scenarios: self.scenarios,
            iterations: self.iterations,
            threshold: self.threshold,
            losses: self
                .curves
                .iter()
                .map(|c| LossSummary {
                    loss: c.loss.clone(),
                    lr: c.initial_lr,
                    initial_corner_error: c.points[0].mean_corner_error,
                    final_corner_error: c.final_corner_error(),
                    final_loss: c.final_point().mean_loss,
                    iterations_to_threshold: c.iterations_to_threshold,
                    aborted: c.aborted.len(),
                })
                .collect(),
            tuning: self.tuning.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossSummary {
    pub loss: String,
    pub lr: f64,
    pub initial_corner_error: f64,
    pub final_corner_error: f64,
    pub final_loss: f64,
    pub iterations_to_threshold: Option<usize>,
    pub aborted: usize,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenarios: usize,
    pub iterations: usize,
    pub threshold: f64,
    pub losses: Vec<LossSummary>,
    pub tuning: Vec<TuningEntry>,
}

fn corner_error(a: &Box, b: &Box) -> f64 {
    geometry::corner_distance_sum(a, b) / 4.0
}

#[derive(Clone, Copy)]
struct Track {
    anchor: Box,
    loss: f64,
    alive: bool,
}

/// Runs gradient descent for one loss over all scenarios.
pub fn descend(
    config: &SimulationConfig,
    scenarios: &[Scenario],
    kind: LossKind,
    lr0: f64,
    threshold: f64,
) -> Result<LossCurve> {
    let mut tracks: Vec<Track> = scenarios
        .iter()
        .map(|s| {
            let loss = losses::loss(&s.anchor, &s.target, kind)
                .map(|v| v.value)
                .unwrap_or(f64::NAN);
            Track {
                anchor: s.anchor,
                loss,
                alive: loss.is_finite(),
            }
        })
        .collect();
    let n = scenarios.len() as f64;
    let mut history = Vec::with_capacity(config.iterations + 1);
    let mut points = Vec::with_capacity(config.iterations + 1);
    let mut lr = lr0;
    let mut reached = None;

    for i in 0..=config.iterations {
        // Fixed-order sums keep the curves independent of thread scheduling.
        let mean_loss = tracks
            .iter()
            .map(|t| t.loss)
            .filter(|l| l.is_finite())
            .sum::<f64>()
            / n;
        let (err_sum, rel_sum) = tracks
            .iter()
            .zip(scenarios)
            .fold((0.0, 0.0), |acc, (t, s)| {
                let e = corner_error(&t.anchor, &s.target);
                (acc.0 + e, acc.1 + e / s.target.diagonal())
            });
        let (mean_err, mean_rel) = (err_sum / n, rel_sum / n);
        history.push(mean_loss);
        points.push(CurvePoint {
            iteration: i,
            mean_loss,
            mean_corner_error: mean_err,
            mean_relative_error: mean_rel,
            lr,
        });
        if reached.is_none() && mean_err < threshold {
            reached = Some(i);
        }
        if i == config.iterations {
            break;
        }
        let step = lr;
        tracks
            .par_iter_mut()
            .zip(scenarios.par_iter())
            .for_each(|(t, s)| {
                if !t.alive {
                    return;
                }
                let Ok(eval) = losses::gradient(&t.anchor, &s.target, kind) else {
                    t.alive = false;
                    return;
                };
                let c = t.anchor.to_array();
                let g = eval.grad.to_array();
                let next: [f64; 4] = std::array::from_fn(|j| c[j] - step * g[j]);
                if next.iter().any(|v| !v.is_finite()) {
                    t.alive = false;
                    return;
                }
                let anchor = Box::new(next[0], next[1], next[2], next[3]);
                match losses::loss(&anchor, &s.target, kind) {
                    Ok(v) if v.value.is_finite() => {
                        t.anchor = anchor;
                        t.loss = v.value;
                    }
                    _ => t.alive = false,
                }
            });
        lr = next_lr(config, lr, &history, i)?;
    }

    let aborted = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.alive)
        .map(|(i, _)| i)
        .collect();
    Ok(LossCurve {
        loss: kind.name(),
        initial_lr: lr0,
        points,
        iterations_to_threshold: reached,
        aborted,
    })
}

/// Mean target diagonal over the scenarios, times 0.1.
pub fn threshold_for(scenarios: &[Scenario]) -> f64 {
    let mean_diag =
        scenarios.iter().map(|s| s.target.diagonal()).sum::<f64>() / scenarios.len() as f64;
    0.1 * mean_diag
}

pub fn run(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let scenarios = generate_scenarios(config)?;
    run_on(config, &scenarios)
}

/// Like [`run`] on a caller-supplied scenario list.
pub fn run_on(config: &SimulationConfig, scenarios: &[Scenario]) -> Result<SimulationReport> {
    config.validate()?;
    if scenarios.is_empty() {
        return Err(Error::domain("no scenarios to simulate"));
    }
    if scenarios.iter().any(|s| !(s.target.diagonal() > 0.0)) {
        return Err(Error::domain(
            "scenario targets must have a positive diagonal",
        ));
    }
    let threshold = threshold_for(scenarios);
    let mut curves = Vec::new();
    let mut tuning = Vec::new();
    for kind in config.loss_kinds()? {
        if config.tune {
            let fixed = SimulationConfig {
                lr_policy: LrPolicy::Fixed,
                ..config.clone()
            };
            let mut best: Option<LossCurve> = None;
            for &lr in &config.lr_grid {
                let curve = descend(&fixed, scenarios, kind, lr, threshold)?;
                tuning.push(TuningEntry {
                    loss: kind.name(),
                    lr,
                    final_corner_error: curve.final_corner_error(),
                });
                let better = match &best {
                    None => true,
                    Some(b) => curve.final_corner_error() < b.final_corner_error(),
                };
                if better {
                    best = Some(curve);
                }
            }
            curves.push(best.expect("lr grid is non-empty"));
        } else {
            curves.push(descend(
                config,
                scenarios,
                kind,
                config.learning_rate,
                threshold,
            )?);
        }
    }
    Ok(SimulationReport {
        scenarios: scenarios.len(),
        iterations: config.iterations,
        threshold,
        curves,
        tuning,
    })
}
