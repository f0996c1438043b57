//! Central finite differences as an independent check on the analytic
//! gradients in [`crate::losses`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Box;
use crate::losses::{self, Gradient4, LossKind};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Lower bound on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-7;
/// Sampled pairs stay at least this far from any branch switch.
pub const SWITCH_GUARD: f64 = 1e-3;

const COORDS: [&str; 4] = ["x1", "y1", "x2", "y2"];

/// Central-difference gradient of a loss with respect to the proposal corners.
///
/// Perturbed proposals are built strictly (no canonicalization); a step that
/// would flip a corner pair is an error. For CIoU-based kinds the trade-off
/// weight alpha is frozen at `rp`, matching the analytic convention.
pub fn finite_diff_gradient(kind: LossKind, rp: &Box, gt: &Box, h: f64) -> Result<Gradient4> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {h}")));
    }
    let alpha = if kind.uses_ciou() {
        Some(losses::ciou_alpha(rp, gt)?)
    } else {
        None
    };
    let f = |c: [f64; 4], coord: &str| -> Result<f64> {
        let b = Box::try_from_array(c).map_err(|_| {
            Error::domain(format!("perturbing {coord} by {h} produces an invalid box"))
        })?;
        Ok(losses::loss_with_alpha(&b, gt, kind, alpha)?.value)
    };
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let mut plus = rp.to_array();
        let mut minus = rp.to_array();
        plus[i] += h;
        minus[i] -= h;
        *o = (f(plus, COORDS[i])? - f(minus, COORDS[i])?) / (2.0 * h);
    }
    Ok(Gradient4::from_array(out))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub coordinate: String,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub rp: Box,
    pub gt: Box,
    pub coordinates: Vec<CoordinateCheck>,
    pub max_rel_error: f64,
}

/// Result of checking one loss kind. `worst` is the pair with the largest
/// relative error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub kind: String,
    pub n_pairs: usize,
    pub step: f64,
    pub tolerance: f64,
    pub rel_floor: f64,
    pub failures: usize,
    pub max_rel_error: f64,
    pub worst: PairCheck,
    pub passed: bool,
}

/// Compares analytic and numeric gradients at one pair.
pub fn check_pair(kind: LossKind, rp: &Box, gt: &Box, h: f64) -> Result<PairCheck> {
    let analytic = losses::gradient(rp, gt, kind)?.grad.to_array();
    let numeric = finite_diff_gradient(kind, rp, gt, h)?.to_array();
    let coordinates: Vec<CoordinateCheck> = (0..4)
        .map(|i| CoordinateCheck {
            coordinate: COORDS[i].to_string(),
            analytic: analytic[i],
            numeric: numeric[i],
            abs_error: (analytic[i] - numeric[i]).abs(),
            rel_error: relative_error(analytic[i], numeric[i]),
        })
        .collect();
    let max_rel_error = coordinates.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(PairCheck {
        rp: *rp,
        gt: *gt,
        coordinates,
        max_rel_error,
    })
}

fn random_box<R: Rng>(rng: &mut R, center_spread: f64) -> Box {
    let cx = rng.gen_range(-center_spread..center_spread);
    let cy = rng.gen_range(-center_spread..center_spread);
    let w = rng.gen_range(0.5..5.0);
    let h = rng.gen_range(0.5..5.0);
    Box::from_center(cx, cy, w, h)
}

/// Whether the pair sits clear of every branch switch: a margin guard plus
/// probes of the non-smooth flag at `rp ± h` along each coordinate.
pub fn is_smooth_pair(kind: LossKind, rp: &Box, gt: &Box, h: f64) -> bool {
    if losses::switching_margin(rp, gt, kind) < SWITCH_GUARD {
        return false;
    }
    let probe = |c: [f64; 4]| match Box::try_from_array(c) {
        Ok(b) => losses::gradient(&b, gt, kind)
            .map(|g| !g.non_smooth)
            .unwrap_or(false),
        Err(_) => false,
    };
    if !probe(rp.to_array()) {
        return false;
    }
    (0..4).all(|i| {
        let mut plus = rp.to_array();
        let mut minus = rp.to_array();
        plus[i] += h;
        minus[i] -= h;
        probe(plus) && probe(minus)
    })
}

/// Draws `n` smooth-region pairs for `kind`, deterministically from `seed`.
pub fn sample_smooth_pairs(kind: LossKind, n: usize, seed: u64, h: f64) -> Vec<(Box, Box)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    while pairs.len() < n {
        let gt = random_box(&mut rng, 2.0);
        let rp = random_box(&mut rng, 4.0);
        if is_smooth_pair(kind, &rp, &gt, h) {
            pairs.push((rp, gt));
        }
    }
    pairs
}

/// Checks every kind on `n_pairs` seeded smooth-region pairs.
pub fn sweep(
    kinds: &[LossKind],
    n_pairs: usize,
    seed: u64,
    h: f64,
    tolerance: f64,
) -> Result<Vec<GradCheckReport>> {
    if n_pairs == 0 {
        return Err(Error::domain("gradient sweep needs at least one pair"));
    }
    kinds
        .iter()
        .enumerate()
        .map(|(idx, &kind)| {
            let kind_seed = seed.wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let pairs = sample_smooth_pairs(kind, n_pairs, kind_seed, h);
            let checks = pairs
                .par_iter()
                .map(|(rp, gt)| check_pair(kind, rp, gt, h))
                .collect::<Result<Vec<_>>>()?;
            let failures = checks
                .iter()
                .filter(|c| c.max_rel_error > tolerance)
                .count();
            let worst = checks
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    a.1.max_rel_error
                        .total_cmp(&b.1.max_rel_error)
                        .then(b.0.cmp(&a.0))
                })
                .map(|(_, c)| c.clone())
                .expect("n_pairs >= 1");
            Ok(GradCheckReport {
                kind: kind.name(),
                n_pairs,
                step: h,
                tolerance,
                rel_floor: REL_FLOOR,
                failures,
                max_rel_error: worst.max_rel_error,
                worst,
                passed: failures == 0,
            })
        })
        .collect()
}
