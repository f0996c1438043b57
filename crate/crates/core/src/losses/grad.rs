//! Analytic partial derivatives of every loss with respect to the proposal
//! corners `(x1, y1, x2, y2)`.
//!
//! At ties of the min/max selections (shared edges, corner ownership of the
//! enclosing box, touching boxes) the right-hand derivative is used and the
//! result is flagged `non_smooth`. A proposal that coincides with the ground
//! truth is the minimum of every IoU-family loss and gets the zero vector.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::{
    center_size_residuals, ciou_alpha, loss_with_alpha, pointwise_derivative, BaseLoss, LossKind,
    Pointwise, IOU_LOG_FLOOR,
};
use crate::error::{Error, Result};
use crate::geometry::{self, Box};

/// Partial derivatives of a scalar loss with respect to the proposal corners.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Gradient4 {
    pub d_x1: f64,
    pub d_y1: f64,
    pub d_x2: f64,
    pub d_y2: f64,
}

impl Gradient4 {
    pub const ZERO: Gradient4 = Gradient4 {
        d_x1: 0.0,
        d_y1: 0.0,
        d_x2: 0.0,
        d_y2: 0.0,
    };

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            d_x1: a[0],
            d_y1: a[1],
            d_x2: a[2],
            d_y2: a[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.d_x1, self.d_y1, self.d_x2, self.d_y2]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn scale(self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * s))
    }
}

impl Add for Gradient4 {
    type Output = Gradient4;
    fn add(self, o: Gradient4) -> Gradient4 {
        Gradient4 {
            d_x1: self.d_x1 + o.d_x1,
            d_y1: self.d_y1 + o.d_y1,
            d_x2: self.d_x2 + o.d_x2,
            d_y2: self.d_y2 + o.d_y2,
        }
    }
}

impl Sub for Gradient4 {
    type Output = Gradient4;
    fn sub(self, o: Gradient4) -> Gradient4 {
        self + (-o)
    }
}

impl Neg for Gradient4 {
    type Output = Gradient4;
    fn neg(self) -> Gradient4 {
        self.scale(-1.0)
    }
}

impl Mul<Gradient4> for f64 {
    type Output = Gradient4;
    fn mul(self, g: Gradient4) -> Gradient4 {
        g.scale(self)
    }
}

/// A loss value together with its corner gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientEval {
    pub value: f64,
    pub grad: Gradient4,
    /// A one-sided derivative or designated subgradient was used somewhere.
    pub non_smooth: bool,
    /// The log-IoU floor was active; the gradient of that term is zero.
    pub clamped: bool,
}

/// Tracks whether any selection tie was hit.
#[derive(Default)]
struct Flags {
    non_smooth: bool,
}

impl Flags {
    /// d max(x, c) / dx, right-hand at the tie.
    fn dmax(&mut self, x: f64, c: f64) -> f64 {
        if x == c {
            self.non_smooth = true;
        }
        if x >= c {
            1.0
        } else {
            0.0
        }
    }

    /// d min(x, c) / dx, right-hand at the tie.
    fn dmin(&mut self, x: f64, c: f64) -> f64 {
        if x == c {
            self.non_smooth = true;
        }
        if x < c {
            1.0
        } else {
            0.0
        }
    }

    /// Derivative of max(0, t) given dt, right-hand at t = 0.
    fn relu(&mut self, t: f64, dt: Gradient4) -> Gradient4 {
        if t > 0.0 {
            dt
        } else if t < 0.0 {
            Gradient4::ZERO
        } else {
            self.non_smooth = true;
            Gradient4::from_array(dt.to_array().map(|v| v.max(0.0)))
        }
    }
}

/// Shared intermediate quantities of the IoU family and their derivatives.
struct Parts {
    iou: f64,
    d_iou: Gradient4,
    union: f64,
    d_union: Gradient4,
    hull_area: f64,
    d_hull_area: Gradient4,
    diag_sq: f64,
    d_diag_sq: Gradient4,
}

impl Parts {
    fn new(rp: &Box, gt: &Box, flags: &mut Flags) -> Result<Self> {
        let (w, h) = (rp.width(), rp.height());

        let lo_x = flags.dmax(rp.x1, gt.x1);
        let hi_x = flags.dmin(rp.x2, gt.x2);
        let lo_y = flags.dmax(rp.y1, gt.y1);
        let hi_y = flags.dmin(rp.y2, gt.y2);
        let iw_raw = rp.x2.min(gt.x2) - rp.x1.max(gt.x1);
        let ih_raw = rp.y2.min(gt.y2) - rp.y1.max(gt.y1);
        let iw = iw_raw.max(0.0);
        let ih = ih_raw.max(0.0);
        let d_iw = flags.relu(iw_raw, Gradient4::from_array([-lo_x, 0.0, hi_x, 0.0]));
        let d_ih = flags.relu(ih_raw, Gradient4::from_array([0.0, -lo_y, 0.0, hi_y]));
        let inter = iw * ih;
        let d_inter = ih * d_iw + iw * d_ih;

        let d_area = Gradient4::from_array([-h, -w, h, w]);
        let union = geometry::union_with(rp.area(), gt.area(), inter);
        if union <= 0.0 {
            return Err(Error::domain("iou undefined: both boxes are degenerate"));
        }
        let d_union = d_area - d_inter;
        let iou = inter / union;
        let d_iou = (1.0 / union) * d_inter - (inter / (union * union)) * d_union;

        let ex_lo = flags.dmin(rp.x1, gt.x1);
        let ex_hi = flags.dmax(rp.x2, gt.x2);
        let ey_lo = flags.dmin(rp.y1, gt.y1);
        let ey_hi = flags.dmax(rp.y2, gt.y2);
        let ew = rp.x2.max(gt.x2) - rp.x1.min(gt.x1);
        let eh = rp.y2.max(gt.y2) - rp.y1.min(gt.y1);
        let d_ew = Gradient4::from_array([-ex_lo, 0.0, ex_hi, 0.0]);
        let d_eh = Gradient4::from_array([0.0, -ey_lo, 0.0, ey_hi]);

        Ok(Parts {
            iou,
            d_iou,
            union,
            d_union,
            hull_area: ew * eh,
            d_hull_area: eh * d_ew + ew * d_eh,
            diag_sq: ew * ew + eh * eh,
            d_diag_sq: (2.0 * ew) * d_ew + (2.0 * eh) * d_eh,
        })
    }
}

fn center_penalty(rp: &Box, gt: &Box, parts: &Parts) -> (f64, Gradient4) {
    let (cx, cy) = rp.center();
    let (gx, gy) = gt.center();
    let (dx, dy) = (cx - gx, cy - gy);
    let rho2 = dx * dx + dy * dy;
    let d_rho2 = Gradient4::from_array([dx, dy, dx, dy]);
    let c2 = parts.diag_sq;
    let value = rho2 / c2;
    let grad = (1.0 / c2) * d_rho2 - (rho2 / (c2 * c2)) * parts.d_diag_sq;
    (value, grad)
}

fn aspect_term_grad(rp: &Box, gt: &Box, flags: &mut Flags) -> Gradient4 {
    let (w, h) = (rp.width(), rp.height());
    let r2 = w * w + h * h;
    if r2 == 0.0 {
        flags.non_smooth = true;
        return Gradient4::ZERO;
    }
    let k = 4.0 / std::f64::consts::PI.powi(2);
    let gap = gt.width().atan2(gt.height()) - w.atan2(h);
    // theta = atan2(w, h): dtheta/dw = h / r2, dtheta/dh = -w / r2
    let d_theta = Gradient4::from_array([-h / r2, w / r2, h / r2, -w / r2]);
    (-2.0 * k * gap) * d_theta
}

fn ratio_grad(rp: &Box, gt: &Box, parts: &Parts, flags: &mut Flags) -> Result<(f64, Gradient4)> {
    let diag = parts.diag_sq.sqrt();
    if diag <= 0.0 {
        return Err(Error::domain(
            "diou undefined: enclosing box collapses to a point",
        ));
    }
    let mut sum = 0.0;
    let mut d_sum = [0.0; 4];
    // (corner index into rp/gt, x coordinate slot, y coordinate slot)
    const SLOTS: [(usize, usize); 4] = [(0, 1), (2, 1), (0, 3), (2, 3)];
    for (p, q, (sx, sy)) in rp
        .corners()
        .iter()
        .zip(gt.corners().iter())
        .zip(SLOTS)
        .map(|((p, q), s)| (p, q, s))
    {
        let (dx, dy) = (p.0 - q.0, p.1 - q.1);
        let dist = dx.hypot(dy);
        sum += dist;
        if dist > 0.0 {
            d_sum[sx] += dx / dist;
            d_sum[sy] += dy / dist;
        } else {
            flags.non_smooth = true;
            d_sum[sx] += 1.0;
            d_sum[sy] += 1.0;
        }
    }
    let d_sum = Gradient4::from_array(d_sum);
    let d_diag = (0.5 / diag) * parts.d_diag_sq;
    let value = sum / (4.0 * diag);
    let grad = (1.0 / (4.0 * diag)) * d_sum - (sum / (4.0 * diag * diag)) * d_diag;
    Ok((value, grad))
}

fn base_grad(
    rp: &Box,
    gt: &Box,
    base: BaseLoss,
    parts: &Parts,
    flags: &mut Flags,
    clamped: &mut bool,
) -> Result<Gradient4> {
    Ok(match base {
        BaseLoss::IoULog => {
            if parts.iou < IOU_LOG_FLOOR {
                *clamped = true;
                Gradient4::ZERO
            } else {
                (-1.0 / parts.iou) * parts.d_iou
            }
        }
        BaseLoss::IoULinear => -parts.d_iou,
        BaseLoss::GIoU => {
            let c = parts.hull_area;
            let d_fill = (1.0 / c) * parts.d_union - (parts.union / (c * c)) * parts.d_hull_area;
            -(parts.d_iou + d_fill)
        }
        BaseLoss::DIoU => -parts.d_iou + center_penalty(rp, gt, parts).1,
        BaseLoss::CIoU => {
            let alpha = ciou_alpha(rp, gt)?;
            -parts.d_iou + center_penalty(rp, gt, parts).1 + alpha * aspect_term_grad(rp, gt, flags)
        }
    })
}

fn coordinate_grad(rp: &Box, gt: &Box, kind: Pointwise, flags: &mut Flags) -> Gradient4 {
    let r = center_size_residuals(rp, gt);
    let d = r.map(|x| {
        if kind == Pointwise::L1 && x == 0.0 {
            flags.non_smooth = true;
        }
        pointwise_derivative(x, kind)
    });
    Gradient4::from_array([
        0.5 * d[0] - d[2],
        0.5 * d[1] - d[3],
        0.5 * d[0] + d[2],
        0.5 * d[1] + d[3],
    ])
}

/// Loss value and analytic gradient with respect to the proposal corners.
///
/// For CIoU-based kinds the trade-off weight alpha is held constant, so the
/// gradient is that of [`loss_with_alpha`] with alpha frozen at `rp`.
pub fn gradient(rp: &Box, gt: &Box, kind: LossKind) -> Result<GradientEval> {
    let value = loss_with_alpha(rp, gt, kind, None)?;
    let mut flags = Flags::default();

    if let Some(p) = kind.pointwise() {
        let grad = coordinate_grad(rp, gt, p, &mut flags);
        return Ok(GradientEval {
            value: value.value,
            grad,
            non_smooth: flags.non_smooth,
            clamped: false,
        });
    }

    if rp == gt {
        return Ok(GradientEval {
            value: value.value,
            grad: Gradient4::ZERO,
            non_smooth: true,
            clamped: value.clamped,
        });
    }

    let parts = Parts::new(rp, gt, &mut flags)?;
    let mut clamped = false;
    let grad = match kind {
        LossKind::IoULog => base_grad(rp, gt, BaseLoss::IoULog, &parts, &mut flags, &mut clamped)?,
        LossKind::IoULinear => base_grad(
            rp,
            gt,
            BaseLoss::IoULinear,
            &parts,
            &mut flags,
            &mut clamped,
        )?,
        LossKind::GIoU => base_grad(rp, gt, BaseLoss::GIoU, &parts, &mut flags, &mut clamped)?,
        LossKind::DIoU => base_grad(rp, gt, BaseLoss::DIoU, &parts, &mut flags, &mut clamped)?,
        LossKind::CIoU => base_grad(rp, gt, BaseLoss::CIoU, &parts, &mut flags, &mut clamped)?,
        LossKind::CDIoU { base } => {
            base_grad(rp, gt, base, &parts, &mut flags, &mut clamped)?
                + ratio_grad(rp, gt, &parts, &mut flags)?.1
        }
        LossKind::L1 | LossKind::L2 | LossKind::SmoothL1 => unreachable!(),
    };
    Ok(GradientEval {
        value: value.value,
        grad,
        non_smooth: flags.non_smooth,
        clamped,
    })
}

/// Smallest distance, in coordinate units, from `(rp, gt)` to a surface
/// where the chosen loss switches branch (edge ties, touching boxes,
/// vanishing corner distances, the smooth-L1 knee). Also bounded by the
/// proposal's width and height so perturbations keep it valid.
pub fn switching_margin(rp: &Box, gt: &Box, kind: LossKind) -> f64 {
    let mut m = rp.width().min(rp.height());
    if let Some(p) = kind.pointwise() {
        for r in center_size_residuals(rp, gt) {
            match p {
                Pointwise::L1 => m = m.min(r.abs()),
                Pointwise::SmoothL1 => m = m.min((r.abs() - 1.0).abs()),
                Pointwise::L2 => {}
            }
        }
        return m;
    }
    for (a, b) in [
        (rp.x1, gt.x1),
        (rp.y1, gt.y1),
        (rp.x2, gt.x2),
        (rp.y2, gt.y2),
    ] {
        m = m.min((a - b).abs());
    }
    let iw = rp.x2.min(gt.x2) - rp.x1.max(gt.x1);
    let ih = rp.y2.min(gt.y2) - rp.y1.max(gt.y1);
    m = m.min(iw.abs()).min(ih.abs());
    if matches!(kind, LossKind::CDIoU { .. }) {
        for (p, q) in rp.corners().iter().zip(gt.corners().iter()) {
            m = m.min((p.0 - q.0).hypot(p.1 - q.1));
        }
    }
    m
}
