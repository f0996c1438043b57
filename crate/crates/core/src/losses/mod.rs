//! The feedback side: coordinate losses, the IoU loss family, and CDIoU loss
//! (a base IoU-family loss plus the control-distance ratio).
//!
//! Values are computed from the metric functions directly. Analytic
//! gradients with respect to the proposal's corners live in [`grad`].

mod grad;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Box};
use crate::metrics;

pub use grad::{gradient, switching_margin, Gradient4, GradientEval};

/// IoU values below this are clamped before `-ln`.
pub const IOU_LOG_FLOOR: f64 = 1e-7;

/// Losses applied to one scalar residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pointwise {
    L1,
    L2,
    SmoothL1,
}

/// IoU-family losses that may serve as the base of a CDIoU loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum BaseLoss {
    IoULog,
    #[default]
    IoULinear,
    GIoU,
    DIoU,
    CIoU,
}

impl BaseLoss {
    pub const ALL: [BaseLoss; 5] = [
        BaseLoss::IoULog,
        BaseLoss::IoULinear,
        BaseLoss::GIoU,
        BaseLoss::DIoU,
        BaseLoss::CIoU,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaseLoss::IoULog => "iou_log",
            BaseLoss::IoULinear => "iou_linear",
            BaseLoss::GIoU => "giou",
            BaseLoss::DIoU => "diou",
            BaseLoss::CIoU => "ciou",
        }
    }
}

/// Selects a box regression loss.
///
/// The CDIoU variant carries no lambda: lambda weights the paired metric only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    L1,
    L2,
    SmoothL1,
    IoULog,
    IoULinear,
    GIoU,
    DIoU,
    CIoU,
    CDIoU { base: BaseLoss },
}

impl LossKind {
    /// Every kind, CDIoU expanded over all of its bases.
    pub fn all() -> Vec<LossKind> {
        let mut kinds = vec![
            LossKind::L1,
            LossKind::L2,
            LossKind::SmoothL1,
            LossKind::IoULog,
            LossKind::IoULinear,
            LossKind::GIoU,
            LossKind::DIoU,
            LossKind::CIoU,
        ];
        kinds.extend(BaseLoss::ALL.iter().map(|&base| LossKind::CDIoU { base }));
        kinds
    }

    pub fn cdiou() -> Self {
        LossKind::CDIoU {
            base: BaseLoss::default(),
        }
    }

    pub fn pointwise(&self) -> Option<Pointwise> {
        match self {
            LossKind::L1 => Some(Pointwise::L1),
            LossKind::L2 => Some(Pointwise::L2),
            LossKind::SmoothL1 => Some(Pointwise::SmoothL1),
            _ => None,
        }
    }

    /// Whether the kind is built on IoU (so it has a zero minimum at rp = gt
    /// and needs a non-degenerate union).
    pub fn is_iou_family(&self) -> bool {
        self.pointwise().is_none()
    }

    pub fn uses_ciou(&self) -> bool {
        matches!(
            self,
            LossKind::CIoU
                | LossKind::CDIoU {
                    base: BaseLoss::CIoU
                }
        )
    }

    /// Canonical name, the inverse of the `FromStr` impl.
    pub fn name(&self) -> String {
        match self {
            LossKind::L1 => "l1".into(),
            LossKind::L2 => "l2".into(),
            LossKind::SmoothL1 => "smooth_l1".into(),
            LossKind::IoULog => "iou_log".into(),
            LossKind::IoULinear => "iou_linear".into(),
            LossKind::GIoU => "giou".into(),
            LossKind::DIoU => "diou".into(),
            LossKind::CIoU => "ciou".into(),
            LossKind::CDIoU { base } if *base == BaseLoss::default() => "cdiou".into(),
            LossKind::CDIoU { base } => format!("cdiou:{}", base.name()),
        }
    }
}

impl From<BaseLoss> for LossKind {
    fn from(base: BaseLoss) -> Self {
        match base {
            BaseLoss::IoULog => LossKind::IoULog,
            BaseLoss::IoULinear => LossKind::IoULinear,
            BaseLoss::GIoU => LossKind::GIoU,
            BaseLoss::DIoU => LossKind::DIoU,
            BaseLoss::CIoU => LossKind::CIoU,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BaseLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        BaseLoss::ALL
            .iter()
            .copied()
            .find(|b| b.name() == name || (name == "iou" && *b == BaseLoss::IoULinear))
            .ok_or_else(|| Error::UnknownName {
                what: "CDIoU base loss",
                name: s.to_string(),
            })
    }
}

/// Accepts the canonical names plus `iou` for `iou_linear` and
/// `cdiou:<base>` for an explicit base.
impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        if let Some(base) = name.strip_prefix("cdiou:") {
            return Ok(LossKind::CDIoU {
                base: base.parse()?,
            });
        }
        Ok(match name.as_str() {
            "l1" => LossKind::L1,
            "l2" => LossKind::L2,
            "smooth_l1" | "smoothl1" => LossKind::SmoothL1,
            "iou_log" => LossKind::IoULog,
            "iou_linear" | "iou" => LossKind::IoULinear,
            "giou" => LossKind::GIoU,
            "diou" => LossKind::DIoU,
            "ciou" => LossKind::CIoU,
            "cdiou" => LossKind::cdiou(),
            _ => {
                return Err(Error::UnknownName {
                    what: "loss",
                    name: s.to_string(),
                })
            }
        })
    }
}

/// A loss value. `clamped` is set when the log-IoU floor was applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossValue {
    pub value: f64,
    pub clamped: bool,
}

pub fn pointwise_loss(x: f64, kind: Pointwise) -> f64 {
    match kind {
        Pointwise::L1 => x.abs(),
        Pointwise::L2 => x * x,
        Pointwise::SmoothL1 => {
            if x.abs() < 1.0 {
                0.5 * x * x
            } else {
                x.abs() - 0.5
            }
        }
    }
}

/// Derivative of [`pointwise_loss`]; L1 uses the subgradient 0 at the origin.
pub fn pointwise_derivative(x: f64, kind: Pointwise) -> f64 {
    match kind {
        Pointwise::L1 => {
            if x == 0.0 {
                0.0
            } else {
                x.signum()
            }
        }
        Pointwise::L2 => 2.0 * x,
        Pointwise::SmoothL1 => {
            if x.abs() < 1.0 {
                x
            } else {
                x.signum()
            }
        }
    }
}

/// Residuals of rp minus gt in center-size form `(cx, cy, w, h)`.
pub fn center_size_residuals(rp: &Box, gt: &Box) -> [f64; 4] {
    let (cx, cy) = rp.center();
    let (gx, gy) = gt.center();
    [
        cx - gx,
        cy - gy,
        rp.width() - gt.width(),
        rp.height() - gt.height(),
    ]
}

/// Sum of a pointwise loss over the center-size residuals.
pub fn coordinate_box_loss(rp: &Box, gt: &Box, kind: Pointwise) -> f64 {
    center_size_residuals(rp, gt)
        .iter()
        .map(|&r| pointwise_loss(r, kind))
        .sum()
}

pub fn smooth_l1_box_loss(rp: &Box, gt: &Box) -> f64 {
    coordinate_box_loss(rp, gt, Pointwise::SmoothL1)
}

/// Aspect-ratio consistency term of CIoU.
pub fn ciou_v(rp: &Box, gt: &Box) -> f64 {
    let k = 4.0 / std::f64::consts::PI.powi(2);
    let d = gt.width().atan2(gt.height()) - rp.width().atan2(rp.height());
    k * d * d
}

/// Trade-off weight of the CIoU aspect term. Zero when both the IoU gap and
/// the aspect term vanish.
pub fn ciou_alpha(rp: &Box, gt: &Box) -> Result<f64> {
    let v = ciou_v(rp, gt);
    let denom = (1.0 - metrics::iou(rp, gt)?) + v;
    Ok(if denom > 0.0 { v / denom } else { 0.0 })
}

fn diou_loss(rp: &Box, gt: &Box) -> Result<f64> {
    let overlap = metrics::iou(rp, gt)?;
    let c2 = geometry::enclosing_box(rp, gt).diagonal().powi(2);
    Ok(1.0 - overlap + geometry::center_distance_sq(rp, gt) / c2)
}

fn base_loss(rp: &Box, gt: &Box, base: BaseLoss, alpha: Option<f64>) -> Result<LossValue> {
    let plain = |value| LossValue {
        value,
        clamped: false,
    };
    match base {
        BaseLoss::IoULog => {
            let overlap = metrics::iou(rp, gt)?;
            Ok(LossValue {
                value: -overlap.max(IOU_LOG_FLOOR).ln(),
                clamped: overlap < IOU_LOG_FLOOR,
            })
        }
        BaseLoss::IoULinear => Ok(plain(1.0 - metrics::iou(rp, gt)?)),
        BaseLoss::GIoU => Ok(plain(1.0 - metrics::giou(rp, gt)?)),
        BaseLoss::DIoU => Ok(plain(diou_loss(rp, gt)?)),
        BaseLoss::CIoU => {
            let alpha = match alpha {
                Some(a) => a,
                None => ciou_alpha(rp, gt)?,
            };
            Ok(plain(diou_loss(rp, gt)? + alpha * ciou_v(rp, gt)))
        }
    }
}

pub fn loss(rp: &Box, gt: &Box, kind: LossKind) -> Result<LossValue> {
    loss_with_alpha(rp, gt, kind, None)
}

/// Like [`loss`], but the CIoU trade-off weight is fixed to `alpha` when
/// given. Gradients treat that weight as a constant, so this is the function
/// whose derivative [`gradient`] returns for CIoU-based kinds.
pub fn loss_with_alpha(
    rp: &Box,
    gt: &Box,
    kind: LossKind,
    alpha: Option<f64>,
) -> Result<LossValue> {
    if let Some(p) = kind.pointwise() {
        return Ok(LossValue {
            value: coordinate_box_loss(rp, gt, p),
            clamped: false,
        });
    }
    match kind {
        LossKind::IoULog => base_loss(rp, gt, BaseLoss::IoULog, alpha),
        LossKind::IoULinear => base_loss(rp, gt, BaseLoss::IoULinear, alpha),
        LossKind::GIoU => base_loss(rp, gt, BaseLoss::GIoU, alpha),
        LossKind::DIoU => base_loss(rp, gt, BaseLoss::DIoU, alpha),
        LossKind::CIoU => base_loss(rp, gt, BaseLoss::CIoU, alpha),
        LossKind::CDIoU { base } => {
            let b = base_loss(rp, gt, base, alpha)?;
            Ok(LossValue {
                value: b.value + metrics::diou_ratio(rp, gt)?,
                clamped: b.clamped,
            })
        }
        LossKind::L1 | LossKind::L2 | LossKind::SmoothL1 => unreachable!(),
    }
}
