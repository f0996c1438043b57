//! The evaluation side: IoU, GIoU, the control-distance ratio and CDIoU,
//! plus ranking of region proposals against a shared ground truth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Box};

/// Default weight of the control-distance term in CDIoU.
pub const DEFAULT_LAMBDA: f64 = 0.001;

/// Selects one member of the IoU metric family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricKind {
    IoU,
    GIoU,
    CDIoU { lambda: f64 },
}

impl MetricKind {
    pub fn cdiou() -> Self {
        MetricKind::CDIoU {
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn cdiou_with(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(MetricKind::CDIoU { lambda })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::IoU => "iou",
            MetricKind::GIoU => "giou",
            MetricKind::CDIoU { .. } => "cdiou",
        }
    }

    pub fn evaluate(&self, rp: &Box, gt: &Box) -> Result<f64> {
        match *self {
            MetricKind::IoU => iou(rp, gt),
            MetricKind::GIoU => giou(rp, gt),
            MetricKind::CDIoU { lambda } => cdiou(rp, gt, lambda),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `iou`, `giou` or `cdiou`; CDIoU gets the default lambda.
impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iou" => Ok(MetricKind::IoU),
            "giou" => Ok(MetricKind::GIoU),
            "cdiou" => Ok(MetricKind::cdiou()),
            _ => Err(Error::UnknownName {
                what: "metric",
                name: s.to_string(),
            }),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

pub fn iou(rp: &Box, gt: &Box) -> Result<f64> {
    let inter = geometry::intersection_area(rp, gt);
    let union = geometry::union_with(rp.area(), gt.area(), inter);
    if union <= 0.0 {
        return Err(Error::domain("iou undefined: both boxes are degenerate"));
    }
    Ok(inter / union)
}

pub fn giou(rp: &Box, gt: &Box) -> Result<f64> {
    let inter = geometry::intersection_area(rp, gt);
    let union = geometry::union_with(rp.area(), gt.area(), inter);
    if union <= 0.0 {
        return Err(Error::domain("giou undefined: both boxes are degenerate"));
    }
    let hull = geometry::enclosing_box(rp, gt).area();
    Ok(inter / union - (hull - union) / hull)
}

/// Corner-distance sum over four times the enclosing box diagonal.
pub fn diou_ratio(rp: &Box, gt: &Box) -> Result<f64> {
    let diag = geometry::enclosing_box(rp, gt).diagonal();
    if diag <= 0.0 {
        return Err(Error::domain(
            "diou undefined: enclosing box collapses to a point",
        ));
    }
    Ok(geometry::corner_distance_sum(rp, gt) / (4.0 * diag))
}

/// `iou + lambda * (1 - diou)`.
pub fn cdiou(rp: &Box, gt: &Box, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let overlap = iou(rp, gt)?;
    let ratio = diou_ratio(rp, gt)?;
    Ok(overlap + lambda * (1.0 - ratio))
}

/// Orders proposals by descending metric value. Exact ties keep input order.
pub fn rank_proposals(rps: &[Box], gt: &Box, kind: MetricKind) -> Result<Vec<usize>> {
    if rps.is_empty() {
        return Err(Error::domain("cannot rank an empty set of proposals"));
    }
    if gt.is_degenerate() {
        return Err(Error::domain("ground truth box is degenerate"));
    }
    let scores = rps
        .iter()
        .map(|rp| kind.evaluate(rp, gt))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..rps.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(order)
}
