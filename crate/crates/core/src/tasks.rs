//! Task presets: ground truth in, `(y, A)` out.

use crate::error::{Error, Result};
use crate::operators::{
    limited_angle_angles, make_anisotropic_blur, make_downsample, make_inpaint, make_motion_blur, make_radon,
    sparse_view_angles, ForwardOperator,
};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const SPARSE_VIEWS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Inpaint50,
    Inpaint70,
    Sr2,
    Sr4,
    Motion,
    Nonlinear,
    CtSparse,
    CtLimited,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Inpaint50,
        TaskKind::Inpaint70,
        TaskKind::Sr2,
        TaskKind::Sr4,
        TaskKind::Motion,
        TaskKind::Nonlinear,
        TaskKind::CtSparse,
        TaskKind::CtLimited,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Inpaint50 => "inpaint50",
            TaskKind::Inpaint70 => "inpaint70",
            TaskKind::Sr2 => "sr2",
            TaskKind::Sr4 => "sr4",
            TaskKind::Motion => "motion",
            TaskKind::Nonlinear => "nonlinear",
            TaskKind::CtSparse => "ct_sparse",
            TaskKind::CtLimited => "ct_limited",
        }
    }

    pub fn is_ct(self) -> bool {
        matches!(self, TaskKind::CtSparse | TaskKind::CtLimited)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Drives the inpainting mask.
    pub seed: u64,
    /// Overrides the sparse-view count (default 60).
    #[serde(default)]
    pub views: Option<usize>,
    /// Overrides the detector count (default `ceil(√2·n)`).
    #[serde(default)]
    pub detectors: Option<usize>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        TaskSpec {
            kind,
            seed,
            views: None,
            detectors: None,
        }
    }

    pub fn with_views(mut self, views: usize) -> Self {
        self.views = Some(views);
        self
    }

    pub fn angles(&self) -> Vec<f64> {
        match self.kind {
            TaskKind::CtLimited => limited_angle_angles(),
            _ => sparse_view_angles(self.views.unwrap_or(SPARSE_VIEWS)),
        }
    }

    /// Operator for images of shape `[C,H,W]`.
    pub fn operator(&self, image_shape: &[usize]) -> Result<ForwardOperator> {
        let [c, h, w] = image_shape[..] else {
            return Err(Error::shape("task", "[C,H,W]", format!("{image_shape:?}")));
        };
        let op = match self.kind {
            TaskKind::Inpaint50 => make_inpaint(h, w, 0.5, self.seed)?,
            TaskKind::Inpaint70 => make_inpaint(h, w, 0.7, self.seed)?,
            TaskKind::Sr2 => make_downsample(2)?,
            TaskKind::Sr4 => make_downsample(4)?,
            TaskKind::Motion => make_motion_blur(),
            TaskKind::Nonlinear => make_anisotropic_blur(),
            TaskKind::CtSparse | TaskKind::CtLimited => {
                if c != 1 || h != w {
                    return Err(Error::shape("ct task", "single-channel square image", format!("{image_shape:?}")));
                }
                make_radon(h, &self.angles(), self.detectors)?
            }
        };
        op.output_shape(image_shape)?;
        Ok(op)
    }
}

/// Min-max normalization to `[0,1]`; constant images map to zeros.
pub fn normalize_unit(x: &Tensor<f32>) -> Tensor<f32> {
    let (lo, hi) = x
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        x.map(|v| (v - lo) / (hi - lo))
    } else {
        Tensor::zeros(x.shape())
    }
}

/// Noiseless measurements `y = A(x_true)` together with `A`.
pub fn degrade(task: &TaskSpec, x_true: &Tensor<f32>) -> Result<(Tensor<f32>, ForwardOperator)> {
    if x_true.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("ground truth must lie in [0,1]"));
    }
    let op = task.operator(x_true.shape())?;
    let y = op.apply(x_true)?;
    Ok((y, op))
}
