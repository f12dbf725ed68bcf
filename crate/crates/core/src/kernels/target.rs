use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::ContinuousKernel;
use crate::error::{Error, Result};

/// Continuous target shapes. All smoothing shapes have unit mass; the
/// derivative of Gaussian is taken along axis 0 and has zero mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetShape {
    Gaussian {
        sigma: f64,
    },
    Box {
        side: f64,
    },
    /// Per-axis triangle with half-width `width`.
    Tent {
        width: f64,
    },
    Disk {
        radius: f64,
    },
    DerivativeOfGaussian {
        sigma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetKernel {
    pub shape: TargetShape,
    pub dim: usize,
}

fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0 * r,
        _ => 2.0 * PI * r * r / d as f64 * ball_volume(d - 2, r),
    }
}

fn gaussian(sigma: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (-0.5 * r2 / (sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).powf(x.len() as f64 / 2.0)
}

impl TargetKernel {
    pub fn new(shape: TargetShape, dim: usize) -> Result<Self> {
        let p = match shape {
            TargetShape::Gaussian { sigma } | TargetShape::DerivativeOfGaussian { sigma } => sigma,
            TargetShape::Box { side } => side,
            TargetShape::Tent { width } => width,
            TargetShape::Disk { radius } => radius,
        };
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel parameter must be positive and finite, got {p}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidInput(
                "kernel dimension must be at least 1".into(),
            ));
        }
        Ok(Self { shape, dim })
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        Self::new(TargetShape::Gaussian { sigma }, dim)
    }

    pub fn box_kernel(side: f64, dim: usize) -> Result<Self> {
        Self::new(TargetShape::Box { side }, dim)
    }

    pub fn tent(width: f64, dim: usize) -> Result<Self> {
        Self::new(TargetShape::Tent { width }, dim)
    }

    pub fn disk(radius: f64, dim: usize) -> Result<Self> {
        Self::new(TargetShape::Disk { radius }, dim)
    }

    pub fn derivative_of_gaussian(sigma: f64, dim: usize) -> Result<Self> {
        Self::new(TargetShape::DerivativeOfGaussian { sigma }, dim)
    }

    /// Integral over all of space: 1 for smoothing shapes, 0 for derivatives.
    pub fn mass(&self) -> f64 {
        match self.shape {
            TargetShape::DerivativeOfGaussian { .. } => 0.0,
            _ => 1.0,
        }
    }

    /// Largest absolute value of the kernel.
    pub fn peak(&self) -> f64 {
        let d = self.dim as i32;
        match self.shape {
            TargetShape::Gaussian { sigma } => gaussian(sigma, &vec![0.0; self.dim]),
            TargetShape::Box { side } => side.powi(-d),
            TargetShape::Tent { width } => width.powi(-d),
            TargetShape::Disk { radius } => 1.0 / ball_volume(self.dim, radius),
            TargetShape::DerivativeOfGaussian { sigma } => {
                let mut x = vec![0.0; self.dim];
                x[0] = sigma;
                self.eval(&x).abs()
            }
        }
    }

    /// The same shape with its parameter multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let shape = match self.shape {
            TargetShape::Gaussian { sigma } => TargetShape::Gaussian { sigma: sigma * s },
            TargetShape::Box { side } => TargetShape::Box { side: side * s },
            TargetShape::Tent { width } => TargetShape::Tent { width: width * s },
            TargetShape::Disk { radius } => TargetShape::Disk { radius: radius * s },
            TargetShape::DerivativeOfGaussian { sigma } => {
                TargetShape::DerivativeOfGaussian { sigma: sigma * s }
            }
        };
        Self::new(shape, self.dim)
    }

    fn half_extent(&self) -> f64 {
        match self.shape {
            TargetShape::Gaussian { sigma } | TargetShape::DerivativeOfGaussian { sigma } => {
                4.0 * sigma
            }
            TargetShape::Box { side } => side / 2.0,
            TargetShape::Tent { width } => width,
            TargetShape::Disk { radius } => radius,
        }
    }
}

impl ContinuousKernel for TargetKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Exact support for compact shapes; ±4σ for Gaussians.
    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        let e = self.half_extent();
        (vec![-e; self.dim], vec![e; self.dim])
    }

    /// The support, widened to ±5σ for Gaussians, where they fall below
    /// 4e-6 of their peak.
    fn frame(&self) -> (Vec<f64>, Vec<f64>) {
        let e = match self.shape {
            TargetShape::Gaussian { sigma } | TargetShape::DerivativeOfGaussian { sigma } => {
                5.0 * sigma
            }
            _ => self.half_extent(),
        };
        (vec![-e; self.dim], vec![e; self.dim])
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self.shape {
            TargetShape::Gaussian { sigma } => gaussian(sigma, x),
            TargetShape::Box { side } => {
                if x.iter().all(|v| v.abs() <= side / 2.0) {
                    side.powi(-(self.dim as i32))
                } else {
                    0.0
                }
            }
            TargetShape::Tent { width } => x
                .iter()
                .map(|v| (1.0 - v.abs() / width).max(0.0) / width)
                .product(),
            TargetShape::Disk { radius } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if r2 <= radius * radius {
                    1.0 / ball_volume(self.dim, radius)
                } else {
                    0.0
                }
            }
            TargetShape::DerivativeOfGaussian { sigma } => {
                -x[0] / (sigma * sigma) * gaussian(sigma, x)
            }
        }
    }
}

impl fmt::Display for TargetKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            TargetShape::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            TargetShape::Box { side } => write!(f, "box:{side}"),
            TargetShape::Tent { width } => write!(f, "tent:{width}"),
            TargetShape::Disk { radius } => write!(f, "disk:{radius}"),
            TargetShape::DerivativeOfGaussian { sigma } => write!(f, "dog:{sigma}"),
        }?;
        if self.dim != 1 {
            write!(f, ":{}d", self.dim)?;
        }
        Ok(())
    }
}

/// Parses `kind:param[:Nd]`, e.g. `gaussian:0.1`, `disk:0.3:2d`.
impl FromStr for TargetKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse kernel spec {s:?}"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?.trim().to_ascii_lowercase();
        let param: f64 = parts
            .next()
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let dim = match parts.next() {
            None => 1,
            Some(d) => d
                .trim()
                .trim_end_matches(['d', 'D'])
                .parse()
                .map_err(|_| bad())?,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        let shape = match kind.as_str() {
            "gaussian" | "gauss" => TargetShape::Gaussian { sigma: param },
            "box" => TargetShape::Box { side: param },
            "tent" => TargetShape::Tent { width: param },
            "disk" | "circle" => TargetShape::Disk { radius: param },
            "dog" => TargetShape::DerivativeOfGaussian { sigma: param },
            _ => return Err(bad()),
        };
        Self::new(shape, dim)
    }
}
