//! Linear least-squares fusion of the three perceptron outputs into a PAL.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal loading added to the normal equations.
pub const RIDGE: f64 = 1e-8;

/// `pal = bias + pedometer * P' + heart_rate * HR' + motion * A'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub bias: f64,
    pub pedometer: f64,
    pub heart_rate: f64,
    pub motion: f64,
}

impl FusionWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.bias, self.pedometer, self.heart_rate, self.motion]
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        FusionWeights {
            bias: w[0],
            pedometer: w[1],
            heart_rate: w[2],
            motion: w[3],
        }
    }

    /// Unclamped fused value.
    pub fn apply(&self, pedometer: f64, heart_rate: f64, motion: f64) -> f64 {
        self.bias + self.pedometer * pedometer + self.heart_rate * heart_rate + self.motion * motion
    }
}

/// One regression row: perceptron outputs for pedometer, heart rate and
/// wrist motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionSample {
    pub pedometer: f64,
    pub heart_rate: f64,
    pub motion: f64,
}

impl FusionSample {
    fn row(&self) -> Vector4<f64> {
        Vector4::new(1.0, self.pedometer, self.heart_rate, self.motion)
    }
}

/// Least-squares weights with a bias term, via ridge-stabilized normal
/// equations.
pub fn fit_fusion_weights(samples: &[FusionSample], targets: &[f64]) -> Result<FusionWeights> {
    if samples.len() != targets.len() {
        return Err(Error::Structure(format!(
            "{} regression rows but {} targets",
            samples.len(),
            targets.len()
        )));
    }
    if samples.len() < 4 {
        return Err(Error::Parameter(format!(
            "fusion needs at least 4 rows for 4 weights, got {}",
            samples.len()
        )));
    }
    let mut gram = Matrix4::<f64>::zeros();
    let mut rhs = Vector4::<f64>::zeros();
    for (s, &y) in samples.iter().zip(targets) {
        let x = s.row();
        gram += x * x.transpose();
        rhs += x * y;
    }
    gram += Matrix4::identity() * RIDGE;
    let w = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Parameter("fusion normal equations are singular".into()))?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("fusion weights are not finite".into()));
    }
    Ok(FusionWeights::from_array([w[0], w[1], w[2], w[3]]))
}

/// `X^T (y - X w)`, zero at the unregularized least-squares optimum.
pub fn normal_residual(samples: &[FusionSample], targets: &[f64], weights: &FusionWeights) -> [f64; 4] {
    let x = DMatrix::from_fn(samples.len(), 4, |r, c| samples[r].row()[c]);
    let y = DVector::from_column_slice(targets);
    let w = DVector::from_column_slice(&weights.as_array());
    let g = x.transpose() * (y - &x * w);
    [g[0], g[1], g[2], g[3]]
}
