//! Smooth loss functions with exact gradients and one-dimensional
//! coordinate restrictions.
//!
//! Two losses are provided. [`NodeConditionalLogisticLoss`] is the per-node
//! conditional logistic loss driving graphical-model neighborhood
//! estimation: with samples `x ∈ {−1,+1}^p` and node `r`, the per-sample
//! margin is `m_i = x_r^{(i)} (c_r + Σ_{t≠r} c_t x_t^{(i)})` and the loss is
//! the mean of `log(1 + exp(m_i)) − m_i`. The node bias coordinate, when
//! enabled, multiplies the node's own spin exactly as the pairwise terms do.
//! [`SquaredLoss`] is ordinary least squares scaled by `1/(2n)`, used as a
//! closed-form oracle instance.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::ising::SampleMatrix;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("node index {node} out of range for {p} variables")]
    NodeOutOfRange { node: usize, p: usize },
    #[error("design and response dimensions disagree: {rows} rows vs {len} responses")]
    ShapeMismatch { rows: usize, len: usize },
}

/// Numerically stable `log(1 + exp(x))`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Value and first two derivatives of a one-dimensional slice of a loss.
#[derive(Debug, Clone, Copy)]
pub struct CoordEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// One-dimensional restrictions `α ↦ L(θ + α e_j)` around a fixed base
/// point, with state precomputed so that repeated probes are cheap.
pub trait CoordProbe {
    /// Loss value at the base point.
    fn base_value(&self) -> f64;
    /// Value and derivatives of the restriction along `coord` at offset
    /// `alpha`.
    fn eval(&self, coord: usize, alpha: f64) -> CoordEval;
}

/// Contract for a smooth loss `L(θ; data)` over a fixed data set.
///
/// Implementations own an immutable view of their data; a loss object can be
/// probed concurrently from multiple threads.
pub trait SmoothLoss: Sync {
    /// Number of parameter coordinates.
    fn dim(&self) -> usize;

    /// Loss value at `theta`.
    fn value(&self, theta: &[f64]) -> f64;

    /// Full gradient at `theta`.
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;

    /// Hessian restricted to the given coordinates, in their given order.
    fn restricted_hessian(&self, theta: &[f64], support: &[usize]) -> Array2<f64>;

    /// Precomputes state for probing coordinate restrictions around `theta`.
    fn probe<'a>(&'a self, theta: &[f64]) -> Box<dyn CoordProbe + 'a>;

    /// Coordinates that every restricted fit keeps active and that are never
    /// forward candidates nor counted toward the support (e.g. a bias term).
    fn pinned_coords(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Squared loss `‖y − Xθ‖² / (2n)` over a dense design.
#[derive(Debug, Clone)]
pub struct SquaredLoss {
    design: Array2<f64>,
    response: Array1<f64>,
    /// `‖X_j‖² / n` per column; the constant curvature of each restriction.
    col_curvature: Vec<f64>,
}

impl SquaredLoss {
    pub fn new(design: Array2<f64>, response: Array1<f64>) -> Result<Self, LossError> {
        if design.nrows() != response.len() {
            return Err(LossError::ShapeMismatch {
                rows: design.nrows(),
                len: response.len(),
            });
        }
        let n = design.nrows() as f64;
        let col_curvature = (0..design.ncols())
            .map(|j| design.column(j).iter().map(|v| v * v).sum::<f64>() / n)
            .collect();
        Ok(SquaredLoss {
            design,
            response,
            col_curvature,
        })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    fn residual(&self, theta: &[f64]) -> Vec<f64> {
        let mut res: Vec<f64> = self.response.iter().copied().collect();
        for (j, &coef) in theta.iter().enumerate() {
            if coef != 0.0 {
                for (ri, &xij) in res.iter_mut().zip(self.design.column(j)) {
                    *ri -= coef * xij;
                }
            }
        }
        res
    }
}

impl SmoothLoss for SquaredLoss {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let n = self.n() as f64;
        self.residual(theta).iter().map(|r| r * r).sum::<f64>() / (2.0 * n)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        let res = self.residual(theta);
        (0..self.dim())
            .map(|j| {
                -self
                    .design
                    .column(j)
                    .iter()
                    .zip(&res)
                    .map(|(x, r)| x * r)
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    fn restricted_hessian(&self, _theta: &[f64], support: &[usize]) -> Array2<f64> {
        let n = self.n() as f64;
        let s = support.len();
        let mut h = Array2::<f64>::zeros((s, s));
        for (a, &ja) in support.iter().enumerate() {
            for (b, &jb) in support.iter().enumerate().skip(a) {
                let v = self
                    .design
                    .column(ja)
                    .iter()
                    .zip(self.design.column(jb))
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    / n;
                h[[a, b]] = v;
                h[[b, a]] = v;
            }
        }
        h
    }

    fn probe<'a>(&'a self, theta: &[f64]) -> Box<dyn CoordProbe + 'a> {
        let n = self.n() as f64;
        let res = self.residual(theta);
        let base = res.iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
        let cross: Vec<f64> = (0..self.dim())
            .map(|j| {
                self.design
                    .column(j)
                    .iter()
                    .zip(&res)
                    .map(|(x, r)| x * r)
                    .sum::<f64>()
                    / n
            })
            .collect();
        Box::new(SquaredProbe {
            loss: self,
            base,
            cross,
        })
    }
}

struct SquaredProbe<'a> {
    loss: &'a SquaredLoss,
    base: f64,
    /// `X_j^T r / n` per column for the base residual `r`.
    cross: Vec<f64>,
}

impl CoordProbe for SquaredProbe<'_> {
    fn base_value(&self) -> f64 {
        self.base
    }

    fn eval(&self, coord: usize, alpha: f64) -> CoordEval {
        let c = self.cross[coord];
        let q = self.loss.col_curvature[coord];
        CoordEval {
            value: self.base - alpha * c + 0.5 * alpha * alpha * q,
            d1: -c + alpha * q,
            d2: q,
        }
    }
}

/// Conditional logistic loss for one node of a `±1` sample matrix.
///
/// Coordinate `j < p − 1` corresponds to the `j`-th other variable in
/// ascending node order; when the intercept is enabled it occupies the last
/// coordinate, stays active in every restricted fit, and is never a forward
/// candidate. The effective regressor for coordinate `j` in sample `i` is
/// `z_ij = x_r^{(i)} x_{t_j}^{(i)}` (just `x_r^{(i)}` for the intercept), so
/// every regressor is itself `±1`.
pub struct NodeConditionalLogisticLoss<'a> {
    data: &'a SampleMatrix,
    node: usize,
    intercept: bool,
    /// Global variable index for each non-intercept coordinate.
    vars: Vec<usize>,
}

impl<'a> NodeConditionalLogisticLoss<'a> {
    pub fn new(
        data: &'a SampleMatrix,
        node: usize,
        intercept: bool,
    ) -> Result<Self, LossError> {
        let p = data.p();
        if node >= p {
            return Err(LossError::NodeOutOfRange { node, p });
        }
        let vars = (0..p).filter(|&t| t != node).collect();
        Ok(NodeConditionalLogisticLoss {
            data,
            node,
            intercept,
            vars,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Global variable index behind a coordinate; `None` for the intercept.
    pub fn var_for_coord(&self, coord: usize) -> Option<usize> {
        self.vars.get(coord).copied()
    }

    /// Coordinate for a global variable; `None` for the node itself.
    pub fn coord_for_var(&self, var: usize) -> Option<usize> {
        if var == self.node || var >= self.data.p() {
            None
        } else if var < self.node {
            Some(var)
        } else {
            Some(var - 1)
        }
    }

    /// Index of the intercept coordinate, when enabled.
    pub fn intercept_coord(&self) -> Option<usize> {
        self.intercept.then_some(self.vars.len())
    }

    #[inline]
    fn regressor(&self, sample: usize, coord: usize) -> f64 {
        let xr = self.data.get(sample, self.node) as f64;
        match self.vars.get(coord) {
            Some(&t) => xr * self.data.get(sample, t) as f64,
            None => xr, // intercept
        }
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n];
        for (j, &coef) in theta.iter().enumerate() {
            if coef != 0.0 {
                for (i, mi) in m.iter_mut().enumerate() {
                    *mi += coef * self.regressor(i, j);
                }
            }
        }
        m
    }

    /// Mean negative conditional log-likelihood of the observed node values
    /// under the margins induced by `theta`.
    pub fn per_sample_nll(&self, theta: &[f64], sample: usize) -> f64 {
        let m: f64 = theta
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| c * self.regressor(sample, j))
            .sum();
        softplus(-m)
    }
}

impl SmoothLoss for NodeConditionalLogisticLoss<'_> {
    fn dim(&self) -> usize {
        self.vars.len() + self.intercept as usize
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let n = self.n() as f64;
        self.margins(theta)
            .iter()
            .map(|&m| softplus(-m))
            .sum::<f64>()
            / n
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        let slack: Vec<f64> = self
            .margins(theta)
            .iter()
            .map(|&m| sigmoid(m) - 1.0)
            .collect();
        (0..self.dim())
            .map(|j| {
                slack
                    .iter()
                    .enumerate()
                    .map(|(i, s)| self.regressor(i, j) * s)
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    fn restricted_hessian(&self, theta: &[f64], support: &[usize]) -> Array2<f64> {
        let n = self.n() as f64;
        let weights: Vec<f64> = self
            .margins(theta)
            .iter()
            .map(|&m| {
                let s = sigmoid(m);
                s * (1.0 - s)
            })
            .collect();
        let s = support.len();
        let mut h = Array2::<f64>::zeros((s, s));
        for (a, &ja) in support.iter().enumerate() {
            for (b, &jb) in support.iter().enumerate().skip(a) {
                let v = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * self.regressor(i, ja) * self.regressor(i, jb))
                    .sum::<f64>()
                    / n;
                h[[a, b]] = v;
                h[[b, a]] = v;
            }
        }
        h
    }

    fn probe<'b>(&'b self, theta: &[f64]) -> Box<dyn CoordProbe + 'b> {
        let margins = self.margins(theta);
        let n = self.n() as f64;
        let base = margins.iter().map(|&m| softplus(-m)).sum::<f64>() / n;
        Box::new(LogisticProbe {
            loss: self,
            margins,
            base,
        })
    }

    fn pinned_coords(&self) -> Vec<usize> {
        self.intercept_coord().into_iter().collect()
    }
}

struct LogisticProbe<'a, 'b> {
    loss: &'a NodeConditionalLogisticLoss<'b>,
    margins: Vec<f64>,
    base: f64,
}

impl CoordProbe for LogisticProbe<'_, '_> {
    fn base_value(&self) -> f64 {
        self.base
    }

    fn eval(&self, coord: usize, alpha: f64) -> CoordEval {
        let n = self.margins.len() as f64;
        let mut value = 0.0;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (i, &m) in self.margins.iter().enumerate() {
            let z = self.loss.regressor(i, coord);
            let shifted = m + alpha * z;
            let s = sigmoid(shifted);
            value += softplus(-shifted);
            d1 += z * (s - 1.0);
            d2 += z * z * s * (1.0 - s);
        }
        CoordEval {
            value: value / n,
            d1: d1 / n,
            d2: d2 / n,
        }
    }
}
