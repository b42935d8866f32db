//! Independent finite-difference differentiation engine.
//!
//! Everything here is deliberately redundant with the exact jet and
//! local-expansion machinery: central differences with Richardson
//! extrapolation provide derivative estimates from plain point evaluations
//! only, so agreement between the two pipelines validates both. The module
//! also carries an independently coded Douglas-tensor construction,
//! [`classical_douglas`], used to cross-check the projective module.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{EvalPoint, Num, ScalarField};
use crate::metrics::SprayData;
use crate::spray::{fiber_partials, relative_residual, tensor, Slot, TensorValue};

/// Central finite differences (order-2 stencil) with Richardson
/// extrapolation across halved steps.
#[derive(Clone, Copy, Debug)]
pub struct FDScheme {
    /// Base step, scaled by `1 + ‖p‖` before use.
    pub h0: f64,
    /// Richardson levels (step halvings); each level cancels one more even
    /// power of h.
    pub levels: usize,
}

impl Default for FDScheme {
    fn default() -> FDScheme {
        FDScheme { h0: 1e-3, levels: 3 }
    }
}

/// A finite-difference derivative estimate with its Richardson error
/// estimate (the gap between the last two extrapolation diagonals).
#[derive(Clone, Copy, Debug)]
pub struct FdEstimate {
    pub value: f64,
    pub error: f64,
}

/// Maximum mixed-derivative order; central-difference noise beyond four
/// directions is unusable at double precision.
pub const MAX_FD_DIRS: usize = 4;

const STEP_FLOOR: f64 = 1e-10;

impl FDScheme {
    /// Mixed directional derivative of `f` at `p` along `dirs` (each a
    /// 2n-vector: first n components along x, last n along y), by the
    /// product central stencil with Richardson extrapolation.
    pub fn fd_derivative(
        &self,
        f: &dyn ScalarField,
        p: &EvalPoint,
        dirs: &[Vec<f64>],
    ) -> Result<FdEstimate> {
        let k = dirs.len();
        if k > MAX_FD_DIRS {
            return Err(Error::Arity {
                requested: k,
                max: MAX_FD_DIRS,
            });
        }
        let n = p.dim();
        for d in dirs {
            if d.len() != 2 * n {
                return Err(Error::Dimension(format!(
                    "direction has length {}, expected {}",
                    d.len(),
                    2 * n
                )));
            }
        }
        if k == 0 {
            return Ok(FdEstimate {
                value: f.eval(p)?,
                error: 0.0,
            });
        }
        let scale = 1.0 + p.norm();
        let floor = STEP_FLOOR * scale;
        let h_min = self.h0 * scale / (1 << (self.levels - 1)) as f64;
        if h_min < floor {
            return Err(Error::StepUnderflow { h: h_min, floor });
        }

        // Richardson tableau over h, h/2, h/4, ...: the central stencil has
        // an even-power error expansion, so each column cancels a factor 4.
        let mut diag = Vec::with_capacity(self.levels);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(self.levels);
        for level in 0..self.levels {
            let h = self.h0 * scale / (1 << level) as f64;
            let mut row = vec![self.stencil(f, p, dirs, h)?];
            for j in 1..=level {
                let pow = 4f64.powi(j as i32);
                let v = (pow * row[j - 1] - rows[level - 1][j - 1]) / (pow - 1.0);
                row.push(v);
            }
            diag.push(*row.last().unwrap());
            rows.push(row);
        }
        let value = *diag.last().unwrap();
        let error = if diag.len() > 1 {
            (value - diag[diag.len() - 2]).abs()
        } else {
            f64::NAN
        };
        Ok(FdEstimate { value, error })
    }

    /// Product central stencil: sum over sign choices s ∈ {±1}^k of
    /// (∏ s_i) f(p + h Σ s_i d_i) / (2h)^k.
    fn stencil(
        &self,
        f: &dyn ScalarField,
        p: &EvalPoint,
        dirs: &[Vec<f64>],
        h: f64,
    ) -> Result<f64> {
        let k = dirs.len();
        let n = p.dim();
        let mut acc = 0.0;
        for signs in 0..(1usize << k) {
            let mut x = p.x.clone();
            let mut y = p.y.clone();
            let mut parity = 1.0;
            for (d, dir) in dirs.iter().enumerate() {
                let s = if signs >> d & 1 == 0 { 1.0 } else { -1.0 };
                parity *= s;
                for i in 0..n {
                    x[i] += s * h * dir[i];
                    y[i] += s * h * dir[n + i];
                }
            }
            acc += parity * f.eval(&EvalPoint::new(x, y)?)?;
        }
        Ok(acc / (2.0 * h).powi(k as i32))
    }
}

/// Axis direction along y^j as a 2n-vector.
pub fn y_axis(n: usize, j: usize) -> Vec<f64> {
    let mut d = vec![0.0; 2 * n];
    d[n + j] = 1.0;
    d
}

/// Axis direction along x^j as a 2n-vector.
pub fn x_axis(n: usize, j: usize) -> Vec<f64> {
    let mut d = vec![0.0; 2 * n];
    d[j] = 1.0;
    d
}

/// One component of the trace-corrected spray
/// D^i = G^i − (∂G^m/∂y^m) y^i / (n+1): the quantity whose third fiber
/// derivative is the Douglas tensor. The divergence trace is taken with a
/// jet lift, so the field composes plain-point evaluation (for the outer
/// finite differences) with first-order duals only.
struct TraceCorrectedSpray {
    spray: SprayData,
    i: usize,
}

impl ScalarField for TraceCorrectedSpray {
    fn dim(&self) -> usize {
        self.spray.n()
    }

    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
        let n = self.spray.n();
        let s = self.spray.clone();
        let (g, dg) = fiber_partials(n, |ax, ay| s.eval_num(ax, ay), x, y)?;
        let mut trace = Num::zero();
        for m in 0..n {
            trace = trace.add(&dg[m][m]);
        }
        let correction = trace.mul(&y[self.i]).scale(1.0 / (n as f64 + 1.0));
        Ok(g[self.i].sub(&correction))
    }
}

/// The Douglas tensor by the classical chart construction
/// ℙ^i_jkl = ∂³D^i/∂y^j∂y^k∂y^l, with the third fiber derivatives taken by
/// finite differences. Independent of the local-expansion pipeline end to
/// end; agreement budget is set by the FD noise (≈1e−6 relative).
pub fn classical_douglas(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let scheme = FDScheme::default();
    let mut data = Vec::with_capacity(n.pow(4));
    for i in 0..n {
        let field = TraceCorrectedSpray {
            spray: s.clone(),
            i,
        };
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let dirs = [y_axis(n, j), y_axis(n, k), y_axis(n, l)];
                    data.push(scheme.fd_derivative(&field, p, &dirs)?.value);
                }
            }
        }
    }
    Ok(tensor(
        "Pd",
        vec![Slot::Contra, Slot::Co, Slot::Co, Slot::Co],
        n,
        data,
        p,
        "Douglas tensor via finite differences of the trace-corrected spray",
    ))
}

/// Relative discrepancy between the jet pipeline and the finite-difference
/// scheme for one mixed derivative.
pub fn jet_fd_discrepancy(
    f: &dyn ScalarField,
    p: &EvalPoint,
    dirs: &[Vec<f64>],
) -> Result<f64> {
    let jet = crate::jet::directional_derivative(f, p, dirs)?;
    let fd = FDScheme::default().fd_derivative(f, p, dirs)?;
    Ok(relative_residual(&[jet], &[fd.value]))
}

/// The built-in smoothness battery: Richardson diagonals must improve
/// monotonically on these (field, point, dirs, exact value) cases.
#[allow(clippy::type_complexity)]
pub fn battery(n: usize) -> Vec<(Arc<dyn ScalarField>, Vec<Vec<f64>>, f64)> {
    use crate::expr::parse;
    let field = |src: &str| -> Arc<dyn ScalarField> { Arc::new(parse(src, n).unwrap()) };
    vec![
        // d²/dy1² (y1)² = 2.
        (field("y1^2"), vec![y_axis(n, 0), y_axis(n, 0)], 2.0),
        // d/dx1 sin(x1) at x1 = 0.1.
        (field("sin(x1)"), vec![x_axis(n, 0)], 0.1f64.cos()),
        // d²/dx1 dy2 of x1·y2·exp(x2).
        (
            field("x1*y2*exp(x2)"),
            vec![x_axis(n, 0), y_axis(n, 1)],
            0.2f64.exp(),
        ),
    ]
}
