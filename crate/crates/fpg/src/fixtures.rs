//! Built-in metric and projective-factor fixtures used by the test suites
//! and selectable from CLI configs.
//!
//! - `m_euc`: flat Euclidean norm on R³.
//! - `m_sph`: round 3-sphere of curvature 1 in a stereographic chart,
//!   g_ij = 4δ_ij/(1+|x|²)².
//! - `m_rand`: Randers metric with Euclidean base and the non-closed
//!   one-form b = 0.1·x2·dx1.
//! - `m_mink`: quartic Minkowski norm L = (y1⁴+y2⁴+y3⁴)^{1/4}.
//! - projective factors: λ ≡ 0, the linear λ = 0.05(y1 + x1·y2), and the
//!   norm factor λ = 0.2·L of a given metric.

use std::sync::Arc;

use crate::expr::{self, Expr};
use crate::jet::{EvalPoint, Num, ScalarField};
use crate::metrics::FinslerMetric;

pub const DIM: usize = 3;

/// Standard evaluation point used across examples and tests.
pub fn p0() -> EvalPoint {
    EvalPoint::new(vec![0.1, 0.2, 0.3], vec![1.0, 0.5, -0.25]).unwrap()
}

fn e(src: &str) -> Expr {
    expr::parse(src, DIM).expect("fixture expression parses")
}

pub fn identity_matrix_exprs(n: usize) -> Vec<Vec<Expr>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| expr::parse(if i == j { "1" } else { "0" }, n).unwrap())
                .collect()
        })
        .collect()
}

pub fn m_euc() -> FinslerMetric {
    FinslerMetric::euclidean(DIM).expect("euclidean fixture registers")
}

pub fn m_sph() -> FinslerMetric {
    let diag = "4/(1+x1^2+x2^2+x3^2)^2";
    let g = (0..DIM)
        .map(|i| {
            (0..DIM)
                .map(|j| e(if i == j { diag } else { "0" }))
                .collect()
        })
        .collect();
    FinslerMetric::riemannian(DIM, g).expect("sphere fixture registers")
}

pub fn m_rand() -> FinslerMetric {
    let a = identity_matrix_exprs(DIM);
    let b = vec![e("0.1*x2"), e("0"), e("0")];
    FinslerMetric::randers(DIM, a, b).expect("randers fixture registers")
}

pub fn m_mink() -> FinslerMetric {
    FinslerMetric::minkowski(DIM, e("sqrt(sqrt(y1^4+y2^4+y3^4))"))
        .expect("minkowski fixture registers")
}

/// λ ≡ 0 (the identity projective change).
pub fn lambda_zero() -> Arc<dyn ScalarField> {
    Arc::new(ZeroField(DIM))
}

/// λ = 0.05(y1 + x1·y2), linear in y.
pub fn lambda_lin() -> Arc<dyn ScalarField> {
    Arc::new(e("0.05*(y1 + x1*y2)"))
}

/// λ = 0.2·L for the given metric.
pub fn lambda_norm(m: &FinslerMetric) -> Arc<dyn ScalarField> {
    Arc::new(ScaledField {
        inner: m.lagrangian(),
        k: 0.2,
    })
}

struct ZeroField(usize);

impl ScalarField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval_num(&self, _x: &[Num], _y: &[Num]) -> crate::error::Result<Num> {
        Ok(Num::zero())
    }
}

struct ScaledField {
    inner: Arc<dyn ScalarField>,
    k: f64,
}

impl ScalarField for ScaledField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval_num(&self, x: &[Num], y: &[Num]) -> crate::error::Result<Num> {
        Ok(self.inner.eval_num(x, y)?.scale(self.k))
    }
}
