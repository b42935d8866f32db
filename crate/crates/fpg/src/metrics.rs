//! Finsler metric families and the metric-to-spray extraction pipeline.
//!
//! A metric is registered together with sampled validity gates: positivity of
//! L away from y = 0, first-degree Euler homogeneity of L, invertibility of
//! the fundamental tensor g_ij = ∂²E/∂y^i∂y^j (with condition numbers
//! surfaced), and — for Randers metrics — the strong-convexity bound
//! sup ‖b‖_a < 1. The canonical spray is the unique chart solution of
//! 2G^i = g^{ij}(y^k ∂²E/∂y^j∂x^k − ∂E/∂x^j), with the spray vector field
//! convention y^i ∂/∂x^i − 2G^i ∂/∂y^i so that geodesics satisfy
//! (x^i)'' + 2G^i(x, x') = 0 and a projective change reads G̃^i = G^i + λy^i.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::{euler_degree, lift, Direction, EvalPoint, Num, ScalarField, Var};
use crate::sample::{sample_points, Domain};

/// Seed for the registration gates; fixed so that construction is
/// deterministic and independent of user-level seeds.
pub(crate) const GATE_SEED: u64 = 0xF1D0;

/// Metric families supported by the engine.
#[derive(Clone)]
pub enum Family {
    /// L = |y| (flat).
    Euclidean,
    /// L = sqrt(g_ij(x) y^i y^j) with entries depending on x only.
    Riemannian { g: Vec<Vec<Expr>> },
    /// L = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i.
    Randers { a: Vec<Vec<Expr>>, b: Vec<Expr> },
    /// L = L(y), no x dependence.
    Minkowski { l: Expr },
    /// L given by an arbitrary expression in x and y.
    Custom { l: Expr },
}

impl Family {
    fn name(&self) -> &'static str {
        match self {
            Family::Euclidean => "euclidean",
            Family::Riemannian { .. } => "riemannian",
            Family::Randers { .. } => "randers",
            Family::Minkowski { .. } => "minkowski",
            Family::Custom { .. } => "custom",
        }
    }
}

fn dot(a: &[Num], b: &[Num]) -> Num {
    let mut acc = Num::zero();
    for (p, q) in a.iter().zip(b) {
        acc = acc.add(&p.mul(q));
    }
    acc
}

fn quadratic_form(g: &[Vec<Expr>], x: &[Num], y: &[Num]) -> Result<Num> {
    let n = y.len();
    let mut acc = Num::zero();
    for i in 0..n {
        for j in 0..n {
            let gij = g[i][j].eval_num(x, y)?;
            acc = acc.add(&gij.mul(&y[i].mul(&y[j])));
        }
    }
    Ok(acc)
}

/// The Finsler function L as a scalar field.
struct Lagrangian {
    n: usize,
    family: Family,
}

impl ScalarField for Lagrangian {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
        match &self.family {
            Family::Euclidean => dot(y, y).sqrt(),
            Family::Riemannian { g } => quadratic_form(g, x, y)?.sqrt(),
            Family::Randers { a, b } => {
                let alpha = quadratic_form(a, x, y)?.sqrt()?;
                let mut beta = Num::zero();
                for (bi, yi) in b.iter().zip(y) {
                    beta = beta.add(&bi.eval_num(x, y)?.mul(yi));
                }
                Ok(alpha.add(&beta))
            }
            Family::Minkowski { l } | Family::Custom { l } => l.eval_num(x, y),
        }
    }
}

/// The energy E = ½L² as a scalar field. For quadratic families the square
/// root is bypassed so that E stays polynomial in y.
struct EnergyField {
    n: usize,
    family: Family,
}

impl ScalarField for EnergyField {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
        match &self.family {
            Family::Euclidean => Ok(dot(y, y).scale(0.5)),
            Family::Riemannian { g } => Ok(quadratic_form(g, x, y)?.scale(0.5)),
            family => {
                let l = Lagrangian {
                    n: self.n,
                    family: family.clone(),
                }
                .eval_num(x, y)?;
                Ok(l.mul(&l).scale(0.5))
            }
        }
    }
}

/// A registered Finsler metric: the function L, its energy, and the gate
/// diagnostics collected at registration time.
#[derive(Clone)]
pub struct FinslerMetric {
    n: usize,
    family: Family,
    lagrangian: Arc<dyn ScalarField>,
    energy: Arc<dyn ScalarField>,
    /// Worst fundamental-tensor condition number seen during registration.
    pub max_condition: f64,
}

impl FinslerMetric {
    pub fn euclidean(n: usize) -> Result<FinslerMetric> {
        FinslerMetric::register(n, Family::Euclidean)
    }

    pub fn riemannian(n: usize, g: Vec<Vec<Expr>>) -> Result<FinslerMetric> {
        if g.len() != n || g.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension(format!("metric matrix must be {n}x{n}")));
        }
        for row in &g {
            for e in row {
                if e.references_y() {
                    return Err(Error::Dimension(
                        "riemannian metric entries must depend on x only".into(),
                    ));
                }
            }
        }
        FinslerMetric::register(n, Family::Riemannian { g })
    }

    pub fn randers(n: usize, a: Vec<Vec<Expr>>, b: Vec<Expr>) -> Result<FinslerMetric> {
        if a.len() != n || a.iter().any(|row| row.len() != n) || b.len() != n {
            return Err(Error::Dimension(format!(
                "randers data must be an {n}x{n} matrix and a length-{n} one-form"
            )));
        }
        for e in a.iter().flatten().chain(&b) {
            if e.references_y() {
                return Err(Error::Dimension(
                    "randers data must depend on x only".into(),
                ));
            }
        }
        FinslerMetric::register(n, Family::Randers { a, b })
    }

    pub fn minkowski(n: usize, l: Expr) -> Result<FinslerMetric> {
        FinslerMetric::register(n, Family::Minkowski { l })
    }

    pub fn custom(n: usize, l: Expr) -> Result<FinslerMetric> {
        FinslerMetric::register(n, Family::Custom { l })
    }

    fn register(n: usize, family: Family) -> Result<FinslerMetric> {
        let lagrangian: Arc<dyn ScalarField> = Arc::new(Lagrangian {
            n,
            family: family.clone(),
        });
        let energy: Arc<dyn ScalarField> = Arc::new(EnergyField {
            n,
            family: family.clone(),
        });

        let dom = Domain::default_box(n);
        let pts = sample_points(n, &dom, GATE_SEED, 10);

        // Positivity and first-degree homogeneity of L.
        for p in &pts {
            let lv = lagrangian.eval(p)?;
            if lv <= 0.0 {
                return Err(Error::Domain(format!(
                    "L must be positive for y != 0; got {lv} at x={:?}, y={:?}",
                    p.x, p.y
                )));
            }
            let deg = euler_degree(lagrangian.as_ref(), p)?;
            if (deg - 1.0).abs() > 1e-8 {
                return Err(Error::Homogeneity(format!(
                    "L must be positively homogeneous of degree 1 in y; \
                     observed degree {deg} at x={:?}, y={:?}",
                    p.x, p.y
                )));
            }
        }

        // Randers strong-convexity guard: sup ‖b‖_a < 1 on the sample set.
        if let Family::Randers { a, b } = &family {
            for p in &pts {
                let amat = eval_matrix(a, &p.x)?;
                let (ainv, _) = invert(&amat).ok_or_else(|| {
                    Error::SingularMetric("randers matrix a is singular".into())
                })?;
                let bv: Vec<f64> = b
                    .iter()
                    .map(|e| e.eval(p))
                    .collect::<Result<Vec<f64>>>()?;
                let mut norm2 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        norm2 += bv[i] * ainv[i][j] * bv[j];
                    }
                }
                if norm2 >= 1.0 {
                    return Err(Error::Domain(format!(
                        "randers one-form too large: |b|_a = {} >= 1 at x={:?}",
                        norm2.sqrt(),
                        p.x
                    )));
                }
            }
        }

        let mut metric = FinslerMetric {
            n,
            family,
            lagrangian,
            energy,
            max_condition: 0.0,
        };

        // Invertibility of g at the gate samples; record the worst condition.
        let mut max_cond: f64 = 0.0;
        for p in &pts {
            let ft = metric.fundamental_tensor(p)?;
            max_cond = max_cond.max(ft.condition);
        }
        metric.max_condition = max_cond;
        Ok(metric)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }

    /// The Finsler function L.
    pub fn lagrangian(&self) -> Arc<dyn ScalarField> {
        self.lagrangian.clone()
    }

    /// The energy E = ½L².
    pub fn energy(&self) -> Arc<dyn ScalarField> {
        self.energy.clone()
    }

    pub fn energy_at(&self, p: &EvalPoint) -> Result<f64> {
        self.energy.eval(p)
    }

    /// g_ij = ∂²E/∂y^i∂y^j with its inverse and 1-norm condition number.
    pub fn fundamental_tensor(&self, p: &EvalPoint) -> Result<FundamentalTensor> {
        let x: Vec<Num> = p.x.iter().map(|v| Num::Scalar(*v)).collect();
        let y: Vec<Num> = p.y.iter().map(|v| Num::Scalar(*v)).collect();
        let g_num = fundamental_tensor_num(self.energy.as_ref(), &x, &y)?;
        let g: Vec<Vec<f64>> = g_num
            .iter()
            .map(|row| row.iter().map(|v| v.value()).collect())
            .collect();
        let scale = g
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let (inverse, condition) = invert(&g).ok_or_else(|| {
            Error::SingularMetric(format!(
                "fundamental tensor singular at x={:?}, y={:?} (scale {scale:.3e})",
                p.x, p.y
            ))
        })?;
        Ok(FundamentalTensor {
            g,
            inverse,
            condition,
        })
    }

    /// The canonical spray of the metric.
    pub fn canonical_spray(&self) -> SprayData {
        SprayData::new(
            self.n,
            Arc::new(MetricSpray {
                n: self.n,
                energy: self.energy.clone(),
            }),
            Provenance::MetricDerived(self.family.name().to_string()),
        )
    }
}

/// Fundamental tensor at a point, with inverse and 1-norm condition number.
pub struct FundamentalTensor {
    pub g: Vec<Vec<f64>>,
    pub inverse: Vec<Vec<f64>>,
    pub condition: f64,
}

/// g_ij on jet arguments: two stacked single-direction-per-axis fiber lifts
/// of E, so the diagonal second derivatives come out exactly.
pub(crate) fn fundamental_tensor_num(
    energy: &dyn ScalarField,
    x: &[Num],
    y: &[Num],
) -> Result<Vec<Vec<Num>>> {
    let n = x.len();
    let outer: Vec<Direction> = (0..n).map(|i| Direction::Axis(Var::Y(i))).collect();
    let inner: Vec<Direction> = outer.clone();
    let jets = lift(
        |mx, my| {
            let js = lift(
                |lx, ly| Ok(vec![energy.eval_num(lx, ly)?]),
                mx,
                my,
                &inner,
            )?;
            Ok((0..n).map(|k| js[0].coeff(1 << k).clone()).collect())
        },
        x,
        y,
        &outer,
    )?;
    Ok((0..n)
        .map(|i| (0..n).map(|j| jets[j].coeff(1 << i).clone()).collect())
        .collect())
}

fn eval_matrix(m: &[Vec<Expr>], x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let p = EvalPoint::new(x.to_vec(), vec![1.0; x.len()])?;
    m.iter()
        .map(|row| row.iter().map(|e| e.eval(&p)).collect())
        .collect()
}

/// Dense inverse by Gauss-Jordan with partial pivoting; returns the inverse
/// and the 1-norm condition number, or None when numerically singular.
pub(crate) fn invert(a: &[Vec<f64>]) -> Option<(Vec<Vec<f64>>, f64)> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| {
            aug[r][col]
                .abs()
                .partial_cmp(&aug[s][col].abs())
                .unwrap()
        })?;
        if aug[piv][col].abs() <= 1e-12 * scale.max(1.0) {
            return None;
        }
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col && aug[r][col] != 0.0 {
                let f = aug[r][col];
                for c in 0..2 * n {
                    let sub = f * aug[col][c];
                    aug[r][c] -= sub;
                }
            }
        }
    }
    let inv: Vec<Vec<f64>> = aug.into_iter().map(|r| r[n..].to_vec()).collect();
    let norm1 = |m: &[Vec<f64>]| -> f64 {
        (0..n)
            .map(|j| (0..n).map(|i| m[i][j].abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    let cond = norm1(a) * norm1(&inv);
    Some((inv, cond))
}

/// Solve A w = b where entries are jet numbers; pivoting is by the absolute
/// order-zero part.
pub(crate) fn solve_num(mut a: Vec<Vec<Num>>, mut b: Vec<Num>) -> Result<Vec<Num>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.value().abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| {
                a[r][col]
                    .value()
                    .abs()
                    .partial_cmp(&a[s][col].value().abs())
                    .unwrap()
            })
            .unwrap();
        if a[piv][col].value().abs() <= 1e-12 * scale.max(1.0) {
            return Err(Error::SingularMetric(format!(
                "pivot {:.3e} below threshold (scale {scale:.3e})",
                a[piv][col].value().abs()
            )));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip()?;
        for r in col + 1..n {
            if a[r][col].value() == 0.0 && matches!(a[r][col], Num::Scalar(_)) {
                continue;
            }
            let f = a[r][col].mul(&inv);
            for c in col + 1..n {
                let sub = f.mul(&a[col][c]);
                a[r][c] = a[r][c].sub(&sub);
            }
            let sub = f.mul(&b[col]);
            b[r] = b[r].sub(&sub);
            a[r][col] = Num::zero();
        }
    }
    let mut w = vec![Num::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for c in row + 1..n {
            let sub = a[row][c].mul(&w[c]);
            acc = acc.sub(&sub);
        }
        w[row] = acc.div(&a[row][row])?;
    }
    Ok(w)
}

/// Where the spray coefficients came from.
#[derive(Clone, Debug)]
pub enum Provenance {
    MetricDerived(String),
    Explicit,
    ProjectivelyChanged(String),
}

/// Spray coefficient evaluator G^i(x, y) on jet arguments.
pub trait SprayCoeffs: Send + Sync {
    fn eval(&self, x: &[Num], y: &[Num]) -> Result<Vec<Num>>;
}

struct MetricSpray {
    n: usize,
    energy: Arc<dyn ScalarField>,
}

impl SprayCoeffs for MetricSpray {
    fn eval(&self, x: &[Num], y: &[Num]) -> Result<Vec<Num>> {
        let n = self.n;
        if let Num::Taylor(t) = &x[0] {
            return self.eval_taylor(t.ctx().clone(), x, y);
        }
        if 2 * n > crate::jet::MAX_DIRS {
            return self.eval_two_pass(x, y);
        }

        // Single energy evaluation: a fiber lift over a combined fiber+base
        // lift yields g_jk, ∂E/∂x^k and ∂²E/∂y^j∂x^k all at once.
        let outer: Vec<Direction> = (0..n).map(|i| Direction::Axis(Var::Y(i))).collect();
        let inner: Vec<Direction> = (0..n)
            .map(|i| Direction::Axis(Var::Y(i)))
            .chain((0..n).map(|i| Direction::Axis(Var::X(i))))
            .collect();
        let energy = &self.energy;
        let jets = lift(
            |mx, my| {
                let js = lift(
                    |lx, ly| Ok(vec![energy.eval_num(lx, ly)?]),
                    mx,
                    my,
                    &inner,
                )?;
                let mut out = Vec::with_capacity(2 * n);
                for k in 0..n {
                    out.push(js[0].coeff(1 << k).clone()); // ∂E/∂y^k
                }
                for k in 0..n {
                    out.push(js[0].coeff(1 << (n + k)).clone()); // ∂E/∂x^k
                }
                Ok(out)
            },
            x,
            y,
            &outer,
        )?;

        // g_jk = ∂²E/∂y^j∂y^k; rhs_j = y^k ∂²E/∂y^j∂x^k − ∂E/∂x^j.
        let g: Vec<Vec<Num>> = (0..n)
            .map(|j| (0..n).map(|k| jets[k].coeff(1 << j).clone()).collect())
            .collect();
        let rhs: Vec<Num> = (0..n)
            .map(|j| {
                let mut acc = Num::zero();
                for k in 0..n {
                    acc = acc.add(&y[k].mul(jets[n + k].coeff(1 << j)));
                }
                acc.sub(jets[n + j].coeff(0))
            })
            .collect();

        let w = solve_num(g, rhs)?;
        Ok(w.into_iter().map(|v| v.scale(0.5)).collect())
    }
}

impl MetricSpray {
    /// Taylor-argument path: expand the energy once around the point and take
    /// formal derivatives for g and the right-hand side, so a full local
    /// expansion of the spray costs a single energy evaluation.
    fn eval_taylor(
        &self,
        ctx: std::sync::Arc<crate::taylor::Ctx>,
        x: &[Num],
        y: &[Num],
    ) -> Result<Vec<Num>> {
        let n = self.n;
        let e = crate::taylor::to_tpoly(&ctx, self.energy.eval_num(x, y)?);
        let ey: Vec<crate::taylor::TPoly> = (0..n).map(|j| e.dy(j)).collect();
        let g: Vec<Vec<Num>> = (0..n)
            .map(|j| (0..n).map(|k| Num::Taylor(ey[j].dy(k))).collect())
            .collect();
        // rhs_j = y^k ∂²E/∂y^j∂x^k − ∂E/∂x^j with y the coordinate polys.
        let rhs: Vec<Num> = (0..n)
            .map(|j| {
                let mut acc = Num::zero();
                for k in 0..n {
                    acc = acc.add(&y[k].mul(&Num::Taylor(ey[j].dx(k))));
                }
                acc.sub(&Num::Taylor(e.dx(j)))
            })
            .collect();
        let w = solve_num(g, rhs)?;
        Ok(w.into_iter().map(|v| v.scale(0.5)).collect())
    }

    /// Fallback for dimensions where 2n exceeds the lift arity: one pass for
    /// g, one for the base derivatives.
    fn eval_two_pass(&self, x: &[Num], y: &[Num]) -> Result<Vec<Num>> {
        let n = self.n;
        let g = fundamental_tensor_num(self.energy.as_ref(), x, y)?;
        let outer: Vec<Direction> = (0..n).map(|i| Direction::Axis(Var::Y(i))).collect();
        let inner: Vec<Direction> = (0..n).map(|i| Direction::Axis(Var::X(i))).collect();
        let energy = &self.energy;
        let jets = lift(
            |mx, my| {
                let js = lift(
                    |lx, ly| Ok(vec![energy.eval_num(lx, ly)?]),
                    mx,
                    my,
                    &inner,
                )?;
                Ok((0..n).map(|k| js[0].coeff(1 << k).clone()).collect())
            },
            x,
            y,
            &outer,
        )?;
        let rhs: Vec<Num> = (0..n)
            .map(|j| {
                let mut acc = Num::zero();
                for k in 0..n {
                    acc = acc.add(&y[k].mul(jets[k].coeff(1 << j)));
                }
                acc.sub(jets[j].coeff(0))
            })
            .collect();
        let w = solve_num(g, rhs)?;
        Ok(w.into_iter().map(|v| v.scale(0.5)).collect())
    }
}

struct ExplicitSpray {
    exprs: Vec<Expr>,
}

impl SprayCoeffs for ExplicitSpray {
    fn eval(&self, x: &[Num], y: &[Num]) -> Result<Vec<Num>> {
        self.exprs.iter().map(|e| e.eval_num(x, y)).collect()
    }
}

type CacheKey = (&'static str, Vec<u64>);

struct SprayInner {
    n: usize,
    coeffs: Arc<dyn SprayCoeffs>,
    provenance: Provenance,
    /// Sign applied to the horizontal bracket defect when forming the
    /// (v)h-torsion; +1 is the library convention. Flipping it is a test
    /// harness injection that must break the curvature identities.
    vh_sign: f64,
    cache: Mutex<HashMap<CacheKey, Arc<Vec<f64>>>>,
}

/// Spray coefficients G^i(x,y), h(2) in y, with provenance and a memoization
/// cache for the derived pointwise tensors.
#[derive(Clone)]
pub struct SprayData {
    inner: Arc<SprayInner>,
}

impl SprayData {
    pub(crate) fn new(
        n: usize,
        coeffs: Arc<dyn SprayCoeffs>,
        provenance: Provenance,
    ) -> SprayData {
        SprayData {
            inner: Arc::new(SprayInner {
                n,
                coeffs,
                provenance,
                vh_sign: 1.0,
                cache: Mutex::new(HashMap::new()),
            }),
        }
    }

    /// Build a spray from user expressions; gated on h(2) homogeneity at 20
    /// seeded sample points (skipping points where a component vanishes).
    pub fn explicit(n: usize, exprs: Vec<Expr>) -> Result<SprayData> {
        if exprs.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} spray components, got {}",
                exprs.len()
            )));
        }
        let spray = SprayData::new(
            n,
            Arc::new(ExplicitSpray { exprs }),
            Provenance::Explicit,
        );
        spray.check_homogeneity(20, 1e-7)?;
        Ok(spray)
    }

    /// Euler-test every component at `count` seeded points.
    pub fn check_homogeneity(&self, count: usize, tol: f64) -> Result<()> {
        let n = self.n();
        let pts = sample_points(n, &Domain::default_box(n), GATE_SEED, count);
        for p in &pts {
            let g = self.eval(p)?;
            for i in 0..n {
                if g[i].abs() < 1e-12 {
                    continue;
                }
                let deg = euler_degree(&self.component(i), p)?;
                if (deg - 2.0).abs() > tol {
                    return Err(Error::Homogeneity(format!(
                        "spray component {i} has Euler degree {deg}, expected 2, \
                         at x={:?}, y={:?}",
                        p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn provenance(&self) -> &Provenance {
        &self.inner.provenance
    }

    pub(crate) fn vh_sign(&self) -> f64 {
        self.inner.vh_sign
    }

    /// G^i on jet arguments.
    pub fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Vec<Num>> {
        self.inner.coeffs.eval(x, y)
    }

    pub fn eval(&self, p: &EvalPoint) -> Result<Vec<f64>> {
        let x: Vec<Num> = p.x.iter().map(|v| Num::Scalar(*v)).collect();
        let y: Vec<Num> = p.y.iter().map(|v| Num::Scalar(*v)).collect();
        Ok(self.eval_num(&x, &y)?.iter().map(|v| v.value()).collect())
    }

    /// One spray component as a scalar field.
    pub fn component(&self, i: usize) -> SprayComponent {
        SprayComponent {
            spray: self.clone(),
            i,
        }
    }

    /// Test-harness injection: same coefficients, opposite (v)h-torsion sign,
    /// fresh tensor cache. Used by the negative-control suite only.
    #[doc(hidden)]
    pub fn with_flipped_torsion_sign(&self) -> SprayData {
        SprayData {
            inner: Arc::new(SprayInner {
                n: self.inner.n,
                coeffs: self.inner.coeffs.clone(),
                provenance: self.inner.provenance.clone(),
                vh_sign: -self.inner.vh_sign,
                cache: Mutex::new(HashMap::new()),
            }),
        }
    }

    /// Fetch a pointwise tensor from the cache or compute and insert it.
    pub(crate) fn cached<F>(
        &self,
        name: &'static str,
        p: &EvalPoint,
        compute: F,
    ) -> Result<Arc<Vec<f64>>>
    where
        F: FnOnce() -> Result<Vec<f64>>,
    {
        let key: CacheKey = (
            name,
            p.x.iter()
                .chain(&p.y)
                .map(|v| v.to_bits())
                .collect(),
        );
        if let Some(hit) = self.inner.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let fresh = Arc::new(compute()?);
        self.inner
            .cache
            .lock()
            .unwrap()
            .insert(key, fresh.clone());
        Ok(fresh)
    }
}

/// A single spray component G^i as a scalar field.
pub struct SprayComponent {
    spray: SprayData,
    i: usize,
}

impl ScalarField for SprayComponent {
    fn dim(&self) -> usize {
        self.spray.n()
    }

    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
        Ok(self.spray.eval_num(x, y)?.swap_remove(self.i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn euclidean_energy() {
        let m = FinslerMetric::euclidean(3).unwrap();
        let p = EvalPoint::new(vec![0.0; 3], vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(m.energy_at(&p).unwrap(), 12.5);
    }

    #[test]
    fn sphere_energy_matches_quadratic_form() {
        let m = fixtures::m_sph();
        let p = fixtures::p0();
        let r2: f64 = p.x.iter().map(|v| v * v).sum();
        let c = 4.0 / (1.0 + r2).powi(2);
        let direct = 0.5 * c * p.y.iter().map(|v| v * v).sum::<f64>();
        let e = m.energy_at(&p).unwrap();
        assert!((e - direct).abs() < 1e-14 * direct);
    }

    #[test]
    fn energy_is_degree_two_for_every_family() {
        for m in [
            fixtures::m_euc(),
            fixtures::m_sph(),
            fixtures::m_rand(),
            fixtures::m_mink(),
        ] {
            for p in sample_points(3, &Domain::default_box(3), 5, 5) {
                let d = euler_degree(m.energy().as_ref(), &p).unwrap();
                assert!((d - 2.0).abs() < 1e-9, "family {}: {d}", m.family_name());
            }
        }
    }

    #[test]
    fn lagrangian_is_degree_one() {
        let m = fixtures::m_euc();
        let d = euler_degree(m.lagrangian().as_ref(), &fixtures::p0()).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fundamental_tensor_of_euclidean_is_identity() {
        let m = fixtures::m_euc();
        let ft = m.fundamental_tensor(&fixtures::p0()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ft.g[i][j] - want).abs() < 1e-14);
            }
        }
        assert!((ft.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riemannian_fundamental_tensor_is_fiber_independent() {
        let m = fixtures::m_sph();
        let x = vec![0.1, 0.2, 0.3];
        let p1 = EvalPoint::new(x.clone(), vec![1.0, 0.5, -0.25]).unwrap();
        let p2 = EvalPoint::new(x, vec![-2.0, 0.3, 5.0]).unwrap();
        let a = m.fundamental_tensor(&p1).unwrap();
        let b = m.fundamental_tensor(&p2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.g[i][j] - b.g[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn randers_fundamental_tensor_is_positive_definite() {
        let m = fixtures::m_rand();
        let ft = m.fundamental_tensor(&fixtures::p0()).unwrap();
        // symmetric
        for i in 0..3 {
            for j in 0..3 {
                assert!((ft.g[i][j] - ft.g[j][i]).abs() < 1e-12);
            }
        }
        // positive definite via leading principal minors
        let d1 = ft.g[0][0];
        let d2 = ft.g[0][0] * ft.g[1][1] - ft.g[0][1] * ft.g[1][0];
        let d3 = ft.g[0][0] * (ft.g[1][1] * ft.g[2][2] - ft.g[1][2] * ft.g[2][1])
            - ft.g[0][1] * (ft.g[1][0] * ft.g[2][2] - ft.g[1][2] * ft.g[2][0])
            + ft.g[0][2] * (ft.g[1][0] * ft.g[2][1] - ft.g[1][1] * ft.g[2][0]);
        assert!(d1 > 0.0 && d2 > 0.0 && d3 > 0.0);
    }

    #[test]
    fn metric_contracts_to_twice_energy() {
        for m in [fixtures::m_sph(), fixtures::m_rand(), fixtures::m_mink()] {
            for p in sample_points(3, &Domain::default_box(3), 11, 10) {
                let ft = m.fundamental_tensor(&p).unwrap();
                let mut q = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        q += ft.g[i][j] * p.y[i] * p.y[j];
                    }
                }
                let e2 = 2.0 * m.energy_at(&p).unwrap();
                assert!((q - e2).abs() <= 1e-9 * e2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn euclidean_spray_vanishes() {
        let s = fixtures::m_euc().canonical_spray();
        for p in sample_points(3, &Domain::default_box(3), 3, 10) {
            for v in s.eval(&p).unwrap() {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn minkowski_spray_vanishes() {
        let s = fixtures::m_mink().canonical_spray();
        for p in sample_points(3, &Domain::default_box(3), 4, 10) {
            for v in s.eval(&p).unwrap() {
                assert!(v.abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn sphere_spray_matches_christoffel_symbols() {
        // Conformal metric g = e^{2φ}δ with φ = ln 2 − ln(1+|x|²) has
        // Γ^i_jk = δ^i_j φ_k + δ^i_k φ_j − δ_jk φ_i, φ_i = −2x_i/(1+|x|²),
        // and 2G^i = Γ^i_jk y^j y^k.
        let s = fixtures::m_sph().canonical_spray();
        for p in sample_points(3, &Domain::default_box(3), 9, 10) {
            let r2: f64 = p.x.iter().map(|v| v * v).sum();
            let phi: Vec<f64> = p.x.iter().map(|v| -2.0 * v / (1.0 + r2)).collect();
            let g = s.eval(&p).unwrap();
            let y2: f64 = p.y.iter().map(|v| v * v).sum();
            for i in 0..3 {
                let ydotphi: f64 = (0..3).map(|k| p.y[k] * phi[k]).sum();
                let expect = 0.5 * (2.0 * p.y[i] * ydotphi - y2 * phi[i]);
                assert!(
                    (g[i] - expect).abs() < 1e-10 * expect.abs().max(1.0),
                    "component {i}: {} vs {expect}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn produced_sprays_are_degree_two() {
        for m in [fixtures::m_sph(), fixtures::m_rand()] {
            m.canonical_spray().check_homogeneity(20, 1e-7).unwrap();
        }
    }

    #[test]
    fn randers_guard_rejects_large_one_form() {
        let a = fixtures::identity_matrix_exprs(3);
        let b = vec![
            crate::expr::parse("1.5", 3).unwrap(),
            crate::expr::parse("0", 3).unwrap(),
            crate::expr::parse("0", 3).unwrap(),
        ];
        assert!(matches!(
            FinslerMetric::randers(3, a, b),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn homogeneity_gate_rejects_non_homogeneous_l() {
        let l = crate::expr::parse("sqrt(y1^2+y2^2+y3^2) + 1", 3).unwrap();
        assert!(matches!(
            FinslerMetric::custom(3, l),
            Err(Error::Homogeneity(_))
        ));
    }

    #[test]
    fn explicit_spray_gate_rejects_wrong_degree() {
        let exprs = vec![
            crate::expr::parse("y1", 3).unwrap(),
            crate::expr::parse("0", 3).unwrap(),
            crate::expr::parse("0", 3).unwrap(),
        ];
        assert!(matches!(
            SprayData::explicit(3, exprs),
            Err(Error::Homogeneity(_))
        ));
    }

    #[test]
    fn explicit_spray_accepts_degree_two() {
        let exprs = vec![
            crate::expr::parse("y1^2 + y2*y3", 3).unwrap(),
            crate::expr::parse("x1*y2^2", 3).unwrap(),
            crate::expr::parse("0", 3).unwrap(),
        ];
        let s = SprayData::explicit(3, exprs).unwrap();
        let p = EvalPoint::new(vec![0.5, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap();
        let g = s.eval(&p).unwrap();
        assert_eq!(g, vec![7.0, 2.0, 0.0]);
    }

    #[test]
    fn solve_num_solves_scalar_systems() {
        let a = vec![
            vec![Num::Scalar(2.0), Num::Scalar(1.0)],
            vec![Num::Scalar(1.0), Num::Scalar(3.0)],
        ];
        let b = vec![Num::Scalar(5.0), Num::Scalar(10.0)];
        let w = solve_num(a, b).unwrap();
        assert!((w[0].value() - 1.0).abs() < 1e-14);
        assert!((w[1].value() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn solve_num_rejects_singular() {
        let a = vec![
            vec![Num::Scalar(1.0), Num::Scalar(2.0)],
            vec![Num::Scalar(2.0), Num::Scalar(4.0)],
        ];
        let b = vec![Num::Scalar(1.0), Num::Scalar(2.0)];
        assert!(matches!(solve_num(a, b), Err(Error::SingularMetric(_))));
    }
}
