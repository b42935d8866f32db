//! Projective changes of sprays and the projectively invariant apparatus
//! built from them: the factor λ with its derived forms α, Q, ε; the
//! transformation laws of the connection and curvature tensors; the Weyl
//! curvature, deviation, and torsion tensors; the projective connection; and
//! the Douglas tensor.
//!
//! Every transformation-law check computes both sides independently — the
//! left side by a full recomputation from the changed spray G̃ = G + λy, the
//! right side from the base tensors plus the α/Q/ε correction terms — so the
//! laws are never simplified into tautologies.
//!
//! The slot question for the (D²α)(Ȳ, ρX) term of the connection law is
//! moot: D²α = ∂²λ/∂y∂y is symmetric, and it is stored that way.

use std::sync::Arc;

use crate::apparatus::{self, Apparatus};
use crate::error::{Error, Result};
use crate::jet::{euler_degree, EvalPoint, Num, ScalarField};
use crate::metrics::{Provenance, SprayCoeffs, SprayData, GATE_SEED};
use crate::sample::{sample_points, Domain};
use crate::spray::{relative_residual, tensor, Slot, TensorValue};
use crate::taylor::{coords, to_tpoly, TPoly};

/// A projective factor λ(x, y): positively homogeneous of degree 1 in y.
/// Registration Euler-tests λ at seeded sample points (skipping zeros of λ,
/// so λ ≡ 0 — the identity change — is admitted).
#[derive(Clone)]
pub struct ProjectiveFactor {
    n: usize,
    field: Arc<dyn ScalarField>,
    label: String,
}

impl ProjectiveFactor {
    pub fn new(field: Arc<dyn ScalarField>, label: &str) -> Result<ProjectiveFactor> {
        let n = field.dim();
        for p in sample_points(n, &Domain::default_box(n), GATE_SEED, 10) {
            if field.eval(&p)?.abs() < 1e-12 {
                continue;
            }
            let deg = euler_degree(field.as_ref(), &p)?;
            if (deg - 1.0).abs() > 1e-8 {
                return Err(Error::Homogeneity(format!(
                    "projective factor must be positively homogeneous of degree 1 \
                     in y; observed degree {deg} at x={:?}, y={:?}",
                    p.x, p.y
                )));
            }
        }
        Ok(ProjectiveFactor {
            n,
            field,
            label: label.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn field(&self) -> &Arc<dyn ScalarField> {
        &self.field
    }
}

struct ChangedSpray {
    parent: SprayData,
    lambda: Arc<dyn ScalarField>,
}

impl SprayCoeffs for ChangedSpray {
    fn eval(&self, x: &[Num], y: &[Num]) -> Result<Vec<Num>> {
        let mut g = self.parent.eval_num(x, y)?;
        let lam = self.lambda.eval_num(x, y)?;
        for (gi, yi) in g.iter_mut().zip(y) {
            *gi = gi.add(&lam.mul(yi));
        }
        Ok(g)
    }
}

/// The projective change G̃^i = G^i + λ y^i.
pub fn apply_projective_change(s: &SprayData, lambda: &ProjectiveFactor) -> Result<SprayData> {
    if lambda.n != s.n() {
        return Err(Error::Dimension(format!(
            "projective factor has dimension {}, spray has {}",
            lambda.n,
            s.n()
        )));
    }
    Ok(SprayData::new(
        s.n(),
        Arc::new(ChangedSpray {
            parent: s.clone(),
            lambda: lambda.field.clone(),
        }),
        Provenance::ProjectivelyChanged(lambda.label.clone()),
    ))
}

/// Local expansion of a projective factor over an apparatus: λ, the form
/// α_j = ∂λ/∂y^j, Q_j = δλ/δx^j − λα_j, and ε_jk = ∂Q_k/∂y^j − ∂Q_j/∂y^k.
pub(crate) struct FactorData {
    pub lam: TPoly,
    pub alpha: Vec<TPoly>,
    pub q: Vec<TPoly>,
    pub eps: Vec<Vec<TPoly>>,
}

pub(crate) fn factor_data(lambda: &dyn ScalarField, a: &Apparatus) -> Result<FactorData> {
    let n = a.n;
    let (x, y) = coords(&a.ctx, &a.point);
    let lam = to_tpoly(&a.ctx, lambda.eval_num(&x, &y)?);
    let alpha: Vec<TPoly> = (0..n).map(|j| lam.dy(j)).collect();
    // δλ/δx^j = ∂λ/∂x^j − N^m_j ∂λ/∂y^m
    let q: Vec<TPoly> = (0..n)
        .map(|j| {
            let mut v = lam.dx(j);
            for m in 0..n {
                v = v.sub(&a.nij[m][j].mul(&alpha[m]));
            }
            v.sub(&lam.mul(&alpha[j]))
        })
        .collect();
    let eps: Vec<Vec<TPoly>> = (0..n)
        .map(|j| (0..n).map(|k| q[k].dy(j).sub(&q[j].dy(k))).collect())
        .collect();
    Ok(FactorData { lam, alpha, q, eps })
}

/// Two-sided residuals of the transformation laws under G̃ = G + λy.
/// Each field is the relative residual between the tensor recomputed from
/// the changed spray and the base tensor plus its correction terms.
pub struct ChangeLawResiduals {
    /// Ñ^i_j = N^i_j + λδ^i_j + α_j y^i.
    pub barthel: f64,
    /// G̃^i_jk = G^i_jk + α_j δ^i_k + α_k δ^i_j + (∂α_j/∂y^k) y^i.
    pub berwald: f64,
    /// R̂̃^i_jk = R̂^i_jk + Q_k δ^i_j − Q_j δ^i_k + ε_jk y^i.
    pub vh_torsion: f64,
    /// H̃^i_j = H^i_j − (y^m Q_m) δ^i_j + (Q_j + y^m ε_mj) y^i.
    pub deviation: f64,
    /// R̃°^i_jkl = R°^i_jkl + (∂Q_k/∂y^l) δ^i_j − (∂Q_j/∂y^l) δ^i_k
    ///   + ε_jk δ^i_l + (∂ε_jk/∂y^l) y^i.
    pub h_curvature: f64,
    /// P̃°^i_jkl = P°^i_jkl + A_kl δ^i_j + A_lj δ^i_k + A_jk δ^i_l + B_jkl y^i
    /// with A = ∂²λ/∂y∂y and B = ∂³λ/∂y∂y∂y.
    pub hv_curvature: f64,
}

impl ChangeLawResiduals {
    pub fn max(&self) -> f64 {
        [
            self.barthel,
            self.berwald,
            self.vh_torsion,
            self.deviation,
            self.h_curvature,
            self.hv_curvature,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn change_law_residuals(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    p: &EvalPoint,
) -> Result<ChangeLawResiduals> {
    let n = s.n();
    let changed = apply_projective_change(s, lambda)?;
    let base = Apparatus::new(s, p)?;
    let tilde = Apparatus::new(&changed, p)?;
    let f = factor_data(lambda.field.as_ref(), &base)?;
    let yv = &p.y;
    let val = |t: &TPoly| t.value();

    // Ñ = N + λδ + α ⊗ y.
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            lhs.push(val(&tilde.nij[i][j]));
            let mut v = val(&base.nij[i][j]) + yv[i] * val(&f.alpha[j]);
            if i == j {
                v += val(&f.lam);
            }
            rhs.push(v);
        }
    }
    let barthel = relative_residual(&lhs, &rhs);

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                lhs.push(val(&tilde.gijk[i][j][k]));
                let mut v = val(&base.gijk[i][j][k]) + yv[i] * val(&f.alpha[j].dy(k));
                if i == k {
                    v += val(&f.alpha[j]);
                }
                if i == j {
                    v += val(&f.alpha[k]);
                }
                rhs.push(v);
            }
        }
    }
    let berwald = relative_residual(&lhs, &rhs);

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                lhs.push(val(&tilde.rhat[i][j][k]));
                let mut v = val(&base.rhat[i][j][k]) + yv[i] * val(&f.eps[j][k]);
                if i == j {
                    v += val(&f.q[k]);
                }
                if i == k {
                    v -= val(&f.q[j]);
                }
                rhs.push(v);
            }
        }
    }
    let vh_torsion = relative_residual(&lhs, &rhs);

    let q_eta: f64 = (0..n).map(|m| yv[m] * val(&f.q[m])).sum();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            lhs.push(val(&tilde.h[i][j]));
            let eps_eta: f64 = (0..n).map(|m| yv[m] * val(&f.eps[m][j])).sum();
            let mut v = val(&base.h[i][j]) + yv[i] * (val(&f.q[j]) + eps_eta);
            if i == j {
                v -= q_eta;
            }
            rhs.push(v);
        }
    }
    let deviation = relative_residual(&lhs, &rhs);

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    lhs.push(val(&tilde.r0[i][j][k][l]));
                    let mut v = val(&base.r0[i][j][k][l])
                        + yv[i] * val(&f.eps[j][k].dy(l));
                    if i == j {
                        v += val(&f.q[k].dy(l));
                    }
                    if i == k {
                        v -= val(&f.q[j].dy(l));
                    }
                    if i == l {
                        v += val(&f.eps[j][k]);
                    }
                    rhs.push(v);
                }
            }
        }
    }
    let h_curvature = relative_residual(&lhs, &rhs);

    let a2: Vec<Vec<TPoly>> = f
        .alpha
        .iter()
        .map(|v| (0..n).map(|k| v.dy(k)).collect())
        .collect();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    lhs.push(val(&tilde.p3[i][j][k][l]));
                    let mut v =
                        val(&base.p3[i][j][k][l]) + yv[i] * val(&a2[j][k].dy(l));
                    if i == j {
                        v += val(&a2[k][l]);
                    }
                    if i == k {
                        v += val(&a2[l][j]);
                    }
                    if i == l {
                        v += val(&a2[j][k]);
                    }
                    rhs.push(v);
                }
            }
        }
    }
    let hv_curvature = relative_residual(&lhs, &rhs);

    Ok(ChangeLawResiduals {
        barthel,
        berwald,
        vh_torsion,
        deviation,
        h_curvature,
        hv_curvature,
    })
}

/// Residual of the Berwald-connection transformation law alone.
pub fn berwald_change_law(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    p: &EvalPoint,
) -> Result<f64> {
    Ok(change_law_residuals(s, lambda, p)?.berwald)
}

/// Residuals of the curvature transformation laws: (h-curvature law,
/// hv-curvature law). The torsion and deviation laws are available through
/// [`change_law_residuals`].
pub fn curvature_change_laws(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    p: &EvalPoint,
) -> Result<(f64, f64)> {
    let r = change_law_residuals(s, lambda, p)?;
    Ok((r.h_curvature, r.hv_curvature))
}

/// Offsets into the flat per-point projective-tensor block.
struct PLayout {
    n: usize,
}

impl PLayout {
    fn w(&self) -> std::ops::Range<usize> {
        0..self.n.pow(4)
    }
    fn w1(&self) -> std::ops::Range<usize> {
        let s = self.w().end;
        s..s + self.n * self.n
    }
    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.w1().end;
        s..s + self.n.pow(3)
    }
    fn pi(&self) -> std::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.n.pow(3)
    }
    fn douglas(&self) -> std::ops::Range<usize> {
        let s = self.pi().end;
        s..s + self.n.pow(4)
    }
}

/// All projective tensors at `p`, flattened per [`PLayout`] and memoized:
/// one local expansion per (spray, point).
fn projective_values(s: &SprayData, p: &EvalPoint) -> Result<Arc<Vec<f64>>> {
    s.cached("projective", p, || {
        let a = Apparatus::new(s, p)?;
        let n = a.n;
        let mut out = Vec::with_capacity(2 * n.pow(4) + 2 * n.pow(3) + n * n);
        out.extend(apparatus::values4(&a.weyl()?));
        out.extend(apparatus::values2(&a.weyl_deviation()?));
        out.extend(apparatus::values3(&a.weyl_torsion()?));
        out.extend(apparatus::values3(&a.projective_connection()?));
        out.extend(apparatus::values4(&a.douglas()?));
        Ok(out)
    })
}

/// The Weyl curvature tensor W^i_jkl; projectively invariant, h(0); n > 2.
pub fn weyl_curvature(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = projective_values(s, p)?;
    Ok(tensor(
        "W",
        vec![Slot::Contra, Slot::Co, Slot::Co, Slot::Co],
        n,
        data[PLayout { n }.w()].to_vec(),
        p,
        "W^i_jkl: projective Weyl curvature; arguments (X,Y)Z = (j,k) l",
    ))
}

/// The Weyl deviation tensor W₁^i_j and Weyl torsion tensor W₂^i_jk; n > 2.
pub fn weyl_deviation_and_torsion(
    s: &SprayData,
    p: &EvalPoint,
) -> Result<(TensorValue, TensorValue)> {
    let n = s.n();
    let data = projective_values(s, p)?;
    let lay = PLayout { n };
    Ok((
        tensor(
            "W1",
            vec![Slot::Contra, Slot::Co],
            n,
            data[lay.w1()].to_vec(),
            p,
            "W1^i_j: projective deviation tensor",
        ),
        tensor(
            "W2",
            vec![Slot::Contra, Slot::Co, Slot::Co],
            n,
            data[lay.w2()].to_vec(),
            p,
            "W2^i_jk: Weyl torsion tensor; (X,Y)=(j,k)",
        ),
    ))
}

/// The projective connection Π^i_jk; symmetric in (j,k), invariant.
pub fn projective_connection(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = projective_values(s, p)?;
    Ok(tensor(
        "Pi",
        vec![Slot::Contra, Slot::Co, Slot::Co],
        n,
        data[PLayout { n }.pi()].to_vec(),
        p,
        "Pi^i_jk = G^i_jk - (omega_k d^i_j + omega_j d^i_k + p_jk y^i)/(n+1)",
    ))
}

/// The Douglas tensor ℙ^i_jkl; totally symmetric in (j,k,l), h(−1),
/// invariant.
pub fn douglas_tensor(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = projective_values(s, p)?;
    Ok(tensor(
        "Pd",
        vec![Slot::Contra, Slot::Co, Slot::Co, Slot::Co],
        n,
        data[PLayout { n }.douglas()].to_vec(),
        p,
        "Douglas tensor; arguments (X,Y)Z = (j,k) l",
    ))
}

/// Residuals of the interrelations
/// W₂^i_jk = ⅓(∂W₁^i_k/∂y^j − ∂W₁^i_j/∂y^k) and W^i_jkl = ∂W₂^i_jk/∂y^l:
/// each side computed from its own definition.
pub fn weyl_interrelations(s: &SprayData, p: &EvalPoint) -> Result<(f64, f64)> {
    let a = Apparatus::new(s, p)?;
    let n = a.n;
    let w = a.weyl()?;
    let w1 = a.weyl_deviation()?;
    let w2 = a.weyl_torsion()?;

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                lhs.push(w2[i][j][k].value());
                rhs.push((w1[i][k].dy(j).value() - w1[i][j].dy(k).value()) / 3.0);
            }
        }
    }
    let torsion_from_deviation = relative_residual(&lhs, &rhs);

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    lhs.push(w[i][j][k][l].value());
                    rhs.push(w2[i][j][k].dy(l).value());
                }
            }
        }
    }
    let curvature_from_torsion = relative_residual(&lhs, &rhs);

    Ok((torsion_from_deviation, curvature_from_torsion))
}

/// Residual between the Douglas tensor and the hv-curvature of the
/// projective connection, ∂Π^i_jl/∂y^k — the same fiber-derivative
/// construction that produces P° from the Berwald coefficients.
pub fn douglas_via_projective_connection(s: &SprayData, p: &EvalPoint) -> Result<f64> {
    let a = Apparatus::new(s, p)?;
    let n = a.n;
    let pi = a.projective_connection()?;
    let d = a.douglas()?;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    lhs.push(pi[i][j][l].dy(k).value());
                    rhs.push(d[i][j][k][l].value());
                }
            }
        }
    }
    Ok(relative_residual(&lhs, &rhs))
}

/// Per-tensor invariance residuals between a spray and its projective
/// change: each tensor computed independently for both sprays.
pub struct InvarianceResiduals {
    pub weyl: f64,
    pub weyl_deviation: f64,
    pub weyl_torsion: f64,
    pub douglas: f64,
    pub connection: f64,
}

impl InvarianceResiduals {
    pub fn max(&self) -> f64 {
        [
            self.weyl,
            self.weyl_deviation,
            self.weyl_torsion,
            self.douglas,
            self.connection,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn invariance_residuals(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    p: &EvalPoint,
) -> Result<InvarianceResiduals> {
    let changed = apply_projective_change(s, lambda)?;
    let res = |a: &TensorValue, b: &TensorValue| relative_residual(&a.data, &b.data);
    let w = weyl_curvature(s, p)?;
    let wt = weyl_curvature(&changed, p)?;
    let (w1, w2) = weyl_deviation_and_torsion(s, p)?;
    let (w1t, w2t) = weyl_deviation_and_torsion(&changed, p)?;
    let d = douglas_tensor(s, p)?;
    let dt = douglas_tensor(&changed, p)?;
    let c = projective_connection(s, p)?;
    let ct = projective_connection(&changed, p)?;
    Ok(InvarianceResiduals {
        weyl: res(&w, &wt),
        weyl_deviation: res(&w1, &w1t),
        weyl_torsion: res(&w2, &w2t),
        douglas: res(&d, &dt),
        connection: res(&c, &ct),
    })
}

/// Residual between ε assembled from the local expansion and ε recomputed
/// through the independent jet evaluators: Q at jet arguments from N^m_j and
/// λ, then the antisymmetrized fiber derivative.
pub fn q_epsilon_consistency(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    p: &EvalPoint,
) -> Result<f64> {
    let n = s.n();
    let a = Apparatus::new(s, p)?;
    let f = factor_data(lambda.field.as_ref(), &a)?;

    let (x, y) = crate::spray::nums(p);
    let field = lambda.field.clone();
    let s2 = s.clone();
    let q_num = |lx: &[Num], ly: &[Num]| -> Result<Vec<Num>> {
        let nij = crate::spray::n_at(&s2, lx, ly)?;
        let (lam_vals, dlam) = crate::spray::fiber_partials(
            n,
            |ax, ay| Ok(vec![field.eval_num(ax, ay)?]),
            lx,
            ly,
        )?;
        let lam = &lam_vals[0];
        // ∂λ/∂x via a base lift of λ alone.
        let dirs: Vec<crate::jet::Direction> = (0..n)
            .map(|i| crate::jet::Direction::Axis(crate::jet::Var::X(i)))
            .collect();
        let jets = crate::jet::lift(
            |ax, ay| Ok(vec![field.eval_num(ax, ay)?]),
            lx,
            ly,
            &dirs,
        )?;
        Ok((0..n)
            .map(|j| {
                let mut v = jets[0].coeff(1 << j).clone();
                for m in 0..n {
                    v = v.sub(&nij[m][j].mul(&dlam[0][m]));
                }
                v.sub(&lam.mul(&dlam[0][j]))
            })
            .collect())
    };
    let (_, dq) = crate::spray::fiber_partials(n, q_num, &x, &y)?;

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..n {
        for k in 0..n {
            lhs.push(f.eps[j][k].value());
            rhs.push(dq[k][j].value() - dq[j][k].value());
        }
    }
    Ok(relative_residual(&lhs, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sample::{sample_points, Domain};

    fn lam_lin() -> ProjectiveFactor {
        ProjectiveFactor::new(fixtures::lambda_lin(), "lin").unwrap()
    }

    fn lam_zero() -> ProjectiveFactor {
        ProjectiveFactor::new(fixtures::lambda_zero(), "zero").unwrap()
    }

    fn lam_norm(m: &crate::metrics::FinslerMetric) -> ProjectiveFactor {
        ProjectiveFactor::new(fixtures::lambda_norm(m), "norm").unwrap()
    }

    #[test]
    fn factor_gate_rejects_wrong_homogeneity() {
        // λ = y1² is h(2), not h(1).
        let bad = crate::expr::parse("y1^2", 3).unwrap();
        let r = ProjectiveFactor::new(Arc::new(bad), "bad");
        assert!(matches!(r, Err(Error::Homogeneity(_))));
    }

    #[test]
    fn zero_factor_is_the_identity_change() {
        let s = fixtures::m_rand().canonical_spray();
        let changed = apply_projective_change(&s, &lam_zero()).unwrap();
        let p = fixtures::p0();
        let g = s.eval(&p).unwrap();
        let gt = changed.eval(&p).unwrap();
        for (a, b) in g.iter().zip(&gt) {
            assert_eq!(a, b);
        }
        assert!(matches!(
            changed.provenance(),
            Provenance::ProjectivelyChanged(_)
        ));
    }

    #[test]
    fn changed_spray_is_degree_two() {
        let s = fixtures::m_sph().canonical_spray();
        let changed = apply_projective_change(&s, &lam_lin()).unwrap();
        changed.check_homogeneity(10, 1e-7).unwrap();
    }

    #[test]
    fn barthel_law_explicit_form() {
        // Ñ^i_j − N^i_j = λδ^i_j + y^i α_j for (M_sph, λ_lin) at p0.
        let s = fixtures::m_sph().canonical_spray();
        let lam = lam_lin();
        let changed = apply_projective_change(&s, &lam).unwrap();
        let p = fixtures::p0();
        let nb = crate::spray::nonlinear_connection(&s, &p).unwrap();
        let nt = crate::spray::nonlinear_connection(&changed, &p).unwrap();
        let lv = lam.field().eval(&p).unwrap();
        // α_j for λ = 0.05(y1 + x1 y2): (0.05, 0.05 x1, 0).
        let alpha = [0.05, 0.05 * p.x[0], 0.0];
        for i in 0..3 {
            for j in 0..3 {
                let mut want = p.y[i] * alpha[j];
                if i == j {
                    want += lv;
                }
                let got = nt.get(&[i, j]) - nb.get(&[i, j]);
                assert!((got - want).abs() < 1e-10, "[{i}{j}] {got} vs {want}");
            }
        }
    }

    #[test]
    fn change_laws_hold_two_sided() {
        let p = fixtures::p0();
        for (m, lam) in [
            (fixtures::m_euc(), lam_lin()),
            (fixtures::m_sph(), lam_lin()),
            (fixtures::m_sph(), lam_norm(&fixtures::m_sph())),
            (fixtures::m_rand(), lam_norm(&fixtures::m_rand())),
        ] {
            let s = m.canonical_spray();
            let r = change_law_residuals(&s, &lam, &p).unwrap();
            assert!(r.barthel < 1e-8, "{} barthel {}", m.family_name(), r.barthel);
            assert!(r.berwald < 1e-8, "{} berwald {}", m.family_name(), r.berwald);
            assert!(
                r.vh_torsion < 1e-7,
                "{} vh {}",
                m.family_name(),
                r.vh_torsion
            );
            assert!(
                r.deviation < 1e-7,
                "{} dev {}",
                m.family_name(),
                r.deviation
            );
            assert!(
                r.h_curvature < 1e-7,
                "{} r0 {}",
                m.family_name(),
                r.h_curvature
            );
            assert!(
                r.hv_curvature < 1e-7,
                "{} p0 {}",
                m.family_name(),
                r.hv_curvature
            );
        }
    }

    #[test]
    fn zero_factor_laws_are_exact() {
        let s = fixtures::m_rand().canonical_spray();
        let r = change_law_residuals(&s, &lam_zero(), &fixtures::p0()).unwrap();
        assert!(r.max() < 1e-14, "{}", r.max());
    }

    #[test]
    fn alpha_form_lemmas() {
        // α(η̄) = λ; D²α symmetric with (D²α)(η̄, ·) = 0; D³λ totally
        // symmetric with y-contraction in the last slot equal to −D²α.
        let s = fixtures::m_rand().canonical_spray();
        let m = fixtures::m_rand();
        let a = Apparatus::new(&s, &fixtures::p0()).unwrap();
        let f = factor_data(fixtures::lambda_norm(&m).as_ref(), &a).unwrap();
        let n = 3;
        let yv = &a.point.y;
        let contract: f64 = (0..n).map(|j| yv[j] * f.alpha[j].value()).sum();
        assert!((contract - f.lam.value()).abs() < 1e-12);
        let a2: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|k| f.alpha[j].dy(k).value()).collect())
            .collect();
        for j in 0..n {
            for k in 0..n {
                assert!((a2[j][k] - a2[k][j]).abs() < 1e-12);
            }
            let c: f64 = (0..n).map(|k| yv[k] * a2[j][k]).sum();
            assert!(c.abs() < 1e-12, "{c}");
        }
        let a3 = |j: usize, k: usize, l: usize| f.alpha[j].dy(k).dy(l).value();
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = a3(j, k, l);
                    for (pj, pk, pl) in [(j, l, k), (k, j, l), (l, k, j)] {
                        assert!((v - a3(pj, pk, pl)).abs() < 1e-12);
                    }
                }
                let c: f64 = (0..n).map(|l| yv[l] * a3(j, k, l)).sum();
                assert!((c + a2[j][k]).abs() < 1e-11, "{c} vs {}", -a2[j][k]);
            }
        }
    }

    #[test]
    fn epsilon_is_antisymmetric_and_degree_zero() {
        let s = fixtures::m_rand().canonical_spray();
        let a = Apparatus::new(&s, &fixtures::p0()).unwrap();
        let f = factor_data(fixtures::lambda_lin().as_ref(), &a).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert!((f.eps[j][k].value() + f.eps[k][j].value()).abs() < 1e-13);
            }
        }
        let polys: Vec<&TPoly> = f.eps.iter().flatten().collect();
        let deg = a.euler_degree(&polys).unwrap();
        assert!(deg.abs() < 1e-8, "{deg}");
    }

    #[test]
    fn q_epsilon_jet_cross_check() {
        let s = fixtures::m_rand().canonical_spray();
        let r = q_epsilon_consistency(&s, &lam_lin(), &fixtures::p0()).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn weyl_contractions() {
        // W₁(η̄) = 0; W₂(η̄, X̄) = W₁(X̄); W(X̄,Ȳ)η̄ = W₂(X̄,Ȳ).
        let s = fixtures::m_rand().canonical_spray();
        let p = fixtures::p0();
        let w = weyl_curvature(&s, &p).unwrap();
        let (w1, w2) = weyl_deviation_and_torsion(&s, &p).unwrap();
        let scale = 1.0 + w1.max_abs() + w2.max_abs();
        for i in 0..3 {
            let c: f64 = (0..3).map(|j| w1.get(&[i, j]) * p.y[j]).sum();
            assert!(c.abs() < 1e-9 * scale);
            for j in 0..3 {
                let c: f64 = (0..3).map(|m| p.y[m] * w2.get(&[i, m, j])).sum();
                assert!((c - w1.get(&[i, j])).abs() < 1e-9 * scale);
                for k in 0..3 {
                    let c: f64 = (0..3).map(|l| w.get(&[i, j, k, l]) * p.y[l]).sum();
                    assert!((c - w2.get(&[i, j, k])).abs() < 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn interrelations_hold() {
        for m in [fixtures::m_euc(), fixtures::m_sph(), fixtures::m_rand()] {
            let s = m.canonical_spray();
            let (a, b) = weyl_interrelations(&s, &fixtures::p0()).unwrap();
            assert!(a < 1e-8 && b < 1e-8, "{} {a} {b}", m.family_name());
        }
    }

    #[test]
    fn connection_is_symmetric_and_euclidean_trivial() {
        let s = fixtures::m_rand().canonical_spray();
        let p = fixtures::p0();
        let c = projective_connection(&s, &p).unwrap();
        let scale = c.max_abs();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!(
                        (c.get(&[i, j, k]) - c.get(&[i, k, j])).abs()
                            < 1e-12 * scale.max(1.0)
                    );
                }
            }
        }
        let e = fixtures::m_euc().canonical_spray();
        assert_eq!(projective_connection(&e, &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn douglas_symmetry_and_eta_contraction() {
        let s = fixtures::m_rand().canonical_spray();
        let p = fixtures::p0();
        let d = douglas_tensor(&s, &p).unwrap();
        assert!(d.max_abs() > 1e-4);
        let scale = d.max_abs();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let v = d.get(&[i, j, k, l]);
                        for perm in [[j, l, k], [k, j, l], [l, k, j]] {
                            assert!(
                                (v - d.get(&[i, perm[0], perm[1], perm[2]])).abs()
                                    < 1e-10 * scale
                            );
                        }
                    }
                    let c: f64 = (0..3).map(|l| d.get(&[i, j, k, l]) * p.y[l]).sum();
                    assert!(c.abs() < 1e-10 * scale, "{c}");
                }
            }
        }
    }

    #[test]
    fn douglas_agrees_with_connection_curvature() {
        let s = fixtures::m_rand().canonical_spray();
        let r = douglas_via_projective_connection(&s, &fixtures::p0()).unwrap();
        assert!(r < 1e-10, "{r}");
        // Also for a projectively changed spray.
        let changed =
            apply_projective_change(&fixtures::m_sph().canonical_spray(), &lam_lin())
                .unwrap();
        let r = douglas_via_projective_connection(&changed, &fixtures::p0()).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn invariance_spot_checks() {
        let p = fixtures::p0();
        for (m, lam) in [
            (fixtures::m_sph(), lam_lin()),
            (fixtures::m_rand(), lam_norm(&fixtures::m_rand())),
            (fixtures::m_mink(), lam_lin()),
        ] {
            let s = m.canonical_spray();
            let r = invariance_residuals(&s, &lam, &p).unwrap();
            assert!(r.max() < 1e-7, "{}: {}", m.family_name(), r.max());
        }
    }

    #[test]
    fn invariance_over_sampled_points() {
        let s = fixtures::m_sph().canonical_spray();
        let lam = lam_lin();
        for p in sample_points(3, &Domain::default_box(3), 91, 5) {
            let r = invariance_residuals(&s, &lam, &p).unwrap();
            assert!(r.max() < 1e-7, "{}", r.max());
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let exprs = vec![
            crate::expr::parse("0", 2).unwrap(),
            crate::expr::parse("0", 2).unwrap(),
        ];
        let s = SprayData::explicit(2, exprs).unwrap();
        assert!(matches!(
            apply_projective_change(&s, &lam_lin()),
            Err(Error::Dimension(_))
        ));
        let p = EvalPoint::new(vec![0.0, 0.0], vec![1.0, 0.5]).unwrap();
        assert!(matches!(
            weyl_curvature(&s, &p),
            Err(Error::Dimension(_))
        ));
    }
}
