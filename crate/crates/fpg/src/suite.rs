//! Aggregated identity suites: each suite evaluates a fixed list of
//! identities over seeded sample points and reports one record per identity
//! with the worst relative residual observed.
//!
//! Anchors state each identity as a formula in chart components; `d^i_j` is
//! the Kronecker delta, `eta` the position vector y, `D` the fiber
//! derivative, and a tilde marks quantities of the changed spray
//! G~ = G + lambda*y.

use rayon::prelude::*;

use crate::apparatus::Apparatus;
use crate::classify;
use crate::error::Result;
use crate::jet::EvalPoint;
use crate::metrics::SprayData;
use crate::projective::{
    change_law_residuals, douglas_via_projective_connection, factor_data, invariance_residuals,
    weyl_interrelations, ProjectiveFactor,
};
use crate::report::IdentityRecord;
use crate::sample::{sample_points, Domain, SeededRng};
use crate::spray::relative_residual;
use crate::taylor::TPoly;

#[derive(Clone, Copy, Debug)]
pub struct SuiteParams {
    pub seed: u64,
    pub points: usize,
    pub tol: f64,
}

impl Default for SuiteParams {
    fn default() -> SuiteParams {
        SuiteParams {
            seed: 42,
            points: 20,
            tol: 1e-7,
        }
    }
}

fn points_for(n: usize, params: &SuiteParams) -> Vec<EvalPoint> {
    sample_points(n, &Domain::default_box(n), params.seed, params.points)
}

/// Evaluate a fixed-length residual vector at every point in parallel and
/// fold component-wise maxima. An evaluation error marks every component of
/// that point NaN, which turns the affected records inconclusive.
fn fold_residuals<F>(points: &[EvalPoint], len: usize, f: F) -> Vec<f64>
where
    F: Fn(&EvalPoint) -> Result<Vec<f64>> + Sync,
{
    points
        .par_iter()
        .map(|p| f(p).unwrap_or_else(|_| vec![f64::NAN; len]))
        .reduce(
            || vec![0.0; len],
            |a, b| {
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| {
                        if x.is_nan() || y.is_nan() {
                            f64::NAN
                        } else {
                            x.max(*y)
                        }
                    })
                    .collect()
            },
        )
}

/// max |v| / (1 + scale): the residual of a "this vanishes" identity,
/// measured against the magnitude of the tensor it was contracted from.
fn residual_against_zero(vals: &[f64], scale: f64) -> f64 {
    vals.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 + scale)
}

fn max_abs(vals: &[f64]) -> f64 {
    vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Projective suite: invariance of the five projective tensors, the six
/// transformation laws, the Weyl interrelations, and the Douglas tensor as
/// the hv-curvature of the projective connection.
pub fn invariance_suite(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    params: &SuiteParams,
) -> Vec<IdentityRecord> {
    const IDS: [(&str, &str); 14] = [
        ("weyl-invariance", "W~ = W"),
        ("weyl-deviation-invariance", "W1~ = W1"),
        ("weyl-torsion-invariance", "W2~ = W2"),
        ("douglas-invariance", "Douglas~ = Douglas"),
        ("connection-invariance", "Pi~ = Pi"),
        (
            "barthel-change-law",
            "N~^i_j = N^i_j + lambda d^i_j + alpha_j y^i",
        ),
        (
            "berwald-change-law",
            "G~^i_jk = G^i_jk + alpha_j d^i_k + alpha_k d^i_j + (D_k alpha_j) y^i",
        ),
        (
            "vh-torsion-change-law",
            "R^~^i_jk = R^^i_jk + Q_k d^i_j - Q_j d^i_k + eps_jk y^i",
        ),
        (
            "deviation-change-law",
            "H~^i_j = H^i_j - (y^m Q_m) d^i_j + (Q_j + y^m eps_mj) y^i",
        ),
        (
            "h-curvature-change-law",
            "R~^i_jkl = R^i_jkl + (D_l Q_k) d^i_j - (D_l Q_j) d^i_k + eps_jk d^i_l + (D_l eps_jk) y^i",
        ),
        (
            "hv-curvature-change-law",
            "P~^i_jkl = P^i_jkl + A_kl d^i_j + A_lj d^i_k + A_jk d^i_l + B_jkl y^i, A = DD lambda, B = DDD lambda",
        ),
        (
            "weyl-torsion-from-deviation",
            "W2^i_jk = (D_j W1^i_k - D_k W1^i_j)/3",
        ),
        ("weyl-curvature-from-torsion", "W^i_jkl = D_l W2^i_jk"),
        ("douglas-from-connection", "Douglas^i_jkl = D_k Pi^i_jl"),
    ];
    let points = points_for(s.n(), params);
    let res = fold_residuals(&points, IDS.len(), |p| {
        let inv = invariance_residuals(s, lambda, p)?;
        let law = change_law_residuals(s, lambda, p)?;
        let (w2w1, ww2) = weyl_interrelations(s, p)?;
        let dpi = douglas_via_projective_connection(s, p)?;
        Ok(vec![
            inv.weyl,
            inv.weyl_deviation,
            inv.weyl_torsion,
            inv.douglas,
            inv.connection,
            law.barthel,
            law.berwald,
            law.vh_torsion,
            law.deviation,
            law.h_curvature,
            law.hv_curvature,
            w2w1,
            ww2,
            dpi,
        ])
    });
    IDS.iter()
        .zip(res)
        .map(|((id, anchor), r)| IdentityRecord::new(id, anchor, points.len(), r, params.tol))
        .collect()
}

/// Structural identities of the apparatus at a point: symmetries, cyclic
/// sums, and the canonical contractions with the position vector.
pub fn structural_suite(
    s: &SprayData,
    lambda: Option<&ProjectiveFactor>,
    params: &SuiteParams,
) -> Vec<IdentityRecord> {
    let mut ids: Vec<(&str, &str)> = vec![
        ("hv-symmetry", "P^i_jkl symmetric in (j,k,l)"),
        ("h-cyclic", "R^i_jkl + R^i_klj + R^i_ljk = 0"),
        ("theta-antisymmetrization", "theta_jk = R2_jk - R2_kj"),
        ("r1-eta", "R1_j y^j = (n+1) k"),
        ("deviation-eta", "H^i_j y^j = 0"),
        ("w1-eta", "W1^i_j y^j = 0"),
        ("w2-eta", "W2^i_mj y^m = W1^i_j"),
        ("w-eta", "W^i_jkl y^l = W2^i_jk"),
        ("douglas-symmetry", "Douglas^i_jkl symmetric in (j,k,l)"),
        ("douglas-eta", "Douglas^i_jkl y^l = 0"),
        ("p-eta", "p_jk y^k = 0"),
        ("p-from-omega", "p_jk = D_k omega_j"),
    ];
    if lambda.is_some() {
        ids.push((
            "alpha-form-symmetries",
            "DD lambda symmetric; (DD lambda)(eta,.) = 0; DDD lambda symmetric; (DDD lambda)(.,.,eta) = -DD lambda",
        ));
    }
    let points = points_for(s.n(), params);
    let res = fold_residuals(&points, ids.len(), |p| {
        let a = Apparatus::new(s, p)?;
        let n = a.n;
        let yv = &p.y;
        let val = |t: &TPoly| t.value();
        let mut out = Vec::with_capacity(ids.len());

        // P° total symmetry.
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = val(&a.p3[i][j][k][l]);
                        lhs.push(v);
                        rhs.push(val(&a.p3[i][k][j][l]));
                        lhs.push(v);
                        rhs.push(val(&a.p3[i][j][l][k]));
                    }
                }
            }
        }
        out.push(relative_residual(&lhs, &rhs));

        // Cyclic sum of the h-curvature.
        let mut sums = Vec::new();
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = val(&a.r0[i][j][k][l]);
                        scale = scale.max(v.abs());
                        sums.push(
                            v + val(&a.r0[i][k][l][j]) + val(&a.r0[i][l][j][k]),
                        );
                    }
                }
            }
        }
        out.push(residual_against_zero(&sums, scale));

        // θ is the antisymmetric part of R₂ (doubled).
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for j in 0..n {
            for k in 0..n {
                lhs.push(val(&a.theta[j][k]));
                rhs.push(val(&a.r2[j][k]) - val(&a.r2[k][j]));
            }
        }
        out.push(relative_residual(&lhs, &rhs));

        // R₁(η̄) = (n+1)k.
        let r1 = a.r1.as_ref().expect("structural suite needs n > 2");
        let k_scalar = val(a.k.as_ref().unwrap());
        let c: f64 = (0..n).map(|j| yv[j] * val(&r1[j])).sum();
        out.push(relative_residual(&[c], &[(n as f64 + 1.0) * k_scalar]));

        // H(η̄) = 0.
        let mut sums = Vec::new();
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let mut c = 0.0;
            for j in 0..n {
                let v = val(&a.h[i][j]);
                scale = scale.max(v.abs());
                c += v * yv[j];
            }
            sums.push(c);
        }
        out.push(residual_against_zero(&sums, scale));

        let w = a.weyl()?;
        let w1 = a.weyl_deviation()?;
        let w2 = a.weyl_torsion()?;
        let w1v: Vec<Vec<f64>> = w1.iter().map(|r| r.iter().map(val).collect()).collect();
        let w1_scale = max_abs(&w1v.iter().flatten().copied().collect::<Vec<_>>());

        // W₁(η̄) = 0.
        let sums: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| w1v[i][j] * yv[j]).sum())
            .collect();
        out.push(residual_against_zero(&sums, w1_scale));

        // W₂(η̄, X̄) = W₁(X̄).
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                lhs.push((0..n).map(|m| yv[m] * val(&w2[i][m][j])).sum::<f64>());
                rhs.push(w1v[i][j]);
            }
        }
        out.push(relative_residual(&lhs, &rhs));

        // W(X̄, Ȳ)η̄ = W₂(X̄, Ȳ).
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    lhs.push((0..n).map(|l| val(&w[i][j][k][l]) * yv[l]).sum::<f64>());
                    rhs.push(val(&w2[i][j][k]));
                }
            }
        }
        out.push(relative_residual(&lhs, &rhs));

        // Douglas tensor: total symmetry and η̄-contraction.
        let d = a.douglas()?;
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        let mut sums = Vec::new();
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut c = 0.0;
                    for l in 0..n {
                        let v = val(&d[i][j][k][l]);
                        scale = scale.max(v.abs());
                        c += v * yv[l];
                        lhs.push(v);
                        rhs.push(val(&d[i][k][j][l]));
                        lhs.push(v);
                        rhs.push(val(&d[i][j][l][k]));
                    }
                    sums.push(c);
                }
            }
        }
        out.push(relative_residual(&lhs, &rhs));
        out.push(residual_against_zero(&sums, scale));

        // p(·, η̄) = 0 and p = Dω.
        let mut sums = Vec::new();
        let mut scale: f64 = 0.0;
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for j in 0..n {
            let mut c = 0.0;
            for k in 0..n {
                let v = val(&a.pjk[j][k]);
                scale = scale.max(v.abs());
                c += v * yv[k];
                lhs.push(v);
                rhs.push(val(&a.omega[j].dy(k)));
            }
            sums.push(c);
        }
        out.push(residual_against_zero(&sums, scale));
        out.push(relative_residual(&lhs, &rhs));

        // α-form symmetries of the projective factor.
        if let Some(lam) = lambda {
            let f = factor_data(lam.field().as_ref(), &a)?;
            let a2: Vec<Vec<f64>> = (0..n)
                .map(|j| (0..n).map(|k| val(&f.alpha[j].dy(k))).collect())
                .collect();
            let a2_scale = max_abs(&a2.iter().flatten().copied().collect::<Vec<_>>());
            let mut worst: f64 = 0.0;
            let mut sums = Vec::new();
            for j in 0..n {
                for k in 0..n {
                    worst = worst
                        .max((a2[j][k] - a2[k][j]).abs() / (1.0 + a2_scale));
                }
                sums.push((0..n).map(|k| yv[k] * a2[j][k]).sum::<f64>());
            }
            worst = worst.max(residual_against_zero(&sums, a2_scale));
            let a3 = |j: usize, k: usize, l: usize| val(&f.alpha[j].dy(k).dy(l));
            let mut lhs = Vec::new();
            let mut rhs = Vec::new();
            for j in 0..n {
                for k in 0..n {
                    let mut v3: f64 = 0.0;
                    for l in 0..n {
                        let v = a3(j, k, l);
                        v3 += yv[l] * v;
                        worst = worst.max(
                            (v - a3(k, j, l)).abs().max((v - a3(j, l, k)).abs())
                                / (1.0 + a2_scale),
                        );
                    }
                    lhs.push(v3);
                    rhs.push(-a2[j][k]);
                }
            }
            worst = worst.max(relative_residual(&lhs, &rhs));
            out.push(worst);
        }

        Ok(out)
    });
    ids.iter()
        .zip(res)
        .map(|((id, anchor), r)| IdentityRecord::new(id, anchor, points.len(), r, params.tol))
        .collect()
}

/// Euler homogeneity degrees of the apparatus tensors. Points where a
/// tensor vanishes (degree undefined) are skipped; a tensor undefined at
/// every point yields an inconclusive record.
pub fn homogeneity_suite(s: &SprayData, params: &SuiteParams) -> Vec<IdentityRecord> {
    const IDS: [(&str, &str, f64); 9] = [
        ("degree-hv-curvature", "y.D P^i_jkl = -P^i_jkl", -1.0),
        ("degree-vh-torsion", "y.D R^^i_jk = R^^i_jk", 1.0),
        ("degree-h-curvature", "y.D R^i_jkl = 0", 0.0),
        ("degree-deviation", "y.D H^i_j = 2 H^i_j", 2.0),
        ("degree-theta", "y.D theta_jk = 0", 0.0),
        ("degree-r2", "y.D R2_jk = 0", 0.0),
        ("degree-r1", "y.D R1_j = R1_j", 1.0),
        ("degree-k", "y.D k = 2k", 2.0),
        ("degree-douglas", "y.D Douglas^i_jkl = -Douglas^i_jkl", -1.0),
    ];
    let points = points_for(s.n(), params);
    let per_point: Vec<Vec<Option<f64>>> = points
        .par_iter()
        .map(|p| {
            let run = || -> Result<Vec<Option<f64>>> {
                let a = Apparatus::new(s, p)?;
                let d = a.douglas()?;
                fn flat2(t: &[Vec<TPoly>]) -> Vec<&TPoly> {
                    t.iter().flatten().collect()
                }
                fn flat3(t: &[Vec<Vec<TPoly>>]) -> Vec<&TPoly> {
                    t.iter().flatten().flatten().collect()
                }
                fn flat4(t: &[Vec<Vec<Vec<TPoly>>>]) -> Vec<&TPoly> {
                    t.iter().flatten().flatten().flatten().collect()
                }
                let families: Vec<Vec<&TPoly>> = vec![
                    flat4(&a.p3),
                    flat3(&a.rhat),
                    flat4(&a.r0),
                    flat2(&a.h),
                    flat2(&a.theta),
                    flat2(&a.r2),
                    a.r1.as_ref().map(|v| v.iter().collect()).unwrap_or_default(),
                    a.k.as_ref().map(|v| vec![v]).unwrap_or_default(),
                    flat4(&d),
                ];
                Ok(families
                    .into_iter()
                    .map(|f| a.euler_degree(&f).ok())
                    .collect())
            };
            run().unwrap_or_else(|_| vec![None; IDS.len()])
        })
        .collect();
    IDS.iter()
        .enumerate()
        .map(|(t, (id, anchor, expected))| {
            let mut worst: f64 = f64::NAN;
            for row in &per_point {
                if let Some(deg) = row[t] {
                    let err = (deg - expected).abs();
                    worst = if worst.is_nan() { err } else { worst.max(err) };
                }
            }
            IdentityRecord::new(id, anchor, points.len(), worst, params.tol)
        })
        .collect()
}

/// Cross-validation of the exact pipelines against finite differences.
pub fn oracle_suite(s: &SprayData, params: &SuiteParams) -> Vec<IdentityRecord> {
    let n = s.n();
    let tol = 1e-5f64.max(params.tol);
    let mut records = Vec::new();

    // Jet derivatives vs the FD scheme on random fields, points, and mixed
    // directions of order ≤ 3.
    let fields: Vec<std::sync::Arc<dyn crate::jet::ScalarField>> = {
        let mut v: Vec<std::sync::Arc<dyn crate::jet::ScalarField>> = crate::oracle::battery(n)
            .into_iter()
            .map(|(f, _, _)| f)
            .collect();
        for i in 0..n {
            v.push(std::sync::Arc::new(s.component(i)));
        }
        v
    };
    let mut rng = SeededRng::new(params.seed ^ 0x0F1D);
    let samples = params.points.max(10);
    let mut cases = Vec::new();
    let pts = sample_points(n, &Domain::default_box(n), params.seed.wrapping_add(1), samples);
    for p in pts {
        let field = fields[(rng.uniform(0.0, fields.len() as f64) as usize).min(fields.len() - 1)]
            .clone();
        let order = 1 + (rng.uniform(0.0, 3.0) as usize).min(2);
        let dirs: Vec<Vec<f64>> = (0..order)
            .map(|_| (0..2 * n).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        cases.push((field, p, dirs));
    }
    let worst = cases
        .par_iter()
        .map(|(f, p, dirs)| {
            crate::oracle::jet_fd_discrepancy(f.as_ref(), p, dirs).unwrap_or(f64::NAN)
        })
        .reduce(
            || 0.0,
            |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) },
        );
    records.push(IdentityRecord::new(
        "jet-vs-fd",
        "exact jet derivatives = central differences with Richardson extrapolation",
        samples,
        worst,
        tol,
    ));

    // Douglas tensor: exact pipeline vs the FD classical construction.
    let fd_points = sample_points(n, &Domain::default_box(n), params.seed.wrapping_add(2), 3);
    let worst = fold_residuals(&fd_points, 1, |p| {
        let fd = crate::oracle::classical_douglas(s, p)?;
        let exact = crate::projective::douglas_tensor(s, p)?;
        Ok(vec![relative_residual(&fd.data, &exact.data)])
    })[0];
    records.push(IdentityRecord::new(
        "douglas-vs-classical",
        "Douglas tensor = DDD of (G^i - y^i (div_y G)/(n+1)) by finite differences",
        fd_points.len(),
        worst,
        tol,
    ));
    records
}

/// Classification verdicts rendered as suite records. Verdict residuals are
/// the measured tensor magnitudes; boolean implication checks use 0/1 with
/// threshold ½.
pub fn classification_suite(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    params: &SuiteParams,
) -> Result<Vec<IdentityRecord>> {
    let points = points_for(s.n(), params);
    let as_record = |id: &str, anchor: &str, v: &classify::Verdict| {
        let residual = if v.outcome == classify::Outcome::Inconclusive {
            f64::NAN
        } else {
            v.max_residual
        };
        IdentityRecord::new(id, anchor, v.samples, residual, v.threshold)
    };
    let berwald = classify::is_berwald(s, &points)?;
    let report = classify::flatness_report(s, lambda, &points)?;
    let mut records = vec![
        as_record("berwald", "P^i_jkl = 0 on the samples", &berwald),
        as_record(
            "douglas",
            "Douglas^i_jkl = 0 on the samples",
            &report.douglas,
        ),
        as_record(
            "hv-projectively-flat",
            "P~^i_jkl = 0 for G~ = G + lambda*y",
            &report.hv_flat,
        ),
        as_record(
            "h-projectively-flat",
            "R~^i_jkl = 0 for G~ = G + lambda*y",
            &report.h_flat,
        ),
        as_record(
            "projectively-flat",
            "P~ = 0 and R~ = 0",
            &report.projectively_flat,
        ),
        IdentityRecord::new(
            "hv-flat-implies-douglas",
            "P~ = 0 on the samples implies Douglas = 0 on the samples",
            points.len(),
            if report.hv_flat_implies_douglas { 0.0 } else { 1.0 },
            0.5,
        ),
    ];
    if let Some((w2, ok)) = report.weyl_torsion_check {
        records.push(IdentityRecord::new(
            "h-flat-implies-weyl-torsion-free",
            "R~ = 0 on the samples implies W2 = 0 on the samples",
            points.len(),
            if ok { 0.0 } else { w2 },
            0.5,
        ));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn params(points: usize) -> SuiteParams {
        SuiteParams {
            seed: 42,
            points,
            tol: 1e-7,
        }
    }

    fn lam_lin() -> ProjectiveFactor {
        ProjectiveFactor::new(fixtures::lambda_lin(), "lin").unwrap()
    }

    #[test]
    fn invariance_suite_holds_on_sphere_chart() {
        let s = fixtures::m_sph().canonical_spray();
        let records = invariance_suite(&s, &lam_lin(), &params(4));
        assert_eq!(records.len(), 14);
        for r in &records {
            assert!(r.holds(), "{}: {}", r.id, r.max_residual);
        }
    }

    #[test]
    fn structural_suite_holds_on_randers_chart() {
        let s = fixtures::m_rand().canonical_spray();
        let records = structural_suite(&s, Some(&lam_lin()), &params(4));
        assert_eq!(records.len(), 13);
        for r in &records {
            assert!(
                r.max_residual <= 1e-8,
                "{}: {}",
                r.id,
                r.max_residual
            );
        }
    }

    #[test]
    fn homogeneity_suite_degrees_match() {
        let s = fixtures::m_rand().canonical_spray();
        let records = homogeneity_suite(&s, &params(4));
        assert_eq!(records.len(), 9);
        for r in &records {
            assert!(r.holds(), "{}: {}", r.id, r.max_residual);
        }
    }

    #[test]
    fn oracle_suite_agrees() {
        let s = fixtures::m_rand().canonical_spray();
        for r in oracle_suite(&s, &params(10)) {
            assert!(r.holds(), "{}: {}", r.id, r.max_residual);
        }
    }

    #[test]
    fn classification_suite_shapes() {
        let s = fixtures::m_sph().canonical_spray();
        let records = classification_suite(&s, &lam_lin(), &params(10)).unwrap();
        let get = |id: &str| records.iter().find(|r| r.id == id).unwrap();
        assert!(get("berwald").holds());
        assert!(get("douglas").holds());
        assert!(get("hv-projectively-flat").holds());
        assert!(!get("h-projectively-flat").holds());
        assert!(get("hv-flat-implies-douglas").holds());
    }

    #[test]
    fn flipped_torsion_sign_breaks_identities() {
        let s = fixtures::m_sph().canonical_spray().with_flipped_torsion_sign();
        let broken: Vec<String> = structural_suite(&s, None, &params(3))
            .into_iter()
            .chain(invariance_suite(&s, &lam_lin(), &params(3)))
            .filter(|r| !r.holds())
            .map(|r| r.id)
            .collect();
        assert!(broken.len() >= 3, "only broke: {broken:?}");
    }
}
