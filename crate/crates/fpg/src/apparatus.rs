//! The full curvature apparatus of a spray at one chart point, computed from
//! a single local Taylor expansion.
//!
//! One spray evaluation on Taylor-polynomial arguments ([`crate::taylor`])
//! yields G^i as truncated polynomials in (Δx, Δy); every tensor below —
//! connection, curvatures, traces, and the projectively invariant Weyl and
//! Douglas tensors — is then assembled by formal derivatives and polynomial
//! products, with no further field evaluations. The default degree caps
//! retain exactly the orders the deepest consumer (the Weyl tensor, through
//! ∂²R₁/∂y²) needs.
//!
//! Chart conventions are identical to [`crate::spray`]; the jet-based
//! evaluators there serve as an independent implementation for
//! cross-validation at shallow orders.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{EvalPoint, Num};
use crate::metrics::SprayData;
use crate::taylor::{coords, to_tpoly, Caps, Ctx, TPoly};

/// All base tensors of a spray at a point, as local polynomials.
pub struct Apparatus {
    pub n: usize,
    pub ctx: Arc<Ctx>,
    pub point: EvalPoint,
    /// Fiber coordinate polynomials y^i = y0^i + Δy^i.
    pub y: Vec<TPoly>,
    /// Spray coefficients G^i.
    pub g_spray: Vec<TPoly>,
    /// N^i_j = ∂G^i/∂y^j.
    pub nij: Vec<Vec<TPoly>>,
    /// G^i_jk = ∂²G^i/∂y^j∂y^k.
    pub gijk: Vec<Vec<Vec<TPoly>>>,
    /// P°^i_jkl = ∂³G^i/∂y^j∂y^k∂y^l.
    pub p3: Vec<Vec<Vec<Vec<TPoly>>>>,
    /// R̂^i_jk = δN^i_j/δx^k − δN^i_k/δx^j (times the spray's torsion sign).
    pub rhat: Vec<Vec<Vec<TPoly>>>,
    /// H^i_j = y^m R̂^i_mj.
    pub h: Vec<Vec<TPoly>>,
    /// R°^i_jkl = ∂R̂^i_jk/∂y^l.
    pub r0: Vec<Vec<Vec<Vec<TPoly>>>>,
    /// θ_jk = Σ_m R°^m_jkm.
    pub theta: Vec<Vec<TPoly>>,
    /// R₂_jk = Σ_m R°^m_jmk.
    pub r2: Vec<Vec<TPoly>>,
    /// R₁_j = (n R₂_jm y^m + y^m R₂_mj)/(n−1); requires n > 2.
    pub r1: Option<Vec<TPoly>>,
    /// k = y^j y^k R₂_jk/(n−1); requires n > 2.
    pub k: Option<TPoly>,
    /// ω_j = G^m_mj.
    pub omega: Vec<TPoly>,
    /// p_jk = Σ_m P°^m_jkm.
    pub pjk: Vec<Vec<TPoly>>,
}

impl Apparatus {
    /// Expand the spray around `p` and assemble the apparatus. One spray
    /// evaluation total.
    pub fn new(s: &SprayData, p: &EvalPoint) -> Result<Apparatus> {
        let n = s.n();
        if p.dim() != n {
            return Err(Error::Dimension(format!(
                "point has dimension {}, spray has {}",
                p.dim(),
                n
            )));
        }
        let ctx = Ctx::new(n, Caps::deep());
        let (x, y) = coords(&ctx, p);
        let g_num = s.eval_num(&x, &y)?;
        let g_spray: Vec<TPoly> = g_num.into_iter().map(|v| to_tpoly(&ctx, v)).collect();
        let y: Vec<TPoly> = y
            .into_iter()
            .map(|v| match v {
                Num::Taylor(t) => t,
                _ => unreachable!("coords produces taylor values"),
            })
            .collect();

        let nij: Vec<Vec<TPoly>> = g_spray
            .iter()
            .map(|g| (0..n).map(|j| g.dy(j)).collect())
            .collect();
        let gijk: Vec<Vec<Vec<TPoly>>> = nij
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| (0..n).map(|k| v.dy(k)).collect())
                    .collect()
            })
            .collect();
        let p3: Vec<Vec<Vec<Vec<TPoly>>>> = gijk
            .iter()
            .map(|a| {
                a.iter()
                    .map(|b| {
                        b.iter()
                            .map(|v| (0..n).map(|l| v.dy(l)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();

        // δN^i_j/δx^k = ∂N^i_j/∂x^k − N^m_k G^i_jm, antisymmetrized in (j,k).
        let sign = s.vh_sign();
        let zero = TPoly::constant(&ctx, 0.0);
        let mut rhat = vec![vec![vec![zero.clone(); n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..j {
                    let mut a = nij[i][j].dx(k);
                    let mut b = nij[i][k].dx(j);
                    for m in 0..n {
                        a = a.sub(&nij[m][k].mul(&gijk[i][j][m]));
                        b = b.sub(&nij[m][j].mul(&gijk[i][k][m]));
                    }
                    let v = a.sub(&b).scale(sign);
                    rhat[i][k][j] = v.neg();
                    rhat[i][j][k] = v;
                }
            }
        }

        let h: Vec<Vec<TPoly>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut acc = zero.clone();
                        for m in 0..n {
                            acc = acc.add(&y[m].mul(&rhat[i][m][j]));
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        let r0: Vec<Vec<Vec<Vec<TPoly>>>> = rhat
            .iter()
            .map(|a| {
                a.iter()
                    .map(|b| {
                        b.iter()
                            .map(|v| (0..n).map(|l| v.dy(l)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let trace = |pick: &dyn Fn(usize, usize, usize) -> TPoly| -> Vec<Vec<TPoly>> {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            let mut acc = zero.clone();
                            for m in 0..n {
                                acc = acc.add(&pick(m, j, k));
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        };
        let theta = trace(&|m, j, k| r0[m][j][k][m].clone());
        let r2 = trace(&|m, j, k| r0[m][j][m][k].clone());

        let (r1, k) = if n > 2 {
            let r1: Vec<TPoly> = (0..n)
                .map(|j| {
                    let mut acc = zero.clone();
                    for m in 0..n {
                        acc = acc.add(&r2[j][m].mul(&y[m]).scale(n as f64));
                        acc = acc.add(&y[m].mul(&r2[m][j]));
                    }
                    acc.scale(1.0 / (n as f64 - 1.0))
                })
                .collect();
            let mut ks = zero.clone();
            for j in 0..n {
                for kk in 0..n {
                    ks = ks.add(&y[j].mul(&y[kk]).mul(&r2[j][kk]));
                }
            }
            (Some(r1), Some(ks.scale(1.0 / (n as f64 - 1.0))))
        } else {
            (None, None)
        };

        let omega: Vec<TPoly> = (0..n)
            .map(|j| {
                let mut acc = zero.clone();
                for m in 0..n {
                    acc = acc.add(&gijk[m][m][j]);
                }
                acc
            })
            .collect();
        let pjk: Vec<Vec<TPoly>> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let mut acc = zero.clone();
                        for m in 0..n {
                            acc = acc.add(&p3[m][j][k][m]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        Ok(Apparatus {
            n,
            ctx,
            point: p.clone(),
            y,
            g_spray,
            nij,
            gijk,
            p3,
            rhat,
            h,
            r0,
            theta,
            r2,
            r1,
            k,
            omega,
            pjk,
        })
    }

    fn traces_required(&self) -> Result<(&Vec<TPoly>, &TPoly)> {
        match (&self.r1, &self.k) {
            (Some(r1), Some(k)) => Ok((r1, k)),
            _ => Err(Error::Dimension(format!(
                "projective tensors require dimension > 2, got {}",
                self.n
            ))),
        }
    }

    /// The Weyl curvature tensor
    /// W^i_jkl = R°^i_jkl + (1/(n+1)){ (∂R₁_k/∂y^l) δ^i_j − (∂R₁_j/∂y^l) δ^i_k
    ///   + (∂R₁_k/∂y^j − ∂R₁_j/∂y^k) δ^i_l
    ///   + (∂²R₁_k/∂y^l∂y^j − ∂²R₁_j/∂y^l∂y^k) y^i }.
    pub fn weyl(&self) -> Result<Vec<Vec<Vec<Vec<TPoly>>>>> {
        let n = self.n;
        let (r1, _) = self.traces_required()?;
        let c = 1.0 / (n as f64 + 1.0);
        let dr1: Vec<Vec<TPoly>> = r1
            .iter()
            .map(|v| (0..n).map(|l| v.dy(l)).collect())
            .collect();
        let out = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n)
                            .map(|k| {
                                (0..n)
                                    .map(|l| {
                                        let mut v = self.r0[i][j][k][l].clone();
                                        if i == j {
                                            v = v.add(&dr1[k][l].scale(c));
                                        }
                                        if i == k {
                                            v = v.sub(&dr1[j][l].scale(c));
                                        }
                                        if i == l {
                                            v = v.add(&dr1[k][j].sub(&dr1[j][k]).scale(c));
                                        }
                                        let second =
                                            dr1[k][l].dy(j).sub(&dr1[j][l].dy(k));
                                        v.add(&second.mul(&self.y[i]).scale(c))
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }

    /// The Weyl deviation tensor
    /// W₁^i_j = H^i_j − k δ^i_j + (1/(n+1)){3R₁_j − (n+1) ∂k/∂y^j} y^i.
    pub fn weyl_deviation(&self) -> Result<Vec<Vec<TPoly>>> {
        let n = self.n;
        let (r1, k) = self.traces_required()?;
        let c = 1.0 / (n as f64 + 1.0);
        let out = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut v = self.h[i][j].clone();
                        if i == j {
                            v = v.sub(k);
                        }
                        let brace = r1[j]
                            .scale(3.0)
                            .sub(&k.dy(j).scale(n as f64 + 1.0));
                        v.add(&brace.mul(&self.y[i]).scale(c))
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }

    /// The Weyl torsion tensor
    /// W₂^i_jk = R̂^i_jk + (1/(n+1)){R₁_k δ^i_j − R₁_j δ^i_k
    ///   + (∂R₁_k/∂y^j − ∂R₁_j/∂y^k) y^i}.
    pub fn weyl_torsion(&self) -> Result<Vec<Vec<Vec<TPoly>>>> {
        let n = self.n;
        let (r1, _) = self.traces_required()?;
        let c = 1.0 / (n as f64 + 1.0);
        let out = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n)
                            .map(|k| {
                                let mut v = self.rhat[i][j][k].clone();
                                if i == j {
                                    v = v.add(&r1[k].scale(c));
                                }
                                if i == k {
                                    v = v.sub(&r1[j].scale(c));
                                }
                                let d = r1[k].dy(j).sub(&r1[j].dy(k));
                                v.add(&d.mul(&self.y[i]).scale(c))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }

    /// The projective connection
    /// Π^i_jk = G^i_jk − (1/(n+1)){ω_k δ^i_j + ω_j δ^i_k + p_jk y^i}.
    pub fn projective_connection(&self) -> Result<Vec<Vec<Vec<TPoly>>>> {
        let n = self.n;
        if n <= 2 {
            self.traces_required()?;
        }
        let c = 1.0 / (n as f64 + 1.0);
        let out = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n)
                            .map(|k| {
                                let mut v = self.gijk[i][j][k].clone();
                                if i == j {
                                    v = v.sub(&self.omega[k].scale(c));
                                }
                                if i == k {
                                    v = v.sub(&self.omega[j].scale(c));
                                }
                                v.sub(&self.pjk[j][k].mul(&self.y[i]).scale(c))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }

    /// The Douglas tensor
    /// ℙ^i_jkl = P°^i_jkl − (1/(n+1)){p_jk δ^i_l + p_kl δ^i_j + p_lj δ^i_k}
    ///   − (1/(n+1)) (∂p_jl/∂y^k) y^i.
    pub fn douglas(&self) -> Result<Vec<Vec<Vec<Vec<TPoly>>>>> {
        let n = self.n;
        if n <= 2 {
            self.traces_required()?;
        }
        let c = 1.0 / (n as f64 + 1.0);
        let out = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n)
                            .map(|k| {
                                (0..n)
                                    .map(|l| {
                                        let mut v = self.p3[i][j][k][l].clone();
                                        if i == l {
                                            v = v.sub(&self.pjk[j][k].scale(c));
                                        }
                                        if i == j {
                                            v = v.sub(&self.pjk[k][l].scale(c));
                                        }
                                        if i == k {
                                            v = v.sub(&self.pjk[l][j].scale(c));
                                        }
                                        v.sub(
                                            &self.pjk[j][l]
                                                .dy(k)
                                                .mul(&self.y[i])
                                                .scale(c),
                                        )
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }

    /// Euler homogeneity degree of a component family: the radial fiber
    /// derivative of the largest component divided by its value.
    pub fn euler_degree(&self, components: &[&TPoly]) -> Result<f64> {
        let best = components
            .iter()
            .max_by(|a, b| {
                a.value()
                    .abs()
                    .partial_cmp(&b.value().abs())
                    .expect("finite tensor values")
            })
            .ok_or_else(|| Error::Domain("empty tensor".into()))?;
        let v = best.value();
        if v == 0.0 {
            return Err(Error::Domain(
                "tensor vanishes at this point; Euler degree undefined".into(),
            ));
        }
        Ok(best.euler_y(&self.y).value() / v)
    }
}

/// Flatten a nested poly array's point values, row-major.
pub fn values2(t: &[Vec<TPoly>]) -> Vec<f64> {
    t.iter().flatten().map(|v| v.value()).collect()
}

pub fn values3(t: &[Vec<Vec<TPoly>>]) -> Vec<f64> {
    t.iter()
        .flatten()
        .flatten()
        .map(|v| v.value())
        .collect()
}

pub fn values4(t: &[Vec<Vec<Vec<TPoly>>>]) -> Vec<f64> {
    t.iter()
        .flatten()
        .flatten()
        .flatten()
        .map(|v| v.value())
        .collect()
}
