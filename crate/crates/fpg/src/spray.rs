//! The Berwald apparatus of a spray: nonlinear connection, Berwald
//! coefficients, curvature and torsion tensors, deviation tensor, and the
//! contracted traces everything downstream is built from.
//!
//! Chart conventions (pinned once, validated by the identity suites):
//! - N^i_j = ∂G^i/∂y^j, G^i_jk = ∂²G^i/∂y^j∂y^k, P°^i_jkl = ∂³G^i/∂y^j∂y^k∂y^l.
//! - δ/δx^k = ∂/∂x^k − N^m_k ∂/∂y^m; R̂^i_jk = δN^i_j/δx^k − δN^i_k/δx^j.
//!   The sign is fixed by requiring H^i_j = y^m R̂^i_mj and the identity
//!   R̂^i_jk = ⅓(∂H^i_k/∂y^j − ∂H^i_j/∂y^k) to hold as stated.
//! - The vertical covariant derivative acts on components as ∂/∂y^m: the
//!   Berwald vertical connection coefficients vanish, so every iterated
//!   vertical derivative below is an iterated fiber partial.
//!
//! All evaluators take jet arguments, so outer code can differentiate any
//! tensor here by lifting its arguments. The scalar-point wrappers memoize
//! per (spray, point, tensor) since the identity suites reuse the same
//! tensors many times.

use crate::apparatus::{self, Apparatus};
use crate::error::{Error, Result};
use crate::jet::{lift, Direction, EvalPoint, Num, Var};
use crate::metrics::SprayData;

/// Tensor slot variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Contra,
    Co,
}

/// Dense pointwise tensor components with a declared slot signature and a
/// human-readable argument-order convention.
#[derive(Clone, Debug)]
pub struct TensorValue {
    pub name: String,
    pub slots: Vec<Slot>,
    pub dims: Vec<usize>,
    /// Row-major over `dims`.
    pub data: Vec<f64>,
    pub point: EvalPoint,
    pub convention: &'static str,
}

impl TensorValue {
    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Relative residual ‖a−b‖∞ / (1 + ‖a‖∞ + ‖b‖∞).
pub fn relative_residual(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let na = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nb = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / (1.0 + na + nb)
}

pub(crate) fn nums(p: &EvalPoint) -> (Vec<Num>, Vec<Num>) {
    (
        p.x.iter().map(|v| Num::Scalar(*v)).collect(),
        p.y.iter().map(|v| Num::Scalar(*v)).collect(),
    )
}

/// Values and all first fiber partials of a vector-valued map: one fiber
/// lift with one direction per axis. Returns (`vals[i]`, `d[i][l] = ∂vals[i]/∂y^l`).
pub(crate) fn fiber_partials<F>(
    n: usize,
    f: F,
    x: &[Num],
    y: &[Num],
) -> Result<(Vec<Num>, Vec<Vec<Num>>)>
where
    F: Fn(&[Num], &[Num]) -> Result<Vec<Num>>,
{
    let dirs: Vec<Direction> = (0..n).map(|i| Direction::Axis(Var::Y(i))).collect();
    let jets = lift(|lx, ly| f(lx, ly), x, y, &dirs)?;
    let vals = jets.iter().map(|j| j.coeff(0).clone()).collect();
    let d = jets
        .iter()
        .map(|j| (0..n).map(|l| j.coeff(1 << l).clone()).collect())
        .collect();
    Ok((vals, d))
}

/// N^i_j = ∂G^i/∂y^j at jet arguments; `out[i][j]`.
pub(crate) fn n_at(s: &SprayData, x: &[Num], y: &[Num]) -> Result<Vec<Vec<Num>>> {
    let n = s.n();
    let (_, d) = fiber_partials(n, |lx, ly| s.eval_num(lx, ly), x, y)?;
    Ok(d)
}

/// G^i_jk = ∂²G^i/∂y^j∂y^k via two stacked fiber lifts; `out[i][j][k]`.
#[cfg_attr(not(test), allow(dead_code))] // jet cross-check used by tests
pub(crate) fn gijk_at(s: &SprayData, x: &[Num], y: &[Num]) -> Result<Vec<Vec<Vec<Num>>>> {
    let n = s.n();
    let (_, d2) = fiber_partials(
        n,
        |mx, my| {
            let (_, d) = fiber_partials(n, |lx, ly| s.eval_num(lx, ly), mx, my)?;
            Ok(d.into_iter().flatten().collect())
        },
        x,
        y,
    )?;
    // d2[i*n + k][j] = ∂(∂G^i/∂y^k)/∂y^j
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| d2[i * n + k][j].clone()).collect())
                .collect()
        })
        .collect())
}

/// P°^i_jkl = ∂³G^i/∂y^j∂y^k∂y^l; `out[i][j][k][l]`.
#[cfg_attr(not(test), allow(dead_code))] // jet cross-check used by tests
pub(crate) fn p3_at(s: &SprayData, x: &[Num], y: &[Num]) -> Result<Vec<Vec<Vec<Vec<Num>>>>> {
    let n = s.n();
    let (_, d3) = fiber_partials(
        n,
        |mx, my| {
            let g = gijk_at(s, mx, my)?;
            Ok(g.into_iter().flatten().flatten().collect())
        },
        x,
        y,
    )?;
    // d3[(i*n + j)*n + k][l]
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            (0..n)
                                .map(|l| d3[(i * n + j) * n + k][l].clone())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// R̂^i_jk = δN^i_j/δx^k − δN^i_k/δx^j (times the spray's torsion sign);
/// `out[i][j][k]`, antisymmetric in (j, k).
///
/// A single spray evaluation under a fiber lift stacked on a combined
/// fiber+base lift yields every ingredient: N^i_j, G^i_jk (including the
/// diagonal, through the two distinct fiber levels) and the mixed partials
/// ∂²G^i/∂y^j∂x^k.
#[cfg_attr(not(test), allow(dead_code))] // jet cross-check used by tests
pub(crate) fn vh_at(s: &SprayData, x: &[Num], y: &[Num]) -> Result<Vec<Vec<Vec<Num>>>> {
    let n = s.n();
    let outer: Vec<Direction> = (0..n).map(|i| Direction::Axis(Var::Y(i))).collect();
    let inner: Vec<Direction> = (0..n)
        .map(|i| Direction::Axis(Var::Y(i)))
        .chain((0..n).map(|i| Direction::Axis(Var::X(i))))
        .collect();
    let jets = lift(
        |mx, my| {
            let js = lift(|lx, ly| s.eval_num(lx, ly), mx, my, &inner)?;
            let mut out = Vec::with_capacity(2 * n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push(js[i].coeff(1 << j).clone()); // ∂G^i/∂y^j
                }
                for j in 0..n {
                    out.push(js[i].coeff(1 << (n + j)).clone()); // ∂G^i/∂x^j
                }
            }
            Ok(out)
        },
        x,
        y,
        &outer,
    )?;
    // Layout: jets[2ni + j] = ∂G^i/∂y^j, jets[2ni + n + j] = ∂G^i/∂x^j,
    // each with outer fiber bits for one more ∂/∂y.
    let nij: Vec<Vec<Num>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| jets[2 * n * i + j].coeff(0).clone())
                .collect()
        })
        .collect();
    let gjk: Vec<Vec<Vec<Num>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| jets[2 * n * i + k].coeff(1 << j).clone())
                        .collect()
                })
                .collect()
        })
        .collect();
    let mixed: Vec<Vec<Vec<Num>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| jets[2 * n * i + n + k].coeff(1 << j).clone())
                        .collect()
                })
                .collect()
        })
        .collect();

    let sign = s.vh_sign();
    let mut out = vec![vec![vec![Num::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..j {
                // δN^i_j/δx^k = ∂²G^i/∂y^j∂x^k − N^m_k G^i_jm
                let mut a = mixed[i][j][k].clone();
                let mut b = mixed[i][k][j].clone();
                for m in 0..n {
                    a = a.sub(&nij[m][k].mul(&gjk[i][j][m]));
                    b = b.sub(&nij[m][j].mul(&gjk[i][k][m]));
                }
                let v = a.sub(&b).scale(sign);
                out[i][k][j] = v.neg();
                out[i][j][k] = v;
            }
        }
    }
    Ok(out)
}

/// H^i_j = y^m R̂^i_mj; `out[i][j]`.
#[cfg_attr(not(test), allow(dead_code))] // jet cross-check used by tests
pub(crate) fn h_at(s: &SprayData, x: &[Num], y: &[Num]) -> Result<Vec<Vec<Num>>> {
    let n = s.n();
    let r = vh_at(s, x, y)?;
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = Num::zero();
                    for m in 0..n {
                        acc = acc.add(&y[m].mul(&r[i][m][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect())
}

/// R°^i_jkl = ∂R̂^i_jk/∂y^l (h-curvature with Z̄ in the last slot);
/// `out[i][j][k][l]`.
#[cfg_attr(not(test), allow(dead_code))] // jet cross-check used by tests
pub(crate) fn r0_at(s: &SprayData, x: &[Num], y: &[Num]) -> Result<Vec<Vec<Vec<Vec<Num>>>>> {
    let n = s.n();
    let (_, d) = fiber_partials(
        n,
        |mx, my| {
            let r = vh_at(s, mx, my)?;
            Ok(r.into_iter().flatten().flatten().collect())
        },
        x,
        y,
    )?;
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            (0..n)
                                .map(|l| d[(i * n + j) * n + k][l].clone())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// ω_j = G^m_mj and p_jk = Σ_m P°^m_jkm.
#[cfg_attr(not(test), allow(dead_code))] // jet cross-check used by tests
pub(crate) fn omega_p_at(
    s: &SprayData,
    x: &[Num],
    y: &[Num],
) -> Result<(Vec<Num>, Vec<Vec<Num>>)> {
    let n = s.n();
    let p3 = p3_at(s, x, y)?;
    let g = gijk_at(s, x, y)?;
    let omega = (0..n)
        .map(|j| {
            let mut acc = Num::zero();
            for m in 0..n {
                acc = acc.add(&g[m][m][j]);
            }
            acc
        })
        .collect();
    let p = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| {
                    let mut acc = Num::zero();
                    for m in 0..n {
                        acc = acc.add(&p3[m][j][k][m]);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok((omega, p))
}

/// Offsets into the flat per-point value block produced by
/// [`apparatus_values`]; fixed layout so each public wrapper can slice its
/// tensor out of one cached computation.
struct Layout {
    n: usize,
}

impl Layout {
    fn nij(&self) -> std::ops::Range<usize> {
        0..self.n * self.n
    }
    fn gijk(&self) -> std::ops::Range<usize> {
        let s = self.nij().end;
        s..s + self.n.pow(3)
    }
    fn p3(&self) -> std::ops::Range<usize> {
        let s = self.gijk().end;
        s..s + self.n.pow(4)
    }
    fn rhat(&self) -> std::ops::Range<usize> {
        let s = self.p3().end;
        s..s + self.n.pow(3)
    }
    fn h(&self) -> std::ops::Range<usize> {
        let s = self.rhat().end;
        s..s + self.n * self.n
    }
    fn r0(&self) -> std::ops::Range<usize> {
        let s = self.h().end;
        s..s + self.n.pow(4)
    }
    fn theta(&self) -> std::ops::Range<usize> {
        let s = self.r0().end;
        s..s + self.n * self.n
    }
    fn r2(&self) -> std::ops::Range<usize> {
        let s = self.theta().end;
        s..s + self.n * self.n
    }
    fn omega(&self) -> std::ops::Range<usize> {
        let s = self.r2().end;
        s..s + self.n
    }
    fn p(&self) -> std::ops::Range<usize> {
        let s = self.omega().end;
        s..s + self.n * self.n
    }
    fn r1(&self) -> std::ops::Range<usize> {
        let s = self.p().end;
        s..s + self.n
    }
    fn k(&self) -> usize {
        self.r1().end
    }
}

/// All base tensors of the apparatus at `p`, flattened per [`Layout`] and
/// memoized: one local expansion per (spray, point) no matter how many
/// tensors are requested. The trace block is zero-filled below dimension 3;
/// the public trace accessor rejects that case before reading.
fn apparatus_values(s: &SprayData, p: &EvalPoint) -> Result<std::sync::Arc<Vec<f64>>> {
    s.cached("apparatus", p, || {
        let a = Apparatus::new(s, p)?;
        let n = a.n;
        let mut out = Vec::with_capacity(2 * n.pow(4) + 2 * n.pow(3) + 5 * n * n + 2 * n + 1);
        out.extend(apparatus::values2(&a.nij));
        out.extend(apparatus::values3(&a.gijk));
        out.extend(apparatus::values4(&a.p3));
        out.extend(apparatus::values3(&a.rhat));
        out.extend(apparatus::values2(&a.h));
        out.extend(apparatus::values4(&a.r0));
        out.extend(apparatus::values2(&a.theta));
        out.extend(apparatus::values2(&a.r2));
        out.extend(a.omega.iter().map(|v| v.value()));
        out.extend(apparatus::values2(&a.pjk));
        match (&a.r1, &a.k) {
            (Some(r1), Some(k)) => {
                out.extend(r1.iter().map(|v| v.value()));
                out.push(k.value());
            }
            _ => out.extend(std::iter::repeat(0.0).take(n + 1)),
        }
        Ok(out)
    })
}

pub(crate) fn tensor(
    name: &str,
    slots: Vec<Slot>,
    n: usize,
    data: Vec<f64>,
    p: &EvalPoint,
    convention: &'static str,
) -> TensorValue {
    TensorValue {
        name: name.to_string(),
        dims: vec![n; slots.len()],
        slots,
        data,
        point: p.clone(),
        convention,
    }
}

/// N^i_j (Barthel nonlinear connection).
pub fn nonlinear_connection(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    Ok(tensor(
        "N",
        vec![Slot::Contra, Slot::Co],
        n,
        data[Layout { n }.nij()].to_vec(),
        p,
        "N^i_j = dG^i/dy^j",
    ))
}

/// G^i_jk (Berwald connection coefficients), symmetric in (j, k).
pub fn berwald_coefficients(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    Ok(tensor(
        "Gijk",
        vec![Slot::Contra, Slot::Co, Slot::Co],
        n,
        data[Layout { n }.gijk()].to_vec(),
        p,
        "G^i_jk = d2G^i/dy^j dy^k, symmetric in (j,k)",
    ))
}

/// P°^i_jkl (hv-curvature), totally symmetric in (j, k, l).
pub fn hv_curvature(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    Ok(tensor(
        "P0",
        vec![Slot::Contra, Slot::Co, Slot::Co, Slot::Co],
        n,
        data[Layout { n }.p3()].to_vec(),
        p,
        "P^i_jkl = d3G^i/dy^j dy^k dy^l; arguments (X,Y)Z = (j,k) l",
    ))
}

/// The v-curvature vanishes structurally in this realization: the Berwald
/// vertical connection coefficients are zero, so the vertical curvature is
/// the bracket of commuting fiber partials. Exposed as a documented
/// tautology rather than a numeric test.
pub fn v_curvature_is_zero(_s: &SprayData, _p: &EvalPoint) -> f64 {
    0.0
}

/// R̂^i_jk ((v)h-torsion), antisymmetric in (j, k).
pub fn vh_torsion(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    Ok(tensor(
        "Rhat",
        vec![Slot::Contra, Slot::Co, Slot::Co],
        n,
        data[Layout { n }.rhat()].to_vec(),
        p,
        "Rhat^i_jk = dN^i_j/dx^k - dN^i_k/dx^j (delta-derivatives); (X,Y)=(j,k)",
    ))
}

/// H^i_j (deviation tensor), H = R̂(η̄, ·).
pub fn deviation_tensor(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    Ok(tensor(
        "H",
        vec![Slot::Contra, Slot::Co],
        n,
        data[Layout { n }.h()].to_vec(),
        p,
        "H^i_j = y^m Rhat^i_mj",
    ))
}

/// R°^i_jkl (h-curvature), antisymmetric in (j, k).
pub fn h_curvature(s: &SprayData, p: &EvalPoint) -> Result<TensorValue> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    Ok(tensor(
        "R0",
        vec![Slot::Contra, Slot::Co, Slot::Co, Slot::Co],
        n,
        data[Layout { n }.r0()].to_vec(),
        p,
        "R^i_jkl = dRhat^i_jk/dy^l; arguments (X,Y)Z = (j,k) l",
    ))
}

/// The contracted traces θ, R₂, R₁ and the scalar k.
pub struct Traces {
    pub theta: TensorValue,
    pub r2: TensorValue,
    pub r1: TensorValue,
    pub k: f64,
}

pub fn traces(s: &SprayData, p: &EvalPoint) -> Result<Traces> {
    let n = s.n();
    if n <= 2 {
        return Err(Error::Dimension(format!(
            "the contracted traces require dimension > 2, got {n}"
        )));
    }
    let data = apparatus_values(s, p)?;
    let lay = Layout { n };
    Ok(Traces {
        theta: tensor(
            "theta",
            vec![Slot::Co, Slot::Co],
            n,
            data[lay.theta()].to_vec(),
            p,
            "theta_jk = trace of R(X,Y)Z over (Z, output)",
        ),
        r2: tensor(
            "R2",
            vec![Slot::Co, Slot::Co],
            n,
            data[lay.r2()].to_vec(),
            p,
            "R2_jk = trace of R(X,Z)Y over (Z, output); (X,Y)=(j,k)",
        ),
        r1: tensor(
            "R1",
            vec![Slot::Co],
            n,
            data[lay.r1()].to_vec(),
            p,
            "R1_j = (n R2(X,eta) + R2(eta,X)) / (n-1)",
        ),
        k: data[lay.k()],
    })
}

/// ω_j = G^m_mj and p_jk = trace of P° over (Z, output).
pub fn omega_and_p(s: &SprayData, p: &EvalPoint) -> Result<(TensorValue, TensorValue)> {
    let n = s.n();
    let data = apparatus_values(s, p)?;
    let lay = Layout { n };
    Ok((
        tensor(
            "omega",
            vec![Slot::Co],
            n,
            data[lay.omega()].to_vec(),
            p,
            "omega_j = G^m_mj",
        ),
        tensor(
            "p",
            vec![Slot::Co, Slot::Co],
            n,
            data[lay.p()].to_vec(),
            p,
            "p_jk = P^m_jkm, symmetric",
        ),
    ))
}

/// Euler degree of a jet-evaluable tensor map at `p`: the radial fiber
/// derivative of the largest component divided by that component.
pub fn tensor_euler_degree<F>(n: usize, f: F, p: &EvalPoint) -> Result<f64>
where
    F: Fn(&[Num], &[Num]) -> Result<Vec<Num>>,
{
    let (x, y) = nums(p);
    let mut dir = vec![0.0; 2 * n];
    dir[n..].copy_from_slice(&p.y);
    let jets = lift(
        |lx, ly| f(lx, ly),
        &x,
        &y,
        &[Direction::Vector(dir)],
    )?;
    let mut best: Option<(f64, f64)> = None;
    for j in &jets {
        let v = j.coeff(0).value();
        if best.map_or(true, |(bv, _)| v.abs() > bv.abs()) {
            best = Some((v, j.coeff(1).value()));
        }
    }
    let (v, dv) = best.ok_or_else(|| Error::Domain("empty tensor".into()))?;
    if v == 0.0 {
        return Err(Error::Domain(
            "tensor vanishes at this point; Euler degree undefined".into(),
        ));
    }
    Ok(dv / v)
}
