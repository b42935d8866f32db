//! Truncated multivariate Taylor polynomials around a chart point.
//!
//! The deep tensor pipeline (Weyl and Douglas towers) needs up to seven
//! fiber-derivative orders of the energy plus two base orders. Nested dual
//! levels pay a multiplicative cost per stacked derivative level; expanding
//! every scalar once as a truncated Taylor polynomial in the local offsets
//! (Δx, Δy) and then taking *formal* derivatives is exact for all retained
//! orders and turns the entire curvature apparatus into cheap polynomial
//! algebra: one energy expansion per point instead of one tower per tensor.
//!
//! Truncation is sound because the coefficient of a monomial in a product
//! depends only on coefficients of lower-or-equal degree in the factors; a
//! poly whose inputs were exact to some degree stays exact to that degree.
//! Degree bookkeeping (how many formal derivatives may be taken before the
//! retained orders run out) is the caller's responsibility; the default caps
//! in [`Caps`] cover the deepest tower in the crate with margin.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{EvalPoint, Num};

/// Degree caps: total fiber degree ≤ `dy`, total base degree ≤ `dx`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub dy: usize,
    pub dx: usize,
}

impl Caps {
    /// Enough for every tower in the crate: the Weyl tensor needs seven
    /// fiber orders and two base orders of the energy; the Douglas tensor
    /// six and one.
    pub fn deep() -> Caps {
        Caps { dy: 7, dx: 2 }
    }
}

const NONE: u32 = u32::MAX;

/// Shared ring context: monomial enumeration plus product / derivative
/// tables for one (dimension, caps) pair.
pub struct Ctx {
    n: usize,
    caps: Caps,
    /// Exponent vectors of the fiber monomials, graded order, `ymons[0] = 0`.
    ymons: Vec<Vec<u8>>,
    xmons: Vec<Vec<u8>>,
    /// `ymul[a * ny + b]` = index of the product monomial, or `NONE` on
    /// degree overflow.
    ymul: Vec<u32>,
    xmul: Vec<u32>,
    /// Per fiber variable: `(source monomial) -> (target, exponent factor)`.
    ydiff: Vec<Vec<(u32, f64)>>,
    xdiff: Vec<Vec<(u32, f64)>>,
}

fn enumerate_monomials(n: usize, cap: usize) -> Vec<Vec<u8>> {
    // All exponent vectors of exactly `left` remaining degree, graded order.
    fn rec(pos: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left as u8;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for e in 0..=left {
            cur[pos] = e as u8;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u8; n];
    for total in 0..=cap {
        rec(0, total, &mut cur, &mut out);
    }
    out
}

fn build_tables(
    mons: &[Vec<u8>],
    n: usize,
    cap: usize,
) -> (Vec<u32>, Vec<Vec<(u32, f64)>>) {
    use std::collections::HashMap;
    let index: HashMap<&[u8], u32> = mons
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_slice(), i as u32))
        .collect();
    let m = mons.len();
    let mut mul = vec![NONE; m * m];
    for a in 0..m {
        for b in 0..m {
            let sum: Vec<u8> = mons[a].iter().zip(&mons[b]).map(|(p, q)| p + q).collect();
            if sum.iter().map(|v| *v as usize).sum::<usize>() <= cap {
                mul[a * m + b] = index[sum.as_slice()];
            }
        }
    }
    let mut diff = vec![vec![(NONE, 0.0); m]; n];
    for (i, mon) in mons.iter().enumerate() {
        for v in 0..n {
            if mon[v] > 0 {
                let mut t = mon.clone();
                t[v] -= 1;
                diff[v][i] = (index[t.as_slice()], mon[v] as f64);
            }
        }
    }
    (mul, diff)
}

impl Ctx {
    pub fn new(n: usize, caps: Caps) -> Arc<Ctx> {
        let ymons = enumerate_monomials(n, caps.dy);
        let xmons = enumerate_monomials(n, caps.dx);
        let (ymul, ydiff) = build_tables(&ymons, n, caps.dy);
        let (xmul, xdiff) = build_tables(&xmons, n, caps.dx);
        Arc::new(Ctx {
            n,
            caps,
            ymons,
            xmons,
            ymul,
            xmul,
            ydiff,
            xdiff,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    fn len(&self) -> usize {
        self.ymons.len() * self.xmons.len()
    }
}

/// A truncated Taylor polynomial over a shared [`Ctx`]. Coefficients are
/// indexed by `x_monomial * ny + y_monomial`.
#[derive(Clone)]
pub struct TPoly {
    ctx: Arc<Ctx>,
    c: Vec<f64>,
}

impl std::fmt::Debug for TPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "TPoly(value {}, {} nonzero of {})",
            self.value(),
            self.c.iter().filter(|v| **v != 0.0).count(),
            self.c.len()
        )
    }
}

impl TPoly {
    pub fn constant(ctx: &Arc<Ctx>, v: f64) -> TPoly {
        let mut c = vec![0.0; ctx.len()];
        c[0] = v;
        TPoly {
            ctx: ctx.clone(),
            c,
        }
    }

    /// The coordinate polynomial x0 + Δ for base variable `i`.
    pub fn x_coord(ctx: &Arc<Ctx>, i: usize, x0: f64) -> TPoly {
        let mut p = TPoly::constant(ctx, x0);
        let ny = ctx.ymons.len();
        let mon = ctx
            .xmons
            .iter()
            .position(|m| {
                m.iter().map(|v| *v as usize).sum::<usize>() == 1 && m[i] == 1
            })
            .expect("degree caps admit first order");
        p.c[mon * ny] = 1.0;
        p
    }

    /// The coordinate polynomial y0 + Δ for fiber variable `i`.
    pub fn y_coord(ctx: &Arc<Ctx>, i: usize, y0: f64) -> TPoly {
        let mut p = TPoly::constant(ctx, y0);
        let mon = ctx
            .ymons
            .iter()
            .position(|m| {
                m.iter().map(|v| *v as usize).sum::<usize>() == 1 && m[i] == 1
            })
            .expect("degree caps admit first order");
        p.c[mon] = 1.0;
        p
    }

    pub fn ctx(&self) -> &Arc<Ctx> {
        &self.ctx
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    fn same_ctx(&self, rhs: &TPoly) {
        assert!(
            Arc::ptr_eq(&self.ctx, &rhs.ctx),
            "taylor polynomials from different contexts"
        );
    }

    pub fn add(&self, rhs: &TPoly) -> TPoly {
        self.same_ctx(rhs);
        let mut out = self.clone();
        for (o, r) in out.c.iter_mut().zip(&rhs.c) {
            *o += r;
        }
        out
    }

    pub fn add_scalar(&self, v: f64) -> TPoly {
        let mut out = self.clone();
        out.c[0] += v;
        out
    }

    pub fn neg(&self) -> TPoly {
        let mut out = self.clone();
        for o in out.c.iter_mut() {
            *o = -*o;
        }
        out
    }

    pub fn sub(&self, rhs: &TPoly) -> TPoly {
        self.same_ctx(rhs);
        let mut out = self.clone();
        for (o, r) in out.c.iter_mut().zip(&rhs.c) {
            *o -= r;
        }
        out
    }

    pub fn scale(&self, k: f64) -> TPoly {
        let mut out = self.clone();
        for o in out.c.iter_mut() {
            *o *= k;
        }
        out
    }

    pub fn mul(&self, rhs: &TPoly) -> TPoly {
        self.same_ctx(rhs);
        let ctx = &self.ctx;
        let ny = ctx.ymons.len();
        let nza: Vec<(usize, usize, f64)> = self
            .c
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i / ny, i % ny, *v))
            .collect();
        let nzb: Vec<(usize, usize, f64)> = rhs
            .c
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i / ny, i % ny, *v))
            .collect();
        let nxm = ctx.xmons.len();
        let mut out = TPoly::constant(ctx, 0.0);
        out.c[0] = 0.0;
        for &(ax, ay, av) in &nza {
            for &(bx, by, bv) in &nzb {
                let tx = ctx.xmul[ax * nxm + bx];
                if tx == NONE {
                    continue;
                }
                let ty = ctx.ymul[ay * ny + by];
                if ty == NONE {
                    continue;
                }
                out.c[tx as usize * ny + ty as usize] += av * bv;
            }
        }
        out
    }

    /// Formal ∂/∂y^j.
    pub fn dy(&self, j: usize) -> TPoly {
        let ctx = &self.ctx;
        let ny = ctx.ymons.len();
        let mut out = TPoly::constant(ctx, 0.0);
        out.c[0] = 0.0;
        for (i, v) in self.c.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let (t, f) = ctx.ydiff[j][i % ny];
            if t != NONE {
                out.c[(i / ny) * ny + t as usize] += v * f;
            }
        }
        out
    }

    /// Formal ∂/∂x^j.
    pub fn dx(&self, j: usize) -> TPoly {
        let ctx = &self.ctx;
        let ny = ctx.ymons.len();
        let mut out = TPoly::constant(ctx, 0.0);
        out.c[0] = 0.0;
        for (i, v) in self.c.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let (t, f) = ctx.xdiff[j][i / ny];
            if t != NONE {
                out.c[t as usize * ny + (i % ny)] += v * f;
            }
        }
        out
    }

    /// The Euler operator Σ y^j ∂/∂y^j with `y` the coordinate polys.
    pub fn euler_y(&self, y: &[TPoly]) -> TPoly {
        let mut acc = TPoly::constant(&self.ctx, 0.0);
        for (j, yj) in y.iter().enumerate() {
            acc = acc.add(&yj.mul(&self.dy(j)));
        }
        acc
    }

    /// Horner evaluation of Σ coefs[m] (self − self(0))^m.
    fn compose(&self, coefs: &[f64]) -> TPoly {
        let mut u = self.clone();
        u.c[0] = 0.0;
        let k = coefs.len() - 1;
        let mut acc = TPoly::constant(&self.ctx, coefs[k]);
        for m in (0..k).rev() {
            acc = acc.mul(&u).add_scalar(coefs[m]);
        }
        acc
    }

    fn order(&self) -> usize {
        self.ctx.caps.dy + self.ctx.caps.dx
    }

    pub fn recip(&self) -> Result<TPoly> {
        let a0 = self.value();
        if a0 == 0.0 {
            return Err(Error::Domain("division by zero".into()));
        }
        let k = self.order();
        let mut coefs = Vec::with_capacity(k + 1);
        coefs.push(1.0 / a0);
        for m in 1..=k {
            coefs.push(-coefs[m - 1] / a0);
        }
        Ok(self.compose(&coefs))
    }

    pub fn sqrt(&self) -> Result<TPoly> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(Error::Domain(format!("sqrt of non-positive value {a0}")));
        }
        let k = self.order();
        let mut coefs = Vec::with_capacity(k + 1);
        coefs.push(a0.sqrt());
        for m in 1..=k {
            coefs.push(coefs[m - 1] * (1.5 - m as f64) / (m as f64 * a0));
        }
        Ok(self.compose(&coefs))
    }

    pub fn exp(&self) -> Result<TPoly> {
        let k = self.order();
        let mut coefs = Vec::with_capacity(k + 1);
        coefs.push(self.value().exp());
        for m in 1..=k {
            coefs.push(coefs[m - 1] / m as f64);
        }
        Ok(self.compose(&coefs))
    }

    pub fn ln(&self) -> Result<TPoly> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(Error::Domain(format!("log of non-positive value {a0}")));
        }
        let k = self.order();
        let mut coefs = Vec::with_capacity(k + 1);
        coefs.push(a0.ln());
        if k >= 1 {
            coefs.push(1.0 / a0);
        }
        for m in 2..=k {
            coefs.push(-coefs[m - 1] * (m as f64 - 1.0) / (m as f64 * a0));
        }
        Ok(self.compose(&coefs))
    }

    pub fn sin(&self) -> Result<TPoly> {
        Ok(self.compose(&trig_coefs(self.value().sin(), self.value().cos(), self.order())))
    }

    pub fn cos(&self) -> Result<TPoly> {
        Ok(self.compose(&trig_coefs(
            self.value().cos(),
            -self.value().sin(),
            self.order(),
        )))
    }

    pub fn atan(&self) -> Result<TPoly> {
        let a0 = self.value();
        let k = self.order();
        let w = 1.0 / (1.0 + a0 * a0);
        let mut coefs = Vec::with_capacity(k + 1);
        coefs.push(a0.atan());
        if k >= 1 {
            coefs.push(w);
        }
        for m in 1..k {
            let t = 2.0 * m as f64 * a0 * coefs[m] + (m as f64 - 1.0) * coefs[m - 1];
            coefs.push(-t * w / (m as f64 + 1.0));
        }
        Ok(self.compose(&coefs))
    }

    pub fn powi(&self, p: i64) -> Result<TPoly> {
        if p < 0 {
            return self.powi(-p)?.recip();
        }
        let mut result = TPoly::constant(&self.ctx, 1.0);
        let mut base = self.clone();
        let mut e = p as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        Ok(result)
    }
}

fn trig_coefs(f0: f64, f1: f64, k: usize) -> Vec<f64> {
    let mut coefs = Vec::with_capacity(k + 1);
    let mut fact = 1.0;
    for m in 0..=k {
        if m > 0 {
            fact *= m as f64;
        }
        let base = match m % 4 {
            0 => f0,
            1 => f1,
            2 => -f0,
            _ => -f1,
        };
        coefs.push(base / fact);
    }
    coefs
}

/// Coordinate polynomials (x, y) for a chart point, as [`Num`] values ready
/// for any `ScalarField` or spray evaluation.
pub fn coords(ctx: &Arc<Ctx>, p: &EvalPoint) -> (Vec<Num>, Vec<Num>) {
    let x = p
        .x
        .iter()
        .enumerate()
        .map(|(i, v)| Num::Taylor(TPoly::x_coord(ctx, i, *v)))
        .collect();
    let y = p
        .y
        .iter()
        .enumerate()
        .map(|(i, v)| Num::Taylor(TPoly::y_coord(ctx, i, *v)))
        .collect();
    (x, y)
}

/// Promote a `Num` from a Taylor evaluation (which may have degenerated to a
/// scalar, e.g. a constant field) back to a polynomial.
pub(crate) fn to_tpoly(ctx: &Arc<Ctx>, v: Num) -> TPoly {
    match v {
        Num::Taylor(t) => t,
        Num::Scalar(s) => TPoly::constant(ctx, s),
        other => panic!("expected a taylor or scalar value, got {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx3() -> Arc<Ctx> {
        Ctx::new(3, Caps::deep())
    }

    /// A random low-degree polynomial c0 + Σ ci y_i + Σ cij y_i y_j + c x1.
    fn random_poly(ctx: &Arc<Ctx>, coefs: &[f64], base: &[f64]) -> TPoly {
        let y: Vec<TPoly> = (0..3).map(|i| TPoly::y_coord(ctx, i, base[i])).collect();
        let mut f = TPoly::constant(ctx, coefs[0]);
        let mut c = 1;
        for yi in &y {
            f = f.add(&yi.scale(coefs[c]));
            c += 1;
        }
        for i in 0..3 {
            for j in i..3 {
                f = f.add(&y[i].mul(&y[j]).scale(coefs[c]));
                c += 1;
            }
        }
        f.add(&TPoly::x_coord(ctx, 0, base[3]).scale(coefs[c]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // Leibniz rule and commuting formal derivatives on random products.
        #[test]
        fn leibniz_and_commutation(
            a in proptest::collection::vec(-2.0f64..2.0, 11),
            b in proptest::collection::vec(-2.0f64..2.0, 11),
            base in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let ctx = ctx3();
            let f = random_poly(&ctx, &a, &base);
            let g = random_poly(&ctx, &b, &base);
            let prod = f.mul(&g);
            for j in 0..3 {
                let lhs = prod.dy(j);
                let rhs = f.dy(j).mul(&g).add(&f.mul(&g.dy(j)));
                prop_assert!((lhs.value() - rhs.value()).abs() < 1e-10);
                let ab = prod.dy(j).dy((j + 1) % 3).value();
                let ba = prod.dy((j + 1) % 3).dy(j).value();
                prop_assert!((ab - ba).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn monomial_counts() {
        let ctx = ctx3();
        assert_eq!(ctx.ymons.len(), 120); // C(7+3, 3)
        assert_eq!(ctx.xmons.len(), 10); // C(2+3, 3)
    }

    #[test]
    fn product_and_derivative_of_polynomials_are_exact() {
        // f = (y1 + 2 y2)^3 * x1; ∂³f/∂y1²∂y2 = 12 x1, ∂f/∂x1 at 0 = (y1+2y2)^3.
        let ctx = ctx3();
        let y1 = TPoly::y_coord(&ctx, 0, 0.7);
        let y2 = TPoly::y_coord(&ctx, 1, -0.3);
        let x1 = TPoly::x_coord(&ctx, 0, 2.0);
        let f = y1.add(&y2.scale(2.0)).powi(3).unwrap().mul(&x1);
        let d = f.dy(0).dy(0).dy(1);
        assert!((d.value() - 12.0 * 2.0).abs() < 1e-12);
        let g = f.dx(0);
        let base: f64 = 0.7 + 2.0 * (-0.3);
        assert!((g.value() - base.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn seventh_fiber_derivative_is_exact() {
        // f = y1^7: ∂⁷f/∂y1⁷ = 5040.
        let ctx = ctx3();
        let y1 = TPoly::y_coord(&ctx, 0, 0.4);
        let mut f = y1.powi(7).unwrap();
        for _ in 0..7 {
            f = f.dy(0);
        }
        assert!((f.value() - 5040.0).abs() < 1e-9);
    }

    #[test]
    fn analytic_functions_match_jet_towers() {
        // d³/dy1³ of exp(sin(y1)) via taylor formal derivatives vs the
        // closed form used in the jet tests.
        let ctx = ctx3();
        let t: f64 = 0.4;
        let y1 = TPoly::y_coord(&ctx, 0, t);
        let f = y1.sin().unwrap().exp().unwrap();
        let d3 = f.dy(0).dy(0).dy(0);
        let expect = t.sin().exp() * t.cos() * (t.cos().powi(2) - 3.0 * t.sin() - 1.0);
        assert!((d3.value() - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn recip_sqrt_consistency() {
        let ctx = ctx3();
        let y1 = TPoly::y_coord(&ctx, 0, 1.3);
        let y2 = TPoly::y_coord(&ctx, 1, 0.4);
        let q = y1.mul(&y1).add(&y2.mul(&y2));
        let s = q.sqrt().unwrap();
        let prod = s.mul(&s.recip().unwrap());
        assert!((prod.value() - 1.0).abs() < 1e-14);
        for v in prod.c.iter().skip(1) {
            assert!(v.abs() < 1e-11, "{v}");
        }
    }

    #[test]
    fn domain_errors_propagate() {
        let ctx = ctx3();
        let z = TPoly::constant(&ctx, 0.0);
        assert!(z.recip().is_err());
        assert!(z.sqrt().is_err());
        assert!(z.add_scalar(-1.0).ln().is_err());
    }

    #[test]
    fn euler_operator_reads_homogeneity_degree() {
        // Σ y ∂y of (y·y) = 2 (y·y).
        let ctx = ctx3();
        let y: Vec<TPoly> = (0..3)
            .map(|i| TPoly::y_coord(&ctx, i, [1.0, 0.5, -0.25][i]))
            .collect();
        let q = y.iter().fold(TPoly::constant(&ctx, 0.0), |acc, v| {
            acc.add(&v.mul(v))
        });
        let e = q.euler_y(&y);
        let ratio = e.value() / q.value();
        assert!((ratio - 2.0).abs() < 1e-13);
    }
}
