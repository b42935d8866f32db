//! Exact higher-order directional differentiation on the chart domain of the
//! slit tangent bundle.
//!
//! A [`Jet`] carries a value together with truncated Taylor data in up to
//! [`MAX_DIRS`] tagged perturbation directions, each direction to first order.
//! Coefficients are [`Num`]s, so jets nest: evaluating a field that itself
//! takes derivatives of another field stacks one jet level per derivative
//! tower, and the product rule is handled by the arithmetic itself.
//!
//! The coefficient of the full direction mask is the mixed directional
//! derivative along all tagged directions; mixed partials commute, so the
//! order of the tags is irrelevant.

use crate::error::{Error, Result};

/// Maximum number of tagged directions in a single jet level.
pub const MAX_DIRS: usize = 6;

/// A scalar that is a plain `f64`, a jet whose coefficients are again
/// scalars of this type, or a truncated Taylor polynomial leaf
/// ([`crate::taylor::TPoly`]). Plain values and Taylor leaves broadcast into
/// jets on demand, so constants stay cheap through deeply nested
/// evaluations and every field can be expanded around a point without any
/// dedicated evaluation path.
#[derive(Clone, Debug)]
pub enum Num {
    Scalar(f64),
    Jet(Jet),
    Taylor(crate::taylor::TPoly),
}

/// Truncated multivariate first-order-per-direction Taylor coefficients.
/// `coeffs[mask]` is the mixed derivative along the direction set `mask`.
#[derive(Clone, Debug)]
pub struct Jet {
    dirs: u8,
    coeffs: Vec<Num>,
}

impl Jet {
    pub fn constant(dirs: usize, value: Num) -> Jet {
        let mut coeffs = vec![Num::Scalar(0.0); 1 << dirs];
        coeffs[0] = value;
        Jet {
            dirs: dirs as u8,
            coeffs,
        }
    }

    pub fn dirs(&self) -> usize {
        self.dirs as usize
    }

    /// Coefficient for a direction subset mask.
    pub fn coeff(&self, mask: usize) -> &Num {
        &self.coeffs[mask]
    }

    pub fn set_coeff(&mut self, mask: usize, v: Num) {
        self.coeffs[mask] = v;
    }

    fn zero_like(&self) -> Jet {
        Jet {
            dirs: self.dirs,
            coeffs: vec![Num::Scalar(0.0); self.coeffs.len()],
        }
    }
}

impl Num {
    pub fn zero() -> Num {
        Num::Scalar(0.0)
    }

    pub fn one() -> Num {
        Num::Scalar(1.0)
    }

    pub fn from_f64(v: f64) -> Num {
        Num::Scalar(v)
    }

    /// The order-zero part, recursing through all jet levels.
    pub fn value(&self) -> f64 {
        match self {
            Num::Scalar(v) => *v,
            Num::Jet(j) => j.coeffs[0].value(),
            Num::Taylor(t) => t.value(),
        }
    }

    /// Cheap structural zero test (used to skip dead terms in products).
    fn is_zero(&self) -> bool {
        matches!(self, Num::Scalar(v) if *v == 0.0)
    }

    pub fn add(&self, rhs: &Num) -> Num {
        match (self, rhs) {
            (Num::Scalar(a), Num::Scalar(b)) => Num::Scalar(a + b),
            (Num::Jet(j), s @ Num::Scalar(_)) => {
                if s.is_zero() {
                    return self.clone();
                }
                let mut out = j.clone();
                out.coeffs[0] = out.coeffs[0].add(s);
                Num::Jet(out)
            }
            (Num::Scalar(_), Num::Jet(_)) => rhs.add(self),
            (Num::Jet(a), Num::Jet(b)) => {
                assert_eq!(a.dirs, b.dirs, "jet level mismatch");
                let mut out = a.clone();
                for (c, d) in out.coeffs.iter_mut().zip(&b.coeffs) {
                    if !d.is_zero() {
                        *c = c.add(d);
                    }
                }
                Num::Jet(out)
            }
            (Num::Taylor(a), Num::Taylor(b)) => Num::Taylor(a.add(b)),
            (Num::Taylor(a), Num::Scalar(b)) => Num::Taylor(a.add_scalar(*b)),
            (Num::Scalar(_), Num::Taylor(_)) => rhs.add(self),
            // Taylor leaves broadcast into jets like plain scalars.
            (Num::Jet(j), Num::Taylor(_)) => {
                let mut out = j.clone();
                out.coeffs[0] = out.coeffs[0].add(rhs);
                Num::Jet(out)
            }
            (Num::Taylor(_), Num::Jet(_)) => rhs.add(self),
        }
    }

    pub fn neg(&self) -> Num {
        match self {
            Num::Scalar(a) => Num::Scalar(-a),
            Num::Jet(j) => {
                let mut out = j.clone();
                for c in out.coeffs.iter_mut() {
                    *c = c.neg();
                }
                Num::Jet(out)
            }
            Num::Taylor(t) => Num::Taylor(t.neg()),
        }
    }

    pub fn sub(&self, rhs: &Num) -> Num {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, k: f64) -> Num {
        self.mul(&Num::Scalar(k))
    }

    pub fn mul(&self, rhs: &Num) -> Num {
        match (self, rhs) {
            (Num::Scalar(a), Num::Scalar(b)) => Num::Scalar(a * b),
            (Num::Jet(j), s @ Num::Scalar(v)) => {
                if s.is_zero() {
                    return Num::Scalar(0.0);
                }
                if *v == 1.0 {
                    return self.clone();
                }
                let mut out = j.clone();
                for c in out.coeffs.iter_mut() {
                    if !c.is_zero() {
                        *c = c.mul(s);
                    }
                }
                Num::Jet(out)
            }
            (Num::Scalar(_), Num::Jet(_)) => rhs.mul(self),
            (Num::Jet(a), Num::Jet(b)) => {
                assert_eq!(a.dirs, b.dirs, "jet level mismatch");
                let mut out = a.zero_like();
                for s in 0..a.coeffs.len() {
                    let mut acc = Num::Scalar(0.0);
                    // enumerate submasks of s
                    let mut sub = s;
                    loop {
                        let x = &a.coeffs[sub];
                        let y = &b.coeffs[s & !sub];
                        if !x.is_zero() && !y.is_zero() {
                            acc = acc.add(&x.mul(y));
                        }
                        if sub == 0 {
                            break;
                        }
                        sub = (sub - 1) & s;
                    }
                    out.coeffs[s] = acc;
                }
                Num::Jet(out)
            }
            (Num::Taylor(a), Num::Taylor(b)) => Num::Taylor(a.mul(b)),
            (Num::Taylor(a), Num::Scalar(v)) => {
                if *v == 0.0 {
                    Num::Scalar(0.0)
                } else if *v == 1.0 {
                    self.clone()
                } else {
                    Num::Taylor(a.scale(*v))
                }
            }
            (Num::Scalar(_), Num::Taylor(_)) => rhs.mul(self),
            // Taylor leaves broadcast into jets like plain scalars.
            (Num::Jet(j), t @ Num::Taylor(_)) => {
                let mut out = j.clone();
                for c in out.coeffs.iter_mut() {
                    if !c.is_zero() {
                        *c = c.mul(t);
                    }
                }
                Num::Jet(out)
            }
            (Num::Taylor(_), Num::Jet(_)) => rhs.mul(self),
        }
    }

    pub fn div(&self, rhs: &Num) -> Result<Num> {
        Ok(self.mul(&rhs.recip()?))
    }

    pub fn recip(&self) -> Result<Num> {
        match self {
            Num::Scalar(a) => {
                if *a == 0.0 {
                    Err(Error::Domain("division by zero".into()))
                } else {
                    Ok(Num::Scalar(1.0 / a))
                }
            }
            Num::Jet(j) => {
                let a0 = &j.coeffs[0];
                let r0 = a0.recip()?;
                let k = j.dirs();
                // f^{(m)}(a0)/m! = (-1)^m a0^{-(m+1)}
                let mut coefs = Vec::with_capacity(k + 1);
                coefs.push(r0.clone());
                for m in 1..=k {
                    let prev: &Num = &coefs[m - 1];
                    coefs.push(prev.mul(&r0).neg());
                }
                Ok(Num::Jet(compose(j, &coefs)))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.recip()?)),
        }
    }

    pub fn sqrt(&self) -> Result<Num> {
        let v = self.value();
        if v <= 0.0 {
            return Err(Error::Domain(format!("sqrt of non-positive value {v}")));
        }
        match self {
            Num::Scalar(a) => Ok(Num::Scalar(a.sqrt())),
            Num::Jet(j) => {
                let a0 = &j.coeffs[0];
                let s = a0.sqrt()?;
                let ra = a0.recip()?;
                let k = j.dirs();
                // ratio c_m / c_{m-1} = (3/2 - m)/m * a0^{-1}
                let mut coefs = Vec::with_capacity(k + 1);
                coefs.push(s);
                for m in 1..=k {
                    let ratio = (1.5 - m as f64) / m as f64;
                    let prev: &Num = &coefs[m - 1];
                    coefs.push(prev.mul(&ra).scale(ratio));
                }
                Ok(Num::Jet(compose(j, &coefs)))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.sqrt()?)),
        }
    }

    pub fn exp(&self) -> Result<Num> {
        match self {
            Num::Scalar(a) => Ok(Num::Scalar(a.exp())),
            Num::Jet(j) => {
                let e = j.coeffs[0].exp()?;
                let k = j.dirs();
                let mut coefs = Vec::with_capacity(k + 1);
                coefs.push(e);
                for m in 1..=k {
                    let prev: &Num = &coefs[m - 1];
                    coefs.push(prev.scale(1.0 / m as f64));
                }
                Ok(Num::Jet(compose(j, &coefs)))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.exp()?)),
        }
    }

    pub fn ln(&self) -> Result<Num> {
        let v = self.value();
        if v <= 0.0 {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        match self {
            Num::Scalar(a) => Ok(Num::Scalar(a.ln())),
            Num::Jet(j) => {
                let a0 = &j.coeffs[0];
                let ra = a0.recip()?;
                let k = j.dirs();
                // c_1 = a0^{-1}; c_m = -c_{m-1} * a0^{-1} * (m-1)/m
                let mut coefs = Vec::with_capacity(k + 1);
                coefs.push(a0.ln()?);
                if k >= 1 {
                    coefs.push(ra.clone());
                }
                for m in 2..=k {
                    let ratio = -((m - 1) as f64) / m as f64;
                    let prev: &Num = &coefs[m - 1];
                    coefs.push(prev.mul(&ra).scale(ratio));
                }
                Ok(Num::Jet(compose(j, &coefs)))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.ln()?)),
        }
    }

    pub fn sin(&self) -> Result<Num> {
        match self {
            Num::Scalar(a) => Ok(Num::Scalar(a.sin())),
            Num::Jet(j) => {
                let s = j.coeffs[0].sin()?;
                let c = j.coeffs[0].cos()?;
                Ok(Num::Jet(compose(j, &trig_coefs(&s, &c, j.dirs()))))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.sin()?)),
        }
    }

    pub fn cos(&self) -> Result<Num> {
        match self {
            Num::Scalar(a) => Ok(Num::Scalar(a.cos())),
            Num::Jet(j) => {
                let c = j.coeffs[0].cos()?;
                let ms = j.coeffs[0].sin()?.neg();
                Ok(Num::Jet(compose(j, &trig_coefs(&c, &ms, j.dirs()))))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.cos()?)),
        }
    }

    pub fn atan(&self) -> Result<Num> {
        match self {
            Num::Scalar(a) => Ok(Num::Scalar(a.atan())),
            Num::Jet(j) => {
                let a0 = &j.coeffs[0];
                let k = j.dirs();
                // (1+t^2) f' = 1 gives, for b_m = f^{(m)}/m!:
                //   b_{m+1} = -(2m a0 b_m + (m-1) b_{m-1}) / ((m+1)(1+a0^2))
                let w = Num::one().add(&a0.mul(a0)).recip()?;
                let mut coefs = Vec::with_capacity(k + 1);
                coefs.push(a0.atan()?);
                if k >= 1 {
                    coefs.push(w.clone());
                }
                for m in 1..k {
                    let t1 = a0.mul(&coefs[m]).scale(2.0 * m as f64);
                    let t2 = coefs[m - 1].scale(m as f64 - 1.0);
                    let num = t1.add(&t2);
                    coefs.push(num.mul(&w).scale(-1.0 / (m as f64 + 1.0)));
                }
                Ok(Num::Jet(compose(j, &coefs)))
            }
            Num::Taylor(t) => Ok(Num::Taylor(t.atan()?)),
        }
    }

    /// Integer power by repeated multiplication; negative exponents go
    /// through `recip`, rejecting a zero order-zero part.
    pub fn powi(&self, p: i64) -> Result<Num> {
        if p < 0 {
            return self.powi(-p)?.recip();
        }
        let mut result = Num::one();
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

/// Taylor coefficient tables for sin/cos around the order-zero part.
fn trig_coefs(f0: &Num, f1: &Num, k: usize) -> Vec<Num> {
    // derivative cycle: f, f', -f, -f', ... each divided by m!
    let mut coefs = Vec::with_capacity(k + 1);
    let mut fact = 1.0;
    for m in 0..=k {
        if m > 0 {
            fact *= m as f64;
        }
        let base = match m % 4 {
            0 => f0.clone(),
            1 => f1.clone(),
            2 => f0.neg(),
            _ => f1.neg(),
        };
        coefs.push(base.scale(1.0 / fact));
    }
    coefs
}

/// Evaluate `sum_m coefs[m] * u^m` by Horner, where `u` is `j` with its
/// order-zero coefficient removed (nilpotent of index dirs+1).
fn compose(j: &Jet, coefs: &[Num]) -> Jet {
    let mut u = j.clone();
    u.coeffs[0] = Num::Scalar(0.0);
    let u = Num::Jet(u);
    let k = coefs.len() - 1;
    let mut acc = Num::Jet(Jet::constant(j.dirs(), coefs[k].clone()));
    for m in (0..k).rev() {
        acc = acc.mul(&u);
        acc = acc.add(&Num::Jet(Jet::constant(j.dirs(), coefs[m].clone())));
    }
    match acc {
        Num::Jet(out) => out,
        other => Jet::constant(j.dirs(), other),
    }
}

/// A chart point (x, y) on the slit tangent bundle, y != 0.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EvalPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<EvalPoint> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "x has length {}, y has length {}",
                x.len(),
                y.len()
            )));
        }
        if y.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain("y = 0 is outside the slit tangent bundle".into()));
        }
        Ok(EvalPoint { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn norm(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// A smooth scalar function on the chart domain, evaluable on jet arguments.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num>;

    fn eval(&self, p: &EvalPoint) -> Result<f64> {
        let x: Vec<Num> = p.x.iter().map(|v| Num::Scalar(*v)).collect();
        let y: Vec<Num> = p.y.iter().map(|v| Num::Scalar(*v)).collect();
        Ok(self.eval_num(&x, &y)?.value())
    }
}

impl<T: ScalarField + ?Sized> ScalarField for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
        (**self).eval_num(x, y)
    }
}

/// Chart coordinate axes, `X(i)` for base and `Y(i)` for fiber directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X(usize),
    Y(usize),
}

/// A perturbation direction: a coordinate axis or an arbitrary 2n-vector
/// (first n components along x, last n along y).
#[derive(Clone, Debug)]
pub enum Direction {
    Axis(Var),
    Vector(Vec<f64>),
}

impl Direction {
    fn seed(&self, var: Var, n: usize) -> f64 {
        match self {
            Direction::Axis(a) => {
                if *a == var {
                    1.0
                } else {
                    0.0
                }
            }
            Direction::Vector(v) => match var {
                Var::X(i) => v[i],
                Var::Y(i) => v[n + i],
            },
        }
    }
}

/// Stack one jet level with the given first-order directions on top of the
/// current arguments, evaluate `f`, and hand back one jet per output whose
/// coefficients live at the caller's level.
///
/// Unseeded plain-scalar arguments are passed through unwrapped: a scalar
/// broadcasts safely at any jet level, and skipping the constant-jet wrapper
/// keeps fields that ignore some variables (metric coefficients in x under a
/// fiber lift, say) evaluating in plain arithmetic. Unseeded jet arguments
/// must still be wrapped — the arithmetic distinguishes nesting levels only
/// by position, so a bare outer-level jet would be misread as current-level
/// data. For the same reason `f` must build its outputs from its arguments,
/// never return captured jet values from an enclosing level.
pub fn lift<F>(f: F, x: &[Num], y: &[Num], dirs: &[Direction]) -> Result<Vec<Jet>>
where
    F: FnOnce(&[Num], &[Num]) -> Result<Vec<Num>>,
{
    let k = dirs.len();
    if k > MAX_DIRS {
        return Err(Error::Arity {
            requested: k,
            max: MAX_DIRS,
        });
    }
    let n = x.len();
    let make = |var: Var, base: &Num| -> Num {
        let seeds: Vec<(usize, f64)> = dirs
            .iter()
            .enumerate()
            .filter_map(|(d, dir)| {
                let s = dir.seed(var, n);
                (s != 0.0).then_some((d, s))
            })
            .collect();
        if seeds.is_empty() && !matches!(base, Num::Jet(_)) {
            // Scalars and Taylor leaves broadcast at any jet level; only an
            // unseeded outer-level jet needs the constant wrapper.
            return base.clone();
        }
        let mut j = Jet::constant(k, base.clone());
        for (d, s) in seeds {
            j.set_coeff(1 << d, Num::Scalar(s));
        }
        Num::Jet(j)
    };
    let lx: Vec<Num> = x.iter().enumerate().map(|(i, v)| make(Var::X(i), v)).collect();
    let ly: Vec<Num> = y.iter().enumerate().map(|(i, v)| make(Var::Y(i), v)).collect();
    let out = f(&lx, &ly)?;
    Ok(out
        .into_iter()
        .map(|v| match v {
            Num::Jet(j) if j.dirs() == k => j,
            other => Jet::constant(k, other),
        })
        .collect())
}

/// Mixed directional derivative of `f` at `p` along up to [`MAX_DIRS`]
/// 2n-dimensional directions. Order of `dirs` is irrelevant.
pub fn directional_derivative(
    f: &dyn ScalarField,
    p: &EvalPoint,
    dirs: &[Vec<f64>],
) -> Result<f64> {
    if dirs.is_empty() || dirs.len() > MAX_DIRS {
        return Err(Error::Arity {
            requested: dirs.len(),
            max: MAX_DIRS,
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
    let x: Vec<Num> = p.x.iter().map(|v| Num::Scalar(*v)).collect();
    let y: Vec<Num> = p.y.iter().map(|v| Num::Scalar(*v)).collect();
    let ds: Vec<Direction> = dirs.iter().map(|d| Direction::Vector(d.clone())).collect();
    let jets = lift(|lx, ly| Ok(vec![f.eval_num(lx, ly)?]), &x, &y, &ds)?;
    let full = (1usize << dirs.len()) - 1;
    Ok(jets[0].coeff(full).value())
}

/// `(sum_i y^i df/dy^i) / f` at `p`; equals r when f is positively
/// homogeneous of degree r in y (Euler's theorem).
pub fn euler_degree(f: &dyn ScalarField, p: &EvalPoint) -> Result<f64> {
    let fv = f.eval(p)?;
    if fv == 0.0 {
        return Err(Error::Domain(
            "euler_degree undefined where f vanishes; pick another sample".into(),
        ));
    }
    let n = p.dim();
    let mut dir = vec![0.0; 2 * n];
    dir[n..].copy_from_slice(&p.y);
    let radial = directional_derivative(f, p, &[dir])?;
    Ok(radial / fv)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Poly(Box<dyn Fn(&[Num], &[Num]) -> Result<Num> + Send + Sync>, usize);
    impl ScalarField for Poly {
        fn dim(&self) -> usize {
            self.1
        }
        fn eval_num(&self, x: &[Num], y: &[Num]) -> Result<Num> {
            (self.0)(x, y)
        }
    }

    fn pt(x: [f64; 3], y: [f64; 3]) -> EvalPoint {
        EvalPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn axis(n: usize, v: Var) -> Vec<f64> {
        let mut d = vec![0.0; 2 * n];
        match v {
            Var::X(i) => d[i] = 1.0,
            Var::Y(i) => d[n + i] = 1.0,
        }
        d
    }

    #[test]
    fn bilinear_form() {
        let f = Poly(Box::new(|_x, y| Ok(y[0].mul(&y[1]))), 3);
        let p = pt([0.3, -0.1, 0.2], [1.0, 2.0, 3.0]);
        let d = directional_derivative(&f, &p, &[axis(3, Var::Y(0)), axis(3, Var::Y(1))]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn cubic_monomial() {
        let f = Poly(Box::new(|x, _y| x[0].powi(3)), 3);
        let p = pt([0.7, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let e = axis(3, Var::X(0));
        let d = directional_derivative(&f, &p, &[e.clone(), e.clone(), e]).unwrap();
        assert!((d - 6.0).abs() < 1e-13);
    }

    #[test]
    fn degree_six_polynomial_exact() {
        // f = x1^2 * y1^4, d^6 f / dx1^2 dy1^4 = 2 * 24 = 48
        let f = Poly(Box::new(|x, y| Ok(x[0].powi(2)?.mul(&y[0].powi(4)?))), 3);
        let p = pt([1.3, 0.0, 0.0], [0.7, 0.0, 0.0]);
        let ex = axis(3, Var::X(0));
        let ey = axis(3, Var::Y(0));
        let dirs = vec![ex.clone(), ex, ey.clone(), ey.clone(), ey.clone(), ey];
        let d = directional_derivative(&f, &p, &dirs).unwrap();
        assert!((d - 48.0).abs() / 48.0 < 1e-13);
    }

    #[test]
    fn arity_rejected() {
        let f = Poly(Box::new(|x, _| Ok(x[0].clone())), 3);
        let p = pt([0.0; 3], [1.0, 0.0, 0.0]);
        let dirs = vec![axis(3, Var::X(0)); 7];
        assert!(matches!(
            directional_derivative(&f, &p, &dirs),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn division_by_zero_order_zero_rejected() {
        let f = Poly(Box::new(|x, y| y[0].div(&x[0])), 3);
        let p = pt([0.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        assert!(matches!(
            directional_derivative(&f, &p, &[axis(3, Var::Y(0))]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sqrt_of_negative_rejected() {
        let f = Poly(Box::new(|x, _| x[0].sqrt()), 3);
        let p = pt([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert!(matches!(f.eval(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn transcendental_tower() {
        // f = exp(sin(x1)) at x1 = 0.4, third derivative checked against the
        // closed form f''' = e^{sin t} cos t (cos^2 t - 3 sin t - 1).
        let f = Poly(Box::new(|x, _| x[0].sin()?.exp()), 1);
        let p = EvalPoint::new(vec![0.4], vec![1.0]).unwrap();
        let e = vec![1.0, 0.0];
        let d = directional_derivative(&f, &p, &[e.clone(), e.clone(), e]).unwrap();
        let t: f64 = 0.4;
        let expect = t.sin().exp() * t.cos() * (t.cos().powi(2) - 3.0 * t.sin() - 1.0);
        assert!((d - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn atan_tower() {
        // fourth derivative of atan at t: 24 t (1 - t^2) / (1 + t^2)^4
        let f = Poly(Box::new(|x, _| x[0].atan()), 1);
        let p = EvalPoint::new(vec![0.6], vec![1.0]).unwrap();
        let e = vec![1.0, 0.0];
        let d = directional_derivative(&f, &p, &[e.clone(), e.clone(), e.clone(), e]).unwrap();
        let t: f64 = 0.6;
        let expect = 24.0 * t * (1.0 - t * t) / (1.0 + t * t).powi(4);
        assert!((d - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn log_tower() {
        let f = Poly(Box::new(|x, _| x[0].ln()), 1);
        let p = EvalPoint::new(vec![1.7], vec![1.0]).unwrap();
        let e = vec![1.0, 0.0];
        let d = directional_derivative(&f, &p, &[e.clone(), e.clone(), e]).unwrap();
        let expect = 2.0 / 1.7f64.powi(3);
        assert!((d - expect).abs() < 1e-12);
    }

    #[test]
    fn euler_degree_of_linear_factor() {
        // 0.05 (y1 + x1 y2) is h(1) in y
        let f = Poly(
            Box::new(|x, y| Ok(y[0].add(&x[0].mul(&y[1])).scale(0.05))),
            3,
        );
        let p = pt([0.1, 0.2, 0.3], [1.0, 0.5, -0.25]);
        let d = euler_degree(&f, &p).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_degree_rejects_zero_value() {
        let f = Poly(Box::new(|_, y| Ok(y[0].clone())), 3);
        let p = pt([0.0; 3], [0.0, 1.0, 0.0]);
        assert!(matches!(euler_degree(&f, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn nested_lift_matches_flat_derivative() {
        // d^2/dy1 dy2 of y1^2 y2 computed two ways: one 2-direction jet, and
        // a lift of a lift.
        let eval = |x: &[Num], y: &[Num]| -> Result<Num> {
            let _ = x;
            Ok(y[0].powi(2)?.mul(&y[1]))
        };
        let x: Vec<Num> = vec![Num::Scalar(0.0); 3];
        let y: Vec<Num> = vec![Num::Scalar(1.5), Num::Scalar(2.0), Num::Scalar(0.0)];

        let flat = lift(
            |lx, ly| Ok(vec![eval(lx, ly)?]),
            &x,
            &y,
            &[
                Direction::Axis(Var::Y(0)),
                Direction::Axis(Var::Y(1)),
            ],
        )
        .unwrap()[0]
            .coeff(3)
            .value();

        let nested = lift(
            |mx, my| {
                let inner = lift(
                    |lx, ly| Ok(vec![eval(lx, ly)?]),
                    mx,
                    my,
                    &[Direction::Axis(Var::Y(1))],
                )?;
                Ok(vec![inner[0].coeff(1).clone()])
            },
            &x,
            &y,
            &[Direction::Axis(Var::Y(0))],
        )
        .unwrap()[0]
            .coeff(1)
            .value();

        assert!((flat - 2.0 * 1.5).abs() < 1e-14);
        assert!((flat - nested).abs() < 1e-14);
    }
}
