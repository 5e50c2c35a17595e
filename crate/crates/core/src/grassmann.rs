//! Finite exterior algebra over at most [`GRASSMANN_GENERATOR_CAP`] generators.
//!
//! A basis monomial is a bitmask; its coefficient multiplies the product of
//! the selected generators in ascending index order.

use crate::error::{Error, Result};
use crate::scalar::{cabs, cexp, cln, cone, creal, czero, Cx, Real};

pub const GRASSMANN_GENERATOR_CAP: usize = 12;

/// Sign of `g_a g_b` relative to the ascending product of `a | b`
/// (`a` and `b` disjoint): one factor of `-1` per pair `i ∈ a, j ∈ b, i > j`.
#[inline]
fn merge_negative(a: usize, b: usize) -> bool {
    let mut rest = b;
    let mut count = 0u32;
    while rest != 0 {
        let j = rest.trailing_zeros();
        count += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    count % 2 == 1
}

/// Dense polynomial in `n` anticommuting generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPolynomial<T: Real> {
    n_generators: usize,
    coeffs: Vec<Cx<T>>,
}

impl<T: Real> GrassmannPolynomial<T> {
    pub fn zero(n_generators: usize) -> Result<Self> {
        if n_generators > GRASSMANN_GENERATOR_CAP {
            return Err(Error::CapExceeded {
                what: "Grassmann generators",
                size: n_generators,
                cap: GRASSMANN_GENERATOR_CAP,
            });
        }
        Ok(Self {
            n_generators,
            coeffs: vec![czero(); 1 << n_generators],
        })
    }

    pub fn scalar(n_generators: usize, value: Cx<T>) -> Result<Self> {
        let mut p = Self::zero(n_generators)?;
        p.coeffs[0] = value;
        Ok(p)
    }

    pub fn one(n_generators: usize) -> Result<Self> {
        Self::scalar(n_generators, cone())
    }

    pub fn generator(n_generators: usize, index: usize) -> Result<Self> {
        if index >= n_generators {
            return Err(Error::Invalid(format!("generator {index} out of {n_generators}")));
        }
        let mut p = Self::zero(n_generators)?;
        p.coeffs[1 << index] = cone();
        Ok(p)
    }

    /// Builds a polynomial from a coefficient table of length `2^n`.
    pub fn from_coeffs(n_generators: usize, coeffs: Vec<Cx<T>>) -> Result<Self> {
        let p = Self::zero(n_generators)?;
        if coeffs.len() != p.coeffs.len() {
            return Err(Error::Shape {
                what: "Grassmann coefficients",
                expected: p.coeffs.len().to_string(),
                got: coeffs.len().to_string(),
            });
        }
        Ok(Self { n_generators, coeffs })
    }

    pub fn n_generators(&self) -> usize {
        self.n_generators
    }

    pub fn coeffs(&self) -> &[Cx<T>] {
        &self.coeffs
    }

    pub fn coeff(&self, mask: usize) -> Cx<T> {
        self.coeffs[mask]
    }

    pub fn set_coeff(&mut self, mask: usize, value: Cx<T>) {
        self.coeffs[mask] = value;
    }

    /// Constant term.
    pub fn body(&self) -> Cx<T> {
        self.coeffs[0]
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.n_generators != other.n_generators {
            return Err(Error::GeneratorMismatch(self.n_generators, other.n_generators));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        out.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a += *b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        out.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a -= *b);
        Ok(out)
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|a| *a *= s);
        out
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let full = (1usize << self.n_generators) - 1;
        let mut out = Self::zero(self.n_generators)?;
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == czero() {
                continue;
            }
            // Enumerate submasks of the complement of `a`.
            let free = full & !a;
            let mut b = free;
            loop {
                let cb = other.coeffs[b];
                if cb != czero() {
                    let term = ca * cb;
                    if merge_negative(a, b) {
                        out.coeffs[a | b] -= term;
                    } else {
                        out.coeffs[a | b] += term;
                    }
                }
                if b == 0 {
                    break;
                }
                b = (b - 1) & free;
            }
        }
        Ok(out)
    }

    /// `log(b(1 + W)) = log b + Σ_{k≥1} (-1)^{k+1} W^k / k`.
    pub fn log(&self) -> Result<Self> {
        let b = self.body();
        if cabs(b) == T::zero() {
            return Err(Error::ZeroBody);
        }
        let mut w = self.scale(cone::<T>() / b);
        w.coeffs[0] = czero();
        let mut out = Self::scalar(self.n_generators, cln(b))?;
        let mut power = w.clone();
        for k in 1..=self.n_generators.max(1) {
            let c = T::one() / T::of_usize(k);
            let c = if k % 2 == 1 { c } else { -c };
            out = out.add(&power.scale(creal(c)))?;
            power = power.multiply(&w)?;
            if power.coeffs.iter().all(|z| *z == czero()) {
                break;
            }
        }
        Ok(out)
    }

    /// `exp(b + W) = e^b Σ_k W^k / k!`.
    pub fn exp(&self) -> Result<Self> {
        let b = self.body();
        let mut w = self.clone();
        w.coeffs[0] = czero();
        let mut out = Self::one(self.n_generators)?;
        let mut power = Self::one(self.n_generators)?;
        for k in 1..=self.n_generators.max(1) {
            power = power.multiply(&w)?.scale(creal(T::one() / T::of_usize(k)));
            if power.coeffs.iter().all(|z| *z == czero()) {
                break;
            }
            out = out.add(&power)?;
        }
        Ok(out.scale(cexp(b)))
    }

    /// Left derivative `∂/∂g`.
    pub fn derivative(&self, g: usize) -> Result<Self> {
        if g >= self.n_generators {
            return Err(Error::Invalid(format!("generator {g} out of {}", self.n_generators)));
        }
        let bit = 1usize << g;
        let mut out = Self::zero(self.n_generators)?;
        for (mask, &c) in self.coeffs.iter().enumerate() {
            if mask & bit == 0 || c == czero() {
                continue;
            }
            let negative = (mask & (bit - 1)).count_ones() % 2 == 1;
            out.coeffs[mask ^ bit] += if negative { -c } else { c };
        }
        Ok(out)
    }

    /// Applies left derivatives in sequence (first element acts first) and
    /// projects to the body; only a single coefficient is touched.
    pub fn derivative_body(&self, sequence: &[usize]) -> Cx<T> {
        let mut mask = 0usize;
        for &g in sequence {
            let bit = 1usize << g;
            if mask & bit != 0 {
                return czero();
            }
            mask |= bit;
        }
        let mut current = mask;
        let mut negative = false;
        for &g in sequence {
            let bit = 1usize << g;
            if (current & (bit - 1)).count_ones() % 2 == 1 {
                negative = !negative;
            }
            current ^= bit;
        }
        let c = self.coeffs[mask];
        if negative {
            -c
        } else {
            c
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(T::zero(), |a, (u, v)| a.max(cabs(*u - *v))))
    }

    /// Largest coefficient magnitude among monomials of odd degree.
    pub fn max_odd(&self) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(m, _)| m.count_ones() % 2 == 1)
            .fold(T::zero(), |a, (_, v)| a.max(cabs(*v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;
    use proptest::prelude::*;

    type P = GrassmannPolynomial<f64>;

    fn g(n: usize, i: usize) -> P {
        P::generator(n, i).unwrap()
    }

    fn one(n: usize) -> P {
        P::one(n).unwrap()
    }

    #[test]
    fn generators_anticommute_and_square_to_zero() {
        let (a, b) = (g(4, 1), g(4, 3));
        let ab = a.multiply(&b).unwrap();
        let ba = b.multiply(&a).unwrap();
        assert_eq!(ab.add(&ba).unwrap(), P::zero(4).unwrap());
        assert_eq!(a.multiply(&a).unwrap(), P::zero(4).unwrap());
        assert_eq!(ab.coeff(0b1010), cx(1.0, 0.0));
        assert_eq!(ba.coeff(0b1010), cx(-1.0, 0.0));
    }

    #[test]
    fn even_pair_is_nilpotent() {
        let pair = g(2, 0).multiply(&g(2, 1)).unwrap();
        assert_eq!(pair.multiply(&pair).unwrap(), P::zero(2).unwrap());
        let p = one(2).add(&pair.scale(cx(0.7, -0.2))).unwrap();
        let log = p.log().unwrap();
        assert!(log.max_abs_diff(&pair.scale(cx(0.7, -0.2))).unwrap() < 1e-15);
    }

    #[test]
    fn three_factor_product_by_hand() {
        // (1+g1)(1+g2)(1+g1) = 1 + 2g1 + g2 + g1g2 + g2g1 = 1 + 2g1 + g2.
        let n = 3;
        let f1 = one(n).add(&g(n, 1)).unwrap();
        let f2 = one(n).add(&g(n, 2)).unwrap();
        let prod = f1.multiply(&f2).unwrap().multiply(&f1).unwrap();
        let mut expected = P::zero(n).unwrap();
        expected.set_coeff(0, cx(1.0, 0.0));
        expected.set_coeff(0b010, cx(2.0, 0.0));
        expected.set_coeff(0b100, cx(1.0, 0.0));
        assert_eq!(prod, expected);
    }

    #[test]
    fn log_of_scalar_and_zero_body() {
        let p = P::scalar(4, cx(2.5, 0.0)).unwrap();
        assert!((p.log().unwrap().body() - cx(2.5f64.ln(), 0.0)).norm() < 1e-15);
        assert!(matches!(g(2, 0).log(), Err(Error::ZeroBody)));
        assert!(matches!(
            g(2, 0).multiply(&g(3, 0)),
            Err(Error::GeneratorMismatch(2, 3))
        ));
    }

    #[test]
    fn derivative_signs() {
        // ∂/∂g0 (g0 g2) = g2 and ∂/∂g2 (g0 g2) = -g0.
        let p = g(3, 0).multiply(&g(3, 2)).unwrap();
        assert_eq!(p.derivative(0).unwrap(), g(3, 2));
        assert_eq!(p.derivative(2).unwrap(), g(3, 0).scale(cx(-1.0, 0.0)));
        assert_eq!(p.derivative_body(&[2, 0]), cx(-1.0, 0.0));
        assert_eq!(p.derivative_body(&[0, 2]), cx(1.0, 0.0));
    }

    fn even_poly(n: usize) -> impl Strategy<Value = P> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_map(move |v| {
            let coeffs = v
                .into_iter()
                .enumerate()
                .map(|(m, (re, im))| {
                    if (m as u32).count_ones() % 2 == 0 && m != 0 {
                        cx(re, im)
                    } else {
                        cx(0.0, 0.0)
                    }
                })
                .collect();
            P::from_coeffs(n, coeffs).unwrap()
        })
    }

    fn any_poly(n: usize) -> impl Strategy<Value = P> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_map(move |v| {
            P::from_coeffs(n, v.into_iter().map(|(a, b)| cx(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn log_exp_round_trip(w in even_poly(6)) {
            let back = w.exp().unwrap().log().unwrap();
            prop_assert!(back.max_abs_diff(&w).unwrap() < 1e-10);
        }

        #[test]
        fn exp_log_round_trip(w in even_poly(6), b in 0.2f64..3.0) {
            let mut p = w.clone();
            p.set_coeff(0, cx(b, 0.3));
            let back = p.log().unwrap().exp().unwrap();
            prop_assert!(back.max_abs_diff(&p).unwrap() < 1e-10);
        }

        #[test]
        fn multiplication_is_associative(a in any_poly(5), b in any_poly(5), c in any_poly(5)) {
            let left = a.multiply(&b).unwrap().multiply(&c).unwrap();
            let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-12);
        }

        #[test]
        fn distinct_generators_anticommute(i in 0usize..8, j in 0usize..8) {
            let (a, b) = (g(8, i), g(8, j));
            let s = a.multiply(&b).unwrap().add(&b.multiply(&a).unwrap()).unwrap();
            prop_assert_eq!(s, P::zero(8).unwrap());
        }
    }
}
