//! Dense complex linear algebra helpers: matrix exponentials, Hermitian
//! spectral functions, LU solves and small norms.

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{cabs, cexp, cone, creal, cscale, czero, CMatrix, Cx, Real};

/// Eigenvector condition number above which the exponential falls back to
/// scaling-and-squaring with a Padé approximant.
pub const EIGEN_CONDITION_LIMIT: f64 = 1.0e6;

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::<T>::identity(n, n)
}

pub fn zeros<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::<T>::zeros(n, n)
}

/// Multiplies every entry by a real scalar.
pub fn scale<T: Real>(m: &CMatrix<T>, s: T) -> CMatrix<T> {
    m.map(|z| cscale(z, s))
}

pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(cabs(*z)))
}

pub fn max_abs_diff<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc.max(cabs(*x - *y)))
}

pub fn frobenius<T: Real>(m: &CMatrix<T>) -> T {
    m.iter()
        .fold(T::zero(), |acc, z| acc + z.re * z.re + z.im * z.im)
        .sqrt()
}

/// `max |M - M^†|`.
pub fn hermitian_deviation<T: Real>(m: &CMatrix<T>) -> T {
    max_abs_diff(m, &m.adjoint())
}

pub fn commutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b - b * a
}

pub fn is_finite<T: Real>(m: &CMatrix<T>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `Tr(A B)` without forming the product.
pub fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Cx<T> {
    let n = a.nrows();
    let mut acc = czero();
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> Cx<T> {
    m.diagonal().iter().fold(czero(), |acc, z| acc + *z)
}

pub fn determinant<T: Real>(m: &CMatrix<T>) -> Cx<T> {
    m.clone().lu().determinant()
}

/// Solves `A X = B` by LU factorization.
pub fn solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>, what: &'static str) -> Result<CMatrix<T>> {
    let x = a.clone().lu().solve(b).ok_or(Error::Singular(what))?;
    if !is_finite(&x) {
        return Err(Error::Singular(what));
    }
    Ok(x)
}

pub fn inverse<T: Real>(a: &CMatrix<T>, what: &'static str) -> Result<CMatrix<T>> {
    solve(a, &identity(a.nrows()), what)
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues and
/// unitary eigenvectors (columns).
pub fn hermitian_eigen<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let herm = (m + m.adjoint()).map(|z| cscale(z, T::of(0.5)));
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::<T>::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn min_hermitian_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    hermitian_eigen(m).0[0]
}

/// Largest eigenvalue modulus of a Hermitian matrix (its operator norm).
pub fn hermitian_norm<T: Real>(m: &CMatrix<T>) -> T {
    hermitian_eigen(m)
        .0
        .into_iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_function<T: Real>(m: &CMatrix<T>, f: impl Fn(T) -> Cx<T>) -> CMatrix<T> {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors.clone();
    for (c, v) in values.iter().enumerate() {
        let fv = f(*v);
        scaled.column_mut(c).iter_mut().for_each(|z| *z *= fv);
    }
    scaled * vectors.adjoint()
}

/// Strategy used by an [`ExpGenerator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpMethod {
    /// `V diag(e^{s λ}) V^{-1}` from a well-conditioned eigenbasis.
    Eigen,
    /// Scaling and squaring with a degree-13 Padé approximant.
    Pade,
}

#[derive(Debug, Clone)]
struct Eigenbasis<T: Real> {
    vectors: CMatrix<T>,
    inverse: CMatrix<T>,
    values: Vec<Cx<T>>,
}

/// Evaluates `exp(s G)` for a fixed generator `G` and many scalar `s`.
///
/// The generator is diagonalised once through its complex Schur form. If the
/// eigenvector matrix is too ill-conditioned, every evaluation falls back to
/// Padé scaling and squaring.
#[derive(Debug, Clone)]
pub struct ExpGenerator<T: Real> {
    generator: CMatrix<T>,
    basis: Option<Eigenbasis<T>>,
    condition: T,
}

impl<T: Real> ExpGenerator<T> {
    pub fn new(generator: CMatrix<T>) -> Self {
        let (basis, condition) = match eigenbasis(&generator) {
            Some((b, kappa)) if kappa < T::of(EIGEN_CONDITION_LIMIT) => (Some(b), kappa),
            Some((_, kappa)) => (None, kappa),
            None => (None, T::of(f64::INFINITY)),
        };
        Self {
            generator,
            basis,
            condition,
        }
    }

    pub fn method(&self) -> ExpMethod {
        if self.basis.is_some() {
            ExpMethod::Eigen
        } else {
            ExpMethod::Pade
        }
    }

    /// Frobenius-norm estimate of the eigenvector condition number.
    pub fn condition(&self) -> T {
        self.condition
    }

    pub fn generator(&self) -> &CMatrix<T> {
        &self.generator
    }

    /// `exp(s G)`.
    pub fn at(&self, s: T) -> Result<CMatrix<T>> {
        let out = match &self.basis {
            Some(b) => {
                let mut scaled = b.vectors.clone();
                for (c, lambda) in b.values.iter().enumerate() {
                    let f = cexp(cscale(*lambda, s));
                    scaled.column_mut(c).iter_mut().for_each(|z| *z *= f);
                }
                scaled * &b.inverse
            }
            None => scale(&self.generator, s).exp(),
        };
        if !is_finite(&out) {
            return Err(Error::NonFinite("matrix exponential"));
        }
        Ok(out)
    }
}

/// `exp(M)` with the eigen/Padé strategy of [`ExpGenerator`].
pub fn expm<T: Real>(m: &CMatrix<T>) -> Result<CMatrix<T>> {
    ExpGenerator::new(m.clone()).at(T::one())
}

fn eigenbasis<T: Real>(m: &CMatrix<T>) -> Option<(Eigenbasis<T>, T)> {
    let n = m.nrows();
    if n == 0 {
        return Some((
            Eigenbasis {
                vectors: zeros(0),
                inverse: zeros(0),
                values: Vec::new(),
            },
            T::one(),
        ));
    }
    let schur = Schur::try_new(m.clone(), T::eps(), 100 * n.max(10))?;
    let (q, r) = schur.unpack();
    let values: Vec<Cx<T>> = (0..n).map(|i| r[(i, i)]).collect();
    let scale_r = frobenius(&r).max(T::min_value().unwrap_or(T::eps()));

    let mut off = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            off += cabs(r[(i, j)]).powi(2);
        }
    }
    if off.sqrt() <= T::of(1.0e3) * T::eps() * scale_r {
        // Normal generator: the Schur vectors are already an eigenbasis.
        let inverse = q.adjoint();
        return Some((
            Eigenbasis {
                vectors: q,
                inverse,
                values,
            },
            T::one(),
        ));
    }

    // Eigenvectors of the triangular factor by back substitution.
    let smin = T::eps() * scale_r;
    let mut y = zeros::<T>(n);
    for k in 0..n {
        y[(k, k)] = cone();
        for i in (0..k).rev() {
            let mut s: Cx<T> = czero();
            for j in (i + 1)..=k {
                s += r[(i, j)] * y[(j, k)];
            }
            let mut d: Cx<T> = r[(i, i)] - r[(k, k)];
            if cabs(d) < smin {
                d = creal(smin);
            }
            y[(i, k)] = -s / d;
        }
        let norm = y.column(k).iter().fold(T::zero(), |a, z| a + cabs(*z).powi(2)).sqrt();
        y.column_mut(k).iter_mut().for_each(|z| *z = cscale(*z, T::one() / norm));
    }
    let vectors = q * y;
    let inverse = vectors.clone().lu().try_inverse()?;
    let kappa = frobenius(&vectors) * frobenius(&inverse);
    if !kappa.is_finite() || !is_finite(&inverse) {
        return None;
    }
    Some((
        Eigenbasis {
            vectors,
            inverse,
            values,
        },
        kappa,
    ))
}

/// Builds a complex matrix from a real-valued closure.
pub fn from_real_fn<T: Real>(n: usize, f: impl Fn(usize, usize) -> T) -> CMatrix<T> {
    DMatrix::from_fn(n, n, |r, c| creal(f(r, c)))
}

/// Block-diagonal direct sum of two square matrices.
pub fn direct_sum<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = zeros::<T>(na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;

    fn sample(n: usize, seed: u64) -> CMatrix<f64> {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        DMatrix::from_fn(n, n, |_, _| cx(next(), next()))
    }

    #[test]
    fn eigen_and_pade_agree_on_generic_matrix() {
        let m = sample(5, 3);
        let g = ExpGenerator::new(m.clone());
        assert_eq!(g.method(), ExpMethod::Eigen);
        let e = g.at(0.7).unwrap();
        let p = scale(&m, 0.7).exp();
        assert!(max_abs_diff(&e, &p) < 1e-12);
    }

    #[test]
    fn defective_generator_falls_back_to_pade() {
        // Jordan block: eigenvectors are parallel.
        let mut m = zeros::<f64>(3);
        m[(0, 1)] = cone();
        m[(1, 2)] = cone();
        let g = ExpGenerator::new(m.clone());
        assert_eq!(g.method(), ExpMethod::Pade);
        let e = g.at(2.0).unwrap();
        // exp of nilpotent Jordan block: 1 + 2N + 2N^2
        assert!((e[(0, 2)] - cx(2.0, 0.0)).norm() < 1e-12);
        assert!((e[(0, 1)] - cx(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn hermitian_function_reproduces_exponential() {
        let a = sample(4, 9);
        let h = &a + a.adjoint();
        let f = hermitian_function(&h, |v| cexp(cx(0.0, -v)));
        let p = (h.map(|z| z * cx(0.0, -1.0))).exp();
        assert!(max_abs_diff(&f, &p) < 1e-12);
    }

    #[test]
    fn normal_generator_uses_unitary_basis() {
        let a = sample(4, 1);
        let h = (&a + a.adjoint()).map(|z| z * cx(0.0, 1.0));
        let g = ExpGenerator::new(h);
        assert_eq!(g.method(), ExpMethod::Eigen);
        assert!((g.condition() - 1.0).abs() < 1e-12);
    }
}
