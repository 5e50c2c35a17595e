//! Gaussian expectations as covariance determinants, the free two-point
//! function and first-order interaction corrections.

use serde::Serialize;

use crate::covariance::{Branch, ContinuumCovariance, Covariance, KeldyshPoint, TimeOrder};
use crate::error::{Error, Result};
use crate::fock::MomentTable;
use crate::linalg;
use crate::model::{permutation_sign, Interaction, OneParticleModel, Vertex};
use crate::quadrature::{simpson_estimate, DEFAULT_PANELS};
use crate::scalar::{ci, cscale, czero, CMatrix, Cx, Real};
use crate::tensor::{increasing_tuples, SiteTensor};

/// Insertions of `ψ(X_1)ψ̄(Y_1)ψ(X_2)ψ̄(Y_2)…`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WickQuery<T: Real> {
    pub psi: Vec<KeldyshPoint<T>>,
    pub psibar: Vec<KeldyshPoint<T>>,
}

impl<T: Real> WickQuery<T> {
    pub fn new(psi: Vec<KeldyshPoint<T>>, psibar: Vec<KeldyshPoint<T>>) -> Self {
        Self { psi, psibar }
    }

    /// Unequal insertion counts integrate to zero.
    pub fn is_balanced(&self) -> bool {
        self.psi.len() == self.psibar.len()
    }
}

/// `∫ dμ_C ψ(X_1)ψ̄(Y_1)…ψ(X_n)ψ̄(Y_n) = det[C(X_i, Y_j)]`.
///
/// Unbalanced queries return exactly zero; see [`WickQuery::is_balanced`].
pub fn wick_moment<T: Real>(cov: &dyn Covariance<T>, q: &WickQuery<T>, order: TimeOrder) -> Result<Cx<T>> {
    if !q.is_balanced() {
        return Ok(czero());
    }
    let n = q.psi.len();
    if n == 0 {
        return Ok(Cx::new(T::one(), T::zero()));
    }
    let mut m = linalg::zeros::<T>(n);
    for (i, x) in q.psi.iter().enumerate() {
        for (j, y) in q.psibar.iter().enumerate() {
            m[(i, j)] = cov.entry(x, y, order)?;
        }
    }
    Ok(linalg::determinant(&m))
}

/// A field in an ordered Grassmann monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Psi(usize),
    PsiBar(usize),
}

/// Sign taking an ordered product of fields to the pairing order
/// `ψ_1 ψ̄_1 ψ_2 ψ̄_2 …` (fields of each kind keep their relative order).
pub fn pairing_sign(fields: &[Field]) -> Option<i32> {
    let (mut np, mut nb) = (0usize, 0usize);
    let mut slots = Vec::with_capacity(fields.len());
    for f in fields {
        match f {
            Field::Psi(_) => {
                slots.push(2 * np);
                np += 1;
            }
            Field::PsiBar(_) => {
                slots.push(2 * nb + 1);
                nb += 1;
            }
        }
    }
    (np == nb).then(|| permutation_sign(&slots))
}

/// Gaussian expectation of an ordered field product with kernel
/// `kernel(i, j) = C(X_i, Y_j)` where `i`, `j` are the field labels.
pub fn ordered_expectation<T: Real>(fields: &[Field], kernel: impl Fn(usize, usize) -> Cx<T>) -> Cx<T> {
    let Some(sign) = pairing_sign(fields) else {
        return czero();
    };
    let psi: Vec<usize> = fields
        .iter()
        .filter_map(|f| if let Field::Psi(i) = f { Some(*i) } else { None })
        .collect();
    let bar: Vec<usize> = fields
        .iter()
        .filter_map(|f| if let Field::PsiBar(j) = f { Some(*j) } else { None })
        .collect();
    let n = psi.len();
    if n == 0 {
        return Cx::new(T::from_i32(sign).expect("sign"), T::zero());
    }
    let m = CMatrix::from_fn(n, n, |r, c| kernel(psi[r], bar[c]));
    let det = linalg::determinant(&m);
    if sign > 0 {
        det
    } else {
        -det
    }
}

/// Fields of `a*(x_1)…a*(x_m) a(y_m̄)…a(y_1)` at the final time:
/// `ψ̄(-,T,x_1)…ψ̄(-,T,x_m) ψ(+,T,y_m̄)…ψ(+,T,y_1)`.
fn moment_points<T: Real>(total: T, x: &[usize], y: &[usize]) -> (Vec<Field>, Vec<KeldyshPoint<T>>) {
    let mut fields = Vec::new();
    let mut points = Vec::new();
    for &xi in x {
        fields.push(Field::PsiBar(points.len()));
        points.push(KeldyshPoint::new(Branch::Minus, total, xi));
    }
    for &yi in y.iter().rev() {
        fields.push(Field::Psi(points.len()));
        points.push(KeldyshPoint::new(Branch::Plus, total, yi));
    }
    (fields, points)
}

/// Free moment `γ_{m,m̄}(x;y)` from covariance determinants.
pub fn wick_free_moment<T: Real>(cov: &dyn Covariance<T>, x: &[usize], y: &[usize]) -> Result<Cx<T>> {
    if x.len() != y.len() {
        return Ok(czero());
    }
    let total = cov.total_time();
    let plus = cov.block(Branch::Plus, total, Branch::Minus, total, TimeOrder::Inclusive)?;
    let (fields, points) = moment_points(total, x, y);
    Ok(ordered_expectation(&fields, |i, j| plus[(points[i].site, points[j].site)]))
}

/// Free moment tensors for `0 < m + m̄ ≤ cap`.
pub fn wick_free_moments<T: Real>(cov: &dyn Covariance<T>, cap: usize) -> Result<MomentTable<T>> {
    let n = cov.n_sites();
    let mut table = MomentTable::new();
    for total in 1..=cap {
        for m in 0..=total {
            let mbar = total - m;
            if m > n || mbar > n {
                continue;
            }
            let mut err = None;
            let tensor = SiteTensor::antisymmetric_from_sorted(n, m, mbar, |x, y| {
                wick_free_moment(cov, x, y).unwrap_or_else(|e| {
                    err = Some(e);
                    czero()
                })
            });
            if let Some(e) = err {
                return Err(e);
            }
            table.insert((m, mbar), tensor);
        }
    }
    Ok(table)
}

/// Free two-point operator `P = E_-(-T) f_+ E_-(T)` (ε-scaled kernel);
/// `γ_{1,1}(x, y) = ε⁻¹ P_{yx}`.
pub fn free_two_point<T: Real>(model: &OneParticleModel<T>, beta: T, total: T) -> Result<CMatrix<T>> {
    let cov = ContinuumCovariance::new(model, beta, total)?;
    Ok(cov.exp_minus(-total)? * cov.f_plus() * cov.exp_minus(total)?)
}

/// `γ_{1,1}` as an `|X|×|X|` matrix indexed `(x, y)`.
pub fn free_gamma11<T: Real>(model: &OneParticleModel<T>, beta: T, total: T) -> Result<CMatrix<T>> {
    let p = free_two_point(model, beta, total)?;
    Ok(linalg::scale(&p.transpose(), T::one() / model.epsilon()))
}

/// Branch weight of the interaction term in `exp(-𝒱)`:
/// `𝒱 = i ∫ dt (V(ψ̄⁺,ψ⁺) - V†(ψ̄⁻,ψ⁻))`, so `+` carries `-i` with `V`
/// and `-` carries `+i` with `V†`.
fn branch_weight<T: Real>(branch: Branch) -> Cx<T> {
    match branch {
        Branch::Plus => -ci::<T>(),
        Branch::Minus => ci::<T>(),
    }
}

/// Equal-time order of contractions inside one vertex: the conjugate field
/// is taken one step later on `+` and one step earlier on `-`.
fn vertex_order(branch: Branch) -> TimeOrder {
    match branch {
        Branch::Plus => TimeOrder::Earlier,
        Branch::Minus => TimeOrder::Later,
    }
}

/// First-order coefficient `dγ^T_{m,m̄}/dλ` at `λ = 0`.
#[derive(Debug, Clone)]
pub struct FirstOrder<T: Real> {
    pub tensor: SiteTensor<T>,
    /// Step-halving estimate of the quadrature error (max over entries).
    pub quadrature_error: T,
    pub panels: usize,
}

/// Connected first-order diagrams with one vertex at internal time `t`,
/// integrated over `[0, T]` on both branches.
pub fn first_order_correction<T: Real>(
    cov: &dyn Covariance<T>,
    interaction: &Interaction<T>,
    degree: (usize, usize),
    panels: usize,
) -> Result<FirstOrder<T>> {
    let (m, mbar) = degree;
    if !matches!(degree, (1, 1) | (2, 2)) {
        return Err(Error::Unsupported(format!("first-order degree ({m},{mbar})")));
    }
    interaction.validate()?;
    let plus_vertices = interaction.effective_vertices();
    if plus_vertices.iter().any(|v| v.m() + v.mbar() != 4) {
        return Err(Error::Unsupported("first-order corrections need quartic vertices".into()));
    }
    let minus_vertices: Vec<Vertex<T>> = plus_vertices.iter().map(Vertex::adjoint).collect();
    let n = cov.n_sites();
    let eps = cov.epsilon();
    let total = cov.total_time();
    let xs = increasing_tuples(n, m);
    let ys = increasing_tuples(n, mbar);
    let externals: Vec<(Vec<usize>, Vec<usize>)> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| (x.clone(), y.clone())))
        .collect();
    let len = externals.len();
    let panels = if panels < 2 { DEFAULT_PANELS } else { panels + panels % 2 };

    let integrand = |t: T| -> Result<Vec<Cx<T>>> {
        let mut out = vec![czero(); len];
        for branch in Branch::BOTH {
            let vertices = match branch {
                Branch::Plus => &plus_vertices,
                Branch::Minus => &minus_vertices,
            };
            // Blocks for (ψ at row point, ψ̄ at column point).
            let vv = cov.block(branch, t, branch, t, vertex_order(branch))?;
            let ve = cov.block(branch, t, Branch::Minus, total, TimeOrder::Earlier)?;
            let ev = cov.block(Branch::Plus, total, branch, t, TimeOrder::Later)?;
            let weight = branch_weight::<T>(branch);
            for vertex in vertices {
                let measure = eps.powi((vertex.m() + vertex.mbar()) as i32);
                for (vx, vy, v) in vertex.entries() {
                    let coeff = weight * cscale(v, measure);
                    for (k, (x, y)) in externals.iter().enumerate() {
                        let (mut fields, mut points) = moment_points(total, x, y);
                        let n_ext = points.len();
                        // Vertex fields ψ̄(t, y'_1)…ψ̄(t, y'_m̄) ψ(t, x'_1)…ψ(t, x'_m).
                        for &s in vy {
                            fields.push(Field::PsiBar(points.len()));
                            points.push(KeldyshPoint::new(branch, t, s));
                        }
                        for &s in vx {
                            fields.push(Field::Psi(points.len()));
                            points.push(KeldyshPoint::new(branch, t, s));
                        }
                        let value = ordered_expectation(&fields, |i, j| {
                            let (xi, yj) = (points[i].site, points[j].site);
                            match (i < n_ext, j < n_ext) {
                                (true, true) => czero(),
                                (true, false) => ev[(xi, yj)],
                                (false, true) => ve[(xi, yj)],
                                (false, false) => vv[(xi, yj)],
                            }
                        });
                        out[k] += coeff * value;
                    }
                }
            }
        }
        Ok(out)
    };

    let estimate = simpson_estimate(T::zero(), total, panels, len, integrand)?;
    let mut values = estimate.value.into_iter();
    let mut lookup = std::collections::BTreeMap::new();
    for ext in &externals {
        lookup.insert(ext.clone(), values.next().expect("one value per external tuple"));
    }
    let tensor = SiteTensor::antisymmetric_from_sorted(n, m, mbar, |x, y| {
        lookup[&(x.to_vec(), y.to_vec())]
    });
    Ok(FirstOrder {
        tensor,
        quadrature_error: estimate.error,
        panels,
    })
}
