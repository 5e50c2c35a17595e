//! Composite quadrature rules on uniform grids.

use crate::error::{Error, Result};
use crate::scalar::{cscale, czero, Cx, Real};

/// Default number of Simpson panels (each panel spans two subintervals).
pub const DEFAULT_PANELS: usize = 64;

/// Weights of a closed rule on `intervals` equal subintervals of width `h`:
/// composite Simpson for an even count, Simpson plus a trailing 3/8 block
/// for an odd count, trapezoid for a single interval.
pub fn uniform_weights<T: Real>(intervals: usize, h: T) -> Vec<T> {
    let mut w = vec![T::zero(); intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = h / T::of(2.0);
            w[1] = h / T::of(2.0);
        }
        _ => {
            let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
            let third = h / T::of(3.0);
            let mut i = 0;
            while i < simpson_end {
                w[i] += third;
                w[i + 1] += T::of(4.0) * third;
                w[i + 2] += third;
                i += 2;
            }
            if simpson_end < intervals {
                let eighth = T::of(3.0) * h / T::of(8.0);
                w[simpson_end] += eighth;
                w[simpson_end + 1] += T::of(3.0) * eighth;
                w[simpson_end + 2] += T::of(3.0) * eighth;
                w[simpson_end + 3] += eighth;
            }
        }
    }
    w
}

/// Composite Simpson integral of a vector-valued integrand.
pub fn simpson<T: Real>(
    a: T,
    b: T,
    panels: usize,
    len: usize,
    f: impl Fn(T) -> Result<Vec<Cx<T>>>,
) -> Result<Vec<Cx<T>>> {
    if panels == 0 {
        return Err(Error::Invalid("quadrature needs at least one panel".into()));
    }
    let intervals = 2 * panels;
    let h = (b - a) / T::of_usize(intervals);
    let weights = uniform_weights(intervals, h);
    let mut acc = vec![czero(); len];
    for (i, w) in weights.iter().enumerate() {
        let values = f(a + h * T::of_usize(i))?;
        if values.len() != len {
            return Err(Error::Shape {
                what: "integrand",
                expected: len.to_string(),
                got: values.len().to_string(),
            });
        }
        for (s, v) in acc.iter_mut().zip(values) {
            *s += cscale(v, *w);
        }
    }
    Ok(acc)
}

/// Simpson value with a step-halving error estimate `max|S_p - S_{p/2}| / 15`.
#[derive(Debug, Clone)]
pub struct Estimate<T: Real> {
    pub value: Vec<Cx<T>>,
    pub error: T,
}

pub fn simpson_estimate<T: Real>(
    a: T,
    b: T,
    panels: usize,
    len: usize,
    f: impl Fn(T) -> Result<Vec<Cx<T>>>,
) -> Result<Estimate<T>> {
    if panels < 2 || panels % 2 == 1 {
        return Err(Error::Invalid("error estimate needs an even panel count >= 2".into()));
    }
    let intervals = 2 * panels;
    let h = (b - a) / T::of_usize(intervals);
    let samples: Vec<Vec<Cx<T>>> = (0..=intervals)
        .map(|i| f(a + h * T::of_usize(i)))
        .collect::<Result<_>>()?;
    let fine_w = uniform_weights(intervals, h);
    let coarse_w = uniform_weights(panels, h * T::of(2.0));
    let mut fine = vec![czero(); len];
    let mut coarse = vec![czero(); len];
    for (i, s) in samples.iter().enumerate() {
        if s.len() != len {
            return Err(Error::Shape {
                what: "integrand",
                expected: len.to_string(),
                got: s.len().to_string(),
            });
        }
        for k in 0..len {
            fine[k] += cscale(s[k], fine_w[i]);
            if i % 2 == 0 {
                coarse[k] += cscale(s[k], coarse_w[i / 2]);
            }
        }
    }
    let error = fine
        .iter()
        .zip(&coarse)
        .fold(T::zero(), |e, (u, v)| e.max(crate::scalar::cabs(*u - *v)))
        / T::of(15.0);
    Ok(Estimate { value: fine, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;

    #[test]
    fn weights_integrate_cubics_exactly() {
        for intervals in [2usize, 3, 5, 8, 9] {
            let h = 1.0 / intervals as f64;
            let w = uniform_weights(intervals, h);
            let s: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 * h).powi(3)).sum();
            assert!((s - 0.25).abs() < 1e-14, "{intervals}");
        }
        let w = uniform_weights(1, 0.5f64);
        assert_eq!(w, vec![0.25, 0.25]);
        assert!(uniform_weights(0, 1.0f64).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn simpson_converges_at_fourth_order() {
        let f = |t: f64| Ok(vec![cx(t.cos(), t.sin())]);
        let exact = cx(1f64.sin(), 1.0 - 1f64.cos());
        let e8 = (simpson(0.0, 1.0, 8, 1, f).unwrap()[0] - exact).norm();
        let e16 = (simpson(0.0, 1.0, 16, 1, f).unwrap()[0] - exact).norm();
        assert!((e8 / e16 - 16.0).abs() < 1.0);
        let est = simpson_estimate(0.0, 1.0, 16, 1, f).unwrap();
        assert!(est.error > e16 * 0.5 && est.error < e16 * 2.0);
    }
}
