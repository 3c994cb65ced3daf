//! Derivative-free Nelder–Mead minimization.
//!
//! Infeasible points are expressed by the objective returning a non-finite
//! value, which the simplex treats as worse than any finite value.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions<T> {
    pub max_evals: usize,
    /// Stop when every vertex is within this distance (max norm) of the best.
    pub x_tol: T,
    /// Absolute spread of objective values across vertices.
    pub f_tol: T,
}

#[derive(Debug, Clone)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize<T: Scalar>(v: T) -> T {
    if v.is_finite() {
        v
    } else {
        T::infinity()
    }
}

/// Minimizes `f` starting from `x0` with initial edge lengths `steps`.
///
/// When `x0 + steps[i] e_i` is infeasible the opposite direction is tried.
pub fn nelder_mead<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    x0: &[T],
    steps: &[T],
    opts: SimplexOptions<T>,
) -> SimplexResult<T> {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut verts: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    verts.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let mut fx = eval(&x, &mut evals);
        if !fx.is_finite() {
            x[i] = x0[i] - steps[i];
            fx = eval(&x, &mut evals);
        }
        verts.push((x, fx));
    }

    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut converged = false;
    while evals < opts.max_evals {
        verts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = verts[0].clone();
        let size = verts[1..].iter().fold(T::zero(), |m, (x, _)| {
            x.iter()
                .zip(&best.0)
                .fold(m, |m, (&a, &b)| m.max((a - b).abs()))
        });
        let spread = (verts[n].1 - best.1).abs();
        if size <= opts.x_tol && (spread <= opts.f_tol || !verts[n].1.is_finite()) {
            converged = true;
            break;
        }
        if size <= opts.x_tol * T::lit(1e-3) {
            // collapsed onto infeasible boundary
            converged = true;
            break;
        }

        let nf = T::from_usize_lossy(n);
        let centroid: Vec<T> = (0..n)
            .map(|j| verts[..n].iter().map(|(x, _)| x[j]).sum::<T>() / nf)
            .collect();
        let along = |t: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&verts[n].0)
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < verts[0].1 {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            verts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < verts[n - 1].1 {
            verts[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < verts[n].1 {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < verts[n].1.min(fr) {
            verts[n] = (xc, fc);
            continue;
        }
        let x_best = verts[0].0.clone();
        for v in verts.iter_mut().skip(1) {
            let x: Vec<T> = x_best
                .iter()
                .zip(&v.0)
                .map(|(&b, &xi)| b + sigma * (xi - b))
                .collect();
            let fx = eval(&x, &mut evals);
            *v = (x, fx);
        }
    }
    verts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = verts.swap_remove(0);
    SimplexResult {
        x,
        value,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions<f64> {
        SimplexOptions {
            max_evals: 5000,
            x_tol: 1e-8,
            f_tol: 1e-14,
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            opts(),
        );
        assert!(r.converged);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn respects_infeasible_region() {
        // minimum of (x-3)² restricted to x <= 1
        let r = nelder_mead(
            |x| {
                if x[0] > 1.0 {
                    f64::NAN
                } else {
                    (x[0] - 3.0).powi(2)
                }
            },
            &[0.0],
            &[0.5],
            opts(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let r = nelder_mead(|x| (x[0] - 8.0).powi(2), &[5.0], &[1.0], opts());
        assert!((r.x[0] - 8.0).abs() < 1e-7);
    }
}
