//! Preconditioned conjugate gradients on flat vectors.

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

#[inline]
pub fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A x = b` for symmetric positive (semi)definite `A`.
///
/// `inv_diag` is the Jacobi preconditioner; zero entries freeze the unknown.
/// `project`, when given, removes null-space components after every update.
/// Iterates until `‖r‖ ≤ tol·‖b‖`, the iteration cap, or stagnation.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut [f64])>,
) -> CgOutcome {
    let n = b.len();
    let bnorm = dotv(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, rel_residual: 0.0, converged: true };
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if let Some(p) = project {
        p(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dotv(&r, &z);
    let mut rel = dotv(&r, &r).sqrt() / bnorm;
    let mut best = rel;
    let mut since_best = 0usize;
    let mut it = 0;
    while it < max_iter && rel > tol {
        apply(&p, &mut ax);
        let pap = dotv(&p, &ax);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        if let Some(pr) = project {
            pr(x);
            pr(&mut r);
        }
        // refresh the recursive residual now and then
        if (it + 1) % 200 == 0 {
            apply(x, &mut ax);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            if let Some(pr) = project {
                pr(&mut r);
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if let Some(pr) = project {
            pr(&mut z);
        }
        let rz_new = dotv(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = dotv(&r, &r).sqrt() / bnorm;
        it += 1;
        if rel < 0.5 * best {
            best = rel;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 400 {
                break;
            }
        }
    }
    // report the true residual
    apply(x, &mut ax);
    let mut rt: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if let Some(pr) = project {
        pr(&mut rt);
    }
    let true_rel = dotv(&rt, &rt).sqrt() / bnorm;
    CgOutcome { iterations: it, rel_residual: true_rel, converged: true_rel <= tol.max(1e-300) * 10.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.5 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let out = pcg(apply, &b, &mut x, &vec![0.4; n], 1e-13, 500, None);
        assert!(out.converged, "{out:?}");
    }
}
