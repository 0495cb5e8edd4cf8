//! Independent reference solvers written on plain `Vec<f64>` (row-major),
//! sharing no code with the crate under test.

#![allow(dead_code, clippy::too_many_arguments)]

/// `n × p` times `p × t`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, p: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * t];
    for i in 0..n {
        for k in 0..p {
            let aik = a[i * p + k];
            for j in 0..t {
                out[i * t + j] += aik * b[k * t + j];
            }
        }
    }
    out
}

/// `(n × p)ᵀ` times `n × t`.
pub fn t_matmul(a: &[f64], b: &[f64], n: usize, p: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * t];
    for i in 0..n {
        for k in 0..p {
            let aik = a[i * p + k];
            for j in 0..t {
                out[k * t + j] += aik * b[i * t + j];
            }
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖G‖₂²` by power iteration on `GᵀG`.
pub fn spectral_norm_sq(g: &[f64], n: usize, p: usize) -> f64 {
    let mut v: Vec<f64> = (0..p).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let mut est = 0.0;
    for _ in 0..10_000 {
        let gv = matmul(g, &v, n, p, 1);
        let w = t_matmul(g, &gv, n, p, 1);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw / norm(&v);
        v = w.iter().map(|x| x / nw).collect();
        if (next - est).abs() <= 1e-14 * next {
            return next;
        }
        est = next;
    }
    est
}

/// `½‖M − GX‖² + λ Σ_s ‖X_s‖_F` with blocks of `o` consecutive rows of X.
pub fn mxne_objective(g: &[f64], m: &[f64], x: &[f64], n: usize, p: usize, t: usize, o: usize, lambda: f64) -> f64 {
    let fit = matmul(g, x, n, p, t);
    let res: f64 = m.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    let pen: f64 = x.chunks(o * t).map(norm).sum();
    0.5 * res + lambda * pen
}

/// Duality gap of `x` for the block-penalized least squares problem, with
/// the dual point obtained by rescaling the residual.
pub fn mxne_gap(g: &[f64], m: &[f64], x: &[f64], n: usize, p: usize, t: usize, o: usize, lambda: f64) -> f64 {
    let fit = matmul(g, x, n, p, t);
    let r: Vec<f64> = m.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let corr = t_matmul(g, &r, n, p, t);
    let worst = corr.chunks(o * t).map(norm).fold(0.0, f64::max);
    let scale = (worst / lambda).max(1.0);
    let dual: f64 = m.iter().zip(&r).map(|(mi, ri)| 0.5 * mi * mi - 0.5 * (mi - ri / scale).powi(2)).sum();
    mxne_objective(g, m, x, n, p, t, o, lambda) - dual
}

/// Plain proximal gradient (ISTA, step `1/‖G‖₂²`) for the block-penalized
/// least squares problem. Runs until the duality gap is at most
/// `rel_tol · ½‖M‖²`, or `max_iter`.
pub fn mxne_prox_gradient(
    g: &[f64],
    m: &[f64],
    n: usize,
    p: usize,
    t: usize,
    o: usize,
    lambda: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let lip = spectral_norm_sq(g, n, p);
    let scale = 0.5 * m.iter().map(|v| v * v).sum::<f64>();
    let mut x = vec![0.0; p * t];
    for it in 0..max_iter {
        if it % 20 == 0 && mxne_gap(g, m, &x, n, p, t, o, lambda) <= rel_tol * scale {
            break;
        }
        let fit = matmul(g, &x, n, p, t);
        let r: Vec<f64> = m.iter().zip(&fit).map(|(a, b)| a - b).collect();
        let grad = t_matmul(g, &r, n, p, t);
        x = x.iter().zip(&grad).map(|(xi, gi)| xi + gi / lip).collect();
        for block in x.chunks_mut(o * t) {
            let nb = norm(block);
            let shrink = if nb <= lambda / lip { 0.0 } else { 1.0 - lambda / lip / nb };
            block.iter_mut().for_each(|v| *v *= shrink);
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut a = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for pi in 0..n {
            for q in pi + 1..n {
                let apq = a[pi * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[pi * n + pi]) / (2.0 * apq);
                let tt = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let tt = if theta == 0.0 { 1.0 } else { tt };
                let c = 1.0 / (tt * tt + 1.0).sqrt();
                let s = tt * c;
                for k in 0..n {
                    let akp = a[k * n + pi];
                    let akq = a[k * n + q];
                    a[k * n + pi] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[pi * n + k];
                    let aqk = a[q * n + k];
                    a[pi * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}
