#![allow(dead_code)]

//! Test-only reference implementations, written against plain `Vec`s so
//! they share no code path with the library.

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Normal-equations least squares: w = (XᵀX)⁺ Xᵀ y, with eigenvalues of the
/// Gram matrix below (rcond · σ_max)² discarded.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], rcond: f64) -> Vec<f64> {
    let p = x[0].len();
    let gram: Vec<Vec<f64>> =
        (0..p).map(|i| (0..p).map(|j| x.iter().map(|r| r[i] * r[j]).sum()).collect()).collect();
    let xty: Vec<f64> = (0..p).map(|i| x.iter().zip(y).map(|(r, yv)| r[i] * yv).sum()).collect();
    let (vals, vecs) = jacobi_eigen(&gram);
    let lmax = vals.iter().copied().fold(0.0, f64::max);
    let cut = rcond * rcond * lmax;
    let mut w = vec![0.0; p];
    for k in 0..p {
        if vals[k] <= cut {
            continue;
        }
        let proj: f64 = (0..p).map(|i| vecs[i][k] * xty[i]).sum::<f64>() / vals[k];
        for i in 0..p {
            w[i] += vecs[i][k] * proj;
        }
    }
    w
}

/// ‖a − b‖ / max(‖b‖, tiny)
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / n.max(1e-300)
}

/// Textbook Pearson coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
