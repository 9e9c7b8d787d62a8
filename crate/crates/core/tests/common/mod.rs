#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cyclic Jacobi eigendecomposition; returns eigenpairs sorted by
/// decreasing eigenvalue.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

/// Noiseless `R = Omega Z Theta^T` with degrees rescaled so that the squared
/// degrees of each class sum to its size.
pub struct Noiseless {
    pub r: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub degrees: Vec<f64>,
    pub theta: DMatrix<f64>,
}

pub fn noiseless(n: usize, j: usize, k: usize, seed: u64) -> Noiseless {
    let mut g = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { g.random_range(0..k) }).collect();
    let mut degrees: Vec<f64> = (0..n).map(|_| g.random_range(0.1..1.5)).collect();
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let ss: f64 = members.iter().map(|&i| degrees[i] * degrees[i]).sum();
        let f = (members.len() as f64 / ss).sqrt();
        for &i in &members {
            degrees[i] *= f;
        }
    }
    let theta = DMatrix::from_fn(j, k, |_, _| g.random_range(0.05..0.6));
    let r = DMatrix::from_fn(n, j, |i, c| degrees[i] * theta[(c, labels[i])]);
    Noiseless { r, labels, degrees, theta }
}

/// Orthonormal basis of the column space of `a` via Gram-Schmidt on the
/// dense Jacobi eigenvectors of `a a^T`.
pub fn top_left_subspace(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (_, vecs) = jacobi_eigen(&(a * a.transpose()));
    vecs.columns(0, k).into_owned()
}

pub fn subspace_sines(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    // largest principal-angle sine = ||(I - U U^T) V||_2
    let resid = v - u * (u.transpose() * v);
    let (vals, _) = jacobi_eigen(&(resid.transpose() * &resid));
    vals[0].max(0.0).sqrt()
}

/// Misclustering rate by direct search over all bijections of `0..k`.
pub fn brute_misclustering(s: &[usize], t: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let n = s.len();
    perms(k)
        .into_iter()
        .map(|p| s.iter().zip(t).filter(|&(&a, &b)| a != p[b]).count())
        .min()
        .unwrap() as f64
        / n as f64
}

/// BH by enumerating every subset: the rejection set is the largest subset S
/// such that every p in S satisfies p <= alpha |S| / M and S contains all
/// p-values at most its maximum.
pub fn brute_bh(p: &[f64], alpha: f64) -> Vec<usize> {
    let m = p.len();
    let mut best: Vec<usize> = Vec::new();
    for mask in 1u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        let size = set.len();
        let pmax = set.iter().map(|&i| p[i]).fold(f64::NEG_INFINITY, f64::max);
        let closed = (0..m).all(|i| p[i] > pmax || mask >> i & 1 == 1);
        if closed && pmax <= alpha * size as f64 / m as f64 && size > best.len() {
            best = set;
        }
    }
    best
}

/// `P(chi2_1 <= x) = 2 Phi(sqrt x) - 1`, with the normal integral done by
/// composite Simpson quadrature.
pub fn chi2_1_cdf_simpson(x: f64) -> f64 {
    let z = x.sqrt();
    let steps = 20_000;
    let h = z / steps as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = phi(0.0) + phi(z);
    for i in 1..steps {
        acc += phi(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * acc * h / 3.0
}

pub fn chi2_1_quantile_simpson(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_1_cdf_simpson(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
