//! Label-permutation-invariant agreement measures between two labelings.

use crate::error::{Error, Result};

/// Above this class count the optimal permutation is found by assignment
/// instead of enumeration.
pub const ENUMERATION_MAX_K: usize = 8;

fn check_lengths(s: &[usize], t: &[usize]) -> Result<()> {
    if s.len() != t.len() {
        return Err(Error::Shape(format!("label vectors of length {} and {}", s.len(), t.len())));
    }
    if s.is_empty() {
        return Err(Error::Shape("empty label vectors".into()));
    }
    Ok(())
}

/// Square K x K confusion counts, `c[a][b] = #{i : s_i = a, t_i = b}`.
fn confusion(s: &[usize], t: &[usize]) -> Vec<Vec<i64>> {
    let k = s.iter().chain(t).max().map_or(0, |&m| m + 1);
    let mut c = vec![vec![0i64; k]; k];
    for (&a, &b) in s.iter().zip(t) {
        c[a][b] += 1;
    }
    c
}

/// Permutation `perm` of `0..k` (perm[b] = a) maximizing `sum_b c[perm[b]][b]`,
/// by exhaustive enumeration.
fn best_by_enumeration(c: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let k = c.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |p: &[usize]| (0..k).map(|b| c[p[b]][b]).sum::<i64>();
    let mut best = (score(&perm), perm.clone());
    // Heap's algorithm.
    let mut stack = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            let sc = score(&perm);
            if sc > best.0 {
                best = (sc, perm.clone());
            }
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    best
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method with
/// potentials, O(K^3)). Returns the total weight and `perm[b] = a`.
fn best_by_assignment(c: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = c.len();
    if n == 0 {
        return (0, Vec::new());
    }
    // Minimize cost = -weight; 1-based arrays with a sentinel column 0.
    let cost = |row: usize, col: usize| -c[row - 1][col - 1];
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let row0 = matched_row[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost(row0, col) - u[row0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let perm: Vec<usize> = (1..=n).map(|col| matched_row[col] - 1).collect();
    let total = (0..n).map(|b| c[perm[b]][b]).sum();
    (total, perm)
}

fn rate(n: usize, matched: i64) -> f64 {
    (n as i64 - matched) as f64 / n as f64
}

/// Misclustering rate computed by enumerating all K! permutations.
pub fn misclustering_rate_enumerate(s: &[usize], t: &[usize]) -> Result<f64> {
    check_lengths(s, t)?;
    Ok(rate(s.len(), best_by_enumeration(&confusion(s, t)).0))
}

/// Misclustering rate computed by optimal assignment on the confusion matrix.
pub fn misclustering_rate_assignment(s: &[usize], t: &[usize]) -> Result<f64> {
    check_lengths(s, t)?;
    Ok(rate(s.len(), best_by_assignment(&confusion(s, t)).0))
}

/// Fraction of subjects whose labels disagree under the best relabeling of
/// `t` onto `s`.
pub fn misclustering_rate(s: &[usize], t: &[usize]) -> Result<f64> {
    check_lengths(s, t)?;
    let c = confusion(s, t);
    let matched = if c.len() <= ENUMERATION_MAX_K {
        best_by_enumeration(&c).0
    } else {
        best_by_assignment(&c).0
    };
    Ok(rate(s.len(), matched))
}

/// Relabeling `perm` with `perm[t_label] = s_label` that minimizes the
/// misclustering rate. Its length is the larger of the two label ranges.
pub fn best_permutation(s: &[usize], t: &[usize]) -> Result<Vec<usize>> {
    check_lengths(s, t)?;
    let c = confusion(s, t);
    Ok(if c.len() <= ENUMERATION_MAX_K {
        best_by_enumeration(&c).1
    } else {
        best_by_assignment(&c).1
    })
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Fraction of unordered subject pairs on which the two labelings agree.
pub fn rand_index(s: &[usize], t: &[usize]) -> Result<f64> {
    check_lengths(s, t)?;
    let n = s.len() as u64;
    if n < 2 {
        return Err(Error::Shape("rand index needs at least two subjects".into()));
    }
    let c = confusion(s, t);
    let k = c.len();
    let both: u64 = c.iter().flatten().map(|&x| pairs(x as u64)).sum();
    let rows: u64 = (0..k).map(|a| pairs(c[a].iter().sum::<i64>() as u64)).sum();
    let cols: u64 = (0..k).map(|b| pairs((0..k).map(|a| c[a][b]).sum::<i64>() as u64)).sum();
    // agreements = pairs together in both + pairs apart in both
    let agree = pairs(n) + 2 * both - rows - cols;
    Ok(agree as f64 / pairs(n) as f64)
}
