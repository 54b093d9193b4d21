use crate::error::{Error, Result};

/// Pairs `(i, j)` with `0 ≤ i < m`, `0 ≤ j < q_i`, where `n = i + q_i·m + r_i`
/// and `0 ≤ r_i < m`. The numbers `i + j·m` enumerate `{0, …, n − m}` exactly
/// once.
pub fn partition_indices(n: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    if m == 0 || m >= n {
        return Err(Error::Precondition(format!("need 0 < m < n, got n = {n}, m = {m}")));
    }
    let mut out = Vec::with_capacity(n - m + 1);
    for i in 0..m {
        let q = (n - i) / m;
        out.extend((0..q).map(|j| (i, j)));
    }
    Ok(out)
}

/// For a subadditive cocycle given as `v(s, k) = v_k(f^s x)` (`s + k ≤ n`),
/// returns a time `n₁ < n` such that `v(n₁, k)/k > v(0, n)/n − eps` for all
/// `0 < k ≤ n − n₁`; then `n − n₁ ≥ eps·n/(2ω)`.
///
/// `omega` must bound `|v(s, k)|/k` over the table.
pub fn subadditive_select(v: &dyn Fn(usize, usize) -> f64, n: usize, eps: f64, omega: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::Precondition("n must be positive".into()));
    }
    if !(eps > 0.0 && eps < 2.0 * omega) {
        return Err(Error::Precondition(format!("need 0 < eps < 2·omega, got eps = {eps}, omega = {omega}")));
    }
    for s in 0..n {
        for k in 1..=n - s {
            let r = v(s, k).abs() / k as f64;
            if !(r <= omega * (1.0 + 1e-12)) {
                return Err(Error::Precondition(format!("|v_{k}(f^{s}x)|/{k} = {r} exceeds omega = {omega}")));
            }
        }
    }
    let sigma = v(0, n) / n as f64;
    // largest k in (0, n) whose average falls to σ − ε or below
    let n1 = (1..n).rev().find(|&k| v(0, k) / k as f64 <= sigma - eps).unwrap_or(0);
    Ok(n1)
}
