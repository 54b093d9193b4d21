//! Seeded random streams and small regression helpers shared by the
//! Monte-Carlo estimators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples handled by one deterministic random stream.
pub const CHUNK: usize = 1 << 15;

/// Derives a named sub-seed from a global seed (FNV-1a over the name, then a
/// splitmix finalizer).
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(h ^ seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream `stream` of the generator seeded by `seed`. Chunked
/// parallel loops use the chunk index as stream so results do not depend on
/// the thread count.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ordinary least squares fit `y ≈ slope·x + intercept`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (f64::NAN, ys.first().copied().unwrap_or(f64::NAN));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Index range of the second half of a series of length `n` (at least two
/// points when `n >= 2`).
pub fn tail_half(n: usize) -> std::ops::Range<usize> {
    if n < 2 {
        return 0..n;
    }
    let start = (n / 2).min(n - 2);
    start..n
}

/// Slope of `ys` against `xs` over the last half of the series.
pub fn tail_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let r = tail_half(xs.len());
    ols(&xs[r.clone()], &ys[r]).0
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -0.7 * x + 3.0).collect();
        let (s, c) = ols(&xs, &ys);
        assert!((s + 0.7).abs() < 1e-12);
        assert!((c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tail_half_keeps_two_points() {
        assert_eq!(tail_half(2), 0..2);
        assert_eq!(tail_half(3), 1..3);
        assert_eq!(tail_half(10), 5..10);
    }

    #[test]
    fn substreams_differ_by_name() {
        assert_ne!(substream_seed(1, "ulam"), substream_seed(1, "volume"));
        assert_eq!(substream_seed(7, "a"), substream_seed(7, "a"));
    }
}
