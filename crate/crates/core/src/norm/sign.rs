//! `E|Σ ε_j c_j|` over independent symmetric signs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::pairwise_sum;

/// Exact expectation by enumeration. The first sign is fixed to `+1` by
/// symmetry and the remaining ones are split into two halves whose partial
/// sums are merged with a sort and prefix sums.
pub fn exact_sign_expectation(c: &[f64]) -> f64 {
    let c: Vec<f64> = c.iter().copied().filter(|v| *v != 0.0).collect();
    match c.len() {
        0 => return 0.0,
        1 => return c[0].abs(),
        _ => {}
    }
    let (first, rest) = c.split_first().expect("nonempty");
    let half = rest.len() / 2;
    let left = subset_sums(&rest[..half]);
    let mut right = subset_sums(&rest[half..]);
    right.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut prefix = Vec::with_capacity(right.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in &right {
        acc += v;
        prefix.push(acc);
    }
    let total_right = acc;
    let nr = right.len() as f64;
    let per_left: Vec<f64> = left
        .iter()
        .map(|l| {
            let x = first + l;
            // Σ_j |x + r_j| splits at r_j = -x.
            let k = right.partition_point(|r| *r < -x);
            let below = -(x * k as f64 + prefix[k]);
            let above = x * (nr - k as f64) + (total_right - prefix[k]);
            below + above
        })
        .collect();
    pairwise_sum(&per_left) / (left.len() as f64 * nr)
}

fn subset_sums(c: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0];
    for &v in c {
        let mut next = Vec::with_capacity(sums.len() * 2);
        for s in &sums {
            next.push(s + v);
            next.push(s - v);
        }
        sums = next;
    }
    sums
}

/// Seeded Monte Carlo estimate; returns `(mean, variance of one sample)`.
/// The stream is fixed by `(seed, stream)` so results do not depend on
/// scheduling.
pub fn mc_sign_expectation(c: &[f64], samples: u64, seed: u64, stream: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = samples.max(1);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        let mut bits: u64 = 0;
        for (j, v) in c.iter().enumerate() {
            if j % 64 == 0 {
                bits = rng.gen();
            }
            s += if bits >> (j % 64) & 1 == 0 { *v } else { -*v };
        }
        let x = s.abs();
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, var)
}
