use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::SaliencyConfig;

/// Pairs whose saliency differs by less than this are redrawn.
const MIN_SALIENCY_GAP: f64 = 1e-12;

/// Sampled `(high, low)` saliency pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSample {
    pub pairs: Vec<(usize, usize)>,
    /// Set when saliency was flat (or the redraw budget ran out) and fewer
    /// pairs than requested came back.
    pub degenerate: bool,
}

/// Draw up to `cfg.pairs_per_step` pairs `(i, j)` with `i` from the most
/// salient `quantile` of splats and `j` from the least salient.
pub fn sample_saliency_pairs(saliency: &[f64], cfg: &SaliencyConfig, seed: u64) -> Result<PairSample> {
    let n = saliency.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("pair sampling needs at least 2 splats, got {n}")));
    }
    let (lo, hi) = saliency
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if hi - lo < MIN_SALIENCY_GAP {
        log::warn!("saliency is flat across {n} splats; ranking loss skipped this step");
        return Ok(PairSample { pairs: Vec::new(), degenerate: true });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Descending saliency, ties by index.
    order.sort_by(|&a, &b| saliency[b].total_cmp(&saliency[a]).then(a.cmp(&b)));
    let pool = ((cfg.quantile * n as f64).floor() as usize).clamp(1, n / 2);
    let top = &order[..pool];
    let bottom = &order[n - pool..];

    let k = cfg.pairs_per_step;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(k);
    let mut attempts = 0;
    while pairs.len() < k && attempts < 10 * k {
        attempts += 1;
        let i = top[rng.random_range(0..pool)];
        let j = bottom[rng.random_range(0..pool)];
        if (saliency[i] - saliency[j]).abs() < MIN_SALIENCY_GAP {
            continue;
        }
        pairs.push((i, j));
    }
    let degenerate = pairs.len() < k;
    if degenerate {
        log::warn!("drew only {} of {k} saliency pairs", pairs.len());
    }
    Ok(PairSample { pairs, degenerate })
}

/// `(1/K) Σ max(0, 1 + cⱼ − cᵢ)` over the retained pairs, with its gradient
/// with respect to every confidence.
pub fn saliency_ranking_loss(pairs: &[(usize, usize)], confidences: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = confidences.len();
    let mut grad = vec![0.0; n];
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let inv_k = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(Error::InvalidInput(format!("pair ({i}, {j}) out of range for {n} splats")));
        }
        let margin = 1.0 + confidences[j] - confidences[i];
        if margin > 0.0 {
            value += margin;
            grad[i] -= inv_k;
            grad[j] += inv_k;
        }
    }
    Ok((value * inv_k, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize, q: f64) -> SaliencyConfig {
        SaliencyConfig { pairs_per_step: k, quantile: q, ema_decay: 0.0 }
    }

    #[test]
    fn pools_respect_quantile() {
        let s = sample_saliency_pairs(&[9.0, 8.0, 1.0, 0.0], &cfg(2, 0.5), 3).unwrap();
        assert_eq!(s.pairs.len(), 2);
        for (i, j) in s.pairs {
            assert!(i <= 1 && j >= 2);
        }
    }

    #[test]
    fn flat_saliency_gives_no_pairs() {
        let s = sample_saliency_pairs(&[0.3; 6], &cfg(8, 0.25), 1).unwrap();
        assert!(s.pairs.is_empty() && s.degenerate);
        assert_eq!(saliency_ranking_loss(&s.pairs, &[0.5; 6]).unwrap().0, 0.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let sal: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let a = sample_saliency_pairs(&sal, &cfg(20, 0.3), 99).unwrap();
        let b = sample_saliency_pairs(&sal, &cfg(20, 0.3), 99).unwrap();
        assert_eq!(a, b);
        assert!(sample_saliency_pairs(&[1.0], &cfg(1, 0.5), 0).is_err());
    }

    #[test]
    fn equal_saliency_across_pools_is_redrawn() {
        // Top pool {0, 1}, bottom pool {2, 3}; index 1 ties with index 2.
        let sal = [5.0, 1.0, 1.0, 0.0];
        let s = sample_saliency_pairs(&sal, &cfg(40, 0.5), 7).unwrap();
        assert!(s.pairs.iter().all(|&(i, j)| sal[i] != sal[j]));
    }

    #[test]
    fn ranking_examples() {
        let (v, g) = saliency_ranking_loss(&[(0, 1)], &[0.9, 0.1]).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(g, vec![-1.0, 1.0]);
        assert_eq!(saliency_ranking_loss(&[(0, 1)], &[0.5, 0.5]).unwrap().0, 1.0);
        let (v, g) = saliency_ranking_loss(&[(0, 1)], &[1.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(saliency_ranking_loss(&[(0, 5)], &[0.5, 0.5]).is_err());
    }
}
