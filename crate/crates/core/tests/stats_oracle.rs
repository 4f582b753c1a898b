use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termshift::stats::{
    chi_square_upper_tail, holm_correction, kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank, ZeroMethod,
};

/// Distinct values in random order, so no ties and no zero differences.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=n).map(|i| i as f64 * 1.5 + 0.25).collect();
    v.shuffle(rng);
    v
}

/// Enumerates all 2^n sign assignments of ranks 1..=n.
fn brute_wilcoxon_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    let mut abs: Vec<(f64, bool)> = diffs.iter().map(|d| (d.abs(), *d > 0.0)).collect();
    abs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let observed: usize = abs.iter().enumerate().filter(|(_, x)| x.1).map(|(i, _)| i + 1).sum();
    let total = n * (n + 1) / 2;
    let stat = observed.min(total - observed);
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let w: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        if w <= stat {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

/// Enumerates every way of choosing which ranks belong to sample A.
fn brute_mann_whitney_p(a: &[f64], b: &[f64]) -> f64 {
    let (na, n) = (a.len(), a.len() + b.len());
    let mut all: Vec<(f64, bool)> = a.iter().map(|x| (*x, true)).chain(b.iter().map(|x| (*x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let rank_a: usize = all.iter().enumerate().filter(|(_, x)| x.1).map(|(i, _)| i + 1).sum();
    let u_a = rank_a - na * (na + 1) / 2;
    let stat = u_a.min(na * b.len() - u_a);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        let r: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        if r - na * (na + 1) / 2 <= stat {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / total as f64).min(1.0)
}

#[test]
fn wilcoxon_exact_equals_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1_200 {
        let n = 1 + case % 10;
        let magnitudes = distinct(&mut rng, n);
        let diffs: Vec<f64> = magnitudes.iter().map(|m| if rng.random_bool(0.5) { *m } else { -*m }).collect();
        let pairs: Vec<(f64, f64)> = diffs.iter().map(|d| (10.0, 10.0 + d)).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert!(r.exact);
        let want = brute_wilcoxon_p(&diffs);
        assert!((r.p_value - want).abs() <= 1e-12, "{diffs:?}: {} vs {want}", r.p_value);
    }
}

#[test]
fn mann_whitney_exact_equals_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1_200 {
        let n = rng.random_range(2..=10);
        let na = rng.random_range(1..n);
        let values = distinct(&mut rng, n);
        let (a, b) = values.split_at(na);
        let r = mann_whitney_u(a, b).unwrap();
        assert!(r.exact);
        let want = brute_mann_whitney_p(a, b);
        assert!((r.p_value - want).abs() <= 1e-12, "{a:?} {b:?}: {} vs {want}", r.p_value);
    }
}

#[test]
fn wilcoxon_is_invariant_to_swapping_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let n = rng.random_range(1..40);
        let pairs: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(0..8) as f64, rng.random_range(0..8) as f64)).collect();
        let swapped: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let (x, y) = (wilcoxon_signed_rank(&pairs).unwrap(), wilcoxon_signed_rank(&swapped).unwrap());
        assert_eq!(x.statistic, y.statistic);
        assert!((x.p_value - y.p_value).abs() < 1e-12);
    }
}

#[test]
fn mann_whitney_is_invariant_to_swapping_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..300 {
        let a: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0..10) as f64).collect();
        let (x, y) = (mann_whitney_u(&a, &b).unwrap(), mann_whitney_u(&b, &a).unwrap());
        assert_eq!(x.statistic, y.statistic);
        assert!((x.p_value - y.p_value).abs() < 1e-12);
    }
}

fn normal_two_sided(z: f64) -> f64 {
    statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[test]
fn exact_and_normal_approximation_agree_near_the_cutover() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(20..=25);
        let magnitudes = distinct(&mut rng, n);
        let pairs: Vec<(f64, f64)> =
            magnitudes.iter().map(|m| (0.0, if rng.random_bool(0.5) { *m } else { -*m })).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert!(r.exact);
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
        let approx = normal_two_sided(((r.statistic - mean).abs() - 0.5) / sd);
        assert!((r.p_value - approx).abs() < 0.02, "n={n}: {} vs {approx}", r.p_value);
    }
    for _ in 0..200 {
        let values = distinct(&mut rng, 12);
        let (a, b) = values.split_at(6);
        let r = mann_whitney_u(a, b).unwrap();
        assert!(r.exact);
        let sd = (36.0 * 13.0 / 12.0f64).sqrt();
        let approx = normal_two_sided(((r.statistic - 18.0).abs() - 0.5) / sd);
        assert!((r.p_value - approx).abs() < 0.02, "{} vs {approx}", r.p_value);
    }
}

#[test]
fn pratt_keeps_zero_ranks_out_of_the_statistic() {
    let pairs = [(1.0, 1.0), (0.0, 2.0), (0.0, 3.0), (0.0, -1.0)];
    let r = termshift::stats::wilcoxon_signed_rank_with(&pairs, ZeroMethod::Pratt).unwrap();
    assert!(!r.exact);
    // ranks of |0|,|2|,|3|,|1| are 1,3,4,2; the negative one carries 2.
    assert_eq!(r.statistic, 2.0);
}

#[test]
fn kruskal_wallis_reference_value() {
    let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
    assert!((r.statistic - 7.2).abs() < 1e-12);
    assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-6);
}

#[test]
fn kruskal_wallis_ignores_monotone_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let groups: Vec<Vec<f64>> = (0..rng.random_range(2..5))
            .map(|_| (0..rng.random_range(1..12)).map(|_| rng.random_range(0..15) as f64).collect())
            .collect();
        let warped: Vec<Vec<f64>> =
            groups.iter().map(|g| g.iter().map(|x| (x * 0.3).exp() + x.powi(3)).collect()).collect();
        let (a, b) = (kruskal_wallis(&groups).unwrap(), kruskal_wallis(&warped).unwrap());
        assert!((a.statistic - b.statistic).abs() < 1e-9);
        assert!((a.p_value - b.p_value).abs() < 1e-12);
    }
}

/// Composite Simpson on the chi-square density over [0, x], after the
/// substitution t = u^2 so the integrand is smooth at zero.
fn simpson_cdf(x: f64, k: usize) -> f64 {
    let half = k as f64 / 2.0;
    let norm = 2f64.powf(half) * statrs::function::gamma::gamma(half);
    let f = |u: f64| 2.0 * u.powf(k as f64 - 1.0) * (-u * u / 2.0).exp() / norm;
    let steps = 20_000;
    let top = x.sqrt();
    let h = top / steps as f64;
    let mut sum = f(0.0) + f(top);
    for i in 1..steps {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn chi_square_tail_matches_quadrature_and_closed_forms() {
    for &x in &[0.1, 0.5, 1.0, 2.5, 3.84, 7.2, 12.0, 25.0] {
        let df1 = statrs::function::erf::erfc((x / 2.0f64).sqrt());
        assert!((chi_square_upper_tail(x, 1) - df1).abs() < 1e-9, "x={x}: {} vs {df1}", chi_square_upper_tail(x, 1));
        assert!((chi_square_upper_tail(x, 2) - (-x / 2.0f64).exp()).abs() < 1e-12);
        for df in 2..=8 {
            let want = 1.0 - simpson_cdf(x, df);
            assert!((chi_square_upper_tail(x, df) - want).abs() < 1e-8, "x={x} df={df}");
        }
    }
    assert_eq!(chi_square_upper_tail(0.0, 3), 1.0);
}

#[test]
fn holm_reference_and_properties() {
    assert_eq!(holm_correction(&[0.01, 0.04]).unwrap(), vec![0.02, 0.04]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let p: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random::<f64>()).collect();
        let adj = holm_correction(&p).unwrap();
        for (i, (&raw, &a)) in p.iter().zip(&adj).enumerate() {
            assert!(a >= raw && a <= 1.0);
            for (j, &other) in p.iter().enumerate() {
                if raw < other {
                    assert!(a <= adj[j], "order broken at {i},{j}");
                }
            }
        }
    }
    assert!(holm_correction(&[1.2]).is_err());
}
