use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gssbo::acquisition::{optimize_acquisition, AcquisitionConfig};
use gssbo::buffer::BufferPolicy;
use gssbo::kernel::{build_gram, kernel_eval, KernelFamily, KernelHyperparams};
use gssbo::linalg::{add_diagonal, max_abs, sorted_eigen, spd_inverse};
use gssbo::nystrom::{build_sor_approx, greedy_nystrom_select, posterior_error_bounds, spectral_error};
use gssbo::select::{cosine_sum, diversity_score, select_subset, GradientEmbedding};
use gssbo::GpModel;

fn points(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

fn family(se: bool) -> KernelFamily {
    if se {
        KernelFamily::SquaredExponential
    } else {
        KernelFamily::Matern52
    }
}

fn model(seed: u64, n: usize, d: usize, l: f64, sf: f64, noise: f64, se: bool) -> GpModel {
    let pts = points(seed, n, d);
    let y: Vec<f64> = pts
        .iter()
        .map(|p| p.iter().map(|v| (4.0 * v).sin()).sum())
        .collect();
    let hp = KernelHyperparams::isotropic(l, sf, noise).unwrap();
    GpModel::fit_points(pts, y, &hp, family(se), 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_is_exactly_symmetric(seed in any::<u64>(), n in 1usize..25, d in 1usize..5, l in 0.05f64..3.0, se: bool) {
        let hp = KernelHyperparams::isotropic(l, 1.3, 0.0).unwrap();
        let k = build_gram(&points(seed, n, d), &hp, family(se)).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(k[(i, j)].to_bits(), k[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn posterior_variance_below_prior(seed in any::<u64>(), n in 1usize..30, l in 0.05f64..2.0, sf in 0.1f64..5.0, se: bool) {
        let m = model(seed, n, 3, l, sf, 1e-4, se);
        for x in points(seed ^ 1, 20, 3) {
            let (_, v) = m.posterior(&x).unwrap();
            prop_assert!(v >= 0.0 && v <= sf + 1e-9);
        }
    }

    #[test]
    fn adding_a_point_never_increases_variance(seed in any::<u64>(), n in 1usize..25, l in 0.1f64..1.5, se: bool) {
        let pts = points(seed, n + 1, 2);
        let hp = KernelHyperparams::isotropic(l, 1.0, 1e-3).unwrap();
        let y = vec![0.0; n + 1];
        let small = GpModel::fit_points(pts[..n].to_vec(), y[..n].to_vec(), &hp, family(se), 0.0).unwrap();
        let big = GpModel::fit_points(pts, y, &hp, family(se), 0.0).unwrap();
        for x in points(seed ^ 7, 15, 2) {
            prop_assert!(big.posterior(&x).unwrap().1 <= small.posterior(&x).unwrap().1 + 1e-8);
        }
    }

    #[test]
    fn cholesky_posterior_matches_dense_inverse(seed in any::<u64>(), n in 2usize..50, se: bool) {
        let m = model(seed, n, 2, 0.4, 1.0, 1e-2, se);
        let kinv = spd_inverse(&m.regularized_gram()).unwrap();
        for x in points(seed ^ 3, 5, 2) {
            let ks = DVector::from_iterator(n, m.points().iter().map(|p| kernel_eval(p, &x, &m.hyperparams, m.family).unwrap()));
            let mean = ks.dot(&(&kinv * m.targets()));
            let var = 1.0 - ks.dot(&(&kinv * &ks));
            let (pm, pv) = m.posterior(&x).unwrap();
            prop_assert!((pm - mean).abs() < 1e-8);
            prop_assert!((pv - var.max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn embedding_matrix_is_symmetric(seed in any::<u64>(), n in 2usize..30) {
        let m = model(seed, n, 2, 0.3, 1.0, 1e-2, true);
        let g = GradientEmbedding::from_model(&m);
        prop_assert!(max_abs(&(g.vectors() - g.vectors().transpose())) <= 1e-9);
    }

    #[test]
    fn selection_is_scale_invariant(seed in any::<u64>(), n in 3usize..25, frac in 0.1f64..1.0, c in 1e-3f64..1e3) {
        let m = model(seed, n, 2, 0.3, 1.0, 1e-2, false);
        let g = GradientEmbedding::from_model(&m);
        let k = ((n as f64 * frac) as usize).clamp(1, n);
        let forced = (seed % n as u64) as usize;
        let a = select_subset(&g, k, forced).unwrap();
        let b = select_subset(&g.scaled(c), k, forced).unwrap();
        prop_assert_eq!(&a.indices, &b.indices);
        let da = diversity_score(&g, &a.indices).unwrap();
        let db = diversity_score(&g.scaled(c), &a.indices).unwrap();
        prop_assert!((da - db).abs() < 1e-12);
    }

    #[test]
    fn selection_keeps_forced_index_and_is_distinct(seed in any::<u64>(), n in 1usize..30, frac in 0.0f64..1.0) {
        let m = model(seed, n, 3, 0.5, 1.0, 1e-2, true);
        let g = GradientEmbedding::from_model(&m);
        let k = ((n as f64 * frac) as usize).clamp(1, n);
        let forced = n - 1;
        let s = select_subset(&g, k, forced).unwrap();
        prop_assert_eq!(s.indices[0], forced);
        let mut u = s.indices.clone();
        u.sort();
        u.dedup();
        prop_assert_eq!(u.len(), k);
        prop_assert!((s.cosine_sum - cosine_sum(&g, &s.indices).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn shifting_means_keeps_the_argmax(seed in any::<u64>(), c in -50.0f64..50.0, beta in 0.0f64..9.0) {
        let pts = points(seed, 12, 2);
        let y: Vec<f64> = pts.iter().map(|p| p[0] - p[1]).collect();
        let hp = KernelHyperparams::isotropic(0.3, 1.0, 1e-2).unwrap();
        let a = GpModel::fit_points(pts.clone(), y.clone(), &hp, KernelFamily::Matern52, 0.0).unwrap();
        let b = GpModel::fit_points(pts, y.iter().map(|v| v + c).collect(), &hp, KernelFamily::Matern52, c).unwrap();
        let cfg = AcquisitionConfig { n_candidates: Some(256), n_polish: 2, polish_steps: 20 };
        let bounds = [(0.0, 1.0), (0.0, 1.0)];
        let ra = optimize_acquisition(&a, beta, &bounds, &cfg, seed).unwrap();
        let rb = optimize_acquisition(&b, beta, &bounds, &cfg, seed).unwrap();
        prop_assert_eq!(&ra.x, &rb.x);
        prop_assert!((rb.ucb - ra.ucb - c).abs() < 1e-9);
        prop_assert!(ra.x.iter().zip(&bounds).all(|(v, (lo, hi))| v >= lo && v <= hi));
    }

    #[test]
    fn sor_interpolates_and_respects_eckart_young(seed in any::<u64>(), n in 6usize..40, frac in 0.1f64..0.9) {
        let hp = KernelHyperparams::isotropic(0.3, 1.0, 0.0).unwrap();
        let k = build_gram(&points(seed, n, 2), &hp, KernelFamily::SquaredExponential).unwrap();
        let m = ((n as f64 * frac) as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = rand::seq::index::sample(&mut rng, n, m).into_vec();
        let k_hat = build_sor_approx(&k, &u).unwrap();
        for &i in &u {
            for &j in &u {
                prop_assert!((k_hat[(i, j)] - k[(i, j)]).abs() < 1e-8);
            }
        }
        let (vals, _) = sorted_eigen(&k);
        prop_assert!(spectral_error(&k, &k_hat) >= vals[m] - 1e-8);
    }

    #[test]
    fn nested_greedy_never_gets_worse(seed in any::<u64>(), n in 6usize..30) {
        let hp = KernelHyperparams::isotropic(0.4, 1.0, 0.0).unwrap();
        let k = add_diagonal(&build_gram(&points(seed, n, 2), &hp, KernelFamily::Matern52).unwrap(), 1e-6);
        let order = greedy_nystrom_select(&k, n, None).unwrap();
        let mut prev = f64::INFINITY;
        for m in 1..=n.min(12) {
            let e = spectral_error(&k, &build_sor_approx(&k, &order[..m]).unwrap());
            prop_assert!(e <= prev + 1e-9);
            prev = e;
        }
    }

    #[test]
    fn posterior_error_bounds_hold(seed in any::<u64>(), n in 8usize..30, frac in 0.2f64..0.5, noisy: bool) {
        let pts = points(seed, n + 1, 2);
        let hp = KernelHyperparams::isotropic(0.3, 1.0, 0.0).unwrap();
        let k = build_gram(&pts[..n], &hp, KernelFamily::SquaredExponential).unwrap();
        let m = ((n as f64 * frac) as usize).max(1);
        let u = greedy_nystrom_select(&k, m, None).unwrap();
        let k_hat = build_sor_approx(&k, &u).unwrap();
        let y = DVector::from_iterator(n, pts[..n].iter().map(|p| (3.0 * p[0]).cos() + p[1]));
        let ks = DVector::from_iterator(n, pts[..n].iter().map(|p| kernel_eval(p, &pts[n], &hp, KernelFamily::SquaredExponential).unwrap()));
        let b = posterior_error_bounds(&k, &k_hat, &y, &ks, if noisy { 0.1 } else { 0.01 }).unwrap();
        prop_assert!(b.holds(0.0), "{:?}", b);
    }

    #[test]
    fn switch_happens_at_most_once(times in proptest::collection::vec(0.0f64..10.0, 1..40), z in 0.5f64..5.0) {
        let mut p = BufferPolicy::new(z, 1).unwrap();
        p.establish_baseline(&[1.0]).unwrap();
        let mut switches = 0;
        let mut first = None;
        for (k, t) in times.iter().enumerate() {
            if p.observe_iteration(*t, 10 + k).unwrap() {
                switches += 1;
                first = Some(k);
            }
        }
        prop_assert!(switches <= 1);
        let expected = times.iter().position(|t| *t > z);
        prop_assert_eq!(first, expected);
        if let Some(k) = expected {
            prop_assert_eq!(p.buffer_size, Some(10 + k));
        }
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

// Greedy forward selection from a forced start has no worst-case guarantee
// against the exhaustive optimum: a fixed 1.25x envelope is exceeded on a
// sizeable minority of small instances (the optimum can nearly cancel to
// zero). The typical instance is within the envelope.
#[test]
fn greedy_close_to_exhaustive_optimum() {
    let mut ratios = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..=10);
        let m = rng.random_range(2..=5.min(n));
        let g = GradientEmbedding::from_model(&model(seed, n, 2, 0.4, 1.0, 1e-2, seed % 2 == 0));
        let forced = n - 1;
        let greedy = select_subset(&g, m, forced).unwrap().cosine_sum;
        let best = subsets(n, m)
            .into_iter()
            .filter(|s| s.contains(&forced))
            .map(|s| cosine_sum(&g, &s).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(best >= -1e-9 && greedy >= best - 1e-9);
        ratios.push(greedy / best.max(1e-12));
    }
    let outside = ratios.iter().filter(|r| **r > 1.25).count();
    ratios.sort_by(f64::total_cmp);
    println!(
        "greedy/exhaustive: median {:.3}, {outside}/100 above 1.25",
        ratios[50]
    );
    assert!(ratios[50] <= 1.25);
}

#[test]
fn greedy_beats_random_diversity_on_average() {
    let (mut dg, mut dr) = (0.0, 0.0);
    for seed in 0..30u64 {
        let g = GradientEmbedding::from_model(&model(seed, 40, 2, 0.3, 1.0, 1e-2, true));
        let s = select_subset(&g, 15, 39).unwrap();
        dg += diversity_score(&g, &s.indices).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut r = vec![39];
        r.extend(rand::seq::index::sample(&mut rng, 39, 14));
        dr += diversity_score(&g, &r).unwrap();
    }
    assert!(dg >= dr, "greedy {dg} random {dr}");
}

#[test]
fn identical_kernel_leaves_no_error() {
    let hp = KernelHyperparams::isotropic(0.5, 1.0, 0.0).unwrap();
    let k: DMatrix<f64> = build_gram(&points(1, 10, 2), &hp, KernelFamily::Matern52).unwrap();
    let b = posterior_error_bounds(
        &k,
        &k,
        &DVector::from_element(10, 1.0),
        &DVector::from_element(10, 0.2),
        0.1,
    )
    .unwrap();
    assert_eq!((b.actual_mean_err, b.actual_var_err), (0.0, 0.0));
}
