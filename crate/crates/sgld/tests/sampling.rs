use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgld::kernels::{Grid, TruncatedTarget};
use sgld::par::map_range;
use sgld::rng::stream_rng;
use sgld::samplers::{
    metropolized_sgld_step, projected_sgld_step, run_chain, run_chain_visit, sgld_step, ChainConfig, Initial, SamplerKind,
};
use sgld::schedule::{bar_r_for, proj_radii};
use sgld::stochastic_gradient::{draw_batch, enumerate_batches};
use sgld::targets::{make_gaussian, make_noise_split, make_shifted_mixture, TargetModel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn unit() -> TargetModel {
    make_gaussian(&[0.0], 1.0, 1).unwrap()
}

#[test]
fn single_index_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[draw_batch(4, 1, &mut rng).unwrap().indices()[0]] += 1;
    }
    let sd = (draws as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - 0.25 * draws as f64).abs() <= 4.0 * sd, "{counts:?}");
    }
}

#[test]
fn pair_frequencies() {
    let en = enumerate_batches(6, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws = 100_000;
    let mut counts = vec![0usize; en.len()];
    for _ in 0..draws {
        let b = draw_batch(6, 2, &mut rng).unwrap();
        counts[en.batches().iter().position(|e| e == &b).unwrap()] += 1;
    }
    let p = 1.0 / 15.0;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - p * draws as f64).abs() <= 4.0 * sd), "{counts:?}");
}

#[test]
fn draws_match_enumeration_by_chi_square() {
    let draws = 100_000;
    for (n, b) in [(5, 2), (7, 3), (8, 4), (8, 1)] {
        let en = enumerate_batches(n, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64 * 10 + b as u64);
        let mut counts = vec![0usize; en.len()];
        for _ in 0..draws {
            let bt = draw_batch(n, b, &mut rng).unwrap();
            counts[en.batches().binary_search_by(|e| e.indices().cmp(bt.indices())).unwrap()] += 1;
        }
        let expect = draws as f64 / en.len() as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        let p = 1.0 - ChiSquared::new((en.len() - 1) as f64).unwrap().cdf(stat);
        assert!(p > 0.001, "n={n} B={b}: p = {p}");
    }
}

fn stationary_variance(model: &TargetModel, eta: f64, kind: SamplerKind, chains: usize, steps: usize, burn: usize) -> (f64, f64) {
    let per: Vec<(f64, f64, f64)> = map_range(chains, |c| {
        let cfg = ChainConfig::new(eta, 1.0, 1, steps).with_seed(5).with_chain_id(c as u64);
        let (mut s1, mut s2, mut k) = (0.0, 0.0, 0.0);
        run_chain_visit(model, &cfg, kind, |i, x| {
            if i > burn {
                s1 += x[0];
                s2 += x[0] * x[0];
                k += 1.0;
            }
        })
        .unwrap();
        (s1, s2, k)
    });
    let (s1, s2, k) = per.iter().fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mean = s1 / k;
    (mean, s2 / k - mean * mean)
}

#[test]
fn lmc_stationary_moments() {
    let eta = 0.01;
    let (mean, var) = stationary_variance(&unit(), eta, SamplerKind::Lmc, 100, 1_000_000, 2000);
    // AR(1): x' = (1 - eta) x + sqrt(2 eta) e
    let exact = 2.0 * eta / (1.0 - (1.0 - eta) * (1.0 - eta));
    assert!((exact - 1.005).abs() < 1e-3);
    assert!((var / exact - 1.0).abs() < 0.02, "{var} vs {exact}");
    // standard error of the mean with autocorrelation time (2 - eta) / eta
    let se = (exact * (2.0 - eta) / eta / 1e8).sqrt();
    assert!(mean.abs() < 3.0 * se, "{mean} vs {se}");
}

#[test]
fn sgld_noise_split_adds_injected_variance() {
    let eta = 0.01;
    let ns = make_noise_split(unit(), &[vec![1.0], vec![-1.0]]).unwrap();
    let (_, var) = stationary_variance(&ns, eta, SamplerKind::Sgld, 50, 1_000_000, 2000);
    let denom = 1.0 - (1.0 - eta) * (1.0 - eta);
    let lmc = 2.0 * eta / denom;
    let exact = lmc + eta * eta / denom;
    assert!((var / exact - 1.0).abs() < 0.02, "{var} vs {exact}");
    assert!(var > lmc);
}

#[test]
fn projected_matches_sgld_until_a_rejection() {
    let g = unit();
    let (eta, k, eps) = (0.01, 10_000, 0.1);
    let (r62, _) = proj_radii(eta, 1, 1.0, k as f64, eps).unwrap();
    let big_r = bar_r_for(&g, eps / (4.0 * k as f64), 1.0).unwrap();
    let cfg = ChainConfig::new(eta, 1.0, 1, k).with_seed(9).with_radii(big_r, r62);
    let a = run_chain(&g, &cfg, SamplerKind::Sgld).unwrap();
    let b = run_chain(&g, &cfg, SamplerKind::ProjectedSgld).unwrap();
    let first = b.rejection_events().unwrap().iter().position(|&r| r).unwrap_or(k);
    for i in 0..=first {
        assert_eq!(a.state(i), b.state(i));
    }
}

#[test]
fn projected_step_agrees_with_sgld_step_on_acceptance() {
    let g = unit();
    let cfg = ChainConfig::new(0.05, 1.0, 1, 1).with_radii(3.0, 1.0);
    for s in 0..50 {
        let x = [0.1 * s as f64 - 2.5];
        let plain = sgld_step(&g, &x, &cfg, &mut stream_rng(s, 0)).unwrap();
        let (y, rejected) = projected_sgld_step(&g, &x, &cfg, &mut stream_rng(s, 0)).unwrap();
        if rejected {
            assert_eq!(y, x.to_vec());
            assert!((plain[0] - x[0]).abs() > 1.0 || plain[0].abs() > 3.0);
        } else {
            assert_eq!(y, plain);
        }
    }
}

#[test]
fn metropolized_step_conventions() {
    use sgld::kernels::KernelEngine;
    let g = unit();
    let cfg = ChainConfig::new(0.05, 1.0, 1, 1).with_radii(3.0, 1.0);
    let e = KernelEngine::from_config(&g, &cfg).unwrap();
    let mut rng = stream_rng(1, 0);
    let mut lazy = 0;
    for _ in 0..200 {
        let (y, alpha) = metropolized_sgld_step(&g, &[0.5], &cfg, &e, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&alpha));
        if y == vec![0.5] && alpha == 1.0 {
            lazy += 1;
        }
    }
    // at least the lazy half stays put
    assert!(lazy > 70, "{lazy}");
    assert!(metropolized_sgld_step(&g, &[3.5], &cfg, &e, &mut rng).is_err());
}

#[test]
fn metropolized_histogram_matches_truncated_target() {
    let dw = make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &[vec![0.0]]).unwrap();
    let (eta, big_r, steps, bins) = (0.05, 4.0, 1_000_000, 40);
    let (_, r) = proj_radii(eta, 1, 1.0, steps as f64, 0.1).unwrap();
    let cfg = ChainConfig::new(eta, 1.0, 1, steps).with_seed(21).with_radii(big_r, r).with_initial(Initial::PointMass(vec![0.0]));
    let grid = Grid::for_ball(1, big_r, bins, 0.0).unwrap();
    let target = TruncatedTarget::new(&dw, 1.0, &grid, big_r).unwrap();
    let mut counts = vec![0u64; bins];
    run_chain_visit(&dw, &cfg, SamplerKind::MetropolizedSgld, |k, x| {
        if k > 0 {
            counts[grid.locate(x).unwrap()] += 1;
        }
    })
    .unwrap();
    let tv = 0.5 * counts.iter().zip(target.masses()).map(|(c, m)| (*c as f64 / steps as f64 - m).abs()).sum::<f64>();
    assert!(tv <= 0.05, "{tv}");
}

#[test]
fn projected_trajectories_respect_both_balls() {
    let dw = make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &[vec![0.0]]).unwrap();
    let (big_r, r) = (2.5, 0.3);
    let cfg = ChainConfig::new(0.05, 1.0, 1, 20_000).with_seed(2).with_radii(big_r, r);
    let t = run_chain(&dw, &cfg, SamplerKind::ProjectedSgld).unwrap();
    let rej = t.rejection_events().unwrap();
    assert!(rej.iter().any(|&x| x) && rej.iter().any(|&x| !x));
    for k in 0..t.len() - 1 {
        assert!(t.state(k + 1)[0].abs() <= big_r);
        if !rej[k] {
            assert!((t.state(k + 1)[0] - t.state(k)[0]).abs() <= r);
        } else {
            assert_eq!(t.state(k + 1), t.state(k));
        }
    }
}
