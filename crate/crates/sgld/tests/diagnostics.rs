use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sgld::diagnostics::{
    binned_target, conductance_sweep, eta_sweep, geometric_grid, poly_growth_gap, tv_between, tv_estimate, ConductanceSweep,
    ConductanceSweepPlan, Histogram, RadiusRule, ScalingFit, StepsRule, SweepPlan,
};
use sgld::par::map_range;
use sgld::samplers::{run_chain_visit, ChainConfig, Initial, SamplerKind};
use sgld::targets::{make_gaussian, make_shifted_mixture, TargetModel};
use sgld::Error;

fn unit() -> TargetModel {
    make_gaussian(&[0.0], 1.0, 1).unwrap()
}

fn double_well() -> TargetModel {
    make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &[vec![0.0]]).unwrap()
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Bin masses of N(0, var) on `bins` cells over [lo, hi] plus both tails, by the normal CDF.
fn normal_bins(var: f64, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let s = var.sqrt();
    let w = (hi - lo) / bins as f64;
    let mut p = vec![phi(lo / s)];
    p.extend((0..bins).map(|i| phi((lo + (i + 1) as f64 * w) / s) - phi((lo + i as f64 * w) / s)));
    p.push(phi(-hi / s));
    p
}

/// TV between N(0, 1) and N(0, v): the densities cross at +-c with c^2 = v ln v / (v - 1).
fn gaussian_scale_tv(v: f64) -> f64 {
    let c = (v * v.ln() / (v - 1.0)).sqrt();
    2.0 * (phi(c) - phi(c / v.sqrt()))
}

#[test]
fn binned_unit_gaussian_matches_the_normal_cdf() {
    let t = binned_target(&unit(), 1.0, -5.0, 5.0, 200).unwrap();
    let want = normal_bins(1.0, -5.0, 5.0, 200);
    assert_eq!(t.probs.len(), 202);
    for (a, b) in t.probs.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }
}

#[test]
fn exact_multinomial_draws_shrink_like_root_bins_over_n() {
    let bins = 50;
    let t = binned_target(&unit(), 1.0, -4.0, 4.0, bins).unwrap();
    let w = 8.0 / bins as f64;
    let centers: Vec<f64> = std::iter::once(-5.0).chain((0..bins).map(|i| -4.0 + (i as f64 + 0.5) * w)).chain(std::iter::once(5.0)).collect();
    let pick = WeightedIndex::new(&t.probs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut last = f64::INFINITY;
    for n in [10_000usize, 1_000_000] {
        let h = Histogram::from_samples(-4.0, 4.0, bins, (0..n).map(|_| centers[pick.sample(&mut rng)])).unwrap();
        let tv = tv_estimate(&h, &t).unwrap();
        assert!(tv <= (bins as f64 / n as f64).sqrt(), "n={n}: {tv}");
        assert!(tv < last);
        last = tv;
    }
}

#[test]
fn disjoint_supports_are_at_distance_one() {
    let a = Histogram::from_samples(0.0, 1.0, 10, [0.01, 0.02, 0.05]).unwrap();
    let b = Histogram::from_samples(0.0, 1.0, 10, [0.95, 0.99, 1.0]).unwrap();
    assert_eq!(tv_between(&a, &b).unwrap(), 1.0);
    assert_eq!(tv_between(&a, &a).unwrap(), 0.0);
    // all mass out of range on opposite sides
    let c = Histogram::from_samples(0.0, 1.0, 10, [-3.0]).unwrap();
    let d = Histogram::from_samples(0.0, 1.0, 10, [7.0]).unwrap();
    assert_eq!(tv_between(&c, &d).unwrap(), 1.0);
}

#[test]
fn mismatched_edges_are_rejected() {
    let t = binned_target(&unit(), 1.0, -5.0, 5.0, 200).unwrap();
    let h = Histogram::new(-5.0, 5.0, 100).unwrap();
    assert!(matches!(tv_estimate(&h, &t), Err(Error::InvalidParameter(_))));
    let g = Histogram::new(-4.0, 5.0, 200).unwrap();
    assert!(matches!(tv_estimate(&g, &t), Err(Error::InvalidParameter(_))));
    assert!(matches!(tv_between(&g, &h), Err(Error::InvalidParameter(_))));
}

#[test]
fn overflow_is_counted_and_reported() {
    let h = Histogram::from_samples(-1.0, 1.0, 4, [-2.0, -1.0, 0.0, 0.999, 1.0, 1.5, 9.0]).unwrap();
    assert_eq!((h.underflow(), h.overflow()), (1, 2));
    assert_eq!(h.counts(), &[1, 0, 1, 2]);
    assert_eq!(h.counts().iter().sum::<u64>() + h.underflow() + h.overflow(), h.total());
    let p = h.probabilities();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(h.edges(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
}

#[test]
fn histogram_total_is_length_minus_burn_in() {
    let cfg = ChainConfig::new(0.1, 1.0, 1, 999).with_seed(4);
    let burn = 400;
    let mut h = Histogram::new(-5.0, 5.0, 20).unwrap();
    run_chain_visit(&unit(), &cfg, SamplerKind::Lmc, |k, x| if k < burn { h.skip() } else { h.add(x[0]) }).unwrap();
    assert_eq!(h.burn_in_discarded(), burn as u64);
    assert_eq!(h.total(), 1000 - burn as u64);
}

#[test]
fn lmc_on_the_unit_gaussian_is_within_two_percent() {
    // 1000 chains, 5000 burn-in steps, then 1000 samples 250 steps apart: 1e6 samples
    let (eta, chains, burn, thin, per) = (1e-3, 1000, 5000, 250, 1000);
    let parts: Vec<Histogram> = map_range(chains, |c| {
        let cfg = ChainConfig::new(eta, 1.0, 1, burn + thin * per).with_seed(77).with_chain_id(c as u64);
        let mut h = Histogram::new(-5.0, 5.0, 200).unwrap();
        run_chain_visit(&unit(), &cfg, SamplerKind::Lmc, |k, x| {
            if k > burn && (k - burn) % thin == 0 {
                h.add(x[0]);
            }
        })
        .unwrap();
        h
    });
    let mut all = parts[0].clone();
    parts[1..].iter().for_each(|h| all.merge(h).unwrap());
    assert_eq!(all.total(), 1_000_000);
    let tv = tv_estimate(&all, &binned_target(&unit(), 1.0, -5.0, 5.0, 200).unwrap()).unwrap();
    assert!(tv <= 0.02, "{tv}");
}

#[test]
fn lmc_calibration_floor_matches_the_closed_form() {
    // stationary law N(0, 1 / (1 - eta / 2)); coarse bins keep the sampling noise well below the floor
    let (eta, bins, chains, steps, burn) = (0.05, 20, 100, 2_000_000, 2000);
    let v = 1.0 / (1.0 - eta / 2.0);
    let parts: Vec<Histogram> = map_range(chains, |c| {
        let cfg = ChainConfig::new(eta, 1.0, 1, steps).with_seed(5).with_chain_id(c as u64).with_initial(Initial::PointMass(vec![0.0]));
        let mut h = Histogram::new(-5.0, 5.0, bins).unwrap();
        run_chain_visit(&unit(), &cfg, SamplerKind::Lmc, |k, x| if k <= burn { h.skip() } else { h.add(x[0]) }).unwrap();
        h
    });
    let mut all = parts[0].clone();
    parts[1..].iter().for_each(|h| all.merge(h).unwrap());
    let measured = tv_estimate(&all, &binned_target(&unit(), 1.0, -5.0, 5.0, bins).unwrap()).unwrap();
    let exact = gaussian_scale_tv(v);
    let p = normal_bins(1.0, -5.0, 5.0, bins);
    let q = normal_bins(v, -5.0, 5.0, bins);
    let binned = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    // binning can only lower the distance
    assert!(binned <= exact && binned > 0.9 * exact, "{binned} {exact}");
    assert!((measured / exact - 1.0).abs() < 0.2, "measured {measured}, closed form {exact}");
}

#[test]
fn constant_and_odd_functions_have_no_gap() {
    let dw = double_well();
    let samples: Vec<Vec<f64>> = map_range(400, |c| {
        let cfg = ChainConfig::new(0.05, 1.0, 1, 4000).with_seed(8).with_chain_id(c as u64);
        let mut last = vec![0.0];
        run_chain_visit(&dw, &cfg, SamplerKind::Sgld, |_, x| last = x.to_vec()).unwrap();
        last
    });
    let one = poly_growth_gap(&samples, &|_| 1.0, 1.0, 0, &dw, 1.0).unwrap();
    assert!(one.gap < 1e-12 && one.std_error == 0.0, "{one:?}");
    // the symmetric initial law and target make the sample mean of x a zero-mean estimate
    let odd = poly_growth_gap(&samples, &|x| x[0], 1.0, 1, &dw, 1.0).unwrap();
    assert!(odd.target_mean.abs() < 1e-10);
    assert!(odd.gap <= 4.0 * odd.std_error, "{odd:?}");
    let sq = poly_growth_gap(&samples, &|x| x[0] * x[0], 1.0, 2, &unit(), 1.0).unwrap();
    assert!((sq.target_mean - 1.0).abs() < 1e-10);
}

#[test]
fn zero_drift_control_has_a_flat_floor() {
    // exact draws carry no step-size bias, so the floor is the binning and sampling error alone
    let etas = geometric_grid(1e-4, 1e-1, 7).unwrap();
    let t = binned_target(&unit(), 1.0, -5.0, 5.0, 200).unwrap();
    let values: Vec<Vec<f64>> = (0..8u64)
        .map(|s| {
            etas.iter()
                .enumerate()
                .map(|(i, _)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 * s + i as u64);
                    let draws = (0..100_000).map(|_| rng.sample::<f64, _>(StandardNormal));
                    tv_estimate(&Histogram::from_samples(-5.0, 5.0, 200, draws).unwrap(), &t).unwrap()
                })
                .collect()
        })
        .collect();
    let fit = ScalingFit::fit_replicates(&etas, &values).unwrap();
    assert!(fit.slope.abs() < 0.05 && fit.half_width < 0.1, "{fit:?}");
}


#[test]
fn sweep_is_deterministic_and_fits_every_cell() {
    let tmpl = ChainConfig::new(0.1, 1.0, 1, 1).with_initial(Initial::PointMass(vec![0.0]));
    let plan = SweepPlan { kind: SamplerKind::Lmc, steps: StepsRule::Fixed(20_000), bins: 40, lo: -4.0, hi: 4.0, burn_in: 0.5 };
    let etas = geometric_grid(0.02, 0.2, 4).unwrap();
    let a = eta_sweep(&unit(), &tmpl, &etas, &[1, 2, 3], &plan).unwrap();
    let b = eta_sweep(&unit(), &tmpl, &etas, &[1, 2, 3], &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 12);
    assert!(a.cells.iter().all(|c| (0.0..=1.0).contains(&c.tv) && c.steps == 20_000));
    assert!(a.fit.slope.is_finite() && a.fit.x.len() == 4);
    let mut buf = Vec::new();
    a.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("eta,seed,steps,tv\n") && text.lines().count() == 14);
}

#[test]
fn sweeps_reject_non_geometric_grids() {
    let tmpl = ChainConfig::new(0.1, 1.0, 1, 1);
    let plan = SweepPlan { kind: SamplerKind::Lmc, steps: StepsRule::Fixed(10), bins: 10, lo: -4.0, hi: 4.0, burn_in: 0.5 };
    let bad = [0.01, 0.02, 0.03, 0.04];
    assert!(matches!(eta_sweep(&unit(), &tmpl, &bad, &[1], &plan), Err(Error::InvalidParameter(_))));
    assert!(matches!(eta_sweep(&unit(), &tmpl, &bad[..3], &[1], &plan), Err(Error::InvalidParameter(_))));
    let cplan = ConductanceSweepPlan { big_r: 3.0, radius: RadiusRule::Fixed(1.0), cells_per_sigma: 4.0, cheeger_cells: 60 };
    assert!(matches!(conductance_sweep(&unit(), &tmpl, &bad, &cplan), Err(Error::InvalidParameter(_))));
}

#[test]
fn two_state_control_has_slope_one_half() {
    // cross mass c sqrt(eta) by construction
    let etas = geometric_grid(1e-4, 1.0, 9).unwrap();
    let phis: Vec<f64> = etas.iter().map(|e| 0.3 * e.sqrt()).collect();
    let rho = 0.8;
    let s = ConductanceSweep::from_measurements(etas, phis, vec![2; 9], rho, 1.0).unwrap();
    assert!((s.fit.slope - 0.5).abs() < 1e-12);
    assert!((s.c0 - 0.3 / rho).abs() < 1e-12);
    assert!(s.lower_bound_holds());
}

#[test]
fn conductance_sweep_stays_below_one_and_repeats() {
    let n6 = make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &[vec![0.0], vec![0.3], vec![-0.3]]).unwrap();
    let tmpl = ChainConfig::new(0.1, 1.0, 1, 1);
    let plan = ConductanceSweepPlan { big_r: 4.0, radius: RadiusRule::Fixed(4.0), cells_per_sigma: 2.0, cheeger_cells: 200 };
    let etas = geometric_grid(0.01, 0.16, 5).unwrap();
    let a = conductance_sweep(&n6, &tmpl, &etas, &plan).unwrap();
    assert!(a.phis.iter().all(|p| *p > 0.0 && *p <= 1.0), "{:?}", a.phis);
    assert!(a.c0 > 0.0 && a.lower_bound_holds());
    assert_eq!(a, conductance_sweep(&n6, &tmpl, &etas, &plan).unwrap());
}
