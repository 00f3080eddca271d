use sgld::schedule::{delta_bound, delta_bound_hessian, schedule_hessian, schedule_plain, DeltaParams};
use sgld::targets::{make_gaussian, make_shifted_mixture, Constants, TargetModel};
use sgld::Error;

const RHO: f64 = 0.797_884_560_802_865_4;

fn unit(n: usize) -> TargetModel {
    make_gaussian(&[0.0], 1.0, n).unwrap()
}

#[test]
fn halving_eps_quarters_eta_up_to_log_factors() {
    let g = unit(1);
    let a = schedule_plain(&g, 1.0, 1, 0.1, 1.0, RHO).unwrap();
    let b = schedule_plain(&g, 1.0, 1, 0.05, 1.0, RHO).unwrap();
    assert_eq!((a.binding, b.binding), ("accuracy", "accuracy"));
    // eta = (eps / 4)^2 / (C1/B + C2)^2 with C1, C2 carrying the log factors of K and R
    let drift = ((a.c1 + a.c2) / (b.c1 + b.c2)).powi(2);
    assert!((b.eta / a.eta / (0.25 * drift) - 1.0).abs() < 1e-9);
    // the log factors only shrink the ratio
    assert!(b.eta / a.eta < 0.25 && b.k as f64 / a.k as f64 > 4.0);
}

#[test]
fn full_batch_limit_drops_the_batch_terms() {
    // the 1/B terms vanish as B = n grows, leaving the B-free branch values
    let a = schedule_plain(&unit(1_000_000_000), 1.0, 1_000_000_000, 0.1, 1.0, RHO).unwrap();
    let b = schedule_plain(&unit(100_000_000_000), 1.0, 100_000_000_000, 0.1, 1.0, RHO).unwrap();
    assert!((a.eta / b.eta - 1.0).abs() < 1e-3, "{} {}", a.eta, b.eta);
    let f4 = (1.0 + (8.0 * b.k as f64 / 0.1).ln().sqrt()).powi(4);
    let conductance_free = (RHO / (16.0 * 14.0)).powi(2) / f4;
    let accuracy_free = (0.1 / 4.0 / (224.0 * f4 / RHO)).powi(2);
    let want = conductance_free.min(accuracy_free);
    assert!((b.eta / want - 1.0).abs() < 1e-3, "{} vs {want}", b.eta);
}

#[test]
fn schedule_report_is_self_consistent() {
    let dw = make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &[vec![0.0]]).unwrap();
    let rep = schedule_plain(&dw, 1.0, 1, 0.2, 1.0, 0.3).unwrap();
    assert!(rep.eta > 0.0 && rep.k >= 1 && rep.delta < 1.0 && rep.big_r > 0.0);
    let k = ((rep.log_lambda_bound + (4.0f64 / 0.2).ln()) / (rep.c0_rate * rep.eta)).ceil();
    assert!((k / rep.k as f64 - 1.0).abs() < 1e-5);
    let min = rep.constraints.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    assert_eq!(min, rep.eta);
}

#[test]
fn hessian_eta_not_smaller_at_small_eps() {
    // matched inputs with a batch large enough that the noise branches do not bind
    let n = 1_000_000_000;
    let g = unit(n);
    let p = schedule_plain(&g, 1.0, n, 1e-3, 1.0, RHO).unwrap();
    let h = schedule_hessian(&g, 1.0, n, 1e-3, 1.0, RHO).unwrap();
    assert!(h.eta >= p.eta, "{} < {}", h.eta, p.eta);
}

#[test]
fn hessian_k_eps_exponent_crosses_over_with_batch_size() {
    let run = |n: usize| {
        let g = unit(n);
        let a = schedule_hessian(&g, 1.0, n, 1e-2, 1.0, RHO).unwrap();
        let b = schedule_hessian(&g, 1.0, n, 1e-3, 1.0, RHO).unwrap();
        ((b.k as f64 / a.k as f64).log10(), a.binding, b.binding)
    };
    let (small, s1, s2) = run(1);
    let (large, l1, l2) = run(1_000_000_000);
    assert_eq!((s1, s2), ("accuracy_noise", "accuracy_noise"));
    assert_eq!((l1, l2), ("accuracy_drift", "accuracy_drift"));
    // eps^{-2} against eps^{-1}; the log factors add about the same to both
    assert!(small > 2.0 && large > 1.0, "{small} {large}");
    assert!((small - large - 1.0).abs() < 0.2, "{small} {large}");
}

#[test]
fn hessian_needs_h() {
    let g = unit(1);
    let no_h = g.clone().with_constants(Constants { h: None, ..g.constants().clone() });
    assert!(matches!(schedule_hessian(&no_h, 1.0, 1, 0.1, 1.0, RHO), Err(Error::MissingConstant("H"))));
    assert!(matches!(schedule_plain(&g, 1.0, 1, 0.1, 1.0, -1.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(schedule_plain(&g, 1.0, 2, 0.1, 1.0, RHO), Err(Error::InvalidParameter(_))));
}

#[test]
fn delta_hand_values_at_the_example_point() {
    // eta = 1e-4, d = 1, beta = 1, B = 2, L = 1, R = 5, G = 0, K = 1e4, eps = 0.2
    let p = DeltaParams { eta: 1e-4, d: 1, beta: 1.0, batch_size: 2, l: 1.0, big_r: 5.0, g: 0.0, k: 1e4, eps: 0.2 };
    let f2 = (1.0 + 400_000f64.ln().sqrt()).powi(2);
    // 10 L d eta = 1e-3; 10 L (LR+G) eta^{3/2} = 50e-6; 12 * 25 * 1e-4 / 2 = 0.015; 2 * 625 * 1e-8 / 2 = 6.25e-6
    let plain = (1e-3 + 5e-5 + 0.015 + 6.25e-6) * f2;
    assert!((delta_bound(&p).unwrap() / plain - 1.0).abs() < 1e-12);
    // 28 H eta^{3/2} = 28e-6 with H = 1
    let hess = (28e-6 + 5e-5 + 0.015 + 6.25e-6) * f2;
    assert!((delta_bound_hessian(&p, Some(1.0)).unwrap() / hess - 1.0).abs() < 1e-12);
    assert!(matches!(delta_bound_hessian(&p, None), Err(Error::MissingConstant("H"))));
}

#[test]
fn hessian_delta_smaller_for_tiny_steps() {
    let p = DeltaParams { eta: 1e-6, d: 1, beta: 1.0, batch_size: 1_000_000, l: 1.0, big_r: 5.0, g: 0.0, k: 1e4, eps: 0.2 };
    assert!(delta_bound_hessian(&p, Some(1.0)).unwrap() < delta_bound(&p).unwrap());
    // with no curvature and a full batch only the eta^{3/2} terms are left
    let q = DeltaParams { batch_size: 1_000_000_000, ..p };
    let d1 = delta_bound_hessian(&q, Some(0.0)).unwrap();
    let d2 = delta_bound_hessian(&DeltaParams { eta: 4e-6, ..q }, Some(0.0)).unwrap();
    assert!((d2 / d1 / 8.0 - 1.0).abs() < 1e-3, "{}", d2 / d1);
}
