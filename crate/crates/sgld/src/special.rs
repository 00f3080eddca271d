//! Scalar special functions and quadrature rules.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mass of `N(mu, sigma^2)` on `[a, b]`, computed from whichever tail avoids cancellation.
pub fn gauss_interval_mass(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let za = (a - mu) / sigma;
    let zb = (b - mu) / sigma;
    let m = if za >= 0.0 {
        norm_sf(za) - norm_sf(zb)
    } else if zb <= 0.0 {
        norm_cdf(zb) - norm_cdf(za)
    } else {
        1.0 - norm_cdf(za) - norm_sf(zb)
    };
    m.max(0.0)
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn rule(deg: usize) -> &'static [(f64, f64)] {
    static R8: OnceLock<GaussLegendre> = OnceLock::new();
    static R16: OnceLock<GaussLegendre> = OnceLock::new();
    static R32: OnceLock<GaussLegendre> = OnceLock::new();
    let cell = match deg {
        8 => &R8,
        16 => &R16,
        32 => &R32,
        _ => panic!("unsupported Gauss-Legendre degree {deg}"),
    };
    cell.get_or_init(|| GaussLegendre::new(deg).expect("degree >= 2"))
        .as_node_weight_pairs()
}

/// Gauss-Legendre nodes on `[-1, 1]` for degree 8, 16 or 32.
pub fn gl_nodes(deg: usize) -> &'static [(f64, f64)] {
    rule(deg)
}

/// Composite Gauss-Legendre over `[a, b]` with `panels` equal panels of degree `deg`.
pub fn gl_composite(a: f64, b: f64, panels: usize, deg: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let nodes = rule(deg);
    let w = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + w * p as f64;
        let mid = lo + 0.5 * w;
        let mut s = 0.0;
        for &(x, wt) in nodes {
            s += wt * f(mid + 0.5 * w * x);
        }
        acc += 0.5 * w * s;
    }
    acc
}

/// Gauss-Legendre over `[a, b]` after the substitution `x = a + (b - a)(1 - cos t)/2`,
/// which absorbs square-root behaviour at both endpoints.
pub fn gl_cosine(a: f64, b: f64, deg: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for &(t, wt) in rule(deg) {
        // t in [-1, 1] maps to theta in [0, pi]
        let th = 0.5 * std::f64::consts::PI * (t + 1.0);
        let x = a + half * (1.0 - th.cos());
        s += wt * f(x) * half * th.sin();
    }
    s * 0.5 * std::f64::consts::PI
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}
