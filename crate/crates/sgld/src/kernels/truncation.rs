//! Mass of the target outside the truncation ball.

use crate::error::{invalid, Error, Result};
use crate::kernels::discrete::density_scale;
use crate::special::gl_composite;
use crate::targets::TargetModel;

/// Target for the tail bound: the density beyond the quadrature cutoff is at most this fraction
/// of the computed normalizer.
const CUTOFF_TOLERANCE: f64 = 1e-13;

/// `exp(-beta (f - f*))` integrated over `{lo <= |x| <= hi}` in one or two dimensions.
pub(crate) fn radial_mass(model: &TargetModel, beta: f64, f_star: f64, lo: f64, hi: f64, weight: &dyn Fn(&[f64]) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let scale = density_scale(model, beta);
    let dens = |x: &[f64]| (-beta * (model.value(x) - f_star)).exp() * weight(x);
    let panels = ((hi - lo) / scale).ceil().max(1.0) as usize;
    if model.dim() == 1 {
        gl_composite(-hi, -lo, panels, 16, |x| dens(&[x])) + gl_composite(lo, hi, panels, 16, |x| dens(&[x]))
    } else {
        gl_composite(lo, hi, panels, 16, |rho| {
            // periodic integrand: the trapezoid rule converges geometrically
            let k = (((2.0 * std::f64::consts::PI * rho) / scale).ceil() as usize * 4).max(64);
            let dt = 2.0 * std::f64::consts::PI / k as f64;
            let s: f64 = (0..k)
                .map(|j| {
                    let t = j as f64 * dt;
                    dens(&[rho * t.cos(), rho * t.sin()])
                })
                .sum();
            s * dt * rho
        })
    }
}

/// Quadrature support for `exp(-beta f)`: a radius of at least `min_radius` beyond which the
/// quadratic lower bound `f(x) >= (m/4)|x|^2 + f(x*) - b/2` leaves less than `1e-13` of the
/// mass. Returns the radius and `f(x*)`.
pub fn quadrature_cutoff(model: &TargetModel, beta: f64, min_radius: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0) {
        return Err(invalid("need beta > 0"));
    }
    let d = model.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!("tail quadrature needs d <= 2, got d = {d}")));
    }
    let xstar = model.minimizer().ok_or(Error::MissingConstant("minimizer"))?;
    let c = model.constants();
    let f_star = xstar.value;
    let a = beta * c.m / 4.0;
    // mass of e^{beta b/2} e^{-a|x|^2} beyond radius s
    let tail_bound = |s: f64| -> f64 {
        let pre = (beta * c.b / 2.0).exp();
        if d == 1 {
            pre * (std::f64::consts::PI / a).sqrt() * libm::erfc(a.sqrt() * s)
        } else {
            pre * std::f64::consts::PI / a * (-a * s * s).exp()
        }
    };
    let mut cutoff = (crate::linalg::norm(&xstar.x) + 8.0 / a.sqrt()).max(min_radius);
    for _ in 0..80 {
        let total = radial_mass(model, beta, f_star, 0.0, cutoff, &|_| 1.0);
        if tail_bound(cutoff) <= CUTOFF_TOLERANCE * total {
            return Ok((cutoff, f_star));
        }
        cutoff *= 1.25;
    }
    Err(Error::DomainTooSmall(format!("no quadrature cutoff with tail below {CUTOFF_TOLERANCE} found up to {cutoff}")))
}

/// Unnormalized masses of `exp(-beta (f - f*))` inside and outside `B(0, R)`.
fn split_masses(model: &TargetModel, beta: f64, big_r: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0) || !(big_r > 0.0) {
        return Err(invalid("need beta > 0 and R > 0"));
    }
    let (cutoff, f_star) = quadrature_cutoff(model, beta, big_r)?;
    let inner = radial_mass(model, beta, f_star, 0.0, big_r, &|_| 1.0);
    let outer = radial_mass(model, beta, f_star, big_r, cutoff, &|_| 1.0);
    Ok((inner, outer))
}

/// `1 - pi(B(0, R))` for `pi ∝ exp(-beta f)`, by quadrature.
pub fn tail_mass(model: &TargetModel, beta: f64, big_r: f64) -> Result<f64> {
    let (inner, outer) = split_masses(model, beta, big_r)?;
    Ok(outer / (inner + outer))
}

/// `||pi* - pi||_TV` where `pi*` is `pi` conditioned on `B(0, R)`.
///
/// On the ball the two densities differ by the factor `1 / pi(Omega)`, so the distance is
/// `1/2 [(1 - pi(Omega)) + pi(Omega^c)] = pi(Omega^c)`; both halves are computed separately.
pub fn truncation_tv(model: &TargetModel, beta: f64, big_r: f64) -> Result<f64> {
    let (inner, outer) = split_masses(model, beta, big_r)?;
    let z = inner + outer;
    let p_omega = inner / z;
    let on_ball = inner / z * (1.0 / p_omega - 1.0);
    let off_ball = outer / z;
    Ok(0.5 * (on_ball + off_ball))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_sf;
    use crate::targets::{make_gaussian, make_shifted_mixture};

    #[test]
    fn unit_gaussian_tail_matches_erfc() {
        let g = make_gaussian(&[0.0], 1.0, 1).unwrap();
        let t = tail_mass(&g, 1.0, 3.0).unwrap();
        assert!((t - 2.0 * norm_sf(3.0)).abs() < 1e-12, "{t}");
        assert!((t - 0.0027).abs() < 1e-4);
        assert!(truncation_tv(&g, 1.0, 50.0).unwrap() <= 1e-10);
        let tv = truncation_tv(&g, 1.0, 2.0).unwrap();
        assert!((tv - 2.0 * norm_sf(2.0)).abs() < 1e-12);
    }

    #[test]
    fn two_dim_gaussian_tail() {
        // chi-square with two degrees of freedom: P(|Z| > R) = exp(-R^2 / 2)
        let g = make_gaussian(&[0.0, 0.0], 1.0, 1).unwrap();
        let t = tail_mass(&g, 1.0, 2.0).unwrap();
        assert!((t - (-2.0f64).exp()).abs() < 1e-11, "{t}");
        let tb = tail_mass(&g, 2.0, 1.5).unwrap();
        assert!((tb - (-2.25f64).exp()).abs() < 1e-11, "{tb}");
    }

    #[test]
    fn needs_a_minimizer() {
        let w = make_shifted_mixture(&[0.5, 0.5], &[vec![-2.0], vec![2.0]], &[vec![0.0]]).unwrap();
        let stripped = w.clone().with_minimizer(None);
        assert!(matches!(tail_mass(&stripped, 1.0, 3.0), Err(Error::MissingConstant(_))));
        assert!(tail_mass(&w, 1.0, 3.0).is_ok());
    }
}
