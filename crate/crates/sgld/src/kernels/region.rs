//! Integration over boxes intersected with balls, in one or two dimensions.

use crate::special::{gauss_interval_mass, gl_composite, gl_cosine, norm_pdf};

/// Axis-aligned box (only the first axis is used in 1D).
pub type Boxed = [(f64, f64); 2];

/// A box intersected with a list of balls `(center, radius)`.
#[derive(Clone, Debug)]
pub struct Region {
    pub dim: usize,
    pub bx: Boxed,
    pub balls: Vec<([f64; 2], f64)>,
}

impl Region {
    pub fn new(dim: usize, bx: Boxed) -> Self {
        Self { dim, bx, balls: Vec::new() }
    }

    pub fn with_ball(mut self, center: &[f64], radius: f64) -> Self {
        let mut c = [0.0; 2];
        c[..center.len()].copy_from_slice(center);
        self.balls.push((c, radius));
        self
    }

    /// In 1D the region is an interval; returns it if nonempty.
    pub fn interval(&self) -> Option<(f64, f64)> {
        let (mut a, mut b) = self.bx[0];
        for (c, r) in &self.balls {
            a = a.max(c[0] - r);
            b = b.min(c[0] + r);
        }
        (b > a).then_some((a, b))
    }

    /// x-extent of a 2D region.
    fn x_range(&self) -> Option<(f64, f64)> {
        let (mut a, mut b) = self.bx[0];
        for (c, r) in &self.balls {
            a = a.max(c[0] - r);
            b = b.min(c[0] + r);
        }
        (b > a).then_some((a, b))
    }

    /// y-limits of the vertical slice at `x` (2D).
    pub fn y_limits(&self, x: f64) -> (f64, f64) {
        let (mut lo, mut hi) = self.bx[1];
        for (c, r) in &self.balls {
            let s2 = r * r - (x - c[0]) * (x - c[0]);
            if s2 <= 0.0 {
                return (0.0, 0.0);
            }
            let s = s2.sqrt();
            lo = lo.max(c[1] - s);
            hi = hi.min(c[1] + s);
        }
        (lo, hi)
    }

    /// Points where the slice limits of a 2D region change smoothness, inside `[a, b]`.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a, b];
        let ys = [self.bx[1].0, self.bx[1].1];
        for (i, (c, r)) in self.balls.iter().enumerate() {
            pts.push(c[0] - r);
            pts.push(c[0] + r);
            for y in ys {
                let s2 = r * r - (y - c[1]) * (y - c[1]);
                if s2 > 0.0 {
                    pts.push(c[0] - s2.sqrt());
                    pts.push(c[0] + s2.sqrt());
                }
            }
            for (c2, r2) in &self.balls[i + 1..] {
                for x in circle_intersections_x(*c, *r, *c2, *r2) {
                    pts.push(x);
                }
            }
        }
        pts.retain(|x| x.is_finite() && *x >= a && *x <= b);
        pts.sort_by(|p, q| p.total_cmp(q));
        pts.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * (1.0 + p.abs()));
        pts
    }

    /// Outer pieces for slice integration, clipped to `window` and at most `max_width` wide.
    fn pieces(&self, window: (f64, f64), max_width: f64) -> Vec<(f64, f64)> {
        let Some((a, b)) = self.x_range() else { return Vec::new() };
        let (a, b) = (a.max(window.0), b.min(window.1));
        if b <= a {
            return Vec::new();
        }
        let pts = self.breakpoints(a, b);
        let mut out = Vec::new();
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            if q <= p {
                continue;
            }
            let k = ((q - p) / max_width).ceil().max(1.0) as usize;
            let step = (q - p) / k as f64;
            for t in 0..k {
                out.push((p + step * t as f64, if t + 1 == k { q } else { p + step * (t + 1) as f64 }));
            }
        }
        out
    }
}

fn circle_intersections_x(c1: [f64; 2], r1: f64, c2: [f64; 2], r2: f64) -> Vec<f64> {
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let mx = c1[0] + a * dx / d;
    vec![mx + h * dy / d, mx - h * dy / d]
}

const OUTER_DEG: usize = 32;
const PANEL_DEG: usize = 16;

/// Mass of the region under the equal-weight mixture of `N(mean_k, sigma^2 I)`.
/// `means` is flat with `dim` entries per component.
pub fn gauss_mixture_mass(region: &Region, means: &[f64], sigma: f64) -> f64 {
    let d = region.dim;
    let k = means.len() / d;
    if d == 1 {
        let Some((a, b)) = region.interval() else { return 0.0 };
        return means.iter().map(|&m| gauss_interval_mass(m, sigma, a, b)).sum::<f64>() / k as f64;
    }
    let (mut wlo, mut whi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in means.chunks(2) {
        wlo = wlo.min(c[0] - 12.0 * sigma);
        whi = whi.max(c[0] + 12.0 * sigma);
    }
    let mut total = 0.0;
    for (p, q) in region.pieces((wlo, whi), sigma) {
        total += gl_cosine(p, q, OUTER_DEG, |x| {
            let (ylo, yhi) = region.y_limits(x);
            if yhi <= ylo {
                return 0.0;
            }
            means
                .chunks(2)
                .map(|c| norm_pdf((x - c[0]) / sigma) / sigma * gauss_interval_mass(c[1], sigma, ylo, yhi))
                .sum::<f64>()
        });
    }
    total / k as f64
}

/// `int_region f`, where `scale` is a length over which `f` varies appreciably and
/// `window` bounds the first coordinate of the support that matters.
pub fn integrate(region: &Region, scale: f64, window: (f64, f64), f: impl Fn(&[f64]) -> f64) -> f64 {
    if region.dim == 1 {
        let Some((a, b)) = region.interval() else { return 0.0 };
        let (a, b) = (a.max(window.0), b.min(window.1));
        if b <= a {
            return 0.0;
        }
        let panels = ((b - a) / scale).ceil().max(1.0) as usize;
        return gl_composite(a, b, panels, PANEL_DEG, |x| f(&[x]));
    }
    let mut total = 0.0;
    for (p, q) in region.pieces(window, scale) {
        total += gl_cosine(p, q, OUTER_DEG, |x| {
            let (ylo, yhi) = region.y_limits(x);
            if yhi <= ylo {
                return 0.0;
            }
            let panels = ((yhi - ylo) / scale).ceil().max(1.0) as usize;
            gl_composite(ylo, yhi, panels, PANEL_DEG, |y| f(&[x, y]))
        });
    }
    total
}
