//! Small dense-vector helpers. Dimensions are tiny, so plain slices suffice.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Spectral norm of a symmetric `d x d` matrix stored row-major (d <= 2 exact, otherwise power iteration).
pub fn sym_spectral_norm(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0].abs(),
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (mid + rad).abs().max((mid - rad).abs())
        }
        _ => {
            let mut v = vec![1.0 / (d as f64).sqrt(); d];
            let mut lam = 0.0;
            for _ in 0..500 {
                let w: Vec<f64> = (0..d).map(|i| dot(&m[i * d..(i + 1) * d], &v)).collect();
                let nw = norm(&w);
                if nw == 0.0 {
                    return 0.0;
                }
                lam = nw;
                v = w.into_iter().map(|x| x / nw).collect();
            }
            lam
        }
    }
}
