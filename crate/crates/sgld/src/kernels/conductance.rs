use crate::error::{Error, Result};
use crate::kernels::discrete::{DiscretizedKernel, Layout};

/// States up to which every subset is tried.
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Clone, Debug)]
pub struct ConductanceResult {
    pub phi: f64,
    /// True when every subset was tried; otherwise `phi` is the minimum over a cut family and
    /// only an upper bound on the true conductance.
    pub exhaustive: bool,
    /// States on the smaller-mass side of the minimizing cut.
    pub cut: Vec<usize>,
}

/// `min_A sum_{i in A} pi_i T_i(A^c) / min(pi(A), pi(A^c))`.
///
/// Exhaustive for at most [`EXHAUSTIVE_LIMIT`] states. Larger path-layout kernels use every
/// contiguous interval of states (whose complements cover two-sided tails); planar kernels use
/// threshold cuts along the two axes, both diagonals and the distance from the origin.
pub fn conductance(kernel: &DiscretizedKernel) -> Result<ConductanceResult> {
    kernel.validate()?;
    let pi = kernel
        .stationary()
        .ok_or_else(|| Error::InvalidKernel("conductance needs a stationary vector".into()))?;
    let n = kernel.num_states();
    if n < 2 {
        return Err(Error::InvalidKernel("conductance needs at least two states".into()));
    }
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|p| p / total).collect();
    if n <= EXHAUSTIVE_LIMIT {
        return Ok(exhaustive(kernel, &pi));
    }
    Ok(match kernel.layout() {
        Layout::Path => intervals(kernel, &pi),
        Layout::Plane { coords } => {
            let orders: [&dyn Fn(&[f64; 2]) -> f64; 5] =
                [&|c| c[0], &|c| c[1], &|c| c[0] + c[1], &|c| c[0] - c[1], &|c| c[0].hypot(c[1])];
            let mut best: Option<ConductanceResult> = None;
            for key in orders {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| key(&coords[a]).total_cmp(&key(&coords[b])).then(a.cmp(&b)));
                let r = sweep(kernel, &pi, &idx);
                if best.as_ref().is_none_or(|b| r.phi < b.phi) {
                    best = Some(r);
                }
            }
            best.expect("at least one ordering")
        }
    })
}

fn ratio(flow: f64, mass_a: f64) -> f64 {
    let denom = mass_a.min(1.0 - mass_a);
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        (flow / denom).max(0.0)
    }
}

fn smaller_side(members: Vec<usize>, mass_a: f64, n: usize) -> Vec<usize> {
    if mass_a <= 0.5 {
        members
    } else {
        let mut inside = vec![false; n];
        members.iter().for_each(|&i| inside[i] = true);
        (0..n).filter(|&i| !inside[i]).collect()
    }
}

fn exhaustive(kernel: &DiscretizedKernel, pi: &[f64]) -> ConductanceResult {
    let n = kernel.num_states();
    let w: Vec<Vec<f64>> = kernel.to_dense().iter().zip(pi).map(|(row, p)| row.iter().map(|t| p * t).collect()).collect();
    // Gray-code walk: A changes by one state per step; inflow[j] = sum_{i in A} w_ij
    let mut inflow = vec![0.0; n];
    let mut member = vec![false; n];
    let mut mass = 0.0;
    let mut best = (f64::INFINITY, 0u64, 0.0);
    let count = 1u64 << n;
    let mut prev_gray = 0u64;
    for step in 1..count {
        let gray = step ^ (step >> 1);
        let k = (gray ^ prev_gray).trailing_zeros() as usize;
        prev_gray = gray;
        let sign = if member[k] { -1.0 } else { 1.0 };
        member[k] = !member[k];
        mass += sign * pi[k];
        if step % 1024 == 0 {
            // refresh to keep rounding from accumulating over millions of updates
            mass = (0..n).filter(|&i| member[i]).map(|i| pi[i]).sum();
            for (j, f) in inflow.iter_mut().enumerate() {
                *f = (0..n).filter(|&i| member[i]).map(|i| w[i][j]).sum();
            }
        } else {
            for j in 0..n {
                inflow[j] += sign * w[k][j];
            }
        }
        if gray == count - 1 {
            continue;
        }
        let inner: f64 = (0..n).filter(|&j| member[j]).map(|j| inflow[j]).sum();
        let phi = ratio(mass - inner, mass);
        if phi < best.0 {
            best = (phi, gray, mass);
        }
    }
    let members = (0..n).filter(|&i| best.1 >> i & 1 == 1).collect();
    ConductanceResult { phi: best.0, exhaustive: true, cut: smaller_side(members, best.2, n) }
}

fn intervals(kernel: &DiscretizedKernel, pi: &[f64]) -> ConductanceResult {
    let n = kernel.num_states();
    let m = kernel.matrix();
    let bw = m.bandwidth();
    let w = |i: usize, j: usize| pi[i] * m.get(i, j);
    // left[a] = flow from states >= a to states < a; right[b] = flow from states <= b to states > b
    let mut left = vec![0.0; n + 1];
    let mut right = vec![0.0; n];
    for i in 0..n {
        for (j, t) in m.row(i) {
            let f = pi[i] * t;
            if j < i {
                for a in j + 1..=i {
                    left[a] += f;
                }
            } else if j > i {
                for b in i..j {
                    right[b] += f;
                }
            }
        }
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + pi[i];
    }
    let mut best = (f64::INFINITY, 0, 0, 0.0);
    for a in 0..n {
        // short intervals, where both ends interact, directly
        let mut flow = 0.0;
        let short_end = (a + bw).min(n - 1);
        for b in a..=short_end {
            for i in a..b {
                flow -= w(i, b);
            }
            for (j, t) in m.row(b) {
                if j < a || j > b {
                    flow += pi[b] * t;
                }
            }
            if !(a == 0 && b == n - 1) {
                let phi = ratio(flow, prefix[b + 1] - prefix[a]);
                if phi < best.0 {
                    best = (phi, a, b, prefix[b + 1] - prefix[a]);
                }
            }
        }
        // longer intervals: the two boundary flows separate
        for b in short_end + 1..n {
            if a == 0 && b == n - 1 {
                continue;
            }
            let mass = prefix[b + 1] - prefix[a];
            let phi = ratio(left[a] + right[b], mass);
            if phi < best.0 {
                best = (phi, a, b, mass);
            }
        }
    }
    let members = (best.1..=best.2).collect();
    ConductanceResult { phi: best.0, exhaustive: false, cut: smaller_side(members, best.3, n) }
}

/// Prefix cuts of a fixed ordering of the states.
fn sweep(kernel: &DiscretizedKernel, pi: &[f64], order: &[usize]) -> ConductanceResult {
    let n = kernel.num_states();
    let m = kernel.matrix();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, t) in m.row(i) {
            cols[j].push((i, pi[i] * t));
        }
    }
    let mut member = vec![false; n];
    let mut inner = 0.0;
    let mut mass = 0.0;
    let mut best = (f64::INFINITY, 0, 0.0);
    for (k, &s) in order.iter().enumerate().take(n - 1) {
        member[s] = true;
        inner += m.row(s).filter(|&(j, _)| member[j] && j != s).map(|(_, t)| pi[s] * t).sum::<f64>();
        inner += cols[s].iter().filter(|&&(i, _)| member[i]).map(|&(_, v)| v).sum::<f64>();
        mass += pi[s];
        let phi = ratio(mass - inner, mass);
        if phi < best.0 {
            best = (phi, k, mass);
        }
    }
    let members = order[..=best.1].to_vec();
    ConductanceResult { phi: best.0, exhaustive: false, cut: smaller_side(members, best.2, n) }
}
