//! Mini-batches drawn without replacement and the stochastic gradient `g(x, I)`.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::rng::stream_rng;
use crate::special::binomial;
use crate::targets::TargetModel;

/// Default cap on the number of enumerated batches.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// Sorted, distinct indices into `[0, n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MiniBatch {
    indices: Vec<usize>,
}

impl MiniBatch {
    /// Builds a batch from arbitrary indices, sorting them and checking they are distinct and `< n`.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.is_empty() || indices.windows(2).any(|w| w[0] == w[1]) || indices.iter().any(|&i| i >= n) {
            return Err(invalid(format!("batch {indices:?} is not a set of distinct indices below {n}")));
        }
        Ok(Self { indices })
    }

    pub fn full(n: usize) -> Self {
        Self { indices: (0..n).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Every size-`B` subset of `[0, n)` in lexicographic order, each with weight `1 / C(n, B)`.
#[derive(Clone, Debug)]
pub struct BatchEnumeration {
    n: usize,
    batches: Vec<MiniBatch>,
}

impl BatchEnumeration {
    pub fn batches(&self) -> &[MiniBatch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.batches.len() as f64
    }
}

fn check_sizes(n: usize, b: usize) -> Result<()> {
    if b == 0 || b > n {
        return Err(invalid(format!("batch size {b} must lie in [1, {n}]")));
    }
    Ok(())
}

/// All `C(n, B)` batches, or [`Error::EnumerationTooLarge`] above [`ENUMERATION_CAP`].
pub fn enumerate_batches(n: usize, b: usize) -> Result<BatchEnumeration> {
    enumerate_batches_capped(n, b, ENUMERATION_CAP)
}

pub fn enumerate_batches_capped(n: usize, b: usize, cap: usize) -> Result<BatchEnumeration> {
    check_sizes(n, b)?;
    let count = binomial(n, b);
    if count > cap as f64 {
        return Err(Error::EnumerationTooLarge { n, b, count, cap });
    }
    let mut batches = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..b).collect();
    loop {
        batches.push(MiniBatch { indices: idx.clone() });
        // advance to the next combination in lexicographic order
        let mut k = b;
        while k > 0 && idx[k - 1] == n - b + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for t in k..b {
            idx[t] = idx[t - 1] + 1;
        }
    }
    Ok(BatchEnumeration { n, batches })
}

/// Reusable state for drawing batches by partial Fisher-Yates.
#[derive(Clone, Debug)]
pub struct BatchDrawer {
    n: usize,
    b: usize,
    perm: Vec<usize>,
    swaps: Vec<usize>,
    out: Vec<usize>,
}

impl BatchDrawer {
    pub fn new(n: usize, b: usize) -> Result<Self> {
        check_sizes(n, b)?;
        Ok(Self { n, b, perm: (0..n).collect(), swaps: Vec::with_capacity(b), out: Vec::with_capacity(b) })
    }

    /// Draws a uniform size-`B` subset. A full batch consumes no randomness.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[usize] {
        self.out.clear();
        if self.b == self.n {
            self.out.extend(0..self.n);
            return &self.out;
        }
        self.swaps.clear();
        for k in 0..self.b {
            let j = rng.random_range(k..self.n);
            self.perm.swap(k, j);
            self.swaps.push(j);
        }
        self.out.extend_from_slice(&self.perm[..self.b]);
        self.out.sort_unstable();
        // undo the swaps in reverse so the permutation is the identity again
        for (k, &j) in self.swaps.iter().enumerate().rev() {
            self.perm.swap(k, j);
        }
        &self.out
    }
}

/// Uniformly distributed size-`B` subset of `[0, n)` without replacement.
pub fn draw_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<MiniBatch> {
    let mut d = BatchDrawer::new(n, b)?;
    let idx = d.draw(rng).to_vec();
    Ok(MiniBatch { indices: idx })
}

/// Writes `(1/B) sum_{i in batch} grad f_i(x)` into `out`. A full batch returns `grad f(x)`.
pub fn stochastic_grad_into(model: &TargetModel, x: &[f64], batch: &[usize], out: &mut [f64], tmp: &mut [f64]) {
    if batch.len() == model.n() {
        model.grad_into(x, out);
        return;
    }
    if batch.len() == 1 {
        model.component_grad_into(batch[0], x, out);
        return;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for &i in batch {
        model.component_grad_into(i, x, tmp);
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o += t;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// `g(x, I) = (1/B) sum_{i in I} grad f_i(x)`.
pub fn stochastic_grad(model: &TargetModel, x: &[f64], batch: &MiniBatch) -> Result<Vec<f64>> {
    if batch.indices.iter().any(|&i| i >= model.n()) {
        return Err(invalid("batch index out of range for the model"));
    }
    let mut out = vec![0.0; model.dim()];
    let mut tmp = vec![0.0; model.dim()];
    stochastic_grad_into(model, x, &batch.indices, &mut out, &mut tmp);
    Ok(out)
}

/// Outcome of [`mgf_bound_check`].
#[derive(Clone, Debug)]
pub struct MgfCheck {
    /// `E_I exp(<a, g(x, I) - grad f(x)>)`.
    pub lhs: f64,
    /// `exp(M^2 |a|^2 / B)` with `M = L R + G`.
    pub rhs: f64,
    /// Monte Carlo standard error when enumeration was infeasible, `None` when exact.
    pub std_error: Option<f64>,
}

impl MgfCheck {
    /// Whether `lhs <= rhs` up to `slack` (plus three standard errors in the Monte Carlo case).
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack + 3.0 * self.std_error.unwrap_or(0.0)
    }
}

/// Number of draws in the Monte Carlo fallback of [`mgf_bound_check`].
pub const MGF_MC_DRAWS: usize = 1_000_000;

/// Evaluates the sub-Gaussian moment bound of the mini-batch gradient noise at `x` in direction `a`.
///
/// `lhs` is exact over all batches when `C(n, B)` is within the enumeration cap, otherwise a
/// Monte Carlo mean over [`MGF_MC_DRAWS`] batches drawn from the stream `(seed, 0)`.
pub fn mgf_bound_check(
    model: &TargetModel,
    x: &[f64],
    a: &[f64],
    radius: f64,
    batch_size: usize,
    seed: u64,
) -> Result<MgfCheck> {
    if norm_sq(x).sqrt() > radius {
        return Err(invalid("|x| must not exceed R"));
    }
    let n = model.n();
    check_sizes(n, batch_size)?;
    let c = model.constants();
    let m = c.l * radius + c.g;
    let rhs = (m * m * norm_sq(a) / batch_size as f64).exp();
    let full = model.grad(x);
    let d = model.dim();
    let mut g = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let term = |idx: &[usize], g: &mut [f64], tmp: &mut [f64]| {
        stochastic_grad_into(model, x, idx, g, tmp);
        let diff: Vec<f64> = g.iter().zip(&full).map(|(p, q)| p - q).collect();
        dot(a, &diff).exp()
    };
    match enumerate_batches(n, batch_size) {
        Ok(en) => {
            let s: f64 = en.batches().iter().map(|bt| term(bt.indices(), &mut g, &mut tmp)).sum();
            Ok(MgfCheck { lhs: s * en.weight(), rhs, std_error: None })
        }
        Err(Error::EnumerationTooLarge { .. }) => {
            let mut rng = stream_rng(seed, 0);
            let mut drawer = BatchDrawer::new(n, batch_size)?;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..MGF_MC_DRAWS {
                let idx = drawer.draw(&mut rng).to_vec();
                let v = term(&idx, &mut g, &mut tmp);
                s += v;
                s2 += v * v;
            }
            let k = MGF_MC_DRAWS as f64;
            let mean = s / k;
            let var = (s2 / k - mean * mean).max(0.0);
            Ok(MgfCheck { lhs: mean, rhs, std_error: Some((var / k).sqrt()) })
        }
        Err(e) => Err(e),
    }
}
