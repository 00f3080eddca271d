use std::fmt::Write as _;

use rand::Rng;
use sgld::diagnostics::{
    binned_target, conductance_sweep, eta_sweep, geometric_grid, tv_estimate, ConductanceSweepPlan, Histogram, RadiusRule, StepsRule,
    SweepPlan,
};
use sgld::kernels::{
    build_discretized_kernel, cheeger_constant, conductance, delta_sandwich_check, DiscreteKind, Grid, GridDensity, KernelEngine,
    SetSpec, TruncatedTarget,
};
use sgld::par::map_range;
use sgld::rng::stream_rng;
use sgld::samplers::{run_chain, run_chain_visit};
use sgld::schedule::{delta_bound, schedule_hessian, schedule_plain, DeltaParams};
use sgld::targets::{probe_assumptions, TargetModel};

use crate::config::{BigR, Config, DeltaSpec, KernelKindSpec, Mode, MoveRadius, RadiusName, Rho, StepsSpec, SweepKind};
use crate::error::CliError;
use crate::output::OutDir;

/// Text for stdout and the number of failed checks.
pub struct Outcome {
    pub text: String,
    pub failed: usize,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, failed: 0 }
    }
}

/// Shortest form that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn point(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:<w$}", w = widths[c])).collect();
        writeln!(s, "{}", line.join("  ").trim_end()).unwrap();
    }
    s
}

/// Cheeger constant of `exp(-beta f)` on a grid over `[-radius, radius]^d`.
fn auto_rho(model: &TargetModel, beta: f64, radius: f64, cells: usize) -> Result<f64, CliError> {
    let d = model.dim();
    if d > 2 {
        return Err(CliError::Unsupported(format!("Cheeger constants need d <= 2, got d = {d}")));
    }
    let cells = if d == 2 { cells.min(300) } else { cells };
    let grid = Grid::uniform(d, -radius, radius, cells)?;
    let logs: Vec<f64> = (0..grid.num_cells()).map(|c| -beta * model.value(&grid.center(c))).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z = raw.iter().sum::<f64>() * grid.cell_volume();
    let density = GridDensity::new(grid, raw.into_iter().map(|v| v / z).collect())?;
    Ok(cheeger_constant(&density)?.rho)
}

fn resolve_rho(cfg: &Config, model: &TargetModel) -> Result<(f64, &'static str), CliError> {
    let s = &cfg.schedule;
    match s.rho {
        Rho::Value(v) => Ok((v, "given")),
        Rho::Auto(_) => Ok((auto_rho(model, cfg.sampler.beta, s.rho_radius, s.rho_cells)?, "cheeger")),
    }
}

fn radius_source(cfg: &Config) -> (String, String) {
    let s = &cfg.sampler;
    let big = match s.big_r {
        None => "none".to_string(),
        Some(BigR::Value(_)) => "given".to_string(),
        Some(BigR::Auto(_)) => format!("bar_r(eps/(4K)) with eps = {}, K = {}", s.eps, s.steps),
    };
    let small = match s.r {
        None => "none".to_string(),
        Some(MoveRadius::Value(_)) => "given".to_string(),
        Some(MoveRadius::Named(RadiusName::Lemma62)) => format!("sqrt(2 eta d/beta)(2 + sqrt(2 log(8K/eps)/d)) with eps = {}", s.eps),
        Some(MoveRadius::Named(RadiusName::Lemma63)) => format!("sqrt(10 eta d/beta)(1 + sqrt(log(8K/eps)/d)) with eps = {}", s.eps),
    };
    (big, small)
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let chain = cfg.chain(&model)?;
    chain.validate(&model)?;
    let kind = cfg.sampler.kind.sampler();
    let r = &cfg.run;
    let traj = run_chain(&model, &chain, kind)?;
    let mut hist = Histogram::new(r.lo, r.hi, r.bins)?;
    for (k, x) in traj.states().enumerate() {
        if k <= r.burn_in {
            hist.skip();
        } else {
            hist.add(x[0]);
        }
    }
    // the remaining chains are streamed and reduced in chain order
    let rest: Vec<sgld::Result<(Histogram, Vec<f64>, usize)>> = map_range(r.chains - 1, |i| {
        let c = chain.clone().with_chain_id(i as u64 + 1);
        let mut h = Histogram::new(r.lo, r.hi, r.bins)?;
        let s = run_chain_visit(&model, &c, kind, |k, x| if k <= r.burn_in { h.skip() } else { h.add(x[0]) })?;
        Ok((h, s.last, s.rejections))
    });
    let mut ends = vec![(traj.last().to_vec(), traj.rejection_count())];
    for res in rest {
        let (h, last, rej) = res?;
        hist.merge(&h)?;
        ends.push((last, rej));
    }
    let steps = chain.steps.max(1) as f64;
    let total_rej: usize = ends.iter().map(|e| e.1).sum();
    let any_rej = ends.iter().filter(|e| e.1 > 0).count();

    out.write_with("trajectory.csv", |w| traj.write_csv(w))?;
    out.write_with("histogram.csv", |w| hist.write_csv(w))?;
    let d = model.dim();
    let mut header: Vec<String> = vec!["chain".into()];
    header.extend((0..d).map(|a| format!("x_{a}")));
    header.push("rejections".into());
    let rows: Vec<Vec<String>> = ends
        .iter()
        .enumerate()
        .map(|(i, (x, rej))| std::iter::once(i.to_string()).chain(x.iter().map(|v| num(*v))).chain(std::iter::once(rej.to_string())).collect())
        .collect();
    out.write_table("endpoints.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;

    let c = model.constants();
    let (big_src, r_src) = radius_source(cfg);
    let mut s = String::new();
    writeln!(s, "target      {}", model.describe()).unwrap();
    writeln!(s, "constants   m = {:?}, b = {:?}, L = {:?}, H = {}, G = {:?}", c.m, c.b, c.l, c.h.map_or("none".into(), num), c.g).unwrap();
    writeln!(s, "sampler     {} eta = {:?} beta = {:?} B = {} K = {} seed = {}", kind.name(), chain.eta, chain.beta, chain.batch_size, chain.steps, chain.seed).unwrap();
    writeln!(s, "R           {} ({big_src})", chain.big_r.map_or("none".into(), num)).unwrap();
    writeln!(s, "r           {} ({r_src})", chain.r.map_or("none".into(), num)).unwrap();
    writeln!(s, "chains      {}", r.chains).unwrap();
    writeln!(s, "rejection_fraction        {:?}", total_rej as f64 / (steps * r.chains as f64)).unwrap();
    writeln!(s, "chains_with_a_rejection   {any_rej}").unwrap();
    if d == 1 {
        let tv = tv_estimate(&hist, &binned_target(&model, chain.beta, r.lo, r.hi, r.bins)?)?;
        writeln!(s, "tv_to_target              {tv:?} ({} bins on [{}, {}], {} samples)", r.bins, r.lo, r.hi, hist.total()).unwrap();
    }
    out.write("summary.txt", s.as_bytes())?;
    Ok(Outcome::ok(s))
}

pub fn schedule(cfg: &Config, out: &OutDir) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let s = &cfg.schedule;
    let (rho, rho_src) = resolve_rho(cfg, &model)?;
    let (beta, b) = (cfg.sampler.beta, cfg.sampler.batch_size);
    let rep = match s.mode {
        Mode::Plain => schedule_plain(&model, beta, b, s.eps, s.c0, rho)?,
        Mode::Hessian => schedule_hessian(&model, beta, b, s.eps, s.c0, rho)?,
    };
    let mut rows: Vec<Vec<String>> = rep.rows().into_iter().map(|(k, v)| vec![k, v]).collect();
    rows.push(vec!["rho_source".into(), rho_src.into()]);
    out.write_table("schedule.csv", &["name", "value"], &rows)?;
    Ok(Outcome::ok(aligned(&rows)))
}

struct CheckRow {
    name: &'static str,
    value: f64,
    threshold: String,
    pass: bool,
    note: String,
}

fn random_sets(cfg: &Config, d: usize, u: &[f64], big_r: f64, r: f64, count: usize, stream: u64) -> Vec<SetSpec> {
    let mut rng = stream_rng(cfg.sampler.seed, stream);
    let mut draw = |lo: f64, hi: f64| {
        let (lo, hi) = (lo.max(-big_r), hi.min(big_r));
        loop {
            let mut cuts: Vec<f64> = (0..2 * rng.random_range(1..=3usize)).map(|_| rng.random_range(lo..hi)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            if !cuts.is_empty() && cuts.len() % 2 == 0 {
                return cuts.chunks(2).map(|p| (p[0], p[1])).collect::<Vec<_>>();
            }
        }
    };
    (0..count)
        .map(|s| {
            // alternate sets spread over the ball and sets on the scale of the move radius
            let local = s % 2 == 1;
            let span = |a: usize| if local { (u[a] - 2.0 * r, u[a] + 2.0 * r) } else { (-big_r, big_r) };
            if d == 1 {
                let (lo, hi) = span(0);
                SetSpec::Intervals(draw(lo, hi))
            } else {
                let (x, y) = (span(0), span(1));
                let (ix, iy) = (draw(x.0, x.1), draw(y.0, y.1));
                SetSpec::Boxes(vec![[ix[0], iy[0]]])
            }
        })
        .collect()
}

pub fn kernel(cfg: &Config, out: &OutDir) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let d = model.dim();
    if d > 2 {
        return Err(CliError::Unsupported(format!("exact kernels need d <= 2, got d = {d}")));
    }
    let chain = cfg.chain(&model)?;
    let (Some(big_r), Some(r)) = (chain.big_r, chain.r) else {
        return Err(CliError::config(None, "kernel needs sampler.big_r and sampler.r"));
    };
    chain.validate(&model)?;
    let k = &cfg.kernel;
    let s = &cfg.sampler;
    let engine = KernelEngine::new(&model, s.eta, s.beta, s.batch_size, r, big_r)?;
    let grid = Grid::for_ball(d, big_r, k.cells, 3.0 * engine.sigma())?;
    let target = TruncatedTarget::new(&model, s.beta, &grid, big_r)?;
    let kind = match k.kind {
        KernelKindSpec::Lazy => DiscreteKind::Lazy,
        KernelKindSpec::Metropolized => DiscreteKind::Metropolized,
    };
    let kern = build_discretized_kernel(&engine, &target, kind)?;
    let pi = target.masses();
    let mut checks = Vec::new();

    let valid = kern.validate();
    checks.push(CheckRow {
        name: "row_sums",
        value: kern.min_diagonal(),
        threshold: "rows sum to 1".into(),
        pass: valid.is_ok(),
        note: valid.err().map(|e| e.to_string()).unwrap_or_default(),
    });

    let residual = kern.detailed_balance_residual(pi);
    checks.push(CheckRow { name: "detailed_balance", value: residual, threshold: "<= 1e-8".into(), pass: residual <= 1e-8, note: String::new() });

    let c = model.constants();
    let delta = match k.delta {
        DeltaSpec::Value(v) => v,
        DeltaSpec::Auto(_) => delta_bound(&DeltaParams {
            eta: s.eta,
            d,
            beta: s.beta,
            batch_size: s.batch_size,
            l: c.l,
            big_r,
            g: c.g,
            k: s.steps.max(1) as f64,
            eps: s.eps,
        })?,
    };
    let axis: Vec<f64> = (0..k.sandwich_points).map(|i| -big_r + 2.0 * big_r * (i as f64 + 0.5) / k.sandwich_points as f64).collect();
    let points: Vec<Vec<f64>> = if d == 1 {
        axis.iter().map(|&x| vec![x]).collect()
    } else {
        axis.iter().flat_map(|&x| axis.iter().map(move |&y| vec![x, y])).filter(|p| p[0].hypot(p[1]) < big_r).collect()
    };
    let (mut pairs, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    let mut worst_at = Vec::new();
    for (i, u) in points.iter().enumerate() {
        let sets = random_sets(cfg, d, u, big_r, r, k.sets_per_point, i as u64);
        let rep = delta_sandwich_check(&engine, delta, std::slice::from_ref(u), &sets)?;
        pairs += rep.pairs_checked;
        violations += rep.violations;
        if rep.worst_ratio_deviation > worst {
            worst = rep.worst_ratio_deviation;
            worst_at = u.clone();
        }
    }
    checks.push(CheckRow {
        name: "delta_sandwich",
        value: worst,
        threshold: format!("delta = {delta:?}"),
        pass: violations == 0,
        note: format!("{pairs} pairs, {violations} violations, worst |T/T* - 1| at u = {}", point(&worst_at)),
    });

    let phi = conductance(&kern)?;
    checks.push(CheckRow {
        name: "conductance",
        value: phi.phi,
        threshold: "in (0, 1]".into(),
        pass: phi.phi > 0.0 && phi.phi <= 1.0,
        note: if phi.exhaustive { "exhaustive".into() } else { "cut family, upper bound".into() },
    });

    let cheeger_cells = if d == 2 { k.cheeger_cells.min(200) } else { k.cheeger_cells };
    let cgrid = Grid::for_ball(d, big_r, cheeger_cells, 0.0)?;
    let ch = cheeger_constant(&TruncatedTarget::new(&model, s.beta, &cgrid, big_r)?.grid_density())?;
    checks.push(CheckRow {
        name: "cheeger",
        value: ch.rho,
        threshold: "> 0".into(),
        pass: ch.rho > 0.0,
        note: if ch.heuristic { "heuristic search".into() } else { "exact over the searched family".into() },
    });

    let scan: Vec<(f64, f64)> = (0..k.scan_points)
        .map(|i| {
            let x = (-big_r + 2.0 * big_r * i as f64 / (k.scan_points - 1) as f64).clamp(-big_r, big_r);
            let u = if d == 1 { vec![x] } else { vec![x, 0.0] };
            engine.accept_prob(&u).map(|p| (x, p))
        })
        .collect::<sgld::Result<_>>()?;
    let (arg, pmin) = scan.iter().cloned().fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    checks.push(CheckRow {
        name: "accept_prob_floor",
        value: pmin,
        threshold: ">= 0.4".into(),
        pass: pmin >= 0.4 - 1e-6,
        note: format!("minimum at u_0 = {arg:?}"),
    });

    write_kernel(out, &kern, pi)?;
    out.write_table("scan.csv", &["u", "p"], &scan.iter().map(|(u, p)| vec![num(*u), num(*p)]).collect::<Vec<_>>())?;
    let rows: Vec<Vec<String>> =
        checks.iter().map(|c| vec![c.name.into(), num(c.value), c.threshold.clone(), (if c.pass { "pass" } else { "fail" }).into(), c.note.clone()]).collect();
    out.write_table("checks.csv", &["check", "value", "threshold", "pass", "note"], &rows)?;
    let mut text = format!("states {}, eta = {:?}, R = {big_r:?}, r = {r:?}\n", kern.num_states(), s.eta);
    text.push_str(&aligned(&rows));
    Ok(Outcome { text, failed: checks.iter().filter(|c| !c.pass).count() })
}

/// Dense up to this many states, sparse triplets beyond.
const DENSE_LIMIT: usize = 2000;

fn write_kernel(out: &OutDir, kern: &sgld::kernels::DiscretizedKernel, pi: &[f64]) -> Result<(), CliError> {
    let n = kern.num_states();
    let d = kern.dim();
    if n <= DENSE_LIMIT {
        out.write_with("kernel.csv", |w| {
            use std::io::Write;
            write!(w, "state")?;
            for a in 0..d {
                write!(w, ",x_{a}")?;
            }
            write!(w, ",pi")?;
            for j in 0..n {
                write!(w, ",to_{j}")?;
            }
            writeln!(w)?;
            for i in 0..n {
                write!(w, "{i}")?;
                for v in kern.point(i) {
                    write!(w, ",{v:?}")?;
                }
                write!(w, ",{:?}", pi[i])?;
                let mut row = vec![0.0; n];
                for (j, p) in kern.matrix().row(i) {
                    row[j] = p;
                }
                for p in row {
                    write!(w, ",{p:?}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
    } else {
        out.write_with("kernel.csv", |w| {
            use std::io::Write;
            writeln!(w, "from,to,prob")?;
            for i in 0..n {
                for (j, p) in kern.matrix().row(i) {
                    writeln!(w, "{i},{j},{p:?}")?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn check(cfg: &Config, out: &OutDir) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let c = &cfg.check;
    let rep = probe_assumptions(&model, c.radius, c.points, cfg.sampler.seed)?;
    let rows: Vec<Vec<String>> = rep
        .margins
        .iter()
        .map(|m| {
            vec![
                m.assumption.into(),
                num(m.worst_margin),
                point(&m.arg_point),
                m.arg_partner.as_deref().map(point).unwrap_or_default(),
                (if m.pass { "pass" } else { "fail" }).into(),
            ]
        })
        .collect();
    out.write_table("probe.csv", &["assumption", "margin", "arg_point", "arg_partner", "pass"], &rows)?;
    let mut table = vec![vec!["assumption".into(), "margin".into(), "arg_point".into(), "arg_partner".into(), "pass".into()]];
    table.extend(rows);
    let text = format!("{}: {} points in the ball of radius {}\n{}", model.describe(), rep.num_points, rep.region_radius, aligned(&table));
    Ok(Outcome { text, failed: rep.margins.iter().filter(|m| !m.pass).count() })
}

pub fn sweep(cfg: &Config, out: &OutDir) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let w = &cfg.sweep;
    let etas = geometric_grid(w.eta_lo, w.eta_hi, w.points)?;
    let template = cfg.chain(&model)?;
    match w.kind {
        SweepKind::Eta => {
            let steps = match w.steps {
                StepsSpec::Fixed(n) => StepsRule::Fixed(n),
                StepsSpec::Named(_) => StepsRule::Mixing { c0: cfg.schedule.c0, rho: resolve_rho(cfg, &model)?.0 },
            };
            let plan = SweepPlan { kind: cfg.sampler.kind.sampler(), steps, bins: w.bins, lo: w.lo, hi: w.hi, burn_in: w.burn_in };
            let seeds: Vec<u64> = (0..w.seeds as u64).map(|i| cfg.sampler.seed.wrapping_add(i)).collect();
            let sw = eta_sweep(&model, &template, &etas, &seeds, &plan)?;
            out.write_with("sweep_cells.csv", |f| sw.write_csv(f))?;
            out.write_with("sweep_fit.csv", |f| sw.fit.write_csv(f))?;
            Ok(Outcome::ok(format!(
                "eta sweep: {} cells, slope {:?} +- {:?}, intercept {:?}, residual {:?}\n",
                sw.cells.len(),
                sw.fit.slope,
                sw.fit.half_width,
                sw.fit.intercept,
                sw.fit.residual
            )))
        }
        SweepKind::Conductance => {
            let radius = match w.radius {
                MoveRadius::Value(v) => RadiusRule::Fixed(v),
                MoveRadius::Named(RadiusName::Lemma62) => RadiusRule::Lemma62 { k: w.k, eps: w.eps },
                MoveRadius::Named(RadiusName::Lemma63) => RadiusRule::Lemma63 { k: w.k, eps: w.eps },
            };
            let plan = ConductanceSweepPlan { big_r: w.big_r, radius, cells_per_sigma: w.cells_per_sigma, cheeger_cells: w.cheeger_cells };
            let sw = conductance_sweep(&model, &template, &etas, &plan)?;
            out.write_with("conductance.csv", |f| sw.write_csv(f))?;
            out.write_with("sweep_fit.csv", |f| sw.fit.write_csv(f))?;
            let holds = sw.lower_bound_holds();
            Ok(Outcome {
                text: format!(
                    "conductance sweep: slope {:?}, c0 {:?}, rho {:?}, lower bound holds: {holds}\n",
                    sw.fit.slope, sw.c0, sw.rho
                ),
                failed: usize::from(!holds),
            })
        }
    }
}
