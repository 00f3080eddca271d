use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const GAUSSIAN: &str = r#"
[target]
family = "gaussian"
mean = [0.0]
precision = 1.0

[sampler]
kind = "lmc"
eta = 0.01
steps = 100
seed = 3
"#;

const DOUBLE_WELL_SIX: &str = r#"
[target]
family = "shifted_mixture"
weights = [0.5, 0.5]
modes = [[-2.0], [2.0]]
shifts = [[-0.3], [-0.2], [-0.1], [0.1], [0.2], [0.3]]
"#;

struct Case {
    dir: TempDir,
}

impl Case {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cfg.toml"), config).unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("cfg.toml")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn sgld(&self, sub: &str, out: &str, extra: &[&str]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_sgld"));
        c.arg(sub).arg("--config").arg(self.config()).arg("--out").arg(self.out(out)).args(extra);
        c.output().unwrap()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_value(path: &Path, name: &str) -> String {
    let mut r = csv::Reader::from_path(path).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[0] == name {
            return rec[1].to_string();
        }
    }
    panic!("no row {name} in {}", path.display())
}

fn summary_value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in\n{text}"));
    line[key.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn run_writes_one_row_per_state() {
    let c = Case::new(GAUSSIAN);
    let o = c.sgld("run", "o", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read(&c.out("o/trajectory.csv"));
    assert_eq!(t.lines().count(), 102);
    assert!(t.starts_with("step,x_0,rejected,alpha\n"));
    assert!(!t.contains('\r'));
    for f in ["histogram.csv", "endpoints.csv", "summary.txt", "config.toml"] {
        assert!(c.out("o").join(f).exists(), "{f}");
    }
}

#[test]
fn runs_are_byte_identical_across_repeats_and_thread_counts() {
    let cfg = format!("{GAUSSIAN}\n[run]\nchains = 8\n");
    let c = Case::new(&cfg);
    assert!(c.sgld("run", "a", &[]).status.success());
    assert!(c.sgld("run", "b", &[]).status.success());
    assert!(c.sgld("run", "c", &["--jobs", "1"]).status.success());
    for f in ["trajectory.csv", "histogram.csv", "endpoints.csv", "summary.txt"] {
        let a = std::fs::read(c.out("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(c.out("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(c.out("c").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_the_chain() {
    let c = Case::new(GAUSSIAN);
    assert!(c.sgld("run", "a", &[]).status.success());
    assert!(c.sgld("run", "b", &["--seed-override", "4"]).status.success());
    assert_ne!(read(&c.out("a/trajectory.csv")), read(&c.out("b/trajectory.csv")));
    assert!(read(&c.out("b/config.toml")).contains("seed = 4"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let c = Case::new(&GAUSSIAN.replace("kind = \"lmc\"", "kind = \"sgld\""));
    assert!(c.sgld("run", "a", &[]).status.success());
    let echo = read(&c.out("a/config.toml"));
    let d = Case::new(&echo);
    assert!(d.sgld("run", "b", &[]).status.success());
    assert_eq!(read(&c.out("a/trajectory.csv")), read(&d.out("b/trajectory.csv")));
    assert_eq!(echo, read(&d.out("b/config.toml")));
}

#[test]
fn projected_run_reports_its_rejection_fraction() {
    // radii from the agreement lemma at eps = 0.1: at most eps/4 of the chains should reject
    let cfg = GAUSSIAN.replace("kind = \"lmc\"", "kind = \"projected_sgld\"").replace("steps = 100", "steps = 2000")
        + "big_r = \"auto\"\nr = \"lemma62\"\n\n[run]\nchains = 400\n";
    let c = Case::new(&cfg);
    let o = c.sgld("run", "o", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = read(&c.out("o/summary.txt"));
    assert!(s.contains("sqrt(2 eta d/beta)"), "{s}");
    let frac = summary_value(&s, "rejection_fraction");
    let chains = summary_value(&s, "chains_with_a_rejection");
    assert!((0.0..=1.0).contains(&frac));
    let p: f64 = 0.025;
    assert!(chains / 400.0 <= p + 3.0 * (p * (1.0 - p) / 400.0).sqrt(), "{s}");

    // a move radius of a fraction of the proposal scale rejects most steps
    let tight = Case::new(&cfg.replace("r = \"lemma62\"", "r = 0.05").replace("chains = 400", "chains = 4"));
    assert!(tight.sgld("run", "o", &[]).status.success());
    assert!(summary_value(&read(&tight.out("o/summary.txt")), "rejection_fraction") > 0.5);
}

#[test]
fn schedule_reports_every_derived_quantity() {
    let c = Case::new(GAUSSIAN);
    let o = c.sgld("schedule", "o", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = c.out("o/schedule.csv");
    for name in ["R", "r_lemma62", "r_lemma63", "delta", "eta", "K", "lambda_bound", "rho", "L", "eps"] {
        assert!(!csv_value(&p, name).is_empty(), "{name}");
    }
    assert_eq!(csv_value(&p, "rho_source"), "cheeger");
    let rho: f64 = csv_value(&p, "rho").parse().unwrap();
    assert!((rho - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
}

#[test]
fn halving_eps_multiplies_k_by_a_bit_more_than_four() {
    let k = |eps: &str| {
        let c = Case::new(&format!("{GAUSSIAN}\n[schedule]\neps = {eps}\nrho = 0.7978845608028654\n"));
        assert!(c.sgld("schedule", "o", &[]).status.success());
        csv_value(&c.out("o/schedule.csv"), "K").parse::<f64>().unwrap()
    };
    let ratio = k("0.05") / k("0.1");
    // eps^{-2} from the accuracy constraint, times the growth of its log factors
    assert!(ratio > 4.0 && ratio < 6.0, "{ratio}");
}

#[test]
fn hessian_mode_without_h_is_a_config_error() {
    let c = Case::new(&format!("{GAUSSIAN}\n[constants]\nH = \"none\"\n\n[schedule]\nmode = \"hessian\"\n"));
    let o = c.sgld("schedule", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`H`"), "{}", stderr(&o));
}

#[test]
fn kernel_checks_pass_on_the_gaussian() {
    let cfg = GAUSSIAN.replace("kind = \"lmc\"", "kind = \"metropolized_sgld\"").replace("steps = 100", "steps = 10000")
        + "big_r = 4.0\nr = \"lemma63\"\n\n[kernel]\ncells = 101\nsandwich_points = 10\nsets_per_point = 20\n";
    let c = Case::new(&cfg);
    let o = c.sgld("kernel", "o", &[]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let mut r = csv::Reader::from_path(c.out("o/checks.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(names, ["row_sums", "detailed_balance", "delta_sandwich", "conductance", "cheeger", "accept_prob_floor"]);
    assert!(rows.iter().all(|r| &r[3] == "pass"));
    let k = read(&c.out("o/kernel.csv"));
    assert_eq!(k.lines().count(), 102);
    assert!(k.starts_with("state,x_0,pi,to_0,"));
}

#[test]
fn kernel_sandwich_holds_on_the_six_component_double_well() {
    let cfg = format!(
        "{DOUBLE_WELL_SIX}\n[sampler]\nkind = \"metropolized_sgld\"\neta = 1e-5\nbatch_size = 2\nsteps = 10000\nbig_r = 4.0\nr = \"lemma63\"\n\n[kernel]\ncells = 4000\nsandwich_points = 10\nsets_per_point = 20\n"
    );
    let c = Case::new(&cfg);
    let o = c.sgld("kernel", "o", &[]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("delta_sandwich")).unwrap().to_string();
    assert!(line.contains("pass") && line.contains("worst |T/T* - 1|"), "{line}");
    let delta: f64 = csv::Reader::from_path(c.out("o/checks.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .find(|r| &r[0] == "delta_sandwich")
        .map(|r| r[2].trim_start_matches("delta = ").parse().unwrap())
        .unwrap();
    assert!(delta > 0.0 && delta < 1.0, "{delta}");
}

#[test]
fn three_dimensional_kernels_are_unsupported() {
    let cfg = GAUSSIAN.replace("mean = [0.0]", "mean = [0.0, 0.0, 0.0]") + "big_r = 4.0\nr = 1.0\n";
    let o = Case::new(&cfg).sgld("kernel", "o", &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn enumeration_cap_is_unsupported() {
    let cfg = GAUSSIAN.replace("precision = 1.0", "precision = 1.0\nn = 60").replace("kind = \"lmc\"", "kind = \"metropolized_sgld\"")
        + "batch_size = 30\nbig_r = 4.0\nr = 1.0\n";
    let o = Case::new(&cfg).sgld("run", "o", &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn check_passes_on_a_valid_target() {
    let c = Case::new(&format!("{GAUSSIAN}\n[check]\npoints = 2000\n"));
    let o = c.sgld("check", "o", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(c.out("o/probe.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["assumption", "margin", "arg_point", "arg_partner", "pass"]);
    assert!(r.records().all(|r| &r.unwrap()[4] == "pass"));
}

#[test]
fn understated_l_fails_with_the_worst_pair() {
    let c = Case::new(&format!("{GAUSSIAN}\n[constants]\nL = 0.5\n\n[check]\npoints = 2000\n"));
    let o = c.sgld("check", "o", &[]);
    assert_eq!(o.status.code(), Some(1));
    let rec = csv::Reader::from_path(c.out("o/probe.csv")).unwrap().records().map(|r| r.unwrap()).find(|r| &r[0] == "smoothness").unwrap();
    assert_eq!(&rec[4], "fail");
    assert!(rec[1].parse::<f64>().unwrap() < 0.0);
    assert!(!rec[2].is_empty() && !rec[3].is_empty());
}

#[test]
fn eta_sweep_writes_cells_and_fit() {
    let cfg = format!("{GAUSSIAN}\n[sweep]\neta_lo = 0.01\neta_hi = 0.1\npoints = 4\nseeds = 2\nsteps = 20000\nbins = 20\n");
    let c = Case::new(&cfg);
    let o = c.sgld("sweep", "o", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cells = read(&c.out("o/sweep_cells.csv"));
    assert_eq!(cells.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8);
    assert!(read(&c.out("o/sweep_fit.csv")).starts_with("log_x,log_y\n"));
    assert!(stdout(&o).contains("slope"));
}

#[test]
fn conductance_sweep_runs_on_the_double_well() {
    let cfg = format!(
        "{DOUBLE_WELL_SIX}\n[sampler]\nkind = \"metropolized_sgld\"\neta = 0.01\nbatch_size = 2\nsteps = 1\n\n[sweep]\ntype = \"conductance\"\neta_lo = 1e-3\neta_hi = 1e-1\npoints = 4\ncheeger_cells = 200\n"
    );
    let c = Case::new(&cfg);
    let o = c.sgld("sweep", "o", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&c.out("o/conductance.csv")).lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn config_errors_exit_two_with_a_line() {
    let c = Case::new(&GAUSSIAN.replace("steps = 100", "steps = 100\nstpes = 1"));
    let o = c.sgld("run", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 11"), "{}", stderr(&o));

    let c = Case::new(&GAUSSIAN.replace("eta = 0.01", "eta = 0.0"));
    let o = c.sgld("run", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 9"), "{}", stderr(&o));

    let c = Case::new(&GAUSSIAN.replace("[sampler]", "[sampler]\nkind2 = 1"));
    assert_eq!(c.sgld("run", "o", &[]).status.code(), Some(2));

    let c = Case::new("[target\n");
    let o = c.sgld("run", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_runtime_error() {
    let c = Case::new(GAUSSIAN);
    std::fs::remove_file(c.config()).unwrap();
    let o = c.sgld("run", "o", &[]);
    assert_eq!(o.status.code(), Some(1));
}
