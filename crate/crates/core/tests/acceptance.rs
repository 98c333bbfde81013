//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use orlicz_mp::commands::{bump_family, run, Command, RunConfig};
use orlicz_mp::config::ProblemConfig;
use orlicz_mp::conjugation::compute_phi_n;
use orlicz_mp::mpa::{
    check_monotone_operator, concentration_functional, energy, energy_gradient, mountain_pass_solve,
    nearest_lattice_point, random_bump_field, recenter,
};
use orlicz_mp::rearrangement::{compute_phi_circ, VolumeModel};
use orlicz_mp::sampling::log_space;
use orlicz_mp::spaces::{
    gradient_field, verify_modular_norm_bounds, verify_sobolev_inequality, BoundaryRule, DomainSpec,
};
use orlicz_mp::young::growth_indices;
use orlicz_mp::{AnisotropicGFunction, MonotoneScalarFunction, SamplePlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> ProblemConfig {
    ProblemConfig::parse(&fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn run_command(command: Command, cfg: &str, out: &Path) -> (i32, Duration) {
    let t = Instant::now();
    let o = run(&RunConfig {
        command,
        input: fixture(cfg),
        out: out.to_path_buf(),
        overrides: Vec::new(),
        force: false,
    })
    .unwrap_or_else(|e| panic!("{command:?} {cfg}: {e}"));
    (o.exit_code, t.elapsed())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn conjugate_oracle(dir: &Path, cfg: &str, exact: &str, slope: f64) -> Outcome {
    let (code, took) = run_command(Command::Conjugate, cfg, dir);
    let report = json(&dir.join("exponents.json"));
    let fitted = report["fitted_slopes"]["phi_n"].as_f64().unwrap_or(f64::NAN);
    let rel = (fitted - slope).abs() / slope;
    let pass = code == 0 && report["p_bar_star"] == exact && rel <= 0.02 && took < Duration::from_secs(10);
    Outcome {
        pass,
        detail: format!(
            "p_bar* = {} (want {exact}), phi_n slope {fitted:.6} vs {slope:.6} (rel {rel:.2e} <= 2e-2), {:.2} s < 10 s",
            report["p_bar_star"],
            took.as_secs_f64()
        ),
    }
}

fn phi2_verdicts(dir_2227: &Path, dir_227: &Path) -> Outcome {
    let a = json(&dir_2227.join("exponents.json"))["phi2"].clone();
    let b = json(&dir_227.join("exponents.json"))["phi2"].clone();
    Outcome {
        pass: a == "FAIL" && b == "PASS",
        detail: format!("(2,2,2,7)/4 -> {a} (want FAIL), (2,2,7)/3 -> {b} (want PASS)"),
    }
}

fn modular_sandwich() -> Outcome {
    let t = Instant::now();
    let plan = SamplePlan::default();
    let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 7.0]).unwrap();
    let n_func = MonotoneScalarFunction::power(3.0, 1.0).unwrap();
    let phi_idx = growth_indices(&phi, &plan).unwrap();
    let n_idx = growth_indices(&n_func, &plan).unwrap();
    let d = DomainSpec::new(2, 2.0, 16, BoundaryRule::ZeroDirichlet).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut violations = 0;
    let (mut below, mut above) = (0, 0);
    for _ in 0..100 {
        let amplitude = 10f64.powf(rng.random_range(-2.0..2.0));
        let u = random_bump_field(&d, &mut rng).scaled(amplitude);
        let g = verify_modular_norm_bounds(&phi, &gradient_field(&u), &phi_idx).unwrap();
        let n = verify_modular_norm_bounds(&n_func, &u, &n_idx).unwrap();
        for r in [g, n] {
            if !(r.lower_ok && r.upper_ok) {
                violations += 1;
            }
            if r.norm < 1.0 {
                below += 1;
            } else {
                above += 1;
            }
        }
    }
    let took = t.elapsed();
    Outcome {
        pass: violations == 0 && took < Duration::from_secs(5),
        detail: format!(
            "{violations} violations over 100 fields x (Phi, N), norms <1: {below}, >=1: {above}, {:.2} s < 5 s",
            took.as_secs_f64()
        ),
    }
}

fn gradient_consistency() -> Outcome {
    let t = Instant::now();
    let spec = load("default_problem.cfg").problem_spec().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = random_bump_field(&spec.domain, &mut rng).scaled(rng.random_range(0.5..3.0));
        let v = random_bump_field(&spec.domain, &mut rng);
        let analytic = energy_gradient(&spec, &u).unwrap().inner(&v);
        // optimal central-difference step for the scale of u along v
        let eps = f64::EPSILON.cbrt() * u.max_abs().max(1.0) / v.max_abs();
        let plus = energy(&spec, &u.add_scaled(eps, &v).unwrap()).unwrap();
        let minus = energy(&spec, &u.add_scaled(-eps, &v).unwrap()).unwrap();
        let fd = (plus - minus) / (2.0 * eps);
        worst = worst.max((analytic - fd).abs() / fd.abs());
    }
    let took = t.elapsed();
    Outcome {
        pass: worst <= 1e-4 && took < Duration::from_secs(30),
        detail: format!("worst relative error {worst:.2e} <= 1e-4 over 20 pairs, {:.2} s < 30 s", took.as_secs_f64()),
    }
}

fn sobolev_constant() -> Outcome {
    let phi = AnisotropicGFunction::power_sum_unit(&[1.8, 2.0, 2.2]).unwrap();
    let radii = log_space(1e-3, 1e3, 200);
    let pc = compute_phi_circ(&phi, &radii, &VolumeModel::ExactDirichlet).unwrap();
    let pn = compute_phi_n(&pc, 3, &radii).unwrap();
    let k = |m: usize| {
        let d = DomainSpec::new(3, 4.0, m, BoundaryRule::ZeroDirichlet).unwrap();
        verify_sobolev_inequality(&phi, &pn, &bump_family(&d, 20, 0), &[]).unwrap().k_est
    };
    let (coarse, fine) = (k(16), k(32));
    let rel = (coarse - fine).abs() / fine;
    Outcome {
        pass: coarse.is_finite() && fine.is_finite() && fine > 0.0 && rel <= 0.1,
        detail: format!("K_est m=16: {coarse:.6}, m=32: {fine:.6}, change {rel:.3} <= 0.1"),
    }
}

fn end_to_end(dir: &Path) -> Outcome {
    let (code, took) = run_command(Command::Solve, "default_problem.cfg", dir);
    let r = json(&dir.join("solve_report.json"));
    let residual = r["residual"].as_f64().unwrap_or(f64::INFINITY);
    let c_est = r["c_est"].as_f64().unwrap_or(f64::NAN);
    let conc = r["concentration"]["value"].as_f64().unwrap_or(0.0);
    let radius = r["concentration"]["radius"].as_f64().unwrap_or(f64::NAN);
    let ps_ok = r["ps_monitor"]["all_ok"] == true;
    let checked = r["ps_monitor"]["checked"].as_u64().unwrap_or(0);
    let pass = code == 0
        && r["verdict"] == "converged"
        && residual <= 1e-4
        && c_est > 0.0
        && radius == 1.0
        && conc > 1e-3
        && ps_ok
        && checked > 0
        && took < Duration::from_secs(600);
    Outcome {
        pass,
        detail: format!(
            "verdict {}, residual {residual:.3e} <= 1e-4, c_est {c_est:.6} > 0, concentration(r=1) {conc:.4} > 1e-3, \
             PS bound at {checked} iterates: {ps_ok}, {:.1} s < 600 s",
            r["verdict"],
            took.as_secs_f64()
        ),
    }
}

fn periodic_recentering() -> Outcome {
    let config = load("periodic_potential.cfg");
    let spec = config.problem_spec().unwrap();
    let u = mountain_pass_solve(&spec, &config.solver_options()).unwrap().u_star;
    let period = spec.potential.period.clone();
    let radius = config.solver.concentration_radius;
    let base = concentration_functional(&u, radius, &spec.n_func).unwrap();
    let j = energy(&spec, &u).unwrap();
    let mut shifts = vec![nearest_lattice_point(&base.center, &period)];
    shifts.extend([vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.0]]);
    let (mut worst_energy, mut worst_conc): (f64, f64) = (0.0, 0.0);
    for s in &shifts {
        let w = recenter(&u, s, &period).unwrap();
        worst_energy = worst_energy.max((energy(&spec, &w).unwrap() - j).abs());
        let c = concentration_functional(&w, radius, &spec.n_func).unwrap();
        worst_conc = worst_conc.max((c.value - base.value).abs());
    }
    Outcome {
        pass: worst_energy <= 1e-10 && worst_conc <= 1e-12 * base.value,
        detail: format!(
            "{} lattice shifts: max |dJ| {worst_energy:.2e} <= 1e-10, max |d concentration| {worst_conc:.2e}",
            shifts.len()
        ),
    }
}

fn monotone_operator() -> Outcome {
    let t = Instant::now();
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for name in [
        "default_problem.cfg",
        "growth_2227_n4.cfg",
        "growth_227_n3.cfg",
        "isotropic_222_n3.cfg",
        "linear_source.cfg",
        "periodic_potential.cfg",
    ] {
        let p = load(name).phi.exponents;
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    let mut violations = 0;
    for p in &seen {
        let phi = AnisotropicGFunction::power_sum_unit(p).unwrap();
        violations += check_monotone_operator(&phi, 100_000, 0).violations;
    }
    let took = t.elapsed();
    Outcome {
        pass: violations == 0 && took < Duration::from_secs(5),
        detail: format!(
            "{violations} violations over 1e5 pairs for each of {} G-functions, {:.2} s < 5 s",
            seen.len(),
            took.as_secs_f64()
        ),
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(root: &Path) -> Outcome {
    let mut compared = 0;
    let mut mismatched = Vec::new();
    let jobs: [(&str, &[Command]); 3] = [
        ("default_problem.cfg", &[Command::Conjugate, Command::Audit, Command::Solve, Command::Diagnose]),
        ("growth_2227_n4.cfg", &[Command::Conjugate, Command::Audit]),
        ("periodic_potential.cfg", &[Command::Solve, Command::Diagnose]),
    ];
    for (cfg, commands) in jobs {
        let runs: Vec<_> = ["first", "second"]
            .iter()
            .map(|tag| {
                let dir = root.join(format!("{cfg}-{tag}"));
                for c in commands {
                    run_command(*c, cfg, &dir);
                }
                snapshot(&dir)
            })
            .collect();
        for ((name, a), (_, b)) in runs[0].iter().zip(&runs[1]) {
            compared += 1;
            if a != b {
                mismatched.push(format!("{cfg}/{name}"));
            }
        }
        if runs[0].len() != runs[1].len() {
            mismatched.push(format!("{cfg}: file sets differ"));
        }
    }
    Outcome {
        pass: mismatched.is_empty() && compared > 0,
        detail: format!("{compared} files compared across repeated runs, mismatches: {mismatched:?}"),
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let d2227 = root.join("c2227");
    let d227 = root.join("c227");
    let criteria: Vec<Criterion> = vec![
        ("conjugate (2,2,2,7), n=4", Box::new(|| conjugate_oracle(&d2227, "growth_2227_n4.cfg", "56/9", 56.0 / 9.0))),
        ("conjugate (2,2,7), n=3", Box::new(|| conjugate_oracle(&d227, "growth_227_n3.cfg", "21", 21.0))),
        ("phi2 verdicts", Box::new(|| phi2_verdicts(&d2227, &d227))),
        ("modular-norm sandwich", Box::new(modular_sandwich)),
        ("energy gradient vs finite differences", Box::new(gradient_consistency)),
        ("Sobolev constant under refinement", Box::new(sobolev_constant)),
        ("default mountain-pass solve", Box::new(|| end_to_end(&root.join("solve")))),
        ("periodic recentering", Box::new(periodic_recentering)),
        ("monotone operator", Box::new(monotone_operator)),
        ("determinism", Box::new(|| determinism(&root.join("repeat")))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] AC{:<2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of 10 criteria pass", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
