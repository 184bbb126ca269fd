use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kylebridge::kernels::{default_lattice, eta_measure};
use kylebridge::kyle::{eps_sweep, value_from_solution, write_sweep_csv, SimSpec, SweepConfig};
use kylebridge::quadrature::{DiscreteMeasure, QuadratureGrid};
use kylebridge::schrodinger::{gaussian_closed_form, sinkhorn_solve, SchrodingerSolution, SinkhornOptions};
use kylebridge::simulate::io::{write_binary, write_moments_csv, write_terminal_csv};
use kylebridge::simulate::{
    entropy_estimate, equivalence_check, simulate, slice, terminal_gap, Action, DriftSystem, PairMoments, PathEnsemble,
    SimConfig, SystemTag, TableOptions,
};

use crate::config::{Family, RunConfig};
use crate::error::CliError;

/// Files `report` knows how to summarise, in output order.
const REPORTED: [&str; 5] = ["validation.csv", "sinkhorn_summary.csv", "summary.csv", "equivalence.csv", "sweep.csv"];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// `key,value` rows.
fn write_summary(dir: &Path, name: &str, rows: &[(&str, String)]) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    writeln!(w, "key,value")?;
    for (k, v) in rows {
        writeln!(w, "{k},{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn validate_kernel(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let kernel = cfg.build_kernel()?;
    let report = kylebridge::kernels::validate_kernel(kernel.as_ref(), &default_lattice(kernel.as_ref()), cfg.threshold());
    let mut w = create(out, "validation.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    println!(
        "{}: max conservation error {:.3e}, max Chapman-Kolmogorov error {:.3e}, threshold {:.1e}",
        kernel.name(),
        report.max_mass_error,
        report.max_ck_error,
        report.threshold
    );
    report.ensure()?;
    Ok(())
}

fn eta(cfg: &RunConfig, kernel: &dyn kylebridge::kernels::TransitionKernel) -> Result<DiscreteMeasure, CliError> {
    let grid = QuadratureGrid::uniform(kernel.domain(), cfg.grid.nodes)?;
    Ok(eta_measure(kernel, &grid, cfg.kernel.z0)?)
}

fn solve(cfg: &RunConfig, kernel: &dyn kylebridge::kernels::TransitionKernel) -> Result<SchrodingerSolution, CliError> {
    let eps = cfg.eps()?;
    let eta = eta(cfg, kernel)?;
    let opts = SinkhornOptions::new(eps).tol(cfg.solver.tol).max_iter(cfg.solver.max_iter);
    Ok(sinkhorn_solve(&eta, &eta, &cfg.cost(), &opts)?)
}

/// Largest deviation of the Kyle potentials from the Gaussian closed form on
/// `|z| <= window`, after removing the gauge constant at the node nearest zero.
fn closed_form_error(sol: &SchrodingerSolution, window: f64) -> Result<f64, CliError> {
    let cf = gaussian_closed_form(sol.eps)?;
    let (phi, zeta) = sol.kyle_potentials();
    let z = &sol.coupling.z.points;
    let mid = (0..z.len()).min_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs())).unwrap_or(0);
    let c = phi[mid] - cf.phi_f(z[mid]);
    let err = z
        .iter()
        .enumerate()
        .filter(|(_, x)| x.abs() <= window)
        .map(|(i, &x)| (phi[i] - cf.phi_f(x) - c).abs().max((zeta[i] - cf.zeta(x) + c).abs()))
        .fold(0.0, f64::max);
    Ok(err)
}

pub fn sinkhorn(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let kernel = cfg.build_kernel()?;
    let sol = solve(cfg, kernel.as_ref())?;
    let mut w = create(out, "potentials.csv")?;
    sol.write_potentials_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "coupling.csv")?;
    sol.write_coupling_csv(&mut w)?;
    w.flush()?;

    let corr = sol.coupling.joint().moments().corr();
    let mut rows = vec![
        ("eps", num(sol.eps)),
        ("iterations", sol.iterations.to_string()),
        ("residual", num(sol.residual)),
        ("plan_corr", num(corr)),
        ("relative_entropy", num(sol.coupling.relative_entropy())),
        ("value", num(value_from_solution(&sol))),
    ];
    println!("sinkhorn eps = {}: {} iterations, residual {:.3e}, plan corr {corr:.9}", sol.eps, sol.iterations, sol.residual);

    let mut verdict = Ok(());
    if cfg.solver.verify {
        if cfg.kernel.family != Family::Brownian || cfg.kernel.z0 != 0.0 {
            return Err(CliError::Config("solver.verify: closed form exists for family brownian with z0 = 0 only".into()));
        }
        let window = (cfg.grid.z_upper - 2.0).clamp(0.0, 6.0);
        let err = closed_form_error(&sol, window)?;
        let lambda = gaussian_closed_form(sol.eps)?.lambda;
        rows.push(("closed_form_error", num(err)));
        rows.push(("closed_form_lambda", num(lambda)));
        println!("closed-form check on |z| <= {window}: sup error {err:.3e} (tolerance {:.1e})", cfg.solver.verify_tol);
        if !(err < cfg.solver.verify_tol) {
            verdict = Err(CliError::Failed(format!(
                "potentials differ from the closed form by {err:.3e} (tolerance {:.1e})",
                cfg.solver.verify_tol
            )));
        }
    }
    write_summary(out, "sinkhorn_summary.csv", &rows)?;
    verdict
}

fn build_system(
    cfg: &RunConfig,
    tag: SystemTag,
    z1: Option<f64>,
    sol: &mut Option<SchrodingerSolution>,
) -> Result<DriftSystem, CliError> {
    let kernel = cfg.build_kernel()?;
    let opts = TableOptions::default();
    let mut coupling = || -> Result<std::sync::Arc<kylebridge::schrodinger::Coupling>, CliError> {
        if sol.is_none() {
            *sol = Some(solve(cfg, kernel.as_ref())?);
        }
        Ok(sol.as_ref().map(|s| s.coupling.clone()).expect("solved above"))
    };
    Ok(match tag {
        SystemTag::Reference => DriftSystem::reference(kernel.clone()),
        SystemTag::UnconstrainedBridge => DriftSystem::unconstrained(kernel.clone(), coupling()?.as_ref(), opts)?,
        SystemTag::Constrained => DriftSystem::constrained(kernel.clone(), coupling()?.as_ref(), opts)?,
        SystemTag::FiveLemma => DriftSystem::five_lemma(kernel.clone(), coupling()?.as_ref(), opts)?,
        SystemTag::Limit => DriftSystem::limit(kernel.clone(), &eta(cfg, kernel.as_ref())?, opts)?,
        SystemTag::ClassicalKyle => match z1 {
            Some(_) => DriftSystem::classical_kyle(kernel.clone(), None, z1)?,
            None => DriftSystem::classical_kyle(kernel.clone(), Some(&eta(cfg, kernel.as_ref())?), None)?,
        },
    })
}

fn action_for(tag: SystemTag) -> Action {
    match tag {
        SystemTag::Constrained | SystemTag::ClassicalKyle | SystemTag::FiveLemma => Action::Y,
        _ => Action::Both,
    }
}

fn ensemble_rows(ens: &PathEnsemble) -> Result<Vec<(&'static str, String)>, CliError> {
    let entropy = entropy_estimate(ens, action_for(ens.tag))?;
    let gap = terminal_gap(ens, 1.0 - ens.delta);
    let (z, y) = slice(ens, ens.time_index(1.0));
    let m = PairMoments::of(&z, &y);
    let absorbed = |v: &[f64]| v.iter().filter(|t| t.is_finite()).count() as f64 / v.len() as f64;
    Ok(vec![
        ("system", ens.tag.as_str().to_string()),
        ("seed", ens.seed.to_string()),
        ("paths", ens.paths().to_string()),
        ("steps", ens.steps.to_string()),
        ("delta", num(ens.delta)),
        ("aborted", ens.aborted.to_string()),
        ("entropy_mean", num(entropy.mean)),
        ("entropy_stderr", num(entropy.stderr)),
        ("terminal_gap_mean", num(gap.mean)),
        ("terminal_gap_stderr", num(gap.stderr)),
        ("terminal_mean_z", num(m.mean_z)),
        ("terminal_mean_y", num(m.mean_y)),
        ("terminal_corr", num(m.corr())),
        ("absorbed_z", num(absorbed(&ens.absorbed_z))),
        ("absorbed_y", num(absorbed(&ens.absorbed_y))),
    ])
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let sim = cfg.sim()?;
    let tag: SystemTag = sim.system.parse()?;
    let seed = seed.unwrap_or(sim.seed);
    let mut sol = None;
    let system = build_system(cfg, tag, sim.z1, &mut sol)?;
    let sc = SimConfig::new(sim.steps, sim.paths, seed).start(cfg.kernel.z0).delta(sim.delta).substeps(sim.substeps);
    let ens = simulate(&system, &sc)?;

    let mut w = create(out, "terminal.csv")?;
    write_terminal_csv(&ens, &mut w)?;
    w.flush()?;
    let mut w = create(out, "moments.csv")?;
    write_moments_csv(&ens, &mut w)?;
    w.flush()?;
    if sim.dump {
        let mut w = create(out, "paths.bin")?;
        write_binary(&ens, &mut w)?;
        w.flush()?;
    }
    let rows = ensemble_rows(&ens)?;
    write_summary(out, "summary.csv", &rows)?;
    for (k, v) in &rows {
        println!("{k} = {v}");
    }

    if let Some(other) = &sim.compare {
        let tag_b: SystemTag = other.parse()?;
        let system_b = build_system(cfg, tag_b, sim.z1, &mut sol)?;
        let ens_b = simulate(&system_b, &SimConfig { seed: seed.wrapping_add(1), ..sc.clone() })?;
        let rep = equivalence_check(&ens, &ens_b, &[0.25, 0.5, 0.75, 1.0 - sim.delta])?;
        let mut w = create(out, "equivalence.csv")?;
        writeln!(w, "t,statistic,a,b,stderr,z_score")?;
        for s in &rep.slices {
            for (name, g) in s.gaps() {
                writeln!(w, "{},{name},{},{},{},{}", num(s.t), num(g.a), num(g.b), num(g.stderr), num(g.diff().abs() / g.stderr))?;
            }
            writeln!(w, "{},energy_distance,{},,,", num(s.t), num(s.energy_distance))?;
        }
        w.flush()?;
        println!("{} vs {}: all moment gaps within 3 stderr: {}", tag, tag_b, rep.within(3.0));
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let list = cfg.eps_list()?;
    let kernel = cfg.build_kernel()?;
    let mut sc = SweepConfig::new(list, kernel);
    sc.z0 = cfg.kernel.z0;
    sc.nodes = cfg.grid.nodes;
    sc.cost = cfg.cost();
    sc.tol = cfg.solver.tol;
    sc.max_iter = cfg.solver.max_iter;
    sc.sim = cfg
        .sim
        .as_ref()
        .map(|s| SimSpec { steps: s.steps, paths: s.paths, seed: seed.unwrap_or(s.seed), delta: s.delta });
    let res = eps_sweep(&sc)?;
    let mut w = create(out, "sweep.csv")?;
    write_sweep_csv(&res, &mut w)?;
    w.flush()?;

    // Gaussian reference curves on a log grid spanning the sweep
    if cfg.kernel.family == Family::Brownian && cfg.kernel.z0 == 0.0 {
        let (hi, lo) = (sc.eps[0], sc.eps[sc.eps.len() - 1]);
        let n = 61;
        let mut w = create(out, "sweep_reference.csv")?;
        writeln!(w, "eps,lambda,value,entropy")?;
        for i in 0..n {
            let eps = if n == 1 || hi == lo { hi } else { hi * (lo / hi).powf(i as f64 / (n - 1) as f64) };
            let cf = gaussian_closed_form(eps)?;
            writeln!(w, "{},{},{},{}", num(eps), num(cf.lambda), num(cf.value()), num(cf.entropy()))?;
        }
        w.flush()?;
    }

    for r in &res.rows {
        if r.converged {
            println!("eps = {}: value {:.6}, drift gap {:.4}, {} iterations", r.eps, r.value, r.drift_gap, r.iterations);
        } else {
            eprintln!("warning: eps = {} did not converge (residual {:.3e}); row flagged", r.eps, r.residual);
        }
    }
    Ok(())
}

/// Summarises the known result files of `out` into `report.txt`.
pub fn report(out: &Path) -> Result<(), CliError> {
    let mut text = String::new();
    for name in REPORTED {
        let path: PathBuf = out.join(name);
        let Ok(body) = std::fs::read_to_string(&path) else { continue };
        text.push_str(&format!("== {name}\n"));
        text.push_str(&summarise(name, &body));
    }
    if text.is_empty() {
        return Err(CliError::Failed(format!("no result files in {}", out.display())));
    }
    std::fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn summarise(name: &str, body: &str) -> String {
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    match name {
        "validation.csv" => {
            let max_col = |c: usize| rows.iter().filter_map(|r| r.get(c)?.parse::<f64>().ok()).fold(0.0, f64::max);
            format!("rows {}, max mass error {:.3e}, max CK error {:.3e}\n", rows.len(), max_col(2), max_col(3))
        }
        "equivalence.csv" => {
            let worst = rows
                .iter()
                .filter_map(|r| Some((r.get(1)?, r.get(5)?.parse::<f64>().ok()?)))
                .fold(("", 0.0), |a, (n, z)| if z > a.1 { (n, z) } else { a });
            format!("rows {}, largest gap {:.2} stderr ({})\n", rows.len(), worst.1, worst.0)
        }
        _ => {
            let mut s = String::new();
            for r in &rows {
                let cells: Vec<String> = header.iter().zip(r).map(|(h, v)| format!("{h}={}", short(v))).collect();
                s.push_str(&cells.join(" "));
                s.push('\n');
            }
            s
        }
    }
}

fn short(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('e') || v.contains('.') => format!("{x:.6}"),
        _ => v.to_string(),
    }
}
