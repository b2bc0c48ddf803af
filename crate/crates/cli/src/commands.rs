//! One function per subcommand: parse the config, run the solver and return
//! the files to write.

use std::fmt::Write as _;
use std::path::Path;

use flowmm::execution::{run_exec_trials, strategy_means, trials_table, ExecExperiment, ExecutionKind};
use flowmm::factor::{
    feynman_kac_fixed_point, quote_surface, solve_h1_h0_pde, solve_h2_pde, surface_table, PdeOptions,
};
use flowmm::fbsde::{self, monotonicity_check, power_fit, solve_auto, trajectory_table};
use flowmm::io::Table;
use flowmm::lattice::{
    compare_table, compare_theta, macro_inventory_path, simulate_as_paths, solve_theta_discrete, solve_theta_macro,
};
use flowmm::riccati::{solve_affine_fbsde, solve_h_system};
use flowmm::rng::substream_seed;
use flowmm::QGrid;

use crate::config::{self, resolve_penalty, FlowKind};
use crate::plot;
use crate::{Artifact, CliError};

fn csv(name: &'static str, table: &Table) -> Artifact {
    Artifact { name, contents: table.to_csv() }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn pick_seed(cli: Option<u64>, file: Option<u64>) -> u64 {
    cli.or(file).unwrap_or(0)
}

pub fn riccati(path: &Path, seed: Option<u64>) -> Result<Vec<Artifact>, CliError> {
    let cfg: config::RiccatiConfig = config::load(path)?;
    let seed = pick_seed(seed, cfg.seed);
    let (zeta, gamma) = cfg.model.linear_params()?;
    let (flow, file_pen) = cfg.flow.build(seed, base_dir(path))?;
    let pen = resolve_penalty(cfg.penalty.as_ref(), file_pen, flow.grid().len())?;
    let hs = solve_h_system(&flow, &pen, zeta, gamma)?;
    let (field, tr) = solve_affine_fbsde(&flow, &pen, zeta, gamma, cfg.q0)?;
    let mut coef = Table::new(&["t", "h2", "h1", "h0", "P", "H"]);
    for i in 0..hs.grid.len() {
        coef.push(vec![hs.grid.time(i), hs.h2[i], hs.h1[i], hs.h0[i], field.p[i], field.h[i]]);
    }
    Ok(vec![
        csv("coefficients.csv", &coef),
        csv("trajectory.csv", &trajectory_table(&tr)),
        Artifact { name: "plot.py", contents: plot::RICCATI.to_string() },
    ])
}

pub fn solve_hjb(path: &Path, seed: Option<u64>) -> Result<Vec<Artifact>, CliError> {
    let cfg: config::HjbConfig = config::load(path)?;
    let seed = pick_seed(seed, cfg.seed);
    let (zeta, gamma) = cfg.model.linear_params()?;
    let factor = cfg.factor.build()?;
    let grid = cfg.lattice.build()?;
    let h2 = solve_h2_pde(&factor, &grid, gamma)?;
    let (h1, h0) = solve_h1_h0_pde(&h2, &factor, zeta, gamma, PdeOptions::default())?;
    let (da, db) = quote_surface(&h2, &h1, zeta, gamma, cfg.q);
    let tg = grid.time_grid();
    let mut quotes = Table::new(&["t", "l", "delta_a", "delta_b"]);
    for i in 0..grid.n_t {
        for j in 0..grid.n_l {
            quotes.push(vec![tg.time(i), grid.l(j), da.at(i, j), db.at(i, j)]);
        }
    }
    let mut out = vec![csv("surface.csv", &surface_table(&h2, &h1, &h0)), csv("quotes.csv", &quotes)];
    if let Some(mc) = &cfg.mc {
        let (mc, lattice) = mc.build(seed, &grid)?;
        let est = feynman_kac_fixed_point(&factor, gamma, mc, &lattice)?;
        let lg = lattice.time_grid();
        let mut fk = Table::new(&["t", "l", "h2_fk", "stderr", "h2_pde"]);
        for i in 0..lattice.n_t {
            for j in 0..lattice.n_l {
                let (t, l) = (lg.time(i), lattice.l(j));
                fk.push(vec![t, l, est.surface.at(i, j), est.stderr[i * lattice.n_l + j], h2.interp(t, l)]);
            }
        }
        out.push(csv("fk.csv", &fk));
    }
    out.push(Artifact { name: "plot.py", contents: plot::HJB.to_string() });
    Ok(out)
}

pub fn solve_fbsde(path: &Path, seed: Option<u64>) -> Result<Vec<Artifact>, CliError> {
    let cfg: config::FbsdeConfig = config::load(path)?;
    let seed = pick_seed(seed, cfg.seed);
    let (models, trunc) = cfg.model.pair()?;
    let (flow, file_pen) = cfg.flow.build(seed, base_dir(path))?;
    let pen = resolve_penalty(cfg.penalty.as_ref(), file_pen, flow.grid().len())?;
    let (field, tr) = solve_auto(&flow, &pen, &models, &trunc, &cfg.grid.spec()?, cfg.q0)?;
    let mut out = vec![csv("field.csv", &field.to_table()), csv("trajectory.csv", &trajectory_table(&tr))];
    if !cfg.check_q0.is_empty() {
        let report = monotonicity_check(&field, &flow, &pen, &models, &trunc, &cfg.check_q0, 1e-8)?;
        let mut t = Table::new(&["q0", "t", "Q", "delta_a", "delta_b"]);
        for (q0, tr) in cfg.check_q0.iter().zip(&report.trajectories) {
            for i in 0..tr.times.len() {
                t.push(vec![*q0, tr.times[i], tr.q[i], tr.delta_a[i], tr.delta_b[i]]);
            }
        }
        out.push(csv("ordering.csv", &t));
        println!(
            "ordering holds: {} (worst ask increase {:e}, worst bid decrease {:e})",
            report.holds, report.worst_ask, report.worst_bid
        );
    }
    out.push(Artifact { name: "plot.py", contents: plot::FBSDE.to_string() });
    Ok(out)
}

pub fn as_compare(path: &Path, seed: Option<u64>) -> Result<Vec<Artifact>, CliError> {
    let cfg: config::AsCompareConfig = config::load(path)?;
    let seed = pick_seed(seed, cfg.seed);
    if cfg.compare.is_none() && cfg.paths.is_none() {
        return Err(CliError::Config("as-compare needs a [compare] or [paths] table".into()));
    }
    let mut out = Vec::new();
    if let Some(c) = &cfg.compare {
        let base = cfg.params.params(c.deltas.iter().fold(0.0f64, |m, &d| m.max(d)));
        let rows = compare_theta(&base, &c.deltas, (c.q_min, c.q_max), c.n_t, c.macro_dq)?;
        let mut values = Table::new(&["delta", "q", "theta", "theta_macro"]);
        for r in &rows {
            for k in 0..r.q.len() {
                values.push(vec![r.delta, r.q[k], r.theta[k], r.theta_macro[k]]);
            }
        }
        out.push(csv("compare.csv", &compare_table(&rows)));
        out.push(csv("theta0.csv", &values));
    }
    if let Some(p) = &cfg.paths {
        let params = cfg.params.params(p.delta);
        let theta = solve_theta_discrete(&params, p.n_t)?;
        let bundle = simulate_as_paths(&theta, &params, p.q0, seed, p.n_paths, p.n_steps)?;
        for w in &bundle.warnings {
            eprintln!("warning: {w}");
        }
        let grid = QGrid::new(-p.macro_q_bound, p.macro_q_bound, p.macro_n_q, p.n_t, params.horizon)?;
        let theta_macro = solve_theta_macro(&params, &grid)?;
        let path = macro_inventory_path(&theta_macro, &params, p.q0, p.substeps)?;
        let mut macro_path = Table::new(&["t", "q"]);
        for (i, q) in path.iter().enumerate() {
            macro_path.push(vec![theta_macro.times.time(i), *q]);
        }
        out.push(csv("theta_discrete.csv", &theta.to_table()));
        out.push(csv("theta_macro.csv", &theta_macro.to_table()));
        out.push(csv("as_mean_path.csv", &bundle.mean_table()));
        out.push(csv("as_heatmap.csv", &bundle.heatmap_table()));
        out.push(csv("macro_path.csv", &macro_path));
    }
    out.push(Artifact { name: "plot.py", contents: plot::AS_COMPARE.to_string() });
    Ok(out)
}

pub fn impact_sweep(path: &Path, seed: Option<u64>) -> Result<Vec<Artifact>, CliError> {
    let cfg: config::ImpactConfig = config::load(path)?;
    let seed = pick_seed(seed, cfg.seed);
    let (models, trunc) = cfg.model.pair()?;
    let spec = cfg.grid.spec()?;
    let s = &cfg.sweep;
    if s.count == 0 || s.realizations == 0 {
        return Err(CliError::Config("sweep.count and sweep.realizations must be at least 1".into()));
    }
    if s.realizations > 1 && cfg.flow.kind != FlowKind::Iid {
        return Err(CliError::Config("sweep.realizations > 1 needs flow.kind = \"iid\"".into()));
    }
    let targets: Vec<f64> = (0..s.count).map(|n| s.step * n as f64).collect();
    let mut table = Table::new(&["realization", "imbalance", "delta_a"]);
    let mut points = Vec::new();
    for r in 0..s.realizations {
        let flow_seed = if s.realizations == 1 { seed } else { substream_seed(seed, r as u64) };
        let (base, file_pen) = cfg.flow.build(flow_seed, base_dir(path))?;
        let pen = resolve_penalty(cfg.penalty.as_ref(), file_pen, base.grid().len())?;
        let rows = fbsde::impact_sweep(&base, &pen, &models, &trunc, &spec, cfg.q0, &targets)?;
        for (x, d) in rows {
            table.push(vec![r as f64, x, d]);
            if x > 0.0 {
                points.push((x, d));
            }
        }
    }
    let mut out = vec![csv("impact.csv", &table)];
    if points.len() >= 3 {
        let fit = power_fit(&points)?;
        let mut t = Table::new(&["c", "beta", "r2"]);
        t.push(vec![fit.c, fit.beta, fit.r2]);
        println!("power fit: c = {}, beta = {}, r2 = {}", fit.c, fit.beta, fit.r2);
        out.push(csv("fit.csv", &t));
    }
    out.push(Artifact { name: "plot.py", contents: plot::IMPACT.to_string() });
    Ok(out)
}

pub fn exec_eval(path: &Path, seed: Option<u64>) -> Result<Vec<Artifact>, CliError> {
    let cfg: config::ExecConfig = config::load(path)?;
    let seed = pick_seed(seed, cfg.seed);
    let e = &cfg.exec;
    if e.trader_phi != 0.0 || e.temporary_impact != 0.0 {
        return Err(CliError::Config("exec.trader_phi and exec.temporary_impact are reserved and must be 0".into()));
    }
    let (models, trunc) = cfg.model.pair()?;
    let experiment = ExecExperiment {
        n_trials: e.n_trials,
        seed,
        n_grid: e.n_grid,
        horizon: e.horizon,
        flow_mean: e.flow_mean,
        flow_spread: e.flow_spread,
        imbalance: e.imbalance,
        phi: cfg.penalty.phi,
        terminal: cfg.penalty.terminal,
        q0_mm: e.q0_mm,
        q0_exec: e.q0_exec,
    };
    let rows = run_exec_trials(&experiment, &models, &trunc, &cfg.grid.spec()?)?;
    let means = strategy_means(&rows);
    let n = rows.len() as f64;
    let mut summary = String::from("strategy,mean,stderr\n");
    for (k, kind) in ExecutionKind::ALL.iter().enumerate() {
        let var = rows.iter().map(|r| (r.get(*kind) - means[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let se = (var / n).sqrt();
        let _ = writeln!(summary, "{},{},{}", kind.name(), means[k], se);
        println!("{}: mean {:.6} (se {:.6})", kind.name(), means[k], se);
    }
    Ok(vec![
        csv("trials.csv", &trials_table(&rows)),
        Artifact { name: "summary.csv", contents: summary },
        Artifact { name: "plot.py", contents: plot::EXEC.to_string() },
    ])
}
