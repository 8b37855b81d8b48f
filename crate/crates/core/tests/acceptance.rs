//! Exit criteria of the solver. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::process::Command;

use csr_game::cli::{emit_csv, load_scenario, read_csv, run};
use csr_game::model::{optimal_quantity, state_transition, Controls, ModelParams, Player};
use csr_game::oracle::{
    dense_solve, follower_stationarity_check, leader_stationarity_check, scan_leader_investment,
    CheckOptions, Follower,
};
use csr_game::stationarity::{
    costate_step, manufacturer_foc_residual, manufacturer_hamiltonian,
    manufacturer_response_residual, multiplier_costate_step, multiplier_step,
    retailer_foc_residual, retailer_hamiltonian, supplier_foc_residuals, supplier_hamiltonian,
    Coupling, FocMultipliers, Multiplier, PeriodPoint,
};
use csr_game::stationarity::residual_norm;
use csr_game::{solve_game, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_params, reference, scenario_dir};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

type Hamiltonian = fn(&PeriodPoint, &ModelParams) -> f64;
type Slot = fn(&mut PeriodPoint) -> &mut f64;

fn central_difference(h: Hamiltonian, pt: &PeriodPoint, params: &ModelParams, slot: Slot) -> f64 {
    let mut probe = *pt;
    let center = *slot(&mut probe);
    let step = 1e-5 * center.abs().max(1.0);
    *slot(&mut probe) = center + step;
    let plus = h(&probe, params);
    *slot(&mut probe) = center - step;
    let minus = h(&probe, params);
    (plus - minus) / (2.0 * step)
}

fn random_point(rng: &mut ChaCha8Rng) -> PeriodPoint {
    let mut r = || rng.random_range(-3.0..3.0);
    PeriodPoint {
        x: r(),
        q: r().abs(),
        controls: Controls::new(r(), r(), r()),
        lambda: r(),
        mu_r: r(),
        mu_m: r(),
        nu: r(),
        u: r(),
        w: r(),
        u_prime: r(),
        p_s_next: r(),
        p_m_next: r(),
        p_r_next: r(),
        y_next: r(),
    }
}

/// Coded derivative conditions against central differences of the coded
/// Hamiltonians. Relative error is `|fd - coded| / max(|coded|, 1)`.
fn gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for _ in 0..120 {
        let params = random_params(&mut rng, 3);
        for _ in 0..3 {
            let pt = random_point(&mut rng);
            let c = &pt.controls;
            let coupling = Coupling { u: pt.u, w: pt.w, u_prime: pt.u_prime };
            let foc = FocMultipliers { lambda: pt.lambda, mu_r: pt.mu_r, mu_m: pt.mu_m, nu: pt.nu };
            let supplier = supplier_foc_residuals(&pt, &params);
            let cases: [(&str, Hamiltonian, Slot, f64); 15] = [
                ("R/i_r", retailer_hamiltonian, |p| &mut p.controls.i_r, retailer_foc_residual(c, pt.p_r_next, &params)),
                ("R/x", retailer_hamiltonian, |p| &mut p.x, costate_step(Player::Retailer, pt.x, pt.p_r_next, &coupling, &params)),
                ("M/i_m", manufacturer_hamiltonian, |p| &mut p.controls.i_m, manufacturer_foc_residual(c, pt.p_m_next, pt.lambda, &params)),
                ("M/i_r", manufacturer_hamiltonian, |p| &mut p.controls.i_r, manufacturer_response_residual(c, pt.p_m_next, pt.lambda, &params)),
                ("M/x", manufacturer_hamiltonian, |p| &mut p.x, costate_step(Player::Manufacturer, pt.x, pt.p_m_next, &coupling, &params)),
                ("M/p_r'", manufacturer_hamiltonian, |p| &mut p.p_r_next, multiplier_step(Multiplier::U, pt.u, &foc, &params)),
                ("S/i_s", supplier_hamiltonian, |p| &mut p.controls.i_s, supplier[0]),
                ("S/i_m", supplier_hamiltonian, |p| &mut p.controls.i_m, supplier[1]),
                ("S/i_r", supplier_hamiltonian, |p| &mut p.controls.i_r, supplier[2]),
                ("S/lambda", supplier_hamiltonian, |p| &mut p.lambda, supplier[3]),
                ("S/x", supplier_hamiltonian, |p| &mut p.x, costate_step(Player::Supplier, pt.x, pt.p_s_next, &coupling, &params)),
                ("S/u", supplier_hamiltonian, |p| &mut p.u, multiplier_costate_step(pt.u_prime, pt.y_next, &params)),
                ("S/p_r'", supplier_hamiltonian, |p| &mut p.p_r_next, multiplier_step(Multiplier::W, pt.w, &foc, &params)),
                ("S/p_m'", supplier_hamiltonian, |p| &mut p.p_m_next, multiplier_step(Multiplier::UPrime, pt.u_prime, &foc, &params)),
                ("S/p_s'", supplier_hamiltonian, |p| &mut p.p_s_next, state_transition(pt.x, c, &params)),
            ];
            for (name, h, slot, coded) in cases {
                let fd = central_difference(h, &pt, &params, slot);
                let rel = (fd - coded).abs() / coded.abs().max(1.0);
                ensure(rel < 1e-6, || format!("{name}: fd {fd} vs coded {coded} (rel {rel:e})"))?;
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} derivatives over 120 parameter sets, worst rel err {worst:.2e}"))
}

fn method_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let horizons = [1, 2, 3, 5, 10];
    let (mut worst_delta, mut worst_res): (f64, f64) = (0.0, 0.0);
    for i in 0..60 {
        let horizon = horizons[i % horizons.len()];
        let params = random_params(&mut rng, horizon);
        let (sweep, report) = solve_game(&params).map_err(|e| format!("sweep: {e}"))?;
        let dense = dense_solve(&params).map_err(|e| format!("dense: {e}"))?;
        let delta = sweep.max_abs_diff(&dense);
        let dense_res = residual_norm(&dense, &params).unwrap().max;
        ensure(delta <= 1e-8, || format!("scenario {i} (T={horizon}): delta {delta:e}"))?;
        ensure(report.residual_max <= 1e-9 && dense_res <= 1e-9, || {
            format!("scenario {i}: residuals {:e} / {dense_res:e}", report.residual_max)
        })?;
        worst_delta = worst_delta.max(delta);
        worst_res = worst_res.max(report.residual_max).max(dense_res);
    }
    Ok(format!("60 scenarios, max delta {worst_delta:.2e}, max residual {worst_res:.2e}"))
}

fn stackelberg_structure() -> Outcome {
    let params = reference();
    let (traj, _) = solve_game(&params).map_err(|e| e.to_string())?;
    let opts = CheckOptions::default();
    let r = follower_stationarity_check(&traj, &params, Follower::Retailer, &opts).unwrap();
    let m = follower_stationarity_check(&traj, &params, Follower::Manufacturer, &opts).unwrap();
    let s = leader_stationarity_check(&traj, &params, &opts).unwrap();
    ensure(r <= 1e-6, || format!("retailer check {r:e}"))?;
    ensure(m <= 1e-6, || format!("manufacturer check {m:e}"))?;
    ensure(s <= 1e-5, || format!("leader check {s:e}"))?;

    let one = ModelParams { horizon: 1, ..params };
    let (traj1, _) = solve_game(&one).unwrap();
    let i_s = traj1.controls[0].i_s;
    let scan = scan_leader_investment(&one, i_s - 50.37, i_s + 50.0, 2001)
        .unwrap()
        .ok_or("grid scan found no interior stationary point")?;
    let gap = (scan - i_s).abs();
    ensure(gap <= 1e-4, || format!("T=1 scan {scan} vs solver {i_s}"))?;
    Ok(format!("checks R {r:.1e}, M {m:.1e}, S {s:.1e}; T=1 scan gap {gap:.1e}"))
}

fn collapse_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..20 {
        let horizon = rng.random_range(1..=10);
        let base = random_params(&mut rng, horizon);
        let params = ModelParams { delta_s: 0.0, delta_m: 0.0, delta_r: 0.0, d: 0.0, d_hat: 0.0, ..base };
        let (traj, _) = solve_game(&params).map_err(|e| e.to_string())?;
        for series in [&traj.p_s, &traj.p_m, &traj.p_r] {
            ensure(series.iter().all(|v| *v == 0.0), || format!("nonzero costate {series:?}"))?;
        }
        let first = traj.controls[0];
        let variation = traj
            .controls
            .iter()
            .map(|c| (c.i_s - first.i_s).abs().max((c.i_m - first.i_m).abs()).max((c.i_r - first.i_r).abs()))
            .fold(0.0, f64::max);
        ensure(variation <= 1e-10, || format!("investment variation {variation:e}"))?;
    }
    for _ in 0..20 {
        let params = ModelParams { alpha: 1.0, ..random_params(&mut rng, 10) };
        let mut x = params.x1;
        for _ in 0..params.horizon {
            x = state_transition(x, &Controls::default(), &params);
            ensure(x == params.x1, || format!("stock drifted to {x}"))?;
        }
    }
    Ok("20 zero-benefit scenarios, 20 alpha=1 roll-outs".into())
}

fn degeneracy_handling() -> Outcome {
    let mut params = reference();
    params.theta = 0.0;
    match solve_game(&params) {
        Err(Error::UndeterminedControls { .. }) => {}
        other => return Err(format!("sweep returned {other:?}")),
    }
    match dense_solve(&params) {
        Err(Error::UndeterminedControls { .. }) => {}
        other => return Err(format!("dense returned {other:?}")),
    }
    params.tau = 0.0;
    params.theta = 0.3;
    ensure(matches!(solve_game(&params), Err(Error::UndeterminedControls { .. })), || {
        "tau = 0 accepted".into()
    })?;

    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_csr-game"))
        .arg("solve")
        .arg(scenario_dir().join("degenerate.toml"))
        .arg("--out-dir")
        .arg(out.path())
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&status.stderr);
    ensure(!status.status.success(), || "degenerate run exited 0".into())?;
    ensure(stderr.contains("controls undetermined by FOC"), || format!("stderr: {stderr}"))?;
    ensure(std::fs::read_dir(out.path()).unwrap().next().is_none(), || "outputs were written".into())?;
    Ok(format!("exit {:?}: {}", status.status.code(), stderr.trim()))
}

fn quantity_subgame() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..200 {
        let p = random_params(&mut rng, 3);
        let expect = ((p.a - p.v) / (2.0 * p.b)).max(0.0);
        let q = optimal_quantity(&p).unwrap();
        ensure(q == expect, || format!("{q} vs {expect}"))?;
        let other = random_params(&mut rng, 7);
        let mixed = ModelParams { a: p.a, b: p.b, v: p.v, ..other };
        ensure(optimal_quantity(&mixed).unwrap() == q, || "quantity moved with CSR parameters".into())?;
        let (traj, _) = solve_game(&p).unwrap();
        ensure(traj.q.iter().all(|v| *v == q), || "trajectory quantity differs".into())?;
    }
    Ok("200 randomized parameter sets".into())
}

fn determinism_and_io() -> Outcome {
    let scenario = scenario_dir().join("reference.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_csr-game"))
            .arg("solve")
            .arg(&scenario)
            .arg("--oracle")
            .arg("--out-dir")
            .arg(dir.path())
            .status()
            .unwrap();
        ensure(status.success(), || format!("reference run exited {status}"))?;
    }
    for file in ["reference.trajectory.csv", "reference.report"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        ensure(a == b, || format!("{file} differs between runs"))?;
    }

    let loaded = load_scenario(&scenario).unwrap();
    let (traj, _) = run(&loaded).unwrap();
    let from_cli = read_csv(&dirs[0].path().join("reference.trajectory.csv")).unwrap();
    ensure(from_cli == traj, || "CLI CSV does not match in-memory trajectory".into())?;
    let path = dirs[0].path().join("again.csv");
    emit_csv(&traj, &path).unwrap();
    ensure(read_csv(&path).unwrap() == traj, || "CSV round trip lost precision".into())?;
    Ok("byte-identical CSV and report; CSV round trip exact".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gradient fidelity", gradient_fidelity),
        ("method-vs-oracle equivalence", method_vs_oracle),
        ("Stackelberg structure", stackelberg_structure),
        ("collapse properties", collapse_properties),
        ("degeneracy handling", degeneracy_handling),
        ("quantity subgame", quantity_subgame),
        ("determinism and I/O", determinism_and_io),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
