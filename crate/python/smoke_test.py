"""Smoke test for the csrgame extension.

Build and install into a virtualenv first:
    python -m venv .venv && . .venv/bin/activate
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
then run:
    python python/smoke_test.py
"""

import csrgame

REFERENCE = dict(
    alpha=0.9, beta_s=0.3, beta_m=0.3, beta_r=0.2, tau=0.1, theta=0.05,
    delta_s=0.01, delta_m=0.02, delta_r=0.03, d=0.1, d_hat=0.1,
    a=10.0, b=1.0, v=2.0, z=12.0, c=1.0, x1=1.0, horizon_T=3,
)


def main():
    params = csrgame.ModelParams(**REFERENCE)
    params.validate()

    traj, report = csrgame.solve_game(params)
    assert report.solver_path == "sweep"
    assert report.residual_max <= 1e-9, report.residual_max
    assert len(traj.x) == 4 and len(traj.i_s) == 3

    dense = csrgame.dense_solve(params)
    assert traj.max_abs_diff(dense) <= 1e-8

    res_max, _ = csrgame.residual_norm(traj, params)
    assert res_max <= 1e-9
    assert csrgame.follower_check(traj, params, "retailer") <= 1e-6
    assert csrgame.follower_check(traj, params, "manufacturer") <= 1e-6
    assert csrgame.leader_check(traj, params) <= 1e-5

    assert csrgame.optimal_quantity(params) == 4.0
    assert traj.q == [4.0, 4.0, 4.0]
    total = sum(
        csrgame.stage_payoff("retailer", traj.x[k], traj.q[k],
                             traj.i_s[k], traj.i_m[k], traj.i_r[k], params)
        for k in range(3)
    )
    assert abs(total - report.objective_retailer) <= 1e-9 * max(1.0, abs(total))

    params.theta = 0.0
    try:
        csrgame.solve_game(params)
    except ValueError as e:
        assert "controls undetermined" in str(e)
    else:
        raise AssertionError("degenerate parameters accepted")

    print(f"ok: residual {report.residual_max:.2e}, i_s = {traj.i_s}")


if __name__ == "__main__":
    main()
