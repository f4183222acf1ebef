"""Smoke test of the antonov Python bindings."""

import math

import antonov


def main():
    st = antonov.SteadyState("polytrope", depth=1.0, k=1.0)
    assert abs(st.e0 - 2 * math.pi * st.m0 * st.r0) <= 1e-9 * abs(st.e0)
    e = st.emin + 0.5 * st.depth
    assert st.period(e) > 0 and st.period_derivative(e) > 0
    x, v = st.chart_point(0.5, e)
    assert abs(x - st.turning_point(e)) < 1e-8 and abs(v) < 1e-8
    assert antonov.SteadyState.from_json(st.to_json()).m0 == st.m0

    harm = antonov.SteadyState.harmonic(2.0)
    assert abs(harm.period(0.3) - math.pi) < 1e-8

    bands = antonov.BandStructure(st, 3)
    assert [m[0] for m in bands.modes()] == [1, 2, 3]
    holds, t_lo, t_hi = bands.no_gap_condition()
    assert holds == (t_hi > 2 * t_lo)

    op = antonov.AntonovOperator(st, lmax=2, n_energy=16)
    lam = op.eigenvalues()
    assert op.dim == 32 and lam[0] > 0 and lam == sorted(lam)
    assert op.summary()["dimension"] == 32

    res = op.scattering_residuals()
    assert res["free_collapse"] <= 1e-10

    run = op.evolve("eigenvector", n_time=256)
    assert max(abs(v - run["energy"][0]) for v in run["energy"]) <= 1e-10 * run["energy"][0]
    assert run["damping"]["late_window_ratio"] > 0.5

    results = antonov.run_acceptance([1, 2, 3])
    assert all(r["passed"] for r in results), results
    print(f"antonov {antonov.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
