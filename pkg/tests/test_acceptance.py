"""Acceptance criteria on toy systems and the N = 200 Rb-87 scenario.

Each criterion is a function returning an ``Outcome``; the pytest wrappers
record one PASS/FAIL line per criterion (printed in the terminal summary).
Run this file directly to print the lines without pytest.
"""

from __future__ import annotations

import math
import time
from typing import NamedTuple

import numpy as np
import pytest

from bec_kinetics.config import load_config
from bec_kinetics.dynamics import (
    DistributionState,
    log_grid,
    observables,
    propagate,
    propagate_to_steady,
    steady_state_gibbs,
    steady_state_product,
    total_variation,
)
from bec_kinetics.oracles import check_canonical, check_gibbs, check_two_state
from bec_kinetics.rates import detailed_balance_residual
from bec_kinetics.runner import build_model

import scenario

RESULTS: list[str] = []


class Outcome(NamedTuple):
    number: int
    title: str
    passed: bool
    detail: str


def _report(out: Outcome) -> Outcome:
    line = f"criterion {out.number:2d} {'PASS' if out.passed else 'FAIL'} {out.title}: {out.detail}"
    RESULTS.append(line)
    print(line)
    return out


def _timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - t0


def criterion_1() -> Outcome:
    err, secs = _timed(lambda: check_canonical(max_m=6))
    ok = err < 1e-12 and secs < 1.0
    return Outcome(1, "canonical recursion vs enumeration", ok, f"max rel err {err:.2e} (< 1e-12), {secs:.3f} s (< 1 s)")


def criterion_2() -> Outcome:
    err, secs = _timed(lambda: check_gibbs(n_atoms=4))
    ok = err < 1e-12 and secs < 1.0
    return Outcome(2, "Gibbs marginal vs Fock enumeration", ok, f"max abs err {err:.2e} (< 1e-12), {secs:.3f} s (< 1 s)")


def criterion_3() -> Outcome:
    def pipeline():
        model = build_model(load_config("paper-n200", ["rate_mode=balanced"]))
        p0 = DistributionState.delta(model.config.n_atoms, 0)
        states = (
            propagate_to_steady(model.generator, p0),
            steady_state_product(model.rates),
            steady_state_gibbs(model.table, model.spectrum, model.config.n_atoms),
        )
        return states

    (asym, prod, gibbs), secs = _timed(pipeline)
    tvs = [total_variation(asym, prod), total_variation(asym, gibbs), total_variation(prod, gibbs)]
    ok = max(tvs) < 1e-6 and secs < 600
    return Outcome(
        3, "steady-state triangle (balanced)", ok,
        "TV asym-prod {:.2e}, asym-gibbs {:.2e}, prod-gibbs {:.2e} (< 1e-6), {:.1f} s".format(*tvs, secs),
    )


def criterion_4() -> Outcome:
    n = scenario.N_ATOMS
    gen = scenario.generator("physical")
    asym = propagate_to_steady(gen, DistributionState.delta(n, 0))
    gibbs = steady_state_gibbs(scenario.table(), scenario.spectrum(), n)
    tv = total_variation(asym, gibbs)
    narrow = scenario.rates("physical", beta_hbar_gamma=0.01)
    res = detailed_balance_residual(narrow, scenario.table(), scenario.spectrum())
    r_max = float(np.nanmax(np.abs(res)))
    ok = tv < 0.02 and r_max < 0.05
    return Outcome(
        4, "finite-width robustness (physical)", ok,
        f"TV(steady, gibbs) at 0.1 = {tv:.4f} (< 0.02); max|r| at 0.01 = {r_max:.4f} (< 0.05)",
    )


def _scenario_trajectory(mode: str = "physical"):
    return propagate(scenario.generator(mode), DistributionState.delta(scenario.N_ATOMS, 0), log_grid())


def _inflections(t: np.ndarray, y: np.ndarray):
    """Indices where the discrete curvature changes sign, and the sign sequence."""
    slope = np.diff(y) / np.diff(t)
    curv = np.diff(slope)
    floor = 1e-9 * np.abs(curv).max()
    signs = np.sign(np.where(np.abs(curv) > floor, curv, 0.0))
    signs = signs[signs != 0]
    return [int(i) for i in np.nonzero(signs[1:] != signs[:-1])[0]], signs


def criterion_5() -> Outcome:
    traj = _scenario_trajectory()
    s, v = traj.sigma0, traj.var_n0
    monotone = bool(np.all(np.diff(s) > 0))
    changes, signs = _inflections(traj.times, s)
    s_shape = monotone and len(changes) == 1 and signs[0] > 0
    peak = int(np.argmax(v))
    eq_var = observables(steady_state_product(scenario.rates("physical"))).var_n0
    rises = bool(np.all(np.diff(v[: peak + 1]) >= -1e-9 * v.max()))
    interior = 0 < peak < len(v) - 1
    falls = v[-1] < 0.5 * v[peak] and abs(v[-1] - eq_var) < 0.05 * eq_var
    ok = s_shape and interior and rises and falls
    return Outcome(
        5, "growth-curve shape", ok,
        f"sigma0 monotone={monotone}, inflections={len(changes)} at t={traj.times[changes[0] + 1] if changes else float('nan'):.3g} s; "
        f"var peak {v[peak]:.1f} at t={traj.times[peak]:.3g} s, final {v[-1]:.2f} vs equilibrium {eq_var:.2f}",
    )


def criterion_6() -> Outcome:
    err, secs = _timed(check_two_state)
    ok = err < 1e-8 and secs < 1.0
    return Outcome(6, "two-state closed form", ok, f"max abs err {err:.2e} (< 1e-8), {secs:.3f} s (< 1 s)")


def criterion_7() -> Outcome:
    parts = []
    ok = True
    for mode in ("physical", "balanced"):
        gen = scenario.generator(mode)
        traj = _scenario_trajectory(mode)
        col = float(np.abs(gen.column_sums()).max() / gen.max_abs())
        ok &= traj.max_norm_error < 1e-10 and traj.clamp_events == 0 and col < 1e-12
        parts.append(f"{mode}: norm err {traj.max_norm_error:.1e}, clamps {traj.clamp_events}, col sums {col:.1e}")
    return Outcome(7, "conservation", ok, "; ".join(parts))


def criterion_8() -> Outcome:
    a = scenario.SCATTERING_LENGTH
    tv_bal = total_variation(
        steady_state_product(scenario.rates("balanced")), steady_state_product(scenario.rates("balanced", a=a / 2))
    )
    tv_phys = total_variation(
        steady_state_product(scenario.rates("physical")), steady_state_product(scenario.rates("physical", a=a / 2))
    )
    ok = tv_bal == 0.0 and tv_phys < 0.02
    return Outcome(8, "equilibrium independent of a", ok, f"balanced TV {tv_bal!r} (== 0); physical TV {tv_phys:.2e} (< 0.02)")


def criterion_9() -> Outcome:
    a = scenario.SCATTERING_LENGTH
    r1, r2 = scenario.rates("physical"), scenario.rates("physical", a=2 * a)
    worst = 0.0
    for x, y in (
        (r1.lambda_plus, r2.lambda_plus),
        (r1.lambda_minus, r2.lambda_minus),
        (r1.xi_plus, r2.xi_plus),
        (r1.xi_minus, r2.xi_minus),
    ):
        nz = x != 0
        if np.any(y[~nz] != 0):
            worst = math.inf
        worst = max(worst, float(np.max(np.abs(y[nz] / (4 * x[nz]) - 1.0), initial=0.0)))
    ok = worst < 1e-12
    return Outcome(9, "a^2 scaling of rates", ok, f"max |ratio/4 - 1| = {worst:.2e} (< 1e-12)")


def criterion_10() -> Outcome:
    n = scenario.N_ATOMS
    t12, t16 = scenario.table(12.0), scenario.table(16.0)
    s12 = observables(steady_state_gibbs(t12, scenario.spectrum(12.0), n)).sigma0
    s16 = observables(steady_state_gibbs(t16, scenario.spectrum(16.0), n)).sigma0
    d_sigma = abs(s16 - s12)
    d_lnz = float(np.abs(t16.log_z - t12.log_z).max())
    ok = d_sigma < 1e-4 and d_lnz < 1e-6
    return Outcome(
        10, "cutoff convergence 12 -> 16 kT", ok,
        f"|d sigma0| = {d_sigma:.2e} (< 1e-4); max|d ln Z(M)| = {d_lnz:.2e} (< 1e-6)",
    )


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(criterion):
    out = _report(criterion())
    assert out.passed, out.detail


if __name__ == "__main__":
    outcomes = [_report(c()) for c in CRITERIA]
    print(f"{sum(o.passed for o in outcomes)}/{len(outcomes)} criteria pass")
