"""Independent reference computations for small systems.

Each oracle avoids the production algorithm it checks: canonical sums and
the Gibbs marginal by exhaustive Fock-state enumeration, the rate sums by an
explicit loop over every (k, l, m), overlaps by high-precision quadrature,
and N = 1 relaxation by its closed form.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
import math
import time
from typing import Callable, NamedTuple, Sequence

import mpmath
import numpy as np

from .canonical import build_canonical_table
from .constants import HBAR, KB
from .dynamics import (
    DistributionState,
    build_generator,
    propagate,
    steady_state_gibbs,
)
from .rates import EnergyWindow, assemble_rate_table, lambda_rates, rate_prefactor
from .trap import (
    TrapConfig,
    TrapSpectrum,
    enumerate_modes,
    frequency_combination,
    overlap_1d,
    overlap_3d,
    overlap_tensors,
)


def fock_states(n_modes: int, n_particles: int):
    """All occupation tuples of ``n_particles`` bosons in ``n_modes`` modes."""
    for combo in itertools.combinations_with_replacement(range(n_modes), n_particles):
        occ = [0] * n_modes
        for k in combo:
            occ[k] += 1
        yield occ


def brute_force_canonical(energies: Sequence[float], beta: float, m: int):
    """(Z(M), <N_k>(M)) by summing Boltzmann weights over every Fock state."""
    e = np.asarray(energies, dtype=float)
    z = 0.0
    occ = np.zeros(len(e))
    for state in fock_states(len(e), m):
        n = np.asarray(state, dtype=float)
        w = math.exp(-beta * float(n @ e))
        z += w
        occ += w * n
    return z, occ / z


def brute_force_gibbs(eps0: float, energies: Sequence[float], beta: float, n_atoms: int) -> np.ndarray:
    """Condensate marginal p(N0) of the N-particle Boltzmann state over all modes."""
    e = np.concatenate([[eps0], np.asarray(energies, dtype=float)])
    weights = np.zeros(n_atoms + 1)
    shift = beta * eps0 * n_atoms
    for state in fock_states(len(e), n_atoms):
        weights[state[0]] += math.exp(-beta * float(np.dot(state, e)) + shift)
    return weights / weights.sum()


def brute_force_lambdas(spectrum: TrapSpectrum, overlaps, occupations, window: EnergyWindow):
    """(lambda_+, lambda_-) from the plain triple loop over all modes, no pruning."""
    pref = rate_prefactor(spectrum.config)
    modes = spectrum.modes
    plus = minus = 0.0
    for a, b, c in itertools.product(range(len(modes)), repeat=3):
        k, l, m = modes[a], modes[b], modes[c]
        delta = frequency_combination(
            spectrum.config, k.kx + l.kx - m.kx, k.ky + l.ky - m.ky, k.kz + l.kz - m.kz
        )
        w = overlap_3d(overlaps, k, l, m) ** 2 * float(window(delta))
        na, nb, nc = occupations[a], occupations[b], occupations[c]
        plus += w * na * nb * (1.0 + nc)
        minus += w * (1.0 + na) * (1.0 + nb) * nc
    return pref * plus, pref * minus


def _hermite_coeffs(n: int) -> list[int]:
    """Integer monomial coefficients of the physicists' Hermite polynomial H_n."""
    prev, cur = [1], [0, 2]
    if n == 0:
        return prev
    for j in range(1, n):
        nxt = [0] * (j + 2)
        for i, c in enumerate(cur):
            nxt[i + 1] += 2 * c
        for i, c in enumerate(prev):
            nxt[i] -= 2 * j * c
        prev, cur = cur, nxt
    return cur


def overlap_mp(k: int, l: int, m: int, dps: int = 40) -> float:
    """Dimensionless 1D overlap by expanding H_k H_l H_m in monomials.

    Uses int u^(2j) exp(-2u^2) du = sqrt(pi/2) (2j-1)!! / 4^j with exact
    rational arithmetic; only the final surd is evaluated in ``dps`` digits.
    """
    poly = [1]
    for n in (k, l, m):
        h = _hermite_coeffs(n)
        out = [0] * (len(poly) + len(h) - 1)
        for i, a in enumerate(poly):
            if a:
                for j, b in enumerate(h):
                    out[i + j] += a * b
        poly = out
    total = Fraction(0)
    dfact = 1  # (2j - 1)!!
    for j in range(0, len(poly), 2):
        if j:
            dfact *= j - 1
        total += Fraction(poly[j] * dfact, 4 ** (j // 2))
    with mpmath.workdps(dps):
        norm = mpmath.sqrt(mpmath.mpf(2) ** (k + l + m) * math.factorial(k) * math.factorial(l) * math.factorial(m))
        val = mpmath.mpf(total.numerator) / total.denominator / norm / mpmath.sqrt(2 * mpmath.pi)
        return float(val)


def two_state_closed_form(alpha: float, gamma: float, p0_initial: float, t) -> np.ndarray:
    """p(N0 = 0, t) for N = 1 with feeding rate alpha (0 -> 1) and loss gamma (1 -> 0)."""
    s = alpha + gamma
    eq = gamma / s
    return eq + (p0_initial - eq) * np.exp(-s * np.asarray(t, dtype=float))


class OracleResult(NamedTuple):
    name: str
    passed: bool
    error: float
    tolerance: float
    seconds: float


def _timed(name: str, tol: float, fn: Callable[[], float]) -> OracleResult:
    t0 = time.perf_counter()
    err = float(fn())
    return OracleResult(name, bool(err <= tol), err, tol, time.perf_counter() - t0)


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b) / scale, initial=0.0))


def toy_spectra(mass: float = 1.44316e-25) -> list[TrapSpectrum]:
    """Small spectra (1 to 5 modes) from several traps, degenerate and not."""
    traps = [
        (20.0, 200.0, 200.0),
        (100.0, 100.0, 100.0),
        (42.0, 42.0, 120.0),
        (30.0, 47.0, 71.0),
    ]
    out = []
    for fx, fy, fz in traps:
        cfg = TrapConfig(2 * math.pi * fx, 2 * math.pi * fy, 2 * math.pi * fz, mass, 5.4e-9)
        full = enumerate_modes(cfg, HBAR * 2 * math.pi * 3.5 * max(fx, fy, fz))
        for n in range(1, min(5, full.n_modes) + 1):
            out.append(full.truncated(n))
    return out


def check_canonical(max_m: int = 6, temperature: float = 3e-9) -> float:
    """Largest relative deviation of ln-recursion Z and <N_k> from enumeration."""
    worst = 0.0
    beta = 1.0 / (KB * temperature)
    for spec in toy_spectra():
        table = build_canonical_table(spec, temperature, max_m)
        for m in range(max_m + 1):
            z, occ = brute_force_canonical(spec.energies, beta, m)
            worst = max(worst, _rel(math.exp(table.log_z[m]), z))
            if m:
                worst = max(worst, _rel(table.occupation_row(m), occ))
    return worst


def toy_three_mode(temperature: float = 2e-9):
    """Quasi-1D trap whose lowest three excited modes are kx = 1, 2, 3."""
    cfg = TrapConfig(2 * math.pi * 20.0, 2 * math.pi * 200.0, 2 * math.pi * 200.0, 1.44316e-25, 5.4e-9)
    spec = enumerate_modes(cfg, HBAR * 2 * math.pi * 65.0)
    return cfg, spec, temperature


def check_gibbs(n_atoms: int = 4) -> float:
    _, spec, temp = toy_three_mode()
    table = build_canonical_table(spec, temp, n_atoms)
    p = steady_state_gibbs(table, spec, n_atoms).probabilities
    q = brute_force_gibbs(spec.epsilon0, spec.energies, table.beta, n_atoms)
    return float(np.abs(p - q).max())


def check_lambdas(n_atoms: int = 4) -> float:
    _, spec, temp = toy_three_mode()
    table = build_canonical_table(spec, temp, n_atoms)
    overlaps = overlap_tensors(spec.config, spec.max_index)
    worst = 0.0
    for kind, gamma in (("box", 2 * math.pi * 200.0), ("lorentzian", 2 * math.pi * 5.0), ("gaussian", 2 * math.pi * 30.0)):
        win = EnergyWindow(kind, gamma)
        for m in range(1, n_atoms + 1):
            fast = lambda_rates(spec, overlaps, table, win, m, prune_factor=math.inf)
            slow = brute_force_lambdas(spec, overlaps, table.occupation_row(m), win)
            worst = max(worst, _rel(fast, slow))
    return worst


def check_overlaps(max_index: int = 16) -> float:
    exact = overlap_1d("x", max_index, 1.0).values
    worst = 0.0
    for k, l, m in itertools.product(range(max_index + 1), repeat=3):
        if k <= l and (k + l + m) % 2 == 0:
            ref = overlap_mp(k, l, m)
            if ref != 0.0:
                worst = max(worst, abs(exact[k, l, m] - ref) / abs(ref))
    return worst


def check_two_state(alpha: float = 3.0, gamma: float = 1.7) -> float:
    lam_plus_nc = np.array([0.0, alpha / 2.0])  # xi+(0) = 2 * 1 * lambda+(M = 1)
    lam_minus_nc = np.array([gamma / 2.0, 0.0])  # xi-(1) = 2 * 1 * lambda-(M = 0)
    rates = assemble_rate_table(lam_plus_nc, lam_minus_nc, "physical")
    gen = build_generator(rates)
    t = np.geomspace(1e-4, 10.0, 50)
    traj = propagate(gen, DistributionState.delta(1, 0), t)
    ref = two_state_closed_form(alpha, gamma, 1.0, t)
    return float(np.abs(traj.distributions[:, 0] - ref).max())


def run_oracle_suite() -> list[OracleResult]:
    return [
        _timed("canonical_enumeration", 1e-12, check_canonical),
        _timed("gibbs_enumeration", 1e-12, check_gibbs),
        _timed("rate_triple_loop", 1e-12, check_lambdas),
        _timed("overlap_quadrature", 1e-12, check_overlaps),
        _timed("two_state_closed_form", 1e-8, check_two_state),
    ]
