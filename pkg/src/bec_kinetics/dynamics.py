"""Birth-death master equation for the condensate number distribution.

dp(N0)/dt = -(xi+(N0) + xi-(N0)) p(N0) + xi+(N0-1) p(N0-1) + xi-(N0+1) p(N0+1)

Generator assembly, time propagation, steady states (product form and the
projected Gibbs state) and the observables shown in growth curves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.special import logsumexp

from .canonical import CanonicalTable
from .errors import ConfigError, ConsistencyError, IntegrationError, ReducibleChainError
from .rates import RateTable
from .trap import TrapSpectrum

NEGATIVE_FLOOR = -1e-12
PROPAGATION_METHODS = ("expm", "radau")


@dataclass(frozen=True)
class DistributionState:
    probabilities: np.ndarray  # p[N0], N0 = 0..N
    time: float = 0.0

    @property
    def n_atoms(self) -> int:
        return len(self.probabilities) - 1

    @classmethod
    def delta(cls, n_atoms: int, n0: int = 0, time: float = 0.0) -> "DistributionState":
        if not 0 <= n0 <= n_atoms:
            raise ConfigError(f"initial N0={n0} outside 0..{n_atoms}")
        p = np.zeros(n_atoms + 1)
        p[n0] = 1.0
        return cls(p, time)

    def validate(self, tol: float = 1e-10) -> None:
        p = self.probabilities
        if abs(p.sum() - 1.0) > tol:
            raise ConsistencyError(f"distribution sums to {p.sum()!r}")
        if p.min() < NEGATIVE_FLOOR:
            raise ConsistencyError(f"distribution has entry {p.min()!r} < {NEGATIVE_FLOOR}")


def total_variation(p, q) -> float:
    p = p.probabilities if isinstance(p, DistributionState) else np.asarray(p)
    q = q.probabilities if isinstance(q, DistributionState) else np.asarray(q)
    if p.shape != q.shape:
        raise ConsistencyError(f"distributions over different N: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass(frozen=True)
class Generator:
    """Tridiagonal rate matrix Q with dp/dt = Q p (columns sum to zero)."""

    birth: np.ndarray  # Q[N0+1, N0] = xi+(N0), N0 = 0..N-1
    death: np.ndarray  # Q[N0-1, N0] = xi-(N0), N0 = 1..N
    diag: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diag)

    def to_sparse(self) -> sp.csc_matrix:
        return sp.diags([self.birth, self.diag, self.death], [-1, 0, 1], format="csc")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def matvec(self, p: np.ndarray) -> np.ndarray:
        out = self.diag * p
        out[1:] += self.birth * p[:-1]
        out[:-1] += self.death * p[1:]
        return out

    def column_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[:-1] += self.birth
        s[1:] += self.death
        return s

    def max_abs(self) -> float:
        return float(np.abs(self.diag).max(initial=0.0))

    def spectral_gap(self) -> float:
        """Smallest nonzero relaxation rate (1/s); 0 for a reducible or frozen chain.

        A birth-death generator is similar to the symmetric tridiagonal matrix
        with off-diagonals sqrt(xi+(N0) xi-(N0+1)).
        """
        if self.size < 2:
            return 0.0
        off = np.sqrt(self.birth * self.death)
        if np.any(off == 0):
            return 0.0
        eig = scipy.linalg.eigvalsh_tridiagonal(self.diag, off)
        return float(-np.sort(eig)[-2])


def build_generator(rates: RateTable) -> Generator:
    xp = np.asarray(rates.xi_plus, dtype=float)
    xm = np.asarray(rates.xi_minus, dtype=float)
    if np.any(xp < 0) or np.any(xm < 0) or not (np.all(np.isfinite(xp)) and np.all(np.isfinite(xm))):
        raise ConfigError("rate table contains negative or non-finite rates")
    birth = xp[:-1].copy()
    death = xm[1:].copy()
    diag = np.zeros(len(xp))
    diag[:-1] -= birth  # xi+(N) is never used
    diag[1:] -= death  # xi-(0) = 0
    for a in (birth, death, diag):
        a.setflags(write=False)
    return Generator(birth, death, diag)


class Observables(NamedTuple):
    mean_n0: float
    sigma0: float
    var_n0: float
    normalized_width: float | None  # sqrt(var) / sqrt(N sigma0); None when sigma0 = 0


def observables(state, n_atoms: int | None = None) -> Observables:
    p = state.probabilities if isinstance(state, DistributionState) else np.asarray(state)
    if n_atoms is None:
        n_atoms = len(p) - 1
    n0 = np.arange(len(p), dtype=float)
    mean = float(n0 @ p)
    var = float((n0 * n0) @ p - mean * mean)
    var = max(var, 0.0)
    sigma0 = mean / n_atoms
    width = math.sqrt(var) / math.sqrt(n_atoms * sigma0) if sigma0 > 0 else None
    return Observables(mean, sigma0, var, width)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    distributions: np.ndarray  # (n_samples, N + 1)
    mean_n0: np.ndarray
    sigma0: np.ndarray
    var_n0: np.ndarray
    normalized_width: np.ndarray  # NaN where sigma0 = 0
    clamp_events: int = 0
    roundoff_zeroed: int = 0
    max_norm_error: float = 0.0
    method: str = "expm"

    @property
    def n_atoms(self) -> int:
        return self.distributions.shape[1] - 1

    def state(self, i: int) -> DistributionState:
        return DistributionState(self.distributions[i], float(self.times[i]))

    @property
    def final(self) -> DistributionState:
        return self.state(-1)

    def observables_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "mean_N0", "sigma0", "var_N0", "normalized_width"])
            for row in zip(self.times, self.mean_n0, self.sigma0, self.var_n0, self.normalized_width):
                w.writerow([f"{v:.17g}" for v in row])

    def distributions_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s"] + [f"N0_{n}" for n in range(self.n_atoms + 1)])
            for t, p in zip(self.times, self.distributions):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in p])


def _trajectory(times, dists, n_atoms, clamps, zeroed, method) -> Trajectory:
    obs = [observables(p, n_atoms) for p in dists]
    width = np.array([np.nan if o.normalized_width is None else o.normalized_width for o in obs])
    norm_err = float(np.abs(dists.sum(axis=1) - 1.0).max(initial=0.0))
    dists.setflags(write=False)
    return Trajectory(
        np.asarray(times, dtype=float),
        dists,
        np.array([o.mean_n0 for o in obs]),
        np.array([o.sigma0 for o in obs]),
        np.array([o.var_n0 for o in obs]),
        width,
        clamps,
        zeroed,
        norm_err,
        method,
    )


def _clamp(p: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Zero negative entries; renormalize only if a real violation was clamped."""
    neg = p < 0
    if not neg.any():
        return p, 0, 0
    violations = int((p < NEGATIVE_FLOOR).sum())
    zeroed = int(neg.sum()) - violations
    p = np.where(neg, 0.0, p)
    if violations:
        p = p / p.sum()
    return p, violations, zeroed


def propagate(
    gen: Generator,
    initial: DistributionState,
    t_grid: Sequence[float],
    tol: float = 1e-8,
    method: str = "expm",
) -> Trajectory:
    """p(t) on ``t_grid``.

    ``expm`` multiplies by the exact transition matrix exp(Q dt) between
    consecutive samples (``tol`` unused). ``radau`` integrates with an
    implicit Runge-Kutta method under local error control
    (rtol = tol, atol = 1e-6 tol).
    """
    if method not in PROPAGATION_METHODS:
        raise ConfigError(f"method must be one of {PROPAGATION_METHODS}, got {method!r}")
    if not 0 < tol <= 1e-4:
        raise ConfigError(f"tolerance must lie in (0, 1e-4], got {tol!r}")
    if initial.n_atoms + 1 != gen.size:
        raise ConsistencyError("initial state and generator disagree on N")
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) == 0 or t_grid[0] < initial.time or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("time grid must be strictly increasing from the initial time")
    n_atoms = initial.n_atoms
    p = np.array(initial.probabilities, dtype=float)
    dists = np.empty((len(t_grid), n_atoms + 1))
    clamps = zeroed = 0
    if method == "expm":
        q = gen.to_dense()
        t_prev = initial.time
        for i, t in enumerate(t_grid):
            dt = t - t_prev
            if dt > 0:
                p = scipy.linalg.expm(q * dt) @ p
            p, c, z = _clamp(p)
            clamps += c
            zeroed += z
            dists[i] = p
            t_prev = t
    else:
        q = gen.to_sparse()
        sol = solve_ivp(
            lambda t, y: q @ y,
            (initial.time, float(t_grid[-1])),
            p,
            method="Radau",
            t_eval=t_grid,
            rtol=tol,
            atol=1e-6 * tol,
            jac=q,
        )
        if not sol.success:
            raise IntegrationError(f"integration failed near t={sol.t[-1]!r}: {sol.message}")
        for i in range(len(t_grid)):
            pi, c, z = _clamp(sol.y[:, i])
            clamps += c
            zeroed += z
            dists[i] = pi
    return _trajectory(t_grid, dists, n_atoms, clamps, zeroed, method)


def log_grid(t_min: float = 1e-4, t_max: float = 10.0, n: int = 200) -> np.ndarray:
    return np.geomspace(t_min, t_max, n)


def steady_state_product(rates: RateTable) -> DistributionState:
    """p(N0) proportional to prod_{k=1}^{N0} xi+(k-1) / xi-(k), built in log space."""
    xp = np.asarray(rates.xi_plus, dtype=float)
    xm = np.asarray(rates.xi_minus, dtype=float)
    bad = np.nonzero(xm[1:] <= 0)[0]
    if len(bad):
        raise ReducibleChainError(
            f"loss rate xi-(N0) vanishes at N0={int(bad[0]) + 1}; steady state not unique"
        )
    with np.errstate(divide="ignore"):
        log_ratio = np.log(xp[:-1] / xm[1:])
    log_p = np.concatenate([[0.0], np.cumsum(log_ratio)])
    return DistributionState(_normalize_log(log_p), math.inf)


def gibbs_log_weights(table: CanonicalTable, spectrum: TrapSpectrum, n_atoms: int) -> np.ndarray:
    """ln[exp(-beta eps0 N0) Z(N - N0)], N0 = 0..N."""
    table.check_spectrum(spectrum)
    if table.n_max < n_atoms:
        raise ConsistencyError(f"canonical table spans 0..{table.n_max}, need 0..{n_atoms}")
    n0 = np.arange(n_atoms + 1)
    return -table.beta * spectrum.epsilon0 * n0 + table.log_z[n_atoms - n0]


def gibbs_log_partition(table: CanonicalTable, spectrum: TrapSpectrum, n_atoms: int) -> float:
    """ln Z(N, T) of the whole gas (condensate mode included)."""
    return float(logsumexp(gibbs_log_weights(table, spectrum, n_atoms)))


def steady_state_gibbs(table: CanonicalTable, spectrum: TrapSpectrum, n_atoms: int) -> DistributionState:
    """Condensate marginal of the N-particle projected Boltzmann state."""
    return DistributionState(_normalize_log(gibbs_log_weights(table, spectrum, n_atoms)), math.inf)


def _normalize_log(log_p: np.ndarray) -> np.ndarray:
    p = np.exp(log_p - logsumexp(log_p))
    return p / p.sum()


def relaxation_report(traj: Trajectory, target: DistributionState) -> list[tuple[float, float]]:
    """(time, TV distance to ``target``) for every sample."""
    return [(float(t), total_variation(p, target.probabilities)) for t, p in zip(traj.times, traj.distributions)]


def propagate_to_steady(
    gen: Generator, initial: DistributionState, n_relax: float = 50.0, tol: float = 1e-10
) -> DistributionState:
    """State after ``n_relax`` relaxation times 1/gap, by one matrix exponential."""
    gap = gen.spectral_gap()
    if gap <= 0:
        raise ReducibleChainError("generator has no spectral gap; no unique long-time limit")
    t = initial.time + n_relax / gap
    traj = propagate(gen, initial, [t], tol=min(tol, 1e-4), method="expm")
    return traj.final
