"""Collision-driven condensate feeding and loss rates.

lambda_+(M) = P * sum_{k,l,m} <N_k><N_l>(<N_m>+1) |zeta_kl^m0|^2 delta_G(Delta)
lambda_-(M) = P * sum_{k,l,m} (<N_k>+1)(<N_l>+1)<N_m> |zeta_kl^m0|^2 delta_G(Delta)

with P = 16 pi^3 hbar^2 a^2 / m^2, occupations of the M-atom canonical
non-condensate, and Delta = (k + l - m) . omega. The occupation-free factor
|zeta|^2 delta_G is precomputed once as a sparse list of (k, l, m) triples
and reused for every M.

Units: [hbar^2 a^2/m^2] [|zeta|^2] [delta_G] = (m^4/s^2)(m^-6 m^2)(s) = 1/s.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .canonical import CanonicalTable, balance_factors
from .constants import HBAR
from .errors import ConfigError, ConsistencyError
from .trap import (
    OverlapTensor1D,
    TrapConfig,
    TrapSpectrum,
    frequency_combination,
)

WINDOW_KINDS = ("lorentzian", "gaussian", "box")
RATE_MODES = ("physical", "balanced")
DEFAULT_PRUNE = {"lorentzian": math.inf, "gaussian": 40.0, "box": 1.0}
ROW_CHUNK = 8  # fixed reduction blocks; results do not depend on --threads


@dataclass(frozen=True)
class EnergyWindow:
    """Normalized energy-conservation window of width gamma (rad/s)."""

    kind: str = "lorentzian"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ConfigError(f"window kind must be one of {WINDOW_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError(f"window width must be positive, got {self.gamma!r}")

    def __call__(self, delta):
        return energy_window_value(self, delta)

    def support(self, prune_factor: float | None = None) -> float:
        """Largest |Delta| kept in the triple sums.

        Lorentzian tails are heavy enough that a 40-gamma cut moves lambda_-
        at the percent level, so by default they are not pruned at all.
        """
        if self.kind == "box":
            return self.gamma
        if prune_factor is None:
            prune_factor = DEFAULT_PRUNE[self.kind]
        return prune_factor * self.gamma


def energy_window_value(window: EnergyWindow, delta):
    """delta_G(Delta) in seconds; Delta in rad/s."""
    g = window.gamma
    delta = np.asarray(delta, dtype=float)
    if window.kind == "lorentzian":
        out = (g / np.pi) / (delta * delta + g * g)
    elif window.kind == "gaussian":
        out = np.exp(-(delta * delta) / (2 * g * g)) / (g * math.sqrt(2 * math.pi))
    else:
        out = np.where(np.abs(delta) <= g, 1.0 / (2 * g), 0.0)
    return out if out.ndim else float(out)


def rate_prefactor(config: TrapConfig) -> float:
    """16 pi^3 hbar^2 a^2 / m^2 (m^4/s^2)."""
    return 16 * math.pi**3 * HBAR**2 * config.scattering_length**2 / config.mass**2


def axis_groups(config: TrapConfig) -> list[tuple[int, ...]]:
    """Axes grouped by bit-identical trap frequency."""
    groups: list[list[int]] = []
    for a, w in enumerate(config.omegas):
        for g in groups:
            if config.omegas[g[0]] == w:
                g.append(a)
                break
        else:
            groups.append([a])
    return [tuple(g) for g in groups]


def _convolve_sum_index(b: np.ndarray, a: np.ndarray, size: int) -> np.ndarray:
    """W[S,T,U] = sum B[i,j,k] A[S-i,T-j,U-k], truncated to indices < size.

    Direct summation of non-negative terms, so small entries keep full
    relative precision (an FFT would not).
    """
    out = np.zeros((size, size, size))
    a = a[:size, :size, :size]
    for i, j, k in zip(*np.nonzero(b[:size, :size, :size])):
        ni, nj, nk = size - i, size - j, size - k
        out[i:, j:, k:] += b[i, j, k] * a[:ni, :nj, :nk]
    return out


@dataclass(frozen=True)
class ResonanceTriples:
    """Occupation-independent part of the triple sum, |zeta|^2 * delta_G.

    Summation units ("groups") are either single modes or degenerate energy
    levels, i.e. sets of modes sharing the per-frequency index sums. Rows of
    ``weights`` are group pairs (p <= q, off-diagonal pairs counted twice);
    columns are the third group r.
    """

    spectrum_id: str
    window: EnergyWindow
    support: float
    folded: bool
    group_mode: np.ndarray  # representative mode of each group
    pair_p: np.ndarray
    pair_q: np.ndarray
    weights: sp.csr_matrix
    n_terms: int = field(default=0)

    def group_occupations(self, table: CanonicalTable) -> np.ndarray:
        """(n_max + 1, n_groups) occupations, read from the representative modes."""
        if table.spectrum_id != self.spectrum_id:
            raise ConsistencyError(
                f"triples built on {self.spectrum_id}, table on {table.spectrum_id}"
            )
        return table.level_occupations[:, table.level_of_mode[self.group_mode]]


def _check_overlaps(spectrum: TrapSpectrum, overlaps: Sequence[OverlapTensor1D]) -> None:
    for a, (t, need) in enumerate(zip(overlaps, spectrum.max_index)):
        if t.max_index < need:
            raise ConsistencyError(
                f"overlap tensor on axis {t.axis} tabulated to {t.max_index}, spectrum needs {need}"
            )


def _level_groups(spectrum: TrapSpectrum, groups):
    """Level keys (per-axis-group index sums), their representative modes,
    and whether every level holds all of its degenerate modes."""
    keys = np.column_stack([spectrum.indices[:, list(g)].sum(axis=1) for g in groups])
    uniq, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    expected = np.ones(len(uniq), dtype=np.int64)
    for gi, g in enumerate(groups):
        expected *= np.array([math.comb(int(s) + len(g) - 1, len(g) - 1) for s in uniq[:, gi]],
                             dtype=np.int64)
    complete = bool(np.all(counts == expected))
    # order levels like modes: by energy, then key
    order = np.argsort(first, kind="stable")
    return uniq[order], first[order], complete


class _TripleAccumulator:
    def __init__(self, window: EnergyWindow):
        self.window = window
        self.pair_p, self.pair_q, self.rows, self.cols, self.vals = [], [], [], [], []
        self.n_pairs = 0
        self.n_terms = 0

    def add(self, p: int, q: np.ndarray, qi: np.ndarray, r: np.ndarray, w: np.ndarray, delta):
        """Terms (p, q[qi], r) with overlap weight w and frequency mismatch delta."""
        vals = w * energy_window_value(self.window, delta)
        vals = np.where(q[qi] == p, vals, 2.0 * vals)  # (p, q) and (q, p)
        uq, local = np.unique(qi, return_inverse=True)
        self.pair_p.append(np.full(len(uq), p))
        self.pair_q.append(q[uq])
        self.rows.append(self.n_pairs + local.ravel())
        self.cols.append(r)
        self.vals.append(vals)
        self.n_pairs += len(uq)
        self.n_terms += len(r)

    def finish(self, n_groups: int):
        if not self.n_pairs:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), sp.csr_matrix((0, n_groups))
        weights = sp.csr_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n_pairs, n_groups),
        )
        weights.sort_indices()
        return np.concatenate(self.pair_p), np.concatenate(self.pair_q), weights


def build_triples(
    spectrum: TrapSpectrum,
    overlaps: Sequence[OverlapTensor1D],
    window: EnergyWindow,
    prune_factor: float | None = None,
    folded: bool | None = None,
) -> ResonanceTriples:
    """Precompute the sparse (k, l, m) list with |Delta| <= window support.

    ``folded`` sums |zeta|^2 over the modes of each degenerate level first
    (a convolution of the per-axis tables over axes with equal frequency);
    ``folded=False`` is the plain mode-by-mode reference path. The default
    folds whenever every level of the spectrum is complete, which fails
    only for hand-truncated spectra.
    """
    _check_overlaps(spectrum, overlaps)
    support = window.support(prune_factor)
    config = spectrum.config
    acc = _TripleAccumulator(window)
    groups = axis_groups(config)
    keys, rep, complete = _level_groups(spectrum, groups)
    if folded is None:
        folded = complete
    elif folded and not complete:
        raise ConsistencyError("spectrum has incomplete degenerate levels; cannot fold")
    if folded:
        tensors = []
        for gi, g in enumerate(groups):
            size = int(keys[:, gi].max()) + 1 if len(keys) else 1
            sq = [overlaps[a].values[:size, :size, :size] ** 2 for a in g]
            w = sq[0]
            for nxt in sq[1:]:
                w = _convolve_sum_index(w, nxt, size)
            tensors.append(w)
        full_keys = np.zeros((len(keys), 3), dtype=np.int64)
        for gi, g in enumerate(groups):
            full_keys[:, g[0]] = keys[:, gi]
        n_groups = len(keys)
        r = np.arange(n_groups)
        for p in range(n_groups):
            q = np.arange(p, n_groups)
            n = full_keys[p][None, None, :] + full_keys[q][:, None, :] - full_keys[r][None, :, :]
            delta = frequency_combination(config, n[..., 0], n[..., 1], n[..., 2])
            w = np.ones(delta.shape)
            for gi, t in enumerate(tensors):
                w = w * t[keys[p, gi], keys[q, gi][:, None], keys[r, gi][None, :]]
            qi, ri = np.nonzero((np.abs(delta) <= support) & (w != 0))
            if len(qi):
                acc.add(p, q, qi, r[ri], w[qi, ri], delta[qi, ri])
    else:
        idx = spectrum.indices
        rep = np.arange(spectrum.n_modes)
        n_groups = spectrum.n_modes
        sq = [overlaps[a].values ** 2 for a in range(3)]
        exc = frequency_combination(config, idx[:, 0], idx[:, 1], idx[:, 2]).astype(float)
        pad = support * (1 + 1e-9) + 1e-9 * float(exc.max(initial=0.0))
        for p in range(n_groups):
            for qq in range(p, n_groups):
                # candidate m from the energy-sorted mode list, then exact |Delta| test
                target = exc[p] + exc[qq]
                lo = np.searchsorted(exc, target - pad, "left")
                hi = np.searchsorted(exc, target + pad, "right")
                if hi <= lo:
                    continue
                r = np.arange(lo, hi)
                n = idx[p] + idx[qq] - idx[r]
                delta = frequency_combination(config, n[:, 0], n[:, 1], n[:, 2])
                w = (
                    sq[0][idx[p, 0], idx[qq, 0], idx[r, 0]]
                    * sq[1][idx[p, 1], idx[qq, 1], idx[r, 1]]
                    * sq[2][idx[p, 2], idx[qq, 2], idx[r, 2]]
                )
                keep = np.nonzero((np.abs(delta) <= support) & (w != 0))[0]
                if len(keep):
                    q = np.array([qq])
                    acc.add(p, q, np.zeros(len(keep), dtype=np.int64), r[keep], w[keep], delta[keep])
    pair_p, pair_q, weights = acc.finish(n_groups)
    return ResonanceTriples(
        spectrum.identifier(), window, support, folded, np.asarray(rep), pair_p, pair_q,
        weights, acc.n_terms,
    )


def _sums_for_rows(triples: ResonanceTriples, occ: np.ndarray):
    """Raw triple sums (without prefactor) for a block of occupation rows."""
    if triples.weights.shape[0] == 0:
        z = np.zeros(occ.shape[0])
        return z, z.copy()
    gp = occ[:, triples.pair_p].T
    gq = occ[:, triples.pair_q].T
    x_plus = triples.weights @ (1.0 + occ).T
    x_minus = triples.weights @ occ.T
    plus = (gp * gq * x_plus).sum(axis=0)
    minus = ((1.0 + gp) * (1.0 + gq) * x_minus).sum(axis=0)
    return plus, minus


def physical_lambdas(
    triples: ResonanceTriples, table: CanonicalTable, config: TrapConfig, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """lambda_+(M), lambda_-(M) for every M = 0..n_max (1/s)."""
    occ = triples.group_occupations(table)
    n_rows = occ.shape[0]
    chunks = [(s, min(s + ROW_CHUNK, n_rows)) for s in range(0, n_rows, ROW_CHUNK)]
    plus = np.zeros(n_rows)
    minus = np.zeros(n_rows)

    def work(bounds):
        s, e = bounds
        return bounds, _sums_for_rows(triples, occ[s:e])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    for (s, e), (p_, m_) in results:
        plus[s:e] = p_
        minus[s:e] = m_
    pref = rate_prefactor(config)
    return pref * plus, pref * minus


def lambda_rates(
    spectrum: TrapSpectrum,
    overlaps: Sequence[OverlapTensor1D],
    table: CanonicalTable,
    window: EnergyWindow,
    n_nc: int,
    triples: ResonanceTriples | None = None,
    prune_factor: float | None = None,
) -> tuple[float, float]:
    """Single-particle rates (lambda_+, lambda_-) for n_nc non-condensate atoms."""
    table.check_spectrum(spectrum)
    occ_row = table.occupation_row(n_nc)  # raises for a missing row
    del occ_row
    if triples is None:
        triples = build_triples(spectrum, overlaps, window, prune_factor)
    occ = triples.group_occupations(table)[n_nc : n_nc + 1]
    plus, minus = _sums_for_rows(triples, occ)
    pref = rate_prefactor(spectrum.config)
    return float(pref * plus[0]), float(pref * minus[0])


@dataclass(frozen=True)
class RateTable:
    """Rates indexed by condensate number N0 = 0..N (1/s)."""

    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    mode: str
    provenance: str = ""

    @property
    def n_atoms(self) -> int:
        return len(self.xi_plus) - 1

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N0", "lambda_plus", "lambda_minus", "xi_plus", "xi_minus"])
            for n0 in range(self.n_atoms + 1):
                w.writerow(
                    [n0]
                    + [
                        f"{arr[n0]:.17g}"
                        for arr in (self.lambda_plus, self.lambda_minus, self.xi_plus, self.xi_minus)
                    ]
                )


def assemble_rate_table(
    lam_plus_nc: np.ndarray, lam_minus_nc: np.ndarray, mode: str, provenance: str = ""
) -> RateTable:
    """Map rates over non-condensate number M onto N0 = N - M and add the
    bosonic enhancement factors 2(N0+1) and 2 N0."""
    n_atoms = len(lam_plus_nc) - 1
    n0 = np.arange(n_atoms + 1)
    lam_plus = np.asarray(lam_plus_nc, dtype=float)[::-1].copy()
    lam_minus = np.asarray(lam_minus_nc, dtype=float)[::-1].copy()
    xi_plus = 2.0 * (n0 + 1) * lam_plus
    xi_plus[n_atoms] = 0.0  # no state N + 1
    xi_minus = 2.0 * n0 * lam_minus
    for arr in (lam_plus, lam_minus, xi_plus, xi_minus):
        arr.setflags(write=False)
    return RateTable(lam_plus, lam_minus, xi_plus, xi_minus, mode, provenance)


def build_rate_table(
    spectrum: TrapSpectrum,
    overlaps: Sequence[OverlapTensor1D],
    table: CanonicalTable,
    window: EnergyWindow,
    n_atoms: int,
    mode: str = "physical",
    triples: ResonanceTriples | None = None,
    prune_factor: float | None = None,
    threads: int = 1,
    provenance: str = "",
    close_boundary: bool = True,
) -> RateTable:
    """Rates for every N0 = 0..N.

    ``physical`` evaluates both triple sums. ``balanced`` keeps the physical
    lambda_- and sets lambda_+(M) = z(M) lambda_-(M - 1), pairing each
    feeding jump with the loss rate of the state it lands in, which makes
    the product-form steady state coincide with the Gibbs distribution.

    The loss sum vanishes at M = 0 (no thermal atom to collide with), which
    would make N0 = N absorbing. With ``close_boundary`` that single rate is
    set to lambda_+(1) / z(1) so the top link is in detailed balance.
    """
    if mode not in RATE_MODES:
        raise ConfigError(f"rate mode must be one of {RATE_MODES}, got {mode!r}")
    table.check_spectrum(spectrum)
    if table.n_max != n_atoms:
        raise ConsistencyError(f"canonical table spans 0..{table.n_max}, need 0..{n_atoms}")
    if triples is None:
        triples = build_triples(spectrum, overlaps, window, prune_factor)
    lam_plus, lam_minus = physical_lambdas(triples, table, spectrum.config, threads)
    z = balance_factors(table, spectrum)
    if close_boundary and n_atoms >= 1 and lam_minus[0] == 0 and lam_plus[1] > 0:
        lam_minus[0] = lam_plus[1] / z[1]
    if mode == "balanced":
        lam_plus = np.zeros_like(lam_minus)
        lam_plus[1:] = z[1:] * lam_minus[:-1]
    return assemble_rate_table(lam_plus, lam_minus, mode, provenance)


def detailed_balance_residual(
    rates: RateTable, table: CanonicalTable, spectrum: TrapSpectrum
) -> np.ndarray:
    """r(N0) = lambda_+(M) / (z(M) lambda_-(M)) - 1 with M = N - N0.

    Entries where lambda_- = 0 or M = 0 are NaN (absent).
    """
    table.check_spectrum(spectrum)
    n = rates.n_atoms
    z = balance_factors(table, spectrum)
    out = np.full(n + 1, np.nan)
    for n0 in range(n + 1):
        m = n - n0
        lm = rates.lambda_minus[n0]
        if m >= 1 and lm > 0:
            out[n0] = rates.lambda_plus[n0] / (z[m] * lm) - 1.0
    return out
