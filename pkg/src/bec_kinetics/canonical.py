"""Canonical (fixed-number) statistics of the ideal non-condensate gas.

Partition functions Z(M, T) of M bosons restricted to the excited trap
modes, and the constrained mean occupations <N_k>(M, T), for M = 0..N.
Everything is kept in log space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .constants import KB
from .errors import ConfigError, ConsistencyError, NumericRangeError
from .trap import TrapSpectrum


@dataclass(frozen=True)
class CanonicalTable:
    temperature: float
    beta: float
    spectrum_id: str
    log_z: np.ndarray  # ln Z(M), M = 0..n_max
    level_energies: np.ndarray  # distinct mode energies, ascending
    level_of_mode: np.ndarray  # mode -> row of level_occupations
    level_occupations: np.ndarray  # (n_max + 1, n_levels)

    @property
    def n_max(self) -> int:
        return len(self.log_z) - 1

    @property
    def occupations(self) -> np.ndarray:
        """<N_k>(M) as an (n_max + 1, n_modes) array, one column per mode."""
        return self.level_occupations[:, self.level_of_mode]

    def occupation_row(self, m: int) -> np.ndarray:
        if not 0 <= m <= self.n_max:
            raise ConsistencyError(f"no occupation row for M={m} (table spans 0..{self.n_max})")
        return self.level_occupations[m, self.level_of_mode]

    def check_spectrum(self, spectrum: TrapSpectrum) -> None:
        if spectrum.identifier() != self.spectrum_id:
            raise ConsistencyError(
                f"table built on {self.spectrum_id}, got spectrum {spectrum.identifier()}"
            )

    def to_csv(self, path, spectrum: TrapSpectrum) -> None:
        occ = self.occupations
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["M", "ln_Z"] + [f"N_{kx}_{ky}_{kz}" for kx, ky, kz in spectrum.modes])
            for m in range(self.n_max + 1):
                w.writerow([m, f"{self.log_z[m]:.17g}"] + [f"{v:.17g}" for v in occ[m]])


def _levels(energies: np.ndarray):
    level_energies, level_of_mode = np.unique(energies, return_inverse=True)
    return level_energies, level_of_mode.ravel()


def build_canonical_table(spectrum: TrapSpectrum, temperature: float, n_max: int) -> CanonicalTable:
    """Canonical recursion over M for the excited-mode gas.

    ln Z(M) from Z(M) = (1/M) sum_n S(n beta) Z(M-n), S(n beta) = sum_k exp(-n beta eps_k);
    occupations from <N_k>(M) = exp(-beta eps_k) Z(M-1)/Z(M) (1 + <N_k>(M-1)).
    """
    if not temperature > 0:
        raise ConfigError("temperature must be positive")
    if n_max < 0:
        raise ConfigError("n_max must be >= 0")
    beta = 1.0 / (KB * temperature)
    x = beta * np.asarray(spectrum.energies, dtype=float)
    level_energies, level_of_mode = _levels(np.asarray(spectrum.energies))
    n_levels = len(level_energies)
    log_z = np.zeros(n_max + 1)
    occ = np.zeros((n_max + 1, n_levels))
    if spectrum.n_modes == 0:
        if n_max > 0:
            log_z[1:] = -np.inf
        return CanonicalTable(temperature, beta, spectrum.identifier(), log_z,
                              level_energies, level_of_mode, occ)
    n = np.arange(1, n_max + 1)
    # ln S(n beta) for n = 1..n_max
    log_s = logsumexp(-np.outer(n, x), axis=1) if n_max else np.zeros(0)
    for m in range(1, n_max + 1):
        terms = log_s[:m] + log_z[m - 1::-1][:m]
        log_z[m] = logsumexp(terms) - math.log(m)
        if not math.isfinite(log_z[m]):
            raise NumericRangeError(f"ln Z(M) not finite at M={m}")
    level_x = beta * level_energies
    for m in range(1, n_max + 1):
        ratio = np.exp(-level_x + (log_z[m - 1] - log_z[m]))
        occ[m] = ratio * (1.0 + occ[m - 1])
        if not np.all(np.isfinite(occ[m])):
            raise NumericRangeError(f"occupations not finite at M={m}")
    log_z.setflags(write=False)
    occ.setflags(write=False)
    return CanonicalTable(temperature, beta, spectrum.identifier(), log_z,
                          level_energies, level_of_mode, occ)


def balance_factor(table: CanonicalTable, spectrum: TrapSpectrum, m_nc: int) -> float:
    """exp(-beta eps_0) Z(m_nc - 1) / Z(m_nc)."""
    if not 1 <= m_nc <= table.n_max:
        raise ConfigError(f"balance factor needs 1 <= m_nc <= {table.n_max}, got {m_nc}")
    return math.exp(-table.beta * spectrum.epsilon0 + (table.log_z[m_nc - 1] - table.log_z[m_nc]))


def balance_factors(table: CanonicalTable, spectrum: TrapSpectrum) -> np.ndarray:
    """z(M) for M = 0..n_max with z(0) = 0 (no particle to move)."""
    z = np.zeros(table.n_max + 1)
    z[1:] = np.exp(-table.beta * spectrum.epsilon0 + np.diff(-table.log_z))
    return z
