"""Single-particle modes of a 3D anisotropic harmonic trap.

Energies, mode enumeration below an energy cutoff, the per-axis four-function
overlap tensors and a few derived scales (critical temperature, diluteness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .constants import HBAR, KB, ZETA3
from .errors import ConfigError, OverlapRangeError, ResourceLimitError

AXES = ("x", "y", "z")
DEFAULT_MAX_MODES = 500_000


@dataclass(frozen=True)
class TrapConfig:
    """Trap frequencies (rad/s) plus the species constants (kg, m)."""

    omega_x: float
    omega_y: float
    omega_z: float
    mass: float
    scattering_length: float

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z", "mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be strictly positive, got {value!r}")
        # a = 0 is accepted so the ideal gas (frozen dynamics) can be run
        if not (math.isfinite(self.scattering_length) and self.scattering_length >= 0):
            raise ConfigError(
                f"scattering_length must be non-negative, got {self.scattering_length!r}"
            )

    @property
    def omegas(self) -> tuple[float, float, float]:
        return (self.omega_x, self.omega_y, self.omega_z)

    @property
    def omega_bar(self) -> float:
        return (self.omega_x * self.omega_y * self.omega_z) ** (1.0 / 3.0)

    def oscillator_length(self, axis: str) -> float:
        omega = self.omegas[AXES.index(axis)]
        return math.sqrt(HBAR / (self.mass * omega))


class ModeIndex(NamedTuple):
    kx: int
    ky: int
    kz: int


def frequency_combination(config: TrapConfig, nx, ny, nz):
    """n . omega for integer (possibly negative) n; elementwise on arrays.

    Integer coefficients of equal frequencies are added before multiplying,
    so degenerate modes get bit-identical energies.
    """
    wx, wy, wz = config.omegas
    if wx == wy == wz:
        return (nx + ny + nz) * wx
    if wx == wy:
        return (nx + ny) * wx + nz * wz
    if wy == wz:
        return nx * wx + (ny + nz) * wy
    if wx == wz:
        return (nx + nz) * wx + ny * wy
    return nx * wx + ny * wy + nz * wz


def excitation_energy(config: TrapConfig, kx, ky, kz):
    """hbar * (k . omega); works elementwise on integer arrays."""
    return HBAR * frequency_combination(config, kx, ky, kz)


def ground_energy(config: TrapConfig) -> float:
    return HBAR * (config.omega_x + config.omega_y + config.omega_z) / 2


def single_particle_energy(config: TrapConfig, k: Sequence[int]):
    kx, ky, kz = k
    return excitation_energy(config, kx, ky, kz) + ground_energy(config)


@dataclass(frozen=True)
class TrapSpectrum:
    """Non-condensate modes sorted by energy (ties: lexicographic on k)."""

    config: TrapConfig
    indices: np.ndarray  # (n_modes, 3) int
    energies: np.ndarray  # J, aligned with indices
    epsilon0: float
    energy_cutoff: float
    _modes: tuple = field(default=(), repr=False, compare=False)

    @property
    def modes(self) -> tuple[ModeIndex, ...]:
        if not self._modes:
            object.__setattr__(
                self, "_modes", tuple(ModeIndex(*map(int, row)) for row in self.indices)
            )
        return self._modes

    @property
    def n_modes(self) -> int:
        return len(self.energies)

    @property
    def max_index(self) -> tuple[int, int, int]:
        if self.n_modes == 0:
            return (0, 0, 0)
        return tuple(int(v) for v in self.indices.max(axis=0))

    def excitation_energies(self) -> np.ndarray:
        i = self.indices
        return excitation_energy(self.config, i[:, 0], i[:, 1], i[:, 2])

    def identifier(self) -> str:
        c = self.config
        return (
            f"trap(wx={c.omega_x!r},wy={c.omega_y!r},wz={c.omega_z!r})"
            f"|cut={self.energy_cutoff!r}|n={self.n_modes}"
        )

    def truncated(self, n_modes: int) -> "TrapSpectrum":
        """Keep only the lowest ``n_modes`` modes (toy spectra for oracles)."""
        return TrapSpectrum(
            self.config,
            self.indices[:n_modes].copy(),
            self.energies[:n_modes].copy(),
            self.epsilon0,
            self.energy_cutoff,
        )


def enumerate_modes(
    config: TrapConfig, energy_cutoff: float, max_modes: int = DEFAULT_MAX_MODES
) -> TrapSpectrum:
    """All k != 0 with eps_k - eps_0 <= energy_cutoff."""
    if not energy_cutoff > 0:
        raise ConfigError(f"energy cutoff must be positive, got {energy_cutoff!r}")
    wx, wy, wz = config.omegas
    nx = int(energy_cutoff / (HBAR * wx)) + 1
    ny = int(energy_cutoff / (HBAR * wy)) + 1
    nz = int(energy_cutoff / (HBAR * wz)) + 1
    # continuum estimate of the simplex volume, checked before allocating
    estimate = energy_cutoff**3 / (6 * HBAR**3 * wx * wy * wz)
    if estimate > 2 * max_modes:
        raise ResourceLimitError(
            f"energy cutoff admits about {estimate:.3g} modes (limit {max_modes})"
        )
    ky, kz = np.meshgrid(np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    ky = ky.ravel()
    kz = kz.ravel()
    blocks = []
    for kx in range(nx + 1):
        exc = excitation_energy(config, kx, ky, kz)
        keep = exc <= energy_cutoff
        if kx == 0:
            keep &= (ky != 0) | (kz != 0)
        if not keep.any():
            continue
        blocks.append(np.column_stack([np.full(keep.sum(), kx), ky[keep], kz[keep]]))
    if blocks:
        idx = np.concatenate(blocks).astype(np.int64)
    else:
        idx = np.zeros((0, 3), dtype=np.int64)
    if len(idx) > max_modes:
        raise ResourceLimitError(
            f"energy cutoff admits {len(idx)} modes (limit {max_modes})"
        )
    energies = single_particle_energy(config, (idx[:, 0], idx[:, 1], idx[:, 2]))
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], energies))
    idx = idx[order]
    energies = np.asarray(energies, dtype=float)[order]
    idx.setflags(write=False)
    energies.setflags(write=False)
    return TrapSpectrum(config, idx, energies, ground_energy(config), float(energy_cutoff))


@dataclass(frozen=True)
class OverlapTensor1D:
    """zeta[k, l, m] = int dx psi_k psi_l psi_m psi_0 along one axis (1/m)."""

    axis: str
    values: np.ndarray
    max_index: int
    oscillator_length: float

    def __getitem__(self, key):
        return self.values[key]


def hermite_functions(max_index: int, u: np.ndarray) -> np.ndarray:
    """Polynomial parts h_n(u) of the normalized Hermite functions.

    phi_n(u) = h_n(u) exp(-u^2/2); rows n = 0..max_index.
    """
    u = np.asarray(u, dtype=float)
    h = np.empty((max_index + 1,) + u.shape)
    h[0] = np.pi**-0.25
    if max_index >= 1:
        h[1] = math.sqrt(2.0) * u * h[0]
    for n in range(1, max_index):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * u * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


def _overlap_exact(max_index: int) -> np.ndarray:
    """Dimensionless overlap table from an exact integer closed form.

    Linearizing H_k H_l = sum_r 2^r r! C(k,r) C(l,r) H_{k+l-2r} and using
    int exp(-2u^2) H_n H_m du = (-1)^((n-m)/2) sqrt(pi/2) (n+m-1)!!
    leaves an integer sum S(k,l,m), so that
    zeta = S / sqrt(2 pi 2^(k+l+m) k! l! m!). Only the final division and
    square root are rounded.
    """
    size = max_index + 1
    dfact = [1] * (3 * size + 2)  # dfact[j] = (j-1)!!
    for j in range(2, len(dfact)):
        dfact[j] = dfact[j - 2] * (j - 1)
    fact = [math.factorial(n) for n in range(size)]
    values = np.zeros((size, size, size))
    for k in range(size):
        for l in range(k, size):
            coeffs = [
                (k + l - 2 * r, (1 << r) * fact[r] * math.comb(k, r) * math.comb(l, r))
                for r in range(min(k, l) + 1)
            ]
            for m in range((k + l) % 2, size, 2):
                total = 0
                for n, c in coeffs:
                    term = c * dfact[n + m]
                    total += -term if (n - m) % 4 else term
                if total == 0:
                    continue
                denom = (1 << (k + l + m)) * fact[k] * fact[l] * fact[m]
                mag = math.sqrt((total * total) / denom)
                values[k, l, m] = values[l, k, m] = math.copysign(mag, total)
    return values / math.sqrt(2 * math.pi)


def _overlap_quadrature(max_index: int, n_nodes: int | None) -> np.ndarray:
    """Same table by Gauss-Hermite quadrature.

    The integrand is a polynomial of degree k+l+m times exp(-2u^2), so
    ``2*max_index + 8`` nodes integrate it exactly; rounding still limits
    entries that are small by cancellation.
    """
    if n_nodes is None:
        n_nodes = 2 * max_index + 8
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    h = hermite_functions(max_index, nodes / math.sqrt(2.0))
    hw = h * (weights * h[0] / math.sqrt(2.0))
    size = max_index + 1
    values = np.zeros((size, size, size))
    for k in range(size):
        pair = h[k] * h[k:]
        values[k, k:, :] = pair @ hw.T
    iu = np.triu_indices(size, 1)
    values[iu[1], iu[0], :] = values[iu[0], iu[1], :]
    k, l, m = np.indices(values.shape)
    values[(k + l + m) % 2 == 1] = 0.0
    return values


def overlap_1d(
    axis: str,
    max_index: int,
    oscillator_length: float,
    method: str = "exact",
    n_nodes: int | None = None,
) -> OverlapTensor1D:
    """Tabulate zeta[k, l, m] for k, l, m = 0..max_index along one axis."""
    if max_index < 0:
        raise ValueError("max_index must be >= 0")
    if not oscillator_length > 0:
        raise ValueError("oscillator_length must be positive")
    if method == "exact":
        values = _overlap_exact(max_index)
    elif method == "quadrature":
        values = _overlap_quadrature(max_index, n_nodes)
    else:
        raise ValueError(f"unknown overlap method {method!r}")
    values /= oscillator_length
    values.setflags(write=False)
    return OverlapTensor1D(axis, values, max_index, oscillator_length)


def overlap_tensors(config: TrapConfig, max_index: Sequence[int]) -> tuple[OverlapTensor1D, ...]:
    return tuple(
        overlap_1d(axis, int(n), config.oscillator_length(axis))
        for axis, n in zip(AXES, max_index)
    )


def overlap_3d(tensors: Sequence[OverlapTensor1D], k, l, m) -> float:
    """Four-mode overlap of 3D trap eigenfunctions (1/m^3)."""
    value = 1.0
    for a, t in enumerate(tensors):
        ia, la, ma = k[a], l[a], m[a]
        if max(ia, la, ma) > t.max_index or min(ia, la, ma) < 0:
            raise OverlapRangeError(
                f"index ({ia},{la},{ma}) outside tabulated range 0..{t.max_index} on axis {t.axis}"
            )
        value *= t.values[ia, la, ma]
    return float(value)


def critical_temperature(config: TrapConfig, n_atoms: int) -> float:
    """Ideal-gas harmonic-trap Tc: k_B Tc = hbar omega_bar (N / zeta(3))^(1/3)."""
    if n_atoms < 1:
        raise ConfigError("n_atoms must be >= 1")
    return HBAR * config.omega_bar * (n_atoms / ZETA3) ** (1.0 / 3.0) / KB


class DilutenessReport(NamedTuple):
    value: float  # a * rho_peak^(1/3)
    is_dilute: bool
    peak_density: float  # 1/m^3


def diluteness_report(config: TrapConfig, n_atoms: int, temperature: float) -> DilutenessReport:
    """Gas parameter a rho^(1/3), rho the peak density of N atoms in the trap ground state."""
    if not temperature > 0:
        raise ConfigError("temperature must be positive")
    lengths = [config.oscillator_length(a) for a in AXES]
    rho = n_atoms / (math.pi**1.5 * lengths[0] * lengths[1] * lengths[2])
    value = config.scattering_length * rho ** (1.0 / 3.0)
    return DilutenessReport(value, value < 0.1, rho)
