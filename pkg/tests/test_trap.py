import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bec_kinetics.constants import HBAR, KB, RB87_MASS
from bec_kinetics.errors import ConfigError, OverlapRangeError, ResourceLimitError
from bec_kinetics.oracles import overlap_mp
from bec_kinetics.trap import (
    TrapConfig,
    critical_temperature,
    diluteness_report,
    enumerate_modes,
    excitation_energy,
    ground_energy,
    overlap_1d,
    overlap_3d,
    overlap_tensors,
    single_particle_energy,
)

import scenario


def test_trap_rejects_bad_values():
    with pytest.raises(ConfigError):
        TrapConfig(-1.0, 1.0, 1.0, RB87_MASS, 5e-9)
    with pytest.raises(ConfigError):
        TrapConfig(1.0, 1.0, 1.0, 0.0, 5e-9)
    with pytest.raises(ConfigError):
        TrapConfig(1.0, 1.0, 1.0, RB87_MASS, -1e-9)


def test_ground_and_mode_energies():
    cfg = scenario.trap()
    assert ground_energy(cfg) == pytest.approx(0.5 * HBAR * sum(cfg.omegas), rel=1e-15)
    e = single_particle_energy(cfg, (2, 1, 3))
    expected = HBAR * (2.5 * cfg.omega_x + 1.5 * cfg.omega_y + 3.5 * cfg.omega_z)
    assert e == pytest.approx(expected, rel=1e-14)


def test_low_modes_below_130hz():
    cfg = scenario.trap()
    spec = enumerate_modes(cfg, HBAR * 2 * math.pi * 130.0)
    assert spec.modes == (
        (0, 1, 0), (1, 0, 0),
        (0, 2, 0), (1, 1, 0), (2, 0, 0),
        (0, 0, 1),
        (0, 3, 0), (1, 2, 0), (2, 1, 0), (3, 0, 0),
    )
    assert np.all(np.diff(spec.energies) >= 0)


def test_degenerate_modes_share_exact_energy():
    spec = scenario.spectrum()
    e = {tuple(k): v for k, v in zip(spec.indices.tolist(), spec.energies)}
    assert e[(3, 1, 2)] == e[(1, 3, 2)] == e[(2, 2, 2)] == e[(0, 4, 2)]


def test_rb87_spectrum_size():
    spec = scenario.spectrum()
    assert spec.n_modes == 3695
    assert spec.max_index == (37, 37, 13)
    assert spec.excitation_energies().max() <= spec.energy_cutoff


def test_mode_limit():
    with pytest.raises(ResourceLimitError):
        enumerate_modes(scenario.trap(), 40 * KB * scenario.temperature(), max_modes=1000)


def test_empty_spectrum_below_first_mode():
    spec = enumerate_modes(scenario.trap(), HBAR * 2 * math.pi * 10.0)
    assert spec.n_modes == 0


@settings(max_examples=40, deadline=None)
@given(
    w=st.tuples(*[st.floats(10.0, 500.0)] * 3),
    cutoff_units=st.floats(0.5, 6.0),
)
def test_enumeration_is_complete_and_sorted(w, cutoff_units):
    cfg = TrapConfig(*(2 * math.pi * x for x in w), RB87_MASS, 5e-9)
    cutoff = cutoff_units * HBAR * max(cfg.omegas)
    spec = enumerate_modes(cfg, cutoff)
    found = set(map(tuple, spec.indices.tolist()))
    kmax = [int(cutoff / (HBAR * o)) + 1 for o in cfg.omegas]
    for kx in range(kmax[0] + 1):
        for ky in range(kmax[1] + 1):
            for kz in range(kmax[2] + 1):
                if (kx, ky, kz) == (0, 0, 0):
                    continue
                inside = excitation_energy(cfg, kx, ky, kz) <= cutoff
                assert inside == ((kx, ky, kz) in found)
    keys = list(zip(spec.energies, spec.indices.tolist()))
    assert keys == sorted(keys)


def test_overlap_ground_value():
    t = overlap_1d("x", 4, 2e-6)
    assert t[0, 0, 0] == pytest.approx(1 / (math.sqrt(2 * math.pi) * 2e-6), rel=1e-15)


def test_overlap_parity_and_symmetry():
    v = overlap_1d("x", 12, 1.0).values
    k, l, m = np.indices(v.shape)
    assert np.all(v[(k + l + m) % 2 == 1] == 0.0)
    assert np.array_equal(v, v.transpose(1, 0, 2))
    assert np.allclose(v, v.transpose(2, 1, 0), rtol=1e-13, atol=0)


def test_exact_overlap_matches_quadrature_where_well_conditioned():
    exact = overlap_1d("x", 10, 1.0).values
    quad = overlap_1d("x", 10, 1.0, method="quadrature").values
    assert np.allclose(exact, quad, rtol=0, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40))
def test_exact_overlap_against_rational_expansion(k, l, m):
    if (k + l + m) % 2:
        return
    v = overlap_1d("x", max(k, l, m), 1.0).values[k, l, m]
    ref = overlap_mp(k, l, m)
    assert v == pytest.approx(ref, rel=1e-12, abs=0)


def test_overlap_3d_product_and_range():
    cfg = scenario.trap()
    t = overlap_tensors(cfg, (4, 4, 2))
    got = overlap_3d(t, (2, 0, 0), (0, 2, 0), (1, 1, 0))
    assert got == t[0][2, 0, 1] * t[1][0, 2, 1] * t[2][0, 0, 0]
    with pytest.raises(OverlapRangeError):
        overlap_3d(t, (5, 0, 0), (0, 0, 0), (1, 0, 0))


def test_critical_temperature_and_diluteness():
    cfg = scenario.trap()
    tc = critical_temperature(cfg, 200)
    assert tc == pytest.approx(1.5731e-8, rel=1e-4)
    rep = diluteness_report(cfg, 200, 0.4 * tc)
    assert rep.is_dilute
    assert rep.value == pytest.approx(0.012754, rel=1e-4)
