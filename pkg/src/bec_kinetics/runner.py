"""Run orchestration: spectrum -> canonical table -> rates -> propagation -> reports.

All results are computed in memory first and written at the end, so a
failing run leaves no partial output behind.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cache import RunCache
from .canonical import CanonicalTable, balance_factors, build_canonical_table
from .config import RunConfig, parse_initial_condition, parse_time_grid
from .constants import HBAR, KB
from .dynamics import (
    DistributionState,
    Generator,
    Trajectory,
    build_generator,
    observables,
    propagate,
    propagate_to_steady,
    steady_state_gibbs,
    steady_state_product,
    total_variation,
)
from .rates import (
    RateTable,
    build_rate_table,
    build_triples,
    detailed_balance_residual,
)
from .trap import (
    AXES,
    OverlapTensor1D,
    TrapSpectrum,
    diluteness_report,
    enumerate_modes,
    overlap_1d,
)

log = logging.getLogger(__name__)

TC_FORMULA = "k_B Tc = hbar omega_bar (N / zeta(3))^(1/3), omega_bar = (omega_x omega_y omega_z)^(1/3)"
ORACLE_MAX_MODES = 5
ORACLE_MAX_ATOMS = 8


@dataclass
class Model:
    config: RunConfig
    spectrum: TrapSpectrum
    overlaps: tuple[OverlapTensor1D, ...]
    table: CanonicalTable
    rates: RateTable
    generator: Generator
    timings: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


class _Stopwatch:
    def __init__(self, timings: dict, name: str):
        self.timings, self.name = timings, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.name] = round(time.perf_counter() - self.t0, 6)


def _overlaps(spectrum: TrapSpectrum, cache: RunCache) -> tuple[OverlapTensor1D, ...]:
    cfg = spectrum.config
    out = []
    for axis, n in zip(AXES, spectrum.max_index):
        length = cfg.oscillator_length(axis)
        values = cache.load_overlap(cfg, axis, int(n))
        if values is None:
            tensor = overlap_1d(axis, int(n), length)
            cache.store_overlap(cfg, axis, int(n), tensor.values)
        else:
            values.setflags(write=False)
            tensor = OverlapTensor1D(axis, values, int(n), length)
        out.append(tensor)
    return tuple(out)


def build_model(config: RunConfig, cache: RunCache | None = None, threads: int | None = None) -> Model:
    """Everything up to and including the generator."""
    cache = cache or RunCache(config.cache_dir, enabled=False)
    threads = threads or config.threads
    timings: dict = {}
    trap = config.trap()
    temperature = config.temperature_k()
    with _Stopwatch(timings, "spectrum"):
        spectrum = enumerate_modes(trap, config.energy_cutoff(), config.max_modes)
    with _Stopwatch(timings, "overlaps"):
        overlaps = _overlaps(spectrum, cache)
    with _Stopwatch(timings, "canonical"):
        table = build_canonical_table(spectrum, temperature, config.n_atoms)
    window = config.window()
    info: dict = {}
    with _Stopwatch(timings, "rates"):
        key = config.physics_hash()
        rates = cache.load_rates(key)
        if rates is None:
            triples = build_triples(spectrum, overlaps, window, config.prune())
            info["n_triples"] = int(triples.n_terms)
            info["folded_levels"] = bool(triples.folded)
            info["window_support_rad_s"] = float(triples.support)
            rates = build_rate_table(
                spectrum, overlaps, table, window, config.n_atoms,
                mode=config.rate_mode, triples=triples, threads=threads,
                provenance=f"config {key}", close_boundary=config.close_boundary,
            )
            cache.store_rates(key, rates)
    with _Stopwatch(timings, "generator"):
        generator = build_generator(rates)
    return Model(config, spectrum, overlaps, table, rates, generator, timings, info)


def initial_state(config: RunConfig, model: Model) -> DistributionState:
    kind, value = parse_initial_condition(config.initial_condition, config.n_atoms)
    if kind == "delta":
        return DistributionState.delta(config.n_atoms, int(value))
    t_init = value if kind == "gibbs" else value * config.critical_temperature()
    hot = build_canonical_table(model.spectrum, t_init, config.n_atoms)
    return steady_state_gibbs(hot, model.spectrum, config.n_atoms)


@dataclass
class SteadyStates:
    product: DistributionState
    gibbs: DistributionState
    asymptotic: DistributionState

    def distances(self) -> dict:
        return {
            "asymptotic_vs_product": total_variation(self.asymptotic, self.product),
            "asymptotic_vs_gibbs": total_variation(self.asymptotic, self.gibbs),
            "product_vs_gibbs": total_variation(self.product, self.gibbs),
        }


def steady_states(model: Model, initial: DistributionState) -> SteadyStates:
    cfg = model.config
    return SteadyStates(
        steady_state_product(model.rates),
        steady_state_gibbs(model.table, model.spectrum, cfg.n_atoms),
        propagate_to_steady(model.generator, initial, cfg.steady_relaxation_times),
    )


# csv writers return text so that nothing touches disk before the run succeeds

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _g(v: float) -> str:
    return f"{v:.17g}"


def spectrum_csv(spectrum: TrapSpectrum, beta: float) -> str:
    exc = spectrum.excitation_energies()
    rows = [
        [i, kx, ky, kz, _g(e), _g(x), _g(beta * x)]
        for i, ((kx, ky, kz), e, x) in enumerate(zip(spectrum.indices.tolist(), spectrum.energies, exc))
    ]
    return _csv_text(["mode", "kx", "ky", "kz", "energy_J", "excitation_J", "excitation_over_kT"], rows)


def canonical_summary_csv(table: CanonicalTable, spectrum: TrapSpectrum) -> str:
    z = balance_factors(table, spectrum)
    occ = table.occupations if spectrum.n_modes else np.zeros((table.n_max + 1, 0))
    rows = []
    for m in range(table.n_max + 1):
        lowest = occ[m, 0] if occ.shape[1] else 0.0
        rows.append([m, _g(table.log_z[m]), _g(z[m]), _g(occ[m].sum()), _g(lowest)])
    return _csv_text(["M", "ln_Z", "balance_factor", "total_occupation", "N_lowest_mode"], rows)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _finite(x: float):
    return x if math.isfinite(x) else None


def _trajectory_texts(traj: Trajectory) -> tuple[str, str]:
    obs = _csv_text(
        ["time_s", "mean_N0", "sigma0", "var_N0", "normalized_width"],
        [[_g(v) for v in row] for row in zip(traj.times, traj.mean_n0, traj.sigma0, traj.var_n0, traj.normalized_width)],
    )
    dist = _csv_text(
        ["time_s"] + [f"N0_{n}" for n in range(traj.n_atoms + 1)],
        [[_g(t)] + [_g(v) for v in p] for t, p in zip(traj.times, traj.distributions)],
    )
    return obs, dist


def config_oracles(model: Model) -> list[dict] | None:
    """Enumeration cross-checks of this run's own spectrum, for tiny systems."""
    from .oracles import brute_force_canonical, brute_force_gibbs, brute_force_lambdas

    spec, table, cfg = model.spectrum, model.table, model.config
    if spec.n_modes > ORACLE_MAX_MODES or cfg.n_atoms > ORACLE_MAX_ATOMS or spec.n_modes == 0:
        return None
    results = []
    worst = 0.0
    for m in range(cfg.n_atoms + 1):
        z, occ = brute_force_canonical(spec.energies, table.beta, m)
        worst = max(worst, abs(math.exp(table.log_z[m]) - z) / z)
        if m:
            worst = max(worst, float(np.max(np.abs(table.occupation_row(m) - occ) / occ)))
    results.append({"name": "canonical_enumeration", "error": worst, "tolerance": 1e-12})
    p = steady_state_gibbs(table, spec, cfg.n_atoms).probabilities
    q = brute_force_gibbs(spec.epsilon0, spec.energies, table.beta, cfg.n_atoms)
    results.append({"name": "gibbs_enumeration", "error": float(np.abs(p - q).max()), "tolerance": 1e-12})
    if cfg.rate_mode == "physical":
        window = cfg.window()
        worst = 0.0
        for m in range(1, cfg.n_atoms + 1):
            ref = brute_force_lambdas(spec, model.overlaps, table.occupation_row(m), window)
            got = (model.rates.lambda_plus[cfg.n_atoms - m], model.rates.lambda_minus[cfg.n_atoms - m])
            for a, b in zip(got, ref):
                if b != 0:
                    worst = max(worst, abs(a - b) / abs(b))
                elif a != 0:
                    worst = math.inf
        results.append({"name": "rate_triple_loop", "error": worst, "tolerance": 1e-12})
    for r in results:
        r["passed"] = bool(r["error"] <= r["tolerance"])
    return results


def run(
    config: RunConfig,
    out_dir: str | Path | None = None,
    use_cache: bool | None = None,
    threads: int | None = None,
) -> dict:
    """Full pipeline; writes all artifacts into ``out_dir`` and returns the manifest."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    use_cache = config.cache if use_cache is None else use_cache
    threads = threads or config.threads
    t_start = time.perf_counter()
    warnings = []
    if config.temperature_mode == "ratio" and config.temperature >= 1.0 or (
        config.temperature_mode == "absolute" and config.temperature >= config.critical_temperature()
    ):
        warnings.append("temperature at or above Tc; no condensate expected in equilibrium")
        log.warning(warnings[-1])
    grid = parse_time_grid(config.time_grid)
    cache = RunCache(config.cache_dir, enabled=use_cache)

    model = build_model(config, cache, threads)
    timings = model.timings
    initial = initial_state(config, model)
    with _Stopwatch(timings, "propagation"):
        traj = propagate(model.generator, initial, grid, config.tolerance, config.propagation_method)
    with _Stopwatch(timings, "steady_states"):
        steady = steady_states(model, initial)
    with _Stopwatch(timings, "oracles"):
        oracles = config_oracles(model)

    spec, table, rates, gen = model.spectrum, model.table, model.rates, model.generator
    temperature = config.temperature_k()
    texts = {
        "config.txt": config.to_text(),
        "spectrum.csv": spectrum_csv(spec, table.beta),
        "canonical_summary.csv": canonical_summary_csv(table, spec),
    }
    if config.export_canonical_table:
        buf = io.StringIO()
        occ = table.occupations
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M", "ln_Z"] + [f"N_{kx}_{ky}_{kz}" for kx, ky, kz in spec.modes])
        for m in range(table.n_max + 1):
            w.writerow([m, _g(table.log_z[m])] + [_g(v) for v in occ[m]])
        texts["canonical_table.csv"] = buf.getvalue()
    texts["rates.csv"] = _csv_text(
        ["N0", "lambda_plus", "lambda_minus", "xi_plus", "xi_minus"],
        [
            [n0] + [_g(a[n0]) for a in (rates.lambda_plus, rates.lambda_minus, rates.xi_plus, rates.xi_minus)]
            for n0 in range(rates.n_atoms + 1)
        ],
    )
    texts["trajectory.csv"], texts["distributions.csv"] = _trajectory_texts(traj)
    texts["steady_states.csv"] = _csv_text(
        ["N0", "p_product", "p_gibbs", "p_asymptotic"],
        [
            [n0, _g(a), _g(b), _g(c)]
            for n0, (a, b, c) in enumerate(
                zip(steady.product.probabilities, steady.gibbs.probabilities, steady.asymptotic.probabilities)
            )
        ],
    )

    residual = detailed_balance_residual(rates, table, spec)
    dil = diluteness_report(config.trap(), config.n_atoms, temperature)
    gap = gen.spectral_gap()
    window = config.window()
    manifest = {
        "program": "bec-kinetics",
        "version": __version__,
        "config": config.to_dict(),
        "config_hash": config.physics_hash(),
        "warnings": warnings,
        "derived": {
            "critical_temperature_K": config.critical_temperature(),
            "critical_temperature_formula": TC_FORMULA,
            "temperature_K": temperature,
            "t_over_tc": temperature / config.critical_temperature(),
            "window_kind": window.kind,
            "gamma_rad_s": window.gamma,
            "beta_hbar_gamma": HBAR * window.gamma / (KB * temperature),
            "energy_cutoff_J": config.energy_cutoff(),
            "energy_cutoff_over_kT": config.energy_cutoff() / (KB * temperature),
        },
        "diluteness": {"a_rho_cube_root": dil.value, "is_dilute": dil.is_dilute, "peak_density_m3": dil.peak_density},
        "spectrum": {
            "n_modes": spec.n_modes,
            "n_levels": int(len(table.level_energies)),
            "max_index": list(spec.max_index),
            "identifier": spec.identifier(),
        },
        "rates": dict(
            model.info,
            mode=rates.mode,
            close_boundary=config.close_boundary,
            max_abs_detailed_balance_residual=_finite(float(np.nanmax(np.abs(residual)))) if np.any(np.isfinite(residual)) else None,
        ),
        "generator": {
            "max_abs": gen.max_abs(),
            "spectral_gap_per_s": gap,
            "relaxation_time_s": _finite(1.0 / gap) if gap > 0 else None,
            "max_abs_column_sum_over_max_abs": float(np.abs(gen.column_sums()).max() / gen.max_abs()) if gen.max_abs() > 0 else 0.0,
        },
        "trajectory": {
            "method": traj.method,
            "samples": len(traj.times),
            "initial_condition": config.initial_condition,
            "clamp_events": traj.clamp_events,
            "roundoff_zeroed": traj.roundoff_zeroed,
            "max_norm_error": traj.max_norm_error,
            "final_sigma0": float(traj.sigma0[-1]),
        },
        "steady_states": {
            "total_variation": steady.distances(),
            "sigma0": {
                "product": observables(steady.product).sigma0,
                "gibbs": observables(steady.gibbs).sigma0,
                "asymptotic": observables(steady.asymptotic).sigma0,
            },
            "asymptotic_time_s": steady.asymptotic.time,
        },
        "oracles": oracles,
        "cache_hits": dict(cache.hits),
        "wall_times_s": timings,
        "files": {name: hashlib.sha256(t.encode()).hexdigest() for name, t in texts.items()},
    }
    manifest["wall_times_s"]["total"] = round(time.perf_counter() - t_start, 6)

    out.mkdir(parents=True, exist_ok=True)
    for name, text in texts.items():
        (out / name).write_text(text, encoding="utf-8")
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    return manifest


def compare_steady_states(
    config: RunConfig,
    out_dir: str | Path | None = None,
    use_cache: bool | None = None,
    threads: int | None = None,
) -> dict:
    """TV distances among the three steady states, and between runs at a and a/2."""
    use_cache = config.cache if use_cache is None else use_cache
    cache = RunCache(config.cache_dir, enabled=use_cache)
    reports = {}
    states = {}
    for label, cfg in (("a", config), ("a_half", config.replace(scattering_length=config.scattering_length / 2))):
        model = build_model(cfg, cache, threads)
        steady = steady_states(model, initial_state(cfg, model))
        states[label] = steady
        reports[label] = {"scattering_length_m": cfg.scattering_length, "total_variation": steady.distances()}
    report = {
        "config": config.to_dict(),
        "config_hash": config.physics_hash(),
        "runs": reports,
        "a_vs_a_half": {
            "product": total_variation(states["a"].product, states["a_half"].product),
            "asymptotic": total_variation(states["a"].asymptotic, states["a_half"].asymptotic),
        },
    }
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "steady_comparison.json").write_text(_dump(report), encoding="utf-8")
    return report
