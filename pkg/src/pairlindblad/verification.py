"""Numerical acceptance checks shared by ``pairlindblad verify`` and the test suite.

Each ``check_*`` function returns a :class:`CheckResult` carrying the measured
quantities, so callers can assert on them with their own tolerances.  States
produced along the way are handed to a :class:`StateLog` for the global
physicality check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import continuum, ensemble, meanfield, qcore

SEED = 20240601


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.metrics.items())
        return f"[{status}] {self.name}: {shown}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class StateLog:
    """Collects Bloch trajectories and density matrices for a physicality audit."""

    bloch: list = field(default_factory=list)
    densities: list = field(default_factory=list)

    def add_trajectory(self, traj: meanfield.Trajectory) -> None:
        self.bloch.append(traj.states.reshape(-1, 3))

    def add_density(self, rho) -> None:
        self.densities.append(np.asarray(rho))


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def check_decay_power_law(log: StateLog | None = None, tol: float = 1e-8, max_seconds: float = 1.0) -> CheckResult:
    model = meanfield.ModelSpec.pair_decay(1.0)
    traj, elapsed = _timed(meanfield.integrate, model, [0.0, 0.0, -1.0], 20.0, 1e-3)
    expected = 1.0 / (0.5 + 0.5 * traj.times)
    err = float(np.max(np.abs((1.0 - traj.states[:, 2]) - expected)))
    if log is not None:
        log.add_trajectory(traj)
    return CheckResult(
        "1/t decay law",
        err <= tol and elapsed < max_seconds,
        {"max_error": err, "seconds": elapsed},
    )


def random_initial_states(n: int, seed: int = SEED, margin: float = 1e-3) -> np.ndarray:
    """Random Bloch-ball states kept away from the north pole."""
    u = qcore.random_bloch_vectors(4 * n, seed)
    return u[1.0 - u[:, 2] > margin][:n]


def check_parabolic_orbits(log: StateLog | None = None, tol: float = 1e-8, n_states: int = 20) -> CheckResult:
    u0 = random_initial_states(n_states)
    traj = meanfield.integrate(meanfield.ModelSpec.pair_decay(1.0), u0, 20.0, 1e-3)
    gap = 1.0 - traj.states[..., 2]
    drift = 0.0
    for axis in (0, 1):
        q = traj.states[..., axis] ** 2 / gap
        drift = max(drift, float(np.max(np.abs(q - q[0]))))
    if log is not None:
        log.add_trajectory(traj)
    return CheckResult("parabolic trajectories", drift <= tol, {"max_drift": drift, "states": len(u0)})


def check_dephasing_interval(log: StateLog | None = None, tol: float = 1e-6, degenerate_tol: float = 1e-9) -> CheckResult:
    uz_values = [-1.0, -0.5, 0.0, 0.5, 1.0]
    gamma = 1.0
    reports, trajs = meanfield.dephasing_rate_scan(np.pi / 4, uz_values, gamma)
    err = max(abs(r.fitted_rate - gamma * (1 + uz) / 2) for r, uz in zip(reports, uz_values))
    flat, flat_trajs = meanfield.dephasing_rate_scan(np.pi / 2, uz_values, gamma)
    if log is not None:
        for traj in trajs + flat_trajs:
            log.add_trajectory(traj)
    rates = [r.fitted_rate for r in flat]
    spread = max(rates) - min(rates)
    return CheckResult(
        "dephasing rate interval",
        err <= tol and spread <= degenerate_tol,
        {"max_rate_error": err, "theta_pi_2_spread": spread},
    )


HEMISPHERE_STATES = ((0.0, 0.0, 0.0), (0.6, 0.0, -0.2), (0.3, 0.4, 0.0))


def check_hemisphere_flow(log: StateLog | None = None, tol: float = 1e-8, drift_tol: float = 1e-10, t_end: float = 20.0) -> CheckResult:
    model = meanfield.ModelSpec.singlet_purification()
    err = drift = 0.0
    worst_purity_step = np.inf
    for u0 in HEMISPHERE_STATES:
        traj = meanfield.integrate(model, u0, t_end, 1e-3)
        if log is not None:
            log.add_trajectory(traj)
        exact = meanfield.hemisphere_exact(u0, traj.times)
        err = max(err, float(np.max(np.abs(traj.states - exact))))
        drift = max(drift, float(np.max(np.abs(traj.states[:, :2] - np.asarray(u0)[:2]))))
        purity = 0.5 * (1.0 + np.sum(traj.states**2, axis=1))
        worst_purity_step = min(worst_purity_step, float(np.min(np.diff(purity))))
    monotone = worst_purity_step >= 0.0
    detail = "" if monotone else "purity falls while u_z < 0 (d|u|^2/dt = u_z (1-|u|^2)/2)"
    return CheckResult(
        "hemisphere flow",
        err <= tol and drift < drift_tol and monotone,
        {"max_error": err, "transverse_drift": drift, "min_purity_step": worst_purity_step},
        detail,
    )


def check_singlet_identity(tol: float = 1e-12, n_states: int = 100) -> CheckResult:
    gen = qcore.generator_from_channel(qcore.singlet_channel())
    err = 0.0
    for u in qcore.random_bloch_vectors(n_states, SEED):
        rho = qcore.bloch_to_density(u)
        closed = 0.5 * np.linalg.det(rho) * qcore.SIGMA_Z
        err = max(err, float(np.max(np.abs(qcore.meanfield_rhs(gen, rho) - closed))))
    return CheckResult("singlet partial-trace identity", err <= tol, {"max_error": err})


def check_generator_spectrum(sizes=(2, 4, 10, 100), gamma: float = 1.0) -> CheckResult:
    exact = col_exact = True
    for n_atoms in sizes:
        gen = ensemble.build_generator(n_atoms, gamma)
        n = np.arange(n_atoms // 2 + 1)
        expected = gamma * n * (2 * n - 1) / n_atoms
        eig = np.sort(np.linalg.eigvals(gen.matrix / n_atoms).real)
        exact &= bool(np.array_equal(eig, np.sort(expected)) and np.array_equal(gen.rates, expected))
        col_exact &= bool(np.all(gen.matrix.sum(axis=0) == 0.0))
    return CheckResult("generator spectrum", exact and col_exact, {"eigenvalues_exact": exact, "columns_sum_zero": col_exact})


def survival_distances(sizes=(16, 64, 256), t_end: float = 10.0, samples: int = 201) -> dict:
    times = np.linspace(0.0, t_end, samples)
    limit = continuum.mean_curve_point_mass(1.0, times)
    return {n: float(np.max(np.abs(ensemble.survival_curve(n, times) - limit))) for n in sizes}


def check_survival_convergence(max_seconds: float = 10.0) -> CheckResult:
    dist, elapsed = _timed(survival_distances)
    values = list(dist.values())
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    metrics = {f"sup_N{n}": d for n, d in dist.items()}
    metrics["seconds"] = elapsed
    return CheckResult("survival curves converge to continuum", decreasing and elapsed < max_seconds, metrics)


GILLESPIE_TIMES = (0.5, 1.0, 2.0, 5.0)


def gillespie_vs_master(N: int = 1000, runs: int = 10_000, seed: int = SEED, times=GILLESPIE_TIMES, threads: int = 1):
    cfg = ensemble.McConfig(N, 1.0, runs, seed, tuple(times))
    mean, stderr = ensemble.sample_mean(ensemble.gillespie_decay(cfg, N, threads))
    gen = ensemble.build_generator(N)
    p0 = ensemble.EnsembleState.fully_excited(N)
    master = np.array([ensemble.excited_fraction(ensemble.evolve_master(gen, p0, t)) for t in times])
    return mean, stderr, master


def check_gillespie(max_seconds: float = 60.0, sigmas: float = 3.0) -> CheckResult:
    (mean, stderr, master), elapsed = _timed(gillespie_vs_master)
    z = float(np.max(np.abs(mean - master) / stderr))
    return CheckResult("Gillespie vs master equation", z <= sigmas and elapsed < max_seconds, {"max_z": z, "seconds": elapsed})


FACTORIZATION_STATE = (0.6, 0.0, -0.6)


def check_factorization(log: StateLog | None = None, max_seconds: float = 120.0) -> CheckResult:
    start = time.perf_counter()
    model = meanfield.ModelSpec.pair_decay()
    rho0 = qcore.bloch_to_density(FACTORIZATION_STATE)
    rho_mf = qcore.bloch_to_density(meanfield.integrate(model, FACTORIZATION_STATE, 1.0).final)
    defects = {}
    for n in (4, 6, 8):
        rho_n = ensemble.exact_nbody_evolve(n, model.generator(), rho0, 1.0, 1e-3)
        if log is not None:
            log.add_density(rho_n)
        defects[n] = ensemble.factorization_defect(rho_n, rho_mf)
    elapsed = time.perf_counter() - start
    ratio = defects[4] / defects[8]
    ok = defects[4] > defects[6] > defects[8] and 1.5 <= ratio <= 3.0 and elapsed < max_seconds
    metrics = {f"defect_N{n}": d for n, d in defects.items()}
    metrics.update(ratio_4_8=ratio, seconds=elapsed)
    return CheckResult("finite clusters stay uncorrelated", ok, metrics)


def check_continuum(tol_position: float = 1e-14, tol_mass: float = 1e-6, tol_semigroup: float = 1e-14) -> CheckResult:
    pos_err = 0.0
    for t in (1.0, 3.0, 10.0):
        moved = continuum.evolve_density(continuum.PointMasses.single(1.0), t)
        pos_err = max(pos_err, abs(moved.positions[0] - 1.0 / (1.0 + t)))
    p0 = continuum.Density.from_pdf(lambda x: 140.0 * x**3 * (1.0 - x) ** 3)
    mass_err = max(abs(continuum.evolve_density(p0, t).mass - 1.0) for t in (0.0, 1.0, 5.0))
    start = continuum.PointMasses(np.linspace(0.0, 1.0, 11), np.full(11, 1 / 11))
    two = continuum.evolve_density(continuum.evolve_density(start, 0.7), 2.3)
    one = continuum.evolve_density(start, 3.0)
    semi = float(np.max(np.abs(two.positions - one.positions)))
    return CheckResult(
        "continuum characteristics",
        pos_err <= tol_position and mass_err <= tol_mass and semi <= tol_semigroup,
        {"position_error": pos_err, "mass_error": mass_err, "semigroup_error": semi},
    )


def check_physicality(log: StateLog, trace_tol: float = 1e-10, eig_tol: float = 1e-10, ball_tol: float = 1e-8) -> CheckResult:
    norm_max = max((float(np.max(np.linalg.norm(u, axis=1))) for u in log.bloch), default=0.0)
    trace_err = 0.0
    min_eig = np.inf
    for u in log.bloch:
        # 2x2 states: trace is 1 by construction, eigenvalues are (1 +- |u|)/2
        min_eig = min(min_eig, float(np.min(0.5 * (1.0 - np.linalg.norm(u, axis=1)))))
    for rho in log.densities:
        trace_err = max(trace_err, abs(np.trace(rho) - 1.0))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]))
    ok = trace_err <= trace_tol and min_eig >= -eig_tol and norm_max <= 1 + ball_tol
    return CheckResult(
        "global physicality",
        ok,
        {"trace_error": trace_err, "min_eigenvalue": min_eig, "max_bloch_norm": norm_max,
         "trajectories": len(log.bloch), "nbody_states": len(log.densities)},
    )


def run_all() -> list[CheckResult]:
    log = StateLog()
    results = [
        check_decay_power_law(log),
        check_parabolic_orbits(log),
        check_dephasing_interval(log),
        check_hemisphere_flow(log),
        check_singlet_identity(),
        check_generator_spectrum(),
        check_survival_convergence(),
        check_gillespie(),
        check_factorization(log),
        check_continuum(),
    ]
    results.append(check_physicality(log))
    return results
