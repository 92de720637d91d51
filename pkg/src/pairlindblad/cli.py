"""Command line experiment runner.

Every subcommand reads a YAML experiment file, writes one table (CSV or
JSON) and a ``<output>.meta.json`` sidecar describing how it was produced.
Output is a pure function of the validated configuration.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure (including
a verification suite with failing checks).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import scipy.stats

from . import __version__, config, continuum, ensemble, meanfield, qcore, verification

OUTPUT_DIR_ENV = "PAIRLINDBLAD_OUTPUT_DIR"

SUBCOMMANDS = {
    "meanfield-trajectory": "MeanfieldTrajectory",
    "dephasing-rate-scan": "DephasingRateScan",
    "hemisphere-scan": "HemisphereScan",
    "master-curve": "MasterCurve",
    "gillespie-curve": "GillespieCurve",
    "continuum-curve": "ContinuumCurve",
    "factorization-study": "FactorizationStudy",
    "verify": "VerifySuite",
}

TOLERANCES = {
    "bloch_ball": meanfield.BALL_TOL,
    "rk4_step_rejection": meanfield.STEP_REJECT_TOL,
    "density_hermitian": qcore.HERMITIAN_TOL,
    "density_trace": qcore.TRACE_TOL,
    "density_positivity": qcore.POSITIVITY_TOL,
    "kraus_completeness": qcore.COMPLETENESS_TOL,
    "master_expansion_roundoff": ensemble.EXPANSION_TOL,
    "probability_sum": ensemble.PROB_SUM_TOL,
    "continuum_mass": continuum.MASS_TOL,
}


class Table:
    def __init__(self, columns: list[str]):
        self.columns = columns
        self.rows: list[list] = []
        self.meta: dict = {}
        self.failed = False

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError("row length does not match the header")
        self.rows.append(list(values))


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # repr is the shortest string that round-trips
        return repr(float(value))
    return str(value)


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def render_json(table: Table) -> str:
    payload = {"columns": table.columns, "rows": [[_jsonable(v) for v in row] for row in table.rows]}
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def _segment_states(model: meanfield.ModelSpec, u0, times, dt) -> np.ndarray:
    """States at ``times``, integrating sample to sample with fixed ``dt``."""
    out = np.empty((len(times), 3))
    u = np.asarray(u0, dtype=float)
    out[0] = u
    for i in range(1, len(times)):
        u = meanfield.integrate(model, u, times[i] - times[i - 1], dt).final
        out[i] = u
    return out


def run_meanfield_trajectory(cfg: config.MeanfieldTrajectoryConfig) -> Table:
    times = np.linspace(0.0, cfg.t_end, cfg.samples)
    states = _segment_states(cfg.model.spec(), cfg.u0, times, cfg.dt)
    table = Table(["t", "u_x", "u_y", "u_z"])
    for t, u in zip(times, states):
        table.add(t, *u)
    return table


def run_dephasing_scan(cfg: config.DephasingRateScanConfig) -> Table:
    reports, _ = meanfield.dephasing_rate_scan(cfg.theta, cfg.uz_values, cfg.gamma, cfg.transverse, cfg.t_end, cfg.dt)
    table = Table(["u_z", "predicted_rate", "fitted_rate", "residual"])
    for uz, rep in zip(cfg.uz_values, reports):
        table.add(float(uz), rep.predicted_rate, rep.fitted_rate, rep.residual)
    return table


def run_hemisphere_scan(cfg: config.HemisphereScanConfig) -> Table:
    model = meanfield.ModelSpec.singlet_purification()
    times = np.linspace(0.0, cfg.t_end, cfg.samples)
    table = Table(["state", "t", "u_x", "u_y", "u_z", "u_z_exact", "purity"])
    for k, u0 in enumerate(cfg.initial_states):
        states = _segment_states(model, u0, times, cfg.dt)
        exact = meanfield.hemisphere_exact(u0, times)
        for t, u, ue in zip(times, states, exact):
            table.add(k, t, *u, ue[2], 0.5 * (1.0 + float(u @ u)))
    return table


def run_master_curve(cfg: config.MasterCurveConfig) -> Table:
    times = np.linspace(0.0, cfg.t_end, cfg.samples)
    curves = [ensemble.survival_curve(n, times, cfg.gamma) for n in cfg.sizes]
    limit = continuum.mean_curve_point_mass(1.0, cfg.gamma * times)
    table = Table(["t"] + [f"survival_N{n}" for n in cfg.sizes] + ["survival_inf"])
    for i, t in enumerate(times):
        table.add(t, *[c[i] for c in curves], limit[i])
    return table


def run_gillespie_curve(cfg: config.GillespieCurveConfig) -> Table:
    m0 = cfg.N if cfg.m0 is None else cfg.m0
    mc = ensemble.McConfig(cfg.N, cfg.gamma, cfg.runs, cfg.seed, tuple(cfg.sample_times))
    mean, stderr = ensemble.sample_mean(ensemble.gillespie_decay(mc, m0, cfg.threads))
    master = [float("nan")] * len(cfg.sample_times)
    if m0 % 2 == 0:
        gen = ensemble.build_generator(cfg.N, cfg.gamma)
        p = np.zeros(cfg.N // 2 + 1)
        p[m0 // 2] = 1.0
        p0 = ensemble.EnsembleState(cfg.N, p)
        master = [ensemble.excited_fraction(ensemble.evolve_master(gen, p0, t)) for t in cfg.sample_times]
    table = Table(["t", "mc_mean", "mc_stderr", "master"])
    for row in zip(cfg.sample_times, mean, stderr, master):
        table.add(*row)
    return table


def run_continuum_curve(cfg: config.ContinuumCurveConfig) -> Table:
    times = np.linspace(0.0, cfg.t_end, cfg.samples)
    init = cfg.initial
    if init.kind == "point":
        start = continuum.PointMasses.single(init.x0)
    else:
        grid = np.linspace(0.0, 1.0, cfg.grid_points)
        start = continuum.Density.from_pdf(lambda x: scipy.stats.beta.pdf(x, init.a, init.b), grid)
    table = Table(["t", "mean_excited", "mass"])
    for t in times:
        p = continuum.evolve_density(start, float(t))
        mass = float(p.weights.sum()) if isinstance(p, continuum.PointMasses) else p.mass
        table.add(t, continuum.mean_excited(p), mass)
    return table


def run_factorization(cfg: config.FactorizationStudyConfig) -> Table:
    defects = ensemble.factorization_study(cfg.model.spec(), cfg.u0, cfg.sizes, cfg.t, cfg.dt)
    table = Table(["N", "defect"])
    for n, d in defects.items():
        table.add(n, d)
    return table


def run_verify(cfg: config.VerifySuiteConfig) -> Table:
    table = Table(["check", "status", "metrics"])
    for res in verification.run_all():
        print(res.line(), file=sys.stderr)
        # wall-clock timings go to stderr only so the table stays reproducible
        kept = {k: _jsonable(v) for k, v in res.metrics.items() if k != "seconds"}
        metrics = json.dumps(kept, sort_keys=True)
        table.add(res.name, "PASS" if res.passed else "FAIL", metrics)
        table.failed |= not res.passed
    return table


RUNNERS = {
    "MeanfieldTrajectory": run_meanfield_trajectory,
    "DephasingRateScan": run_dephasing_scan,
    "HemisphereScan": run_hemisphere_scan,
    "MasterCurve": run_master_curve,
    "GillespieCurve": run_gillespie_curve,
    "ContinuumCurve": run_continuum_curve,
    "FactorizationStudy": run_factorization,
    "VerifySuite": run_verify,
}


def output_path(cfg) -> Path:
    path = Path(cfg.output_path)
    override = os.environ.get(OUTPUT_DIR_ENV)
    return Path(override) / path.name if override else path


def sidecar(cfg, table: Table) -> dict:
    return {
        "experiment": cfg.experiment,
        "config": cfg.model_dump(mode="json"),
        "config_sha256": config.config_hash(cfg),
        "columns": table.columns,
        "rows": len(table.rows),
        "tolerances": TOLERANCES,
        "versions": {
            "pairlindblad": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def run(cfg) -> int:
    """Execute a validated configuration and write its outputs; returns the exit code."""
    table = RUNNERS[cfg.experiment](cfg)
    text = render_csv(table) if cfg.format == "csv" else render_json(table)
    path = output_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(sidecar(cfg, table), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return 2 if table.failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairlindblad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, experiment in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {experiment} experiment")
        p.add_argument("--config", type=Path, required=name != "verify", help="YAML experiment file")
        p.add_argument("--out", help="output file (overrides output_path)")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--seed", type=int, help="Monte Carlo master seed (gillespie-curve only)")
        p.add_argument("--threads", type=int, help="worker threads for Monte Carlo runs")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _report(errors: list[dict]) -> None:
    print(json.dumps({"errors": errors}, indent=1), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    experiment = SUBCOMMANDS[args.command]
    overrides = {}
    if args.out is not None:
        overrides["output_path"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if experiment == "GillespieCurve":
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
    elif args.seed is not None:
        _report([{"path": "seed", "message": "--seed only applies to gillespie-curve"}])
        return 1
    # --threads is accepted everywhere; only the Monte Carlo runner uses it
    try:
        if args.config is None:
            text = f"experiment: {experiment}\n"
        else:
            text = args.config.read_bytes()
        cfg = config.validate(text, experiment, overrides)
    except OSError as exc:
        _report([{"path": "--config", "message": str(exc)}])
        return 1
    except config.ConfigError as exc:
        _report(exc.errors)
        return 1
    try:
        return run(cfg)
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(json.dumps({"runtime_error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
