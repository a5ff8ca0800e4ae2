"""diffnet command line: validate, gain, simulate, sweep, analyze, run.

Exit codes: 0 success, 2 unreadable config or bad arguments, 3 invalid
config or system, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .analysis import SweepResult, classify_toggle, epsilon_sweep, fit_decay_rate, time_scales
from .field import FullFieldModel, SolverError, frozen_relaxation, simulate_full
from .greens import SingularSystemError
from .io import plot_data, trajectory_from_csv, trajectory_to_csv, write_json
from .reduced import build_gain, simulate_reduced
from .scenarios import (ConfigError, ConfigValidationError, Scenario, apply_overrides, load_config,
                        prepare)
from .types import CellKind

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3, 4


def threads() -> int:
    raw = os.environ.get("DIFFNET_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class _Outputs:
    """Collects files in a temp dir next to the target and renames it into place on success."""

    def __init__(self, parent: Path, name: str):
        self.parent = parent
        self.final = parent / name
        parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{name}.", dir=parent))
        self.files: list[str] = []

    def path(self, fname: str) -> Path:
        self.files.append(fname)
        return self.tmp / fname

    def commit(self) -> Path:
        if self.final.exists():
            shutil.rmtree(self.final)
        os.replace(self.tmp, self.final)
        return self.final

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _solver_opts(sc: Scenario):
    s = sc.solver
    full = {"h": s["h"], "dt": s["dt"], "cg_rtol": s["cg_rtol"], "engine": s["engine"],
            "boundary": s["boundary"]}
    red = {"method": s["method"], "rtol": s["rtol"], "atol": s["atol"], "dt": s["rk4_dt"]}
    return full, red


def _simulate(sc: Scenario, which: str):
    cfg = sc.config
    full_opts, red_opts = _solver_opts(sc)
    t_end, out_dt = cfg["t_end"], cfg.get("output_dt", 1.0)
    trajs = {}
    if which in ("reduced", "both"):
        trajs["reduced"] = simulate_reduced(sc.spec, t_end, out_dt, **red_opts)
    if which in ("full", "both"):
        trajs["full"] = simulate_full(sc.spec, t_end=t_end, output_dt=out_dt, **full_opts)
    return trajs


def _write_trajectories(out: _Outputs, trajs: dict) -> None:
    for model, tr in trajs.items():
        trajectory_to_csv(tr, out.path(f"trajectory_{model}.csv"))
        plot_data(tr, out.path(f"plot_{model}.dat"))


def _sweep(sc: Scenario, trajs: Optional[dict] = None) -> SweepResult:
    cfg = sc.config
    full_opts, red_opts = _solver_opts(sc)
    sweep = cfg.get("sweep")
    species = tuple(sweep["species"]) if sweep and "species" in sweep else None
    if sweep is None:
        if trajs is None or set(trajs) != {"reduced", "full"}:
            trajs = _simulate(sc, "both")
        ts = time_scales(sc.spec)
        gamma = 1.0 / ts.tau_x
        return epsilon_sweep(sc.spec, [gamma], species=species,
                             runner=lambda _spec: (trajs["full"], trajs["reduced"]))
    return epsilon_sweep(sc.spec, sweep["gammas"], cfg["t_end"], cfg.get("output_dt", 1.0), species,
                         full_opts, red_opts, workers=threads())


def _toggle_report(sc: Scenario, trajs: dict) -> dict:
    report = {}
    for model, tr in trajs.items():
        cells = []
        for i, kind in enumerate(tr.kinds):
            if CellKind(kind) is not CellKind.RECEIVER:
                continue
            lac, tet = tr.final_state(i)
            cells.append({"cell": i, "state": classify_toggle(tr, i).value, "t": float(tr.times[-1]),
                          "LacI": float(lac), "TetR": float(tet), "u": float(tr.signals[-1, i])})
        report[model] = cells
    return report


def _decay_fit(sc: Scenario) -> dict:
    cfg = sc.config
    relax = {"dt": 1e-4, "t_end": 0.01, **cfg.get("relaxation", {})}
    model = FullFieldModel(sc.spec, h=sc.solver["h"], cg_rtol=sc.solver["cg_rtol"],
                           boundary=sc.solver["boundary"])
    res = frozen_relaxation(model, relax["dt"], relax["t_end"])
    fit = fit_decay_rate(res.times, res.norms)
    lam = math.pi**2 * sc.spec.domain.D / sc.spec.domain.L**2
    out = json.loads(fit.to_json())
    out.update({"lambda1_D": lam, "ratio": fit.rate / lam, "dt": relax["dt"],
                "max_relative_imbalance": res.max_relative_imbalance})
    return out


def _manifest(sc: Scenario, command: str, settings: dict, wall: float, files: list) -> dict:
    return {
        "name": sc.name,
        "config_hash": sc.digest,
        "command": command,
        "config": sc.config,
        "settings": settings,
        "versions": {"diffnet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_s": wall,
        "outputs": sorted(files),
    }


def _execute(args, command: str) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, getattr(args, "seed", None), getattr(args, "model", None))
    sc = prepare(cfg)
    if command == "validate":
        ts = time_scales(sc.spec)
        print(f"{sc.name}: OK ({sc.spec.n_senders} senders, {sc.spec.n_receivers} receivers); "
              f"eps_u={ts.eps_u:.3g} eps_v={ts.eps_v:.3g} hash={sc.digest}")
        return EXIT_OK
    t0 = time.perf_counter()
    out = _Outputs(Path(args.out), f"{sc.name}-{sc.digest}")
    try:
        analyses = set(sc.config.get("analyses", []))
        trajs: dict = {}
        if command == "gain":
            build_gain(sc.spec).to_csv(out.path("gain.csv"))
        if command in ("simulate", "run"):
            if not (command == "run" and "sweep" in sc.config):
                trajs = _simulate(sc, sc.config["model"])
                _write_trajectories(out, trajs)
        if command == "analyze" and getattr(args, "trajectories", None):
            src = Path(args.trajectories)
            for model in ("reduced", "full"):
                f = src / f"trajectory_{model}.csv"
                if f.exists():
                    trajs[model] = trajectory_from_csv(f)
        if command in ("analyze", "run"):
            if "gain_export" in analyses:
                build_gain(sc.spec).to_csv(out.path("gain.csv"))
            if "toggle_report" in analyses:
                if not trajs:
                    trajs = _simulate(sc, sc.config["model"])
                write_json(out.path("toggle_report.json"), _toggle_report(sc, trajs))
            if "decay_fit" in analyses:
                write_json(out.path("decay_fit.json"), _decay_fit(sc))
        if command == "sweep" or (command in ("analyze", "run") and "error_table" in analyses):
            _sweep(sc, trajs or None).to_csv(out.path("error_table.csv"))
        wall = time.perf_counter() - t0
        write_json(out.path("manifest.json"),
                   _manifest(sc, command, sc.solver, wall, list(out.files)))
        final = out.commit()
    except BaseException:
        out.abort()
        raise
    print(final)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"diffnet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="config path or bundled preset name")
        sp.add_argument("--seed", type=int, help="override rng_seed")
        sp.add_argument("--model", choices=("reduced", "full", "both"), help="override model")
        if out:
            sp.add_argument("--out", default="out", help="parent directory for results")

    common(sub.add_parser("validate", help="check a config and print time-scale ratios"), out=False)
    common(sub.add_parser("gain", help="export the communication gain matrix"))
    common(sub.add_parser("simulate", help="run the configured model(s), write trajectories"))
    common(sub.add_parser("sweep", help="degradation-rate sweep, write the error table"))
    an = sub.add_parser("analyze", help="run the configured analyses")
    common(an)
    an.add_argument("--trajectories", help="reuse trajectory CSVs from this directory")
    common(sub.add_parser("run", help="simulate and analyse in one go"))
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _execute(args, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, SingularSystemError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # remaining value errors come from settings the schema cannot judge (e.g. dt vs h)
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
