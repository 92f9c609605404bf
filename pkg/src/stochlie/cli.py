"""Command line entry point.

Exit status: 0 when every exercised criterion passes, 2 when one fails, 1 on
usage, config or input errors.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from ._parallel import map_ordered
from .dsl import DslError, parse_field_dsl
from .experiments import (ConfigError, Experiment, ExperimentConfig, ExperimentResult, parse_config,
                          run_experiment)
from .flowtaylor import remainder_slope
from .group import Side, affine1, heisenberg, integrate_group_sde, pos_diag, so3
from .noise import TimeGrid, sample_brownian, with_time_component, write_path_csv
from .sde import integrate_heun
from .weinorman import integrate_wei_norman

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _groups():
    return {"affine1": affine1, "so3": so3, "heisenberg": heisenberg,
            "posdiag1": lambda: pos_diag(1), "posdiag2": lambda: pos_diag(2), "posdiag3": lambda: pos_diag(3)}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--steps", type=int, help="time steps K")
    common.add_argument("--t-end", dest="t_end", type=float)
    common.add_argument("--paths", type=int, help="number of Monte Carlo paths (or seeds)")
    common.add_argument("--tol", type=float)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--config", metavar="FILE", help="flat key=value file; flags override it")

    p = _Parser(prog="stochlie", description="Stochastic Lie-Scheffers systems: simulation and checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="run a built-in experiment")
    run.add_argument("experiment", nargs="?", choices=[e.value for e in Experiment])
    run.add_argument("--dsl", metavar="FILE")
    run.add_argument("--dim-cap", dest="dim_cap", type=int)

    sim = sub.add_parser("simulate", parents=[common], help="Heun paths of a DSL system")
    sim.add_argument("--dsl", metavar="FILE", required=True)
    sim.add_argument("--z0", type=_floats, required=True)
    sim.add_argument("--time", action="store_true", help="noise component 1 is time")

    grp = sub.add_parser("group", parents=[common], help="exponential-Euler group paths")
    grp.add_argument("--group", choices=sorted(_groups()), default="affine1")
    grp.add_argument("--side", choices=[s.value for s in Side], default=Side.LEFT_ACTION_RIGHT_INVARIANT.value)

    wn = sub.add_parser("wei-norman", parents=[common], help="Wei-Norman coordinates")
    wn.add_argument("--group", choices=sorted(_groups()), default="affine1",
                    help="affine1 is also checked against its closed form")

    sp = sub.add_parser("superpose", parents=[common], help="verify a superposition rule")
    sp.add_argument("--rule", choices=["linear", "group-translation"], default="linear")

    ty = sub.add_parser("taylor", parents=[common], help="flow expansion remainder study")
    ty.add_argument("--dsl", metavar="FILE", help="fields Y0..Yr, Y0 against time")
    ty.add_argument("--z0", type=_floats)
    ty.add_argument("--order", type=int, default=1)

    alg = sub.add_parser("check-algebra", parents=[common], help="Lie closure and involutivity")
    alg.add_argument("--dsl", metavar="FILE")
    alg.add_argument("--dim-cap", dest="dim_cap", type=int)

    pa = sub.add_parser("paths", parents=[common], help="write Brownian driving paths")
    pa.add_argument("--dims", type=int, default=1)
    pa.add_argument("--time", action="store_true")
    return p


def _config(args, experiment=None) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "steps", "t_end", "paths", "tol", "threads", "out", "dsl", "dim_cap")}
    if experiment is not None:
        overrides["experiment"] = experiment
    elif getattr(args, "experiment", None):
        overrides["experiment"] = args.experiment
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    return parse_config(text, **overrides)


def _write_files(out: str, files: dict[str, str]) -> None:
    try:
        os.makedirs(out, exist_ok=True)
        for name, content in sorted(files.items()):
            with open(os.path.join(out, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(content)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc.strerror}") from None


def _report(result: ExperimentResult, cfg: ExperimentConfig) -> int:
    _write_files(cfg.out, result.files)
    print(f"# {result.experiment} seed={cfg.seed}")
    for note in result.notes:
        print(f"# {note}")
    for c in result.criteria:
        print(c.line())
    return EXIT_OK if result.passed else EXIT_FAIL


def _read_dsl(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_field_dsl(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _cmd_run(args) -> int:
    cfg = _config(args)
    if cfg.experiment is None:
        raise UsageError("name an experiment or set experiment= in the config")
    return _report(run_experiment(cfg), cfg)


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    doc = _read_dsl(args.dsl)
    system = doc.system()
    z0 = np.array(args.z0)
    if z0.shape != (system.n,):
        raise UsageError(f"--z0 needs {system.n} values")
    noise_dims = system.l - 1 if args.time else system.l
    grid = TimeGrid(cfg.t_end, cfg.get("steps", 1024))

    def one(p):
        path = sample_brownian(grid, noise_dims, cfg.seed, p)
        return integrate_heun(system, with_time_component(path) if args.time else path, z0)

    files = {}
    for p, traj in enumerate(map_ordered(one, range(cfg.get("paths", 1)), cfg.threads)):
        files[f"trajectory_{p}.csv"] = _to_text(traj.write_csv)
        if traj.exit_index is not None:
            print(f"# path {p} left the finite range at node {traj.exit_index}")
    _write_files(cfg.out, files)
    return EXIT_OK


def _to_text(writer) -> str:
    buf = io.StringIO()
    writer(buf)
    return buf.getvalue()


def _cmd_group(args) -> int:
    cfg = _config(args)
    G = _groups()[args.group]()
    grid = TimeGrid(cfg.t_end, cfg.get("steps", 1024))
    files = {}
    for p in range(cfg.get("paths", 1)):
        traj = integrate_group_sde(G, sample_brownian(grid, G.l, cfg.seed, p), side=Side(args.side))
        files[f"group_{p}.csv"] = _to_text(traj.write_csv)
        print(f"# path {p}: max membership defect {traj.defect:.3e}{' FLAGGED' if traj.flagged else ''}")
    _write_files(cfg.out, files)
    return EXIT_OK


def _cmd_wei_norman(args) -> int:
    cfg = _config(args)
    G = _groups()[args.group]()
    if args.group == "affine1":
        # the affine chart has a closed form, so check against it
        return _report(run_experiment(replace(cfg, experiment=Experiment.AFFINE_WEINORMAN)), cfg)
    grid = TimeGrid(cfg.t_end, cfg.get("steps", 1024))
    files = {}
    for p in range(cfg.get("paths", 1)):
        sol, traj = integrate_wei_norman(G, sample_brownian(grid, G.l, cfg.seed, p))
        files[f"wei_norman_{p}.csv"] = _to_text(sol.write_csv)
        files[f"wei_norman_group_{p}.csv"] = _to_text(traj.write_csv)
        where = "none" if sol.singular_index is None else str(sol.singular_index)
        print(f"# path {p}: singular_index {where}")
    _write_files(cfg.out, files)
    return EXIT_OK


def _cmd_superpose(args) -> int:
    exp = Experiment.LINEAR_SUPERPOSITION if args.rule == "linear" else Experiment.COVARIANCE
    cfg = _config(args, exp)
    return _report(run_experiment(cfg), cfg)


def _cmd_taylor(args) -> int:
    if args.dsl is None:
        cfg = _config(args, Experiment.TAYLOR)
        return _report(run_experiment(cfg), cfg)
    cfg = _config(args)
    doc = _read_dsl(args.dsl)
    fields = doc.field_list()
    if len(fields) < 2:
        raise UsageError("taylor needs at least Y0 and one noise field")
    z0 = np.array(args.z0 if args.z0 is not None else [0.0] * doc.dim)
    if z0.shape != (doc.dim,):
        raise UsageError(f"--z0 needs {doc.dim} values")
    t_list = [2.0 ** -k for k in (6, 5, 4, 3, 2)]
    study = remainder_slope(fields, z0, args.order, t_list, cfg.get("paths", 128), cfg.seed,
                            steps=cfg.get("steps", 32), threads=cfg.threads)
    _write_files(cfg.out, {"taylor.csv": _to_text(study.write_csv)})
    print(f"# N={args.order} slope={study.slope:.4f}" + (" (integrator floor)" if study.floor else ""))
    return EXIT_OK


def _cmd_check_algebra(args) -> int:
    cfg = _config(args, Experiment.CLOSURE)
    return _report(run_experiment(cfg), cfg)


def _cmd_paths(args) -> int:
    cfg = _config(args)
    grid = TimeGrid(cfg.t_end, cfg.get("steps", 1024))
    files = {}
    for p in range(cfg.get("paths", 1)):
        path = sample_brownian(grid, args.dims, cfg.seed, p)
        files[f"path_{p}.csv"] = _to_text(lambda fh: write_path_csv(with_time_component(path) if args.time else path, fh))
    _write_files(cfg.out, files)
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run, "simulate": _cmd_simulate, "group": _cmd_group, "wei-norman": _cmd_wei_norman,
    "superpose": _cmd_superpose, "taylor": _cmd_taylor, "check-algebra": _cmd_check_algebra, "paths": _cmd_paths,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, DslError) as exc:
        print(f"stochlie: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
