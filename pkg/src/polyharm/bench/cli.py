"""Command line interface: ``polyharm {solve,sweep,selftest,mesh-info}``."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..adaptivity import AfemConfig, AfemError, afem_loop
from ..auxpoisson import build_phi_chain
from ..fespace import build_spaces
from ..mesh import (
    check_conforming,
    check_initial_condition,
    initial_mesh,
    read_mesh,
    uniform_red,
    write_mesh,
)
from .problems import PROBLEM_IDS, get_problem
from .report import write_convergence_svg, write_history_csv, write_report

DEFAULTS = {
    "problem": "square-m2",
    "k": 0,
    "mode": "uniform",
    "levels": None,
    "max_ndof": None,
    "theta": 0.1,
    "kappa": 0.5,
    "rho": 0.75,
    "phi": "analytic",
    "out": "out",
    "plot": True,
    "timing": True,
}
_INT_KEYS = {"k", "levels", "max_ndof"}
_FLOAT_KEYS = {"theta", "kappa", "rho"}
_BOOL_KEYS = {"plot", "timing"}


def default_max_ndof(k: int) -> int:
    return 200_000 if k <= 1 else 50_000


def read_config(path) -> dict:
    """Plain ``key = value`` file; ``#`` starts a comment, dashes in keys allowed."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if key in _INT_KEYS:
            out[key] = int(float(value))
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key in _BOOL_KEYS:
            out[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = value
    return out


def resolve_settings(args: argparse.Namespace, fill: bool = True) -> dict:
    """CLI flags override the config file, which overrides the defaults."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return fill_defaults(settings) if fill else settings


def fill_defaults(settings: dict) -> dict:
    """Mode- and degree-dependent defaults for values still unset."""
    settings = dict(settings)
    if settings["levels"] is None:
        settings["levels"] = 6 if settings["mode"] == "uniform" else 200
    if settings["max_ndof"] is None:
        settings["max_ndof"] = default_max_ndof(settings["k"])
    return settings


def run_problem(settings: dict) -> list:
    """Run one configuration and write its outputs; returns the history rows."""
    p = get_problem(settings["problem"])
    k = settings["k"]
    config = AfemConfig(
        theta=settings["theta"],
        kappa=settings["kappa"],
        rho=settings["rho"],
        max_levels=settings["levels"],
        max_ndof=settings["max_ndof"],
        mode=settings["mode"],
    )
    if settings["phi"] == "poisson":

        def data_for_mesh(mesh):
            return build_phi_chain(p.f, p.m, mesh, k + 1)

    else:
        phi = p.phi_field

        def data_for_mesh(mesh):
            return phi

    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    header = {key: settings[key] for key in ("problem", "k", "mode", "phi", "theta", "kappa", "rho", "levels", "max_ndof")}
    header["m"] = p.m
    try:
        result = afem_loop(p.m, k, initial_mesh(p.domain), data_for_mesh, config, p.sigma_exact, timing=settings["timing"])
    except AfemError as exc:
        write_history_csv(exc.history, out / "history.csv")
        header["error"] = str(exc)
        write_report(exc.history, header, out / "report.txt")
        raise
    rows = result.history
    write_history_csv(rows, out / "history.csv")
    write_report(rows, header, out / "report.txt")
    write_mesh(result.state.mesh, out / "mesh_final.txt")
    if settings["plot"] and len(rows):
        write_convergence_svg(rows, out / "convergence.svg", title=f"{p.id}, k={k}, {settings['mode']}")
    return rows


def _add_run_flags(sp: argparse.ArgumentParser, multi: bool = False):
    if not multi:
        sp.add_argument("--problem", choices=PROBLEM_IDS, help="benchmark id (default square-m2)")
        sp.add_argument("--m", type=int, help="polyharmonic order (must match the problem)")
        sp.add_argument("--k", type=int, choices=(0, 1, 2), help="stress polynomial degree (default 0)")
        sp.add_argument("--mode", choices=("uniform", "adaptive"), help="refinement strategy (default uniform)")
    sp.add_argument("--levels", type=int, help="maximum number of levels (default 6 uniform, 200 adaptive)")
    sp.add_argument("--max-ndof", dest="max_ndof", type=int, help="stop before exceeding this system size")
    sp.add_argument("--theta", type=float, help="Dörfler bulk parameter (default 0.1)")
    sp.add_argument("--kappa", type=float, help="branch parameter: Dörfler marking if mu^2 <= kappa lambda^2 (default 0.5)")
    sp.add_argument("--rho", type=float, help="data reduction factor (default 0.75)")
    sp.add_argument("--phi", choices=("analytic", "poisson"), help="right-hand side tensor: closed form or Poisson chain")
    sp.add_argument("--out", help="output directory (default ./out)")
    sp.add_argument("--config", help="key = value file; flags override it")
    sp.add_argument("--no-plot", dest="plot", action="store_const", const=False, help="skip convergence.svg")
    sp.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                    help="write 0.0 in the seconds column so reruns are byte-identical")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polyharm", description="Mixed FEM benchmarks for (-1)^m Δ^m u = f.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one benchmark configuration")
    _add_run_flags(s)

    w = sub.add_parser("sweep", help="run several configurations in worker threads")
    w.add_argument("--problems", nargs="+", choices=PROBLEM_IDS, default=["square-m2"])
    w.add_argument("--ks", nargs="+", type=int, choices=(0, 1, 2), default=[0])
    w.add_argument("--modes", nargs="+", choices=("uniform", "adaptive"), default=["uniform"])
    _add_run_flags(w, multi=True)

    sub.add_parser("selftest", help="run the built-in oracle checks")

    mi = sub.add_parser("mesh-info", help="print statistics of a mesh")
    g = mi.add_mutually_exclusive_group()
    g.add_argument("--domain", choices=("square", "lshape"))
    g.add_argument("--mesh", help="mesh file in the plain-text format")
    mi.add_argument("--refine", type=int, default=0, help="uniform refinements to apply first")
    return ap


def _cmd_solve(args) -> int:
    settings = resolve_settings(args)
    if args.m is not None and args.m != get_problem(settings["problem"]).m:
        print(f"error: --m {args.m} does not match problem {settings['problem']}", file=sys.stderr)
        return 2
    rows = run_problem(settings)
    print(Path(settings["out"], "report.txt").read_text(), end="")
    return 0 if rows else 1


def _cmd_sweep(args) -> int:
    base = resolve_settings(argparse.Namespace(**{**vars(args), "problem": None, "k": None, "mode": None}), fill=False)
    jobs = []
    for pid in args.problems:
        for k in args.ks:
            for mode in args.modes:
                s = fill_defaults(dict(base, problem=pid, k=k, mode=mode))
                s["out"] = str(Path(base["out"]) / f"{pid}-k{k}-{mode}")
                jobs.append(s)
    threads = int(os.environ.get("POLYHARM_THREADS", "0") or 0) or (os.cpu_count() or 1)
    status = 0
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [(s, pool.submit(run_problem, s)) for s in jobs]
        for s, fut in futures:
            try:
                rows = fut.result()
                print(f"{s['out']}: {len(rows)} levels, final ndof {rows[-1]['ndof']}")
            except Exception as exc:  # report and continue with the other runs
                print(f"{s['out']}: failed: {exc}", file=sys.stderr)
                status = 1
    return status


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest()


def _cmd_mesh_info(args) -> int:
    mesh = read_mesh(args.mesh) if args.mesh else initial_mesh(args.domain or "square")
    for _ in range(args.refine):
        mesh = uniform_red(mesh)
    print(f"vertices: {mesh.nvert}")
    print(f"triangles: {mesh.nelem}")
    print(f"edges: {mesh.nedge} ({len(mesh.boundary_edges)} on the boundary)")
    print(f"area: {mesh.total_area():.17g}")
    print(f"h range: {mesh.h.min():.6g} .. {mesh.h.max():.6g}")
    print(f"conforming: {check_conforming(mesh)}")
    print(f"initial condition: {check_initial_condition(mesh)}")
    for m in (1, 2, 3):
        print(f"ndof at k=0, m={m}: {build_spaces(mesh, m, 0).ndof}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"solve": _cmd_solve, "sweep": _cmd_sweep, "selftest": _cmd_selftest, "mesh-info": _cmd_mesh_info}
    try:
        return handlers[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AfemError as exc:
        print(f"error: {exc} ({len(exc.history)} levels saved)", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
