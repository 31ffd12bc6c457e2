"""Command-line entry points.

Exit codes: 0 success, 1 validation problem, 2 runtime/numeric failure,
3 capacity refusal.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fileio
from .analysis import certify, convergence_diagnostic
from .engine import grid_optimum, run_ensemble, run_path
from .errors import SigallocError, ValidationError
from .scenario import load_scenario


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems to exit code 1
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigalloc", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override the scenario master seed")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for simulation")
    parser.add_argument("--out", type=str, default=None, help="output file or directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="count and list the population space")
    p.add_argument("scenario", type=str)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("build-matrix", help="build and save the transition matrix")
    p.add_argument("scenario", type=str)
    p.add_argument("--binary", action="store_true", help="write the compact binary layout")
    p.add_argument("--figures", action="store_true", help="also render a heatmap PNG")
    p.set_defaults(func=cmd_build_matrix)

    p = sub.add_parser("certify", help="run the average-contractivity certificate")
    p.add_argument("scenario", type=str)
    p.add_argument("--refined", action="store_true", help="use per-population bounds")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="run the Monte-Carlo ensemble")
    p.add_argument("scenario", type=str)
    p.add_argument("--paths", type=int, default=None, help="override the scenario path count")
    p.add_argument("--figures", action="store_true", help="also render ensemble PNGs")
    p.add_argument("--dump-paths", type=int, default=0, metavar="N", help="write the first N trajectories as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimum", help="scan the two-resource social-cost optimum")
    p.add_argument("scenario", type=str)
    p.add_argument("--resolution", type=float, default=0.001)
    p.add_argument("--plot", type=str, default=None, metavar="PNG", help="render the cost curves")
    p.set_defaults(func=cmd_optimum)
    return parser


def _load(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValidationError("--seed must fit in an unsigned 64-bit integer")
        scenario.master_seed = args.seed
    return scenario


def cmd_enumerate(args) -> int:
    scenario = _load(args)
    out = Path(args.out) if args.out else Path("populations.csv")
    fileio.write_populations_csv(out, scenario.index)
    print(f"K = {scenario.index.size}")
    print(f"wrote {out}")
    return 0


def cmd_build_matrix(args) -> int:
    scenario = _load(args)
    matrix = scenario.matrix
    out = Path(args.out) if args.out else Path("matrix.bin" if args.binary else "matrix.csv")
    if args.binary:
        fileio.write_matrix_binary(out, matrix)
    else:
        fileio.write_matrix_csv(out, matrix)
    print(f"K = {matrix.size}")
    evals = matrix.meta.get("distance_evaluations")
    if evals is not None:
        print(f"distance evaluations = {evals}")
    print(f"wrote {out} (+ {fileio.sidecar_path(out).name})")
    if args.figures:
        from .figures import save_matrix_heatmap

        png = out.with_suffix(".png")
        save_matrix_heatmap(matrix, png, label=f"{scenario.label}: transition matrix")
        print(f"wrote {png}")
    return 0


def cmd_certify(args) -> int:
    scenario = _load(args)
    missing = [i + 1 for i, v in enumerate(scenario.lipschitz or []) if v is None]
    if missing or scenario.lipschitz is None:
        raise ValidationError(f"resources missing 'lipschitz' values: {missing or 'all'}")
    missing = [i + 1 for i, v in enumerate(scenario.kappa or []) if v is None]
    if missing or scenario.kappa is None:
        raise ValidationError(f"resources missing 'kappa' values: {missing or 'all'}")
    report = certify(
        scenario.matrix,
        scenario.q,
        scenario.agents,
        scenario.lipschitz,
        scenario.kappa,
        index=scenario.index,
        refined=args.refined,
    )
    verdict = "certified" if report.certified else "not certified"
    print(f"{verdict}: average log bound {report.average_log_bound:.6f} "
          f"(uniform bound {report.uniform_bound:.6f})")
    print(f"coupling total {report.coupling_total:.6g} vs budget {report.coupling_budget:.6g}")
    if args.out:
        fileio.write_json(Path(args.out), report.to_dict())
        print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    scenario = _load(args)
    out_dir = Path(args.out) if args.out else Path(f"out_{scenario.label}")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = args.paths if args.paths is not None else scenario.paths
    ensemble = run_ensemble(scenario, paths=paths, threads=max(1, args.threads))
    fileio.write_ensemble_csv(out_dir / "ensemble.csv", ensemble)

    rows = []
    probes = sorted(scenario.probes)
    if len(probes) >= 2 and ensemble.paths >= 2:
        for resource in range(scenario.resources):
            distances = convergence_diagnostic(ensemble, resource, probes)
            rows += [
                (t0, t1, resource, d)
                for (t0, t1), d in zip(zip(probes, probes[1:]), distances)
            ]
    fileio.write_diagnostics_csv(out_dir / "diagnostics.csv", rows)

    summary = {
        "label": scenario.label,
        "agents": scenario.agents,
        "resources": [c.expr for c in scenario.costs],
        "policies": [str(w) for w in scenario.omegas.omegas],
        "states": scenario.index.size,
        "dynamics": scenario.matrix.meta,
        "horizon": scenario.horizon,
        "paths": ensemble.paths,
        "master_seed": scenario.master_seed,
        "probes": list(probes),
        "final_mean_counts": [float(x) for x in ensemble.mean_counts[-1]],
        "final_mean_cost": float(ensemble.mean_cost[-1]),
        "final_std_cost": float(ensemble.std_cost[-1]),
        "diagnostics": [
            {"t_from": t0, "t_to": t1, "resource": r, "distance": d} for t0, t1, r, d in rows
        ],
    }
    fileio.write_json(out_dir / "summary.json", summary)

    for pid in range(args.dump_paths):
        fileio.write_trajectory_csv(out_dir / f"trajectory_{pid}.csv", run_path(scenario, pid))

    if args.figures:
        from .figures import save_ensemble_figures

        for png in save_ensemble_figures(ensemble, out_dir, label=scenario.label):
            print(f"wrote {png}")
    print(f"simulated {ensemble.paths} paths over horizon {scenario.horizon}; wrote {out_dir}/")
    return 0


def cmd_optimum(args) -> int:
    scenario = _load(args)
    if scenario.resources != 2:
        raise ValidationError(
            f"optimum scan supports exactly 2 resources, scenario has {scenario.resources}"
        )
    fraction, value = grid_optimum(scenario.costs, args.resolution)
    print(f"optimum social cost {value!r} at fraction {fraction!r}")
    if args.plot:
        from .figures import save_cost_curves

        save_cost_curves(scenario.costs, Path(args.plot), resolution=args.resolution)
        print(f"wrote {args.plot}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SigallocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
