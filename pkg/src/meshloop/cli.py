"""Benchmark command line: mesh -> optional renumber -> partition -> run -> report.

Exit codes: 64 bad flags, 65 mesh format error, 70 execution error,
74 report output error. ``MESHLOOP_SEED`` seeds any randomized fixture
generation (none of the bundled apps are randomized).
"""
from __future__ import annotations

import argparse
import os
import sys

from . import apps, meshio, perf, renumber, tuner
from .core import MeshError
from .executor import BackendConfig, run_program
from .partition import halo_stats

EX_USAGE = 64
EX_DATAERR = 65
EX_SOFTWARE = 70
EX_IOERR = 74


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="meshloop",
                     description="Unstructured-mesh parallel-loop benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    bench = sub.add_parser("bench", help="run a bundled benchmark app")
    bench.add_argument("app", choices=["cell-area", "diffusion"],
                       help="which loop program to run")
    src = bench.add_mutually_exclusive_group()
    src.add_argument("--n", type=int, default=8,
                     help="refinement of the generated unit-square mesh")
    src.add_argument("--mesh", metavar="PATH",
                     help="load a mesh file instead of generating one")
    bench.add_argument("--dtype", choices=["float64", "int64"], default="float64")
    bench.add_argument("--steps", type=int, default=10,
                       help="diffusion time steps")
    bench.add_argument("--dt", type=float, default=None,
                       help="diffusion timestep (default: 0.9x stable bound)")
    bench.add_argument("--backend", choices=["serial", "threads", "ranks", "hybrid"],
                       default="serial")
    bench.add_argument("--nthreads", type=int, default=4)
    bench.add_argument("--nranks", type=int, default=2)
    bench.add_argument("--block-size", type=int, default=256)
    bench.add_argument("--balance", type=float, default=1.0,
                       help="hybrid partition size ratio (class A : rest)")
    bench.add_argument("--timeout-ms", type=float, default=10000.0,
                       help="halo-exchange receive timeout")
    bench.add_argument("--partitioner", choices=["trivial", "rcb"],
                       default="trivial")
    bench.add_argument("--renumber", choices=["on", "off"], default="off")
    bench.add_argument("--tune", choices=["block", "balance", "both"],
                       default=None)
    bench.add_argument("--tune-table", metavar="PATH",
                       help="lookup table written/read by --tune (JSON)")
    bench.add_argument("--report", metavar="PATH",
                       help="write the per-loop report (.csv or .json)")
    return parser


def _config_from(args) -> BackendConfig:
    return BackendConfig(
        backend=args.backend,
        nthreads=args.nthreads,
        nranks=args.nranks if args.backend in ("ranks", "hybrid") else 1,
        block_size=args.block_size,
        partitioner=args.partitioner,
        balance=args.balance,
        timeout_ms=args.timeout_ms,
    )


def _bench(args) -> int:
    if args.mesh:
        try:
            mesh = meshio.load_mesh(args.mesh)
        except OSError as err:
            print(f"meshloop: cannot read mesh: {err}", file=sys.stderr)
            return EX_DATAERR
        except meshio.FormatError as err:
            print(f"meshloop: bad mesh file: {err}", file=sys.stderr)
            return EX_DATAERR
    else:
        mesh = apps.gen_mesh(args.n)

    try:
        config = _config_from(args)
    except MeshError as err:
        print(f"meshloop: error: {err}", file=sys.stderr)
        return EX_USAGE

    renumber_report = None
    if args.renumber == "on":
        stats = renumber.renumber_mesh(mesh)
        renumber_report = {
            name: {"before": {"max_span": b.max_span, "mean_span": b.mean_span},
                   "after": {"max_span": a.max_span, "mean_span": a.mean_span}}
            for name, (b, a) in stats["maps"].items()}

    try:
        if args.app == "cell-area":
            program, handles = apps.build_cell_area(mesh, args.dtype)
        else:
            program, handles = apps.build_diffusion(
                mesh, steps=args.steps, dt=args.dt, dtype=args.dtype)
    except apps.UnstableTimestep as err:
        print(f"meshloop: unstable configuration: {err}", file=sys.stderr)
        return EX_USAGE
    except MeshError as err:
        print(f"meshloop: unusable mesh: {err}", file=sys.stderr)
        return EX_DATAERR

    try:
        if args.tune in ("block", "both"):
            result = tuner.tune_block_size(
                program, mesh, [64, 128, 256, 512, 1024], config)
            config.block_size_table = result.best
            if args.tune_table:
                tuner.save_table(args.tune_table, result.best, config,
                                 curves=result.curves)
        if args.tune in ("balance", "both") and args.backend == "hybrid":
            result = tuner.tune_balance(
                program, mesh, [0.5, 1.0, 1.5, 2.0, 2.5], config)
            config.balance = result.best

        outcome = run_program(program, mesh, config)
    except apps.UnstableTimestep as err:
        print(f"meshloop: unstable configuration: {err}", file=sys.stderr)
        return EX_USAGE
    except MeshError as err:
        print(f"meshloop: execution failed: {err}", file=sys.stderr)
        return EX_SOFTWARE

    halo_rows = None
    if outcome.layout is not None:
        halo_rows = halo_stats([outcome.layout])
    globals_section = {}
    if args.app == "cell-area":
        globals_section["area_total"] = float(handles["total"].value)
    else:
        hist = apps.check_residual_history(handles["residuals"])
        globals_section["residuals"] = [float(v) for v in hist]

    notes = ["useful bytes on the ranks/hybrid backends count owned plus "
             "redundantly executed halo elements"]
    sections = dict(
        config={
            "app": args.app, "n": None if args.mesh else args.n,
            "mesh": args.mesh, "dtype": args.dtype, "backend": args.backend,
            "nthreads": args.nthreads, "nranks": config.nranks,
            "block_size": args.block_size, "balance": args.balance,
            "partitioner": args.partitioner, "renumber": args.renumber,
            "steps": args.steps if args.app == "diffusion" else None,
        },
        mesh_sets={name: s.size for name, s in mesh.sets.items()},
        halo_rows=halo_rows,
        renumber=renumber_report,
        globals_=globals_section,
        notes=notes,
    )

    if args.report:
        try:
            if str(args.report).endswith(".csv"):
                perf.emit_report(outcome.perf, args.report, fmt="csv")
            else:
                perf.emit_report(outcome.perf, args.report, fmt="json", **sections)
        except OSError as err:
            print(f"meshloop: cannot write report: {err}", file=sys.stderr)
            return EX_IOERR

    print(f"{args.app}: backend={args.backend} "
          f"total={outcome.total_sec:.4f}s messages={outcome.messages}")
    for rec in sorted(outcome.perf, key=lambda r: -r.time_sec):
        nbnc = f" nb={rec.nb} nc={rec.nc}" if rec.nb is not None else ""
        print(f"  {rec.loop:<16} {rec.time_sec:8.4f}s {rec.pct_runtime:6.2f}% "
              f"{rec.gb_per_sec:8.4f} GB/s{nbnc}")
    return 0


def main(argv=None) -> int:
    _ = os.environ.get("MESHLOOP_SEED", "0")  # reserved for random fixtures
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    try:
        return _bench(args)
    except MeshError as err:
        print(f"meshloop: error: {err}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    raise SystemExit(main())
