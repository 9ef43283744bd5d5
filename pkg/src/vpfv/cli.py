"""Command-line entry points.

Subcommands:

``run <config>``
    Integrate the configured problem to ``t_end``, writing a diagnostics
    CSV (and final per-species snapshots when enabled).  A non-finite
    state aborts with a nonzero exit status after writing the last good
    snapshot.  The ``VPFV_OUTPUT_DIR`` environment variable overrides the
    configured output directory.
``convergence <config> --levels K``
    Run the problem at K resolutions (doubling each level), compute the
    Richardson grid-error ladder, and report observed orders.
``stability``
    Print the CFL table (stability constant and per-stage effective
    constant for the production and first-order schemes).
``plan <config>``
    Print the partition plan report (boxes, ranks, transfer volumes) as
    JSON without running anything.
``dispersion <relation> [params]``
    Evaluate a kinetic dispersion relation and print the root(s) as JSON.

All file outputs are CSV/JSON plus the binary snapshot format described
in :mod:`vpfv.diagnostics`.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import queue
import sys
import threading

from .config import ConfigError, read_config
from .diagnostics import richardson_error, write_snapshot
from .runner import (
    RunDiverged,
    SimulatedCluster,
    make_driver,
    problem_grids,
)

OUTPUT_DIR_ENV = "VPFV_OUTPUT_DIR"


def _output_dir(cfg):
    return os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir


class _OrderedWriter:
    """Single CSV writer fed through an ordered queue.

    Simulation work hands each completed row to the queue; one writer
    thread appends them in hand-off order, so the file contents never
    depend on writer timing.
    """

    def __init__(self, path, header):
        self._q = queue.Queue()
        self._path = path
        self._header = header
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._thread.start()

    def _drain(self):
        with open(self._path, "w") as fh:
            fh.write(",".join(self._header) + "\n")
            while True:
                row = self._q.get()
                if row is None:
                    return
                fh.write(",".join("%.17g" % x for x in row.values()) + "\n")
                fh.flush()

    def put(self, row):
        self._q.put(row)

    def close(self):
        self._q.put(None)
        self._thread.join()


def _write_snapshots(driver, cfg, out_dir, tag):
    paths = []
    if isinstance(driver, SimulatedCluster):
        dists = driver._global_dists()
    else:
        dists = driver._wrap(driver.ctx.f0)
    for f in dists:
        path = os.path.join(out_dir, f"{tag}_{f.species}.vpfv")
        write_snapshot(path, f, driver.t)
        paths.append(path)
    return paths


def cmd_run(args):
    cfg = read_config(args.config)
    driver = make_driver(cfg)
    out_dir = _output_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "diagnostics.csv")
    names = [sp.name for sp in driver.species]
    first = driver.diagnostics_row(0.0)
    writer = _OrderedWriter(csv_path, first.header(names))
    status = 0
    try:
        driver.run(cfg.t_end, cadence=cfg.cadence, on_row=writer.put)
    except RunDiverged as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        paths = _write_snapshots(driver, cfg, out_dir, "lastgood")
        print("last-good snapshots: " + ", ".join(paths), file=sys.stderr)
        status = 1
    finally:
        writer.close()
    if status == 0 and cfg.snapshots:
        _write_snapshots(driver, cfg, out_dir, "final")
    print(f"diagnostics: {csv_path}")
    if isinstance(driver, SimulatedCluster):
        traffic = os.path.join(out_dir, "traffic.csv")
        with open(traffic, "w") as fh:
            for fields in driver.log.to_csv_rows():
                fh.write(",".join(str(x) for x in fields) + "\n")
        print(f"traffic log: {traffic}")
    return status


def _rescaled(cfg, factor):
    species = tuple(
        dataclasses.replace(sp, Nv=tuple(n * factor for n in sp.Nv))
        for sp in cfg.species
    )
    return dataclasses.replace(
        cfg,
        N=tuple(n * factor for n in cfg.N),
        species=species,
        partition_n=None,
    )


def cmd_convergence(args):
    cfg = read_config(args.config)
    if cfg.dt is None:
        raise ConfigError(
            "[time]: convergence studies need a fixed dt shared by all levels"
        )
    interiors = []
    sizes = []
    for level in range(args.levels):
        lcfg = _rescaled(cfg, 2**level)
        driver = make_driver(lcfg)
        driver.run(lcfg.t_end, cadence=10**9)
        interiors.append(driver.interiors())
        sizes.append(lcfg.N[0])
        print(f"level {level}: N={lcfg.N[0]} done (t={driver.t:.6g})")
    errors = []
    for lo in range(len(interiors) - 1):
        err = sum(
            richardson_error(a, b)
            for a, b in zip(interiors[lo], interiors[lo + 1])
        ) / len(interiors[lo])
        errors.append(err)
        print(f"N={sizes[lo]} vs N={sizes[lo + 1]}: error={err:.6e}")
    orders = [
        math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)
    ]
    for i, p in enumerate(orders):
        print(f"observed order ({sizes[i]}->{sizes[i + 2]}): {p:.3f}")
    out_dir = _output_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "convergence.csv")
    with open(path, "w") as fh:
        fh.write("N,error,observed_order\n")
        for i, err in enumerate(errors):
            order = "" if i == 0 else "%.17g" % orders[i - 1]
            fh.write(f"{sizes[i]},{err:.17g},{order}\n")
    print(f"table: {path}")
    return 0


def cmd_stability(args):
    from .stability import cfl_constant, first_order_symbol, upwind_symbol

    rows = []
    sigma = cfl_constant(upwind_symbol, divisor=60.0)
    rows.append(("fourth-order-fv+rk4", sigma, sigma / 4.0))
    sigma1 = cfl_constant(first_order_symbol)
    rows.append(("first-order-fv+rk4", sigma1, sigma1 / 4.0))
    print(f"{'scheme':<24}{'sigma':>10}{'sigma_eff':>12}")
    for name, s, se in rows:
        print(f"{name:<24}{s:>10.4f}{se:>12.4f}")
    if args.json:
        print(
            json.dumps(
                [
                    {"scheme": n, "sigma": s, "sigma_eff": se}
                    for n, s, se in rows
                ]
            )
        )
    return 0


def cmd_plan(args):
    cfg = read_config(args.config)
    if cfg.partition_n is None:
        raise ConfigError("[partition]: plan requires a partition section")
    from .partition import plan_partitions

    grids = problem_grids(cfg)
    n = cfg.partition_n if len(cfg.partition_n) > 1 else cfg.partition_n[0]
    plan = plan_partitions(
        grids,
        n,
        ranks=cfg.ranks,
        r=cfg.species_per_rank,
        strategy=cfg.strategy,
    )
    print(json.dumps(plan.to_report(), indent=2))
    return 0


def cmd_dispersion(args):
    from . import dispersion as disp

    params = {}
    for item in args.params:
        if "=" not in item:
            raise ConfigError(f"dispersion parameter {item!r} is not key=value")
        key, _, val = item.partition("=")
        params[key] = int(val) if key in ("n", "ell") else float(val)
    out = {"relation": args.relation, "params": dict(params)}
    if args.relation == "two-stream":
        k = params.pop("k")
        v_T = math.sqrt(params.pop("v_T2")) if "v_T2" in params else params.pop("v_T")
        root = disp.two_stream_dispersion(k, v_T, **params)
    elif args.relation == "landau":
        k = params.pop("k")
        root = disp.landau_rate(k, **params)
    elif args.relation == "dgh":
        omega_ratio = params.pop("omega_ratio")
        if "kbar" in params:
            ell = params.get("ell", 4)
            alpha = params.get("alpha", math.sqrt(0.5))
            v0 = math.sqrt(ell) * alpha
            k_perp = params.pop("kbar") * omega_ratio / v0
        else:
            k_perp = params.pop("k_perp")
        root = disp.dgh_dispersion(k_perp, omega_ratio, **params)
    else:
        raise ConfigError(
            f"unknown relation {args.relation!r}; "
            "choose two-stream, landau, or dgh"
        )
    out["omega"] = {"re": root.omega.real, "im": root.omega.imag}
    out["residual"] = abs(root.residual)
    print(json.dumps(out))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="vpfv",
        description="Finite-volume Vlasov-Poisson benchmark driver",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a configured problem")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convergence", help="Richardson self-convergence ladder")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("stability", help="print the CFL table")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("plan", help="partition plan report (JSON)")
    p.add_argument("config")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("dispersion", help="kinetic dispersion-relation roots")
    p.add_argument("relation")
    p.add_argument("params", nargs="*")
    p.set_defaults(func=cmd_dispersion)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
