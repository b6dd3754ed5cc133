"""Command-line front end: ``generate``, ``spectrum``, ``run``, ``factor``, ``audit``.

Exit codes: 0 pass, 1 check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine, factorization as fz, graph as gr, protocols as pr, spectral as sp

log = logging.getLogger("globalsum")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PROTOCOLS = ("hoffman", "tree", "diam2", "product", "approx", "schedule-file")


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    graph: str = ""
    protocol: str = "hoffman"
    input: str | None = None
    seed: int = 0
    tol: float = 1e-9
    cluster_tol: float | None = None
    m: int | None = None
    root: int = 0
    schedule: str | None = None
    factor_protocol: str = "best"
    out: str | None = None
    trace: bool = False

    @classmethod
    def from_sources(cls, path: str | None, overrides: dict) -> ExperimentConfig:
        values = {}
        if path:
            try:
                values = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from None
            if not isinstance(values, dict):
                raise UsageError("config file must hold a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        values.update({k: v for k, v in overrides.items() if k in names and v is not None})
        cfg = cls(**values)
        if cfg.protocol not in PROTOCOLS:
            raise UsageError(f"unknown protocol {cfg.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        if not cfg.graph:
            raise UsageError("no graph given")
        return cfg


def resolve_graph(text: str) -> tuple[gr.Graph, gr.CayleySpec | None]:
    """A graph file path, or a family description such as ``product cycle 5 complete 2``."""
    path = Path(text)
    if path.is_file():
        return gr.load_graph(path), None
    family = gr.parse_family(text)
    return gr.build_family(family), family


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def emit_report(doc, out: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> int:
    family = gr.parse_family(args.family)
    g = gr.build_family(family)
    if args.out:
        gr.save_graph(g, args.out, args.format)
    else:
        sys.stdout.write(gr.dumps_graph(g, args.format or "text"))
    return EXIT_PASS


def spectrum_report(g: gr.Graph, label: str, cluster_tol: float | None) -> dict:
    info = gr.metrics(g)
    spec = sp.adjacency_spectrum(g, cluster_tol)
    doc = {"graph": label, "n": g.n, "d": info.degree, **spec.to_json()}
    doc["diameter"] = info.diameter if info.connected else "disconnected"
    doc["gap"] = spec.m - info.diameter if info.connected else None
    doc["near_gaps"] = list(spec.near_gaps)
    if info.connected and not spec.is_complex:
        bound = sp.diameter_bound(spec)
        doc["diameter_bound"] = {"m": bound.m, "certificate": bound.certificate, "threshold": bound.threshold}
        doc["hoffman_scale"] = sp.hoffman_factors(spec).scale
    return doc


def cmd_spectrum(args) -> int:
    g, _ = resolve_graph(args.graph)
    emit_report(spectrum_report(g, args.graph, args.cluster_tol), args.out)
    return EXIT_PASS


def _factor_protocols(family: gr.CayleySpec, choice: str):
    if choice == "best":
        return [pr.best_family_protocol(f) for f in family.factors]
    out = []
    for f in family.factors:
        g = gr.build_family(f)
        out.append(pr.hoffman_linear_protocol(g) if choice == "hoffman" else pr.tree_protocol(g, 0))
    return out


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, int]:
    g, family = resolve_graph(cfg.graph)
    info = gr.metrics(g)
    x = engine.make_input(cfg.input or f"uniform {cfg.seed}", g.n)
    # The destination path is not part of the experiment; keep reports comparable.
    config = {k: v for k, v in dataclasses.asdict(cfg).items() if k != "out"}
    doc: dict = {"graph": cfg.graph, "n": g.n, "config": config}
    try:
        if cfg.protocol == "hoffman":
            sched = pr.hoffman_protocol(g, sp.adjacency_spectrum(g, cfg.cluster_tol))
            descriptor = {"name": "hoffman", "rounds": len(sched), "theorem": "distinct-eigenvalue schedule"}
            result = engine.run_linear_schedule(g, sched, x, trace=cfg.trace)
        elif cfg.protocol == "schedule-file":
            if not cfg.schedule:
                raise UsageError("protocol schedule-file needs --schedule PATH")
            sched = engine.schedule_from_triplets(g, Path(cfg.schedule).read_text())
            descriptor = {"name": "schedule-file", "rounds": len(sched), "theorem": "user schedule"}
            result = engine.run_linear_schedule(g, sched, x, trace=cfg.trace)
        else:
            if cfg.protocol == "tree":
                proto = pr.tree_protocol(g, cfg.root)
            elif cfg.protocol == "diam2":
                proto = pr.diameter2_protocol(g)
            elif cfg.protocol == "product":
                if family is None or family.kind != "product":
                    raise UsageError("protocol product needs a product family, e.g. 'product cycle 5 complete 2'")
                proto = pr.product_protocol(*_factor_protocols(family, cfg.factor_protocol))
            else:
                spec = sp.adjacency_spectrum(g, cfg.cluster_tol)
                m = cfg.m if cfg.m is not None else sp.diameter_bound(spec).m
                proto = pr.approx_mean_protocol(g, spec, m)
            descriptor = proto.descriptor()
            result = engine.run_protocol(g, proto, x, trace=cfg.trace)
    except pr.ProtocolPreconditionError as exc:
        doc.update({"error": str(exc), **exc.details, "passed": False})
        return doc, EXIT_FAIL

    doc.update(result.to_json())
    doc["protocol"] = descriptor
    doc["diameter"] = info.diameter if info.connected else "disconnected"
    if info.connected:
        doc["gap"] = result.rounds - info.diameter
    if cfg.protocol == "approx":
        err = float(np.linalg.norm(result.mean_values - result.mean))
        bound = result.certificate * float(np.linalg.norm(x))
        doc["error_norm"] = err
        doc["error_bound"] = bound
        passed = err <= bound * (1 + 1e-9) + 1e-12
    else:
        passed = result.exact(cfg.tol)
    doc["tolerances"] = {"exact_rel": cfg.tol, "cluster": cfg.cluster_tol}
    if cfg.trace and result.trace is not None:
        doc["trace"] = result.trace
    doc["passed"] = bool(passed)
    return doc, EXIT_PASS if passed else EXIT_FAIL


def cmd_run(args) -> int:
    overrides = {k: getattr(args, k, None) for k in (
        "graph", "protocol", "input", "seed", "tol", "cluster_tol", "m", "root",
        "schedule", "factor_protocol", "out",
    )}
    overrides["trace"] = True if args.trace else None
    cfg = ExperimentConfig.from_sources(args.config, overrides)
    doc, code = run_experiment(cfg)
    emit_report(doc, cfg.out)
    return code


def cmd_factor(args) -> int:
    g, _ = resolve_graph(args.graph)
    tol = 1e-8 if args.tol is None else args.tol
    action = args.action
    if action == "verify":
        try:
            f = fz.load_factorization(g, args.file)
        except engine.SupportViolation as exc:
            emit_report({"passed": False, "error": str(exc)}, args.out)
            return EXIT_FAIL
        report = fz.verify_factorization(g, f, tol)
        emit_report({"m": f.m, "tol": tol, **report.to_json()}, args.out)
        return EXIT_PASS if report.passed else EXIT_FAIL
    if action == "eigen":
        f = fz.eigen_factorization(g, sp.adjacency_spectrum(g, args.cluster_tol))
        report = fz.verify_factorization(g, f, tol)
        if args.out:
            fz.save_factorization(f, args.out)
            emit_report({"m": f.m, "tol": tol, **report.to_json(), "file": args.out}, None)
        else:
            sys.stdout.write(fz.dumps_factorization(f))
        return EXIT_PASS if report.passed else EXIT_FAIL
    if action == "search":
        result = fz.search_factorization(
            g, args.m, args.budget, args.search_seed, restarts=args.restarts, tol=tol
        )
        doc = {"tol": tol, **result.to_json()}
        if args.out and result.factorization is not None:
            fz.save_factorization(result.factorization, args.out)
            doc["file"] = args.out
        emit_report(doc, None)
        return EXIT_PASS if result.found else EXIT_FAIL
    # fourier
    conn = gr.circulant_connection_set(g)
    if conn is None:
        raise UsageError("fourier reduction needs a circulant graph")
    if args.file:
        f = fz.load_factorization(g, args.file)
    else:
        f = fz.eigen_factorization(g, sp.adjacency_spectrum(g, args.cluster_tol))
    vectors = fz.circulant_reduce(g.n, conn, f.steps)
    cover = fz.fourier_cover_check(vectors, tol)
    verify = fz.verify_factorization(g, f, tol)
    doc = {"connection_set": list(conn), "m": f.m, **cover.to_json(), "verify": verify.to_json()}
    emit_report(doc, args.out)
    return EXIT_PASS if cover.passed else EXIT_FAIL


def expand_families(items: list[str]) -> list[gr.CayleySpec]:
    """``cycle:3-12``, ``hypercube:1-5``, ``complete:4``, ``petersen`` -> family specs."""
    out = []
    for item in items:
        kind, _, rng = item.partition(":")
        if kind == "petersen":
            out.append(gr.CayleySpec("petersen"))
            continue
        if not rng:
            raise UsageError(f"{item!r} needs a size or range, e.g. {kind}:3-12")
        lo, _, hi = rng.partition("-")
        try:
            sizes = range(int(lo), int(hi or lo) + 1)
        except ValueError:
            raise UsageError(f"bad size range in {item!r}") from None
        out += [gr.parse_family(f"{kind} {s}") for s in sizes]
    return out


AUDIT_COLUMNS = ("graph", "n", "d", "D", "m", "protocol", "rounds", "gap", "exact", "max_rel_error", "tol")


def audit_row(family: gr.CayleySpec, tol: float, seed: int) -> dict:
    g = gr.build_family(family)
    info = gr.metrics(g)
    try:
        m = sp.adjacency_spectrum(g).m
    except sp.SpectrumError:
        m = ""
    proto = pr.best_protocol(g, family)
    x = np.random.default_rng(seed).uniform(0.0, 1.0, g.n)
    result = engine.run_protocol(g, proto, x)
    return {
        "graph": str(family),
        "n": g.n,
        "d": info.degree,
        "D": info.diameter,
        "m": m,
        "protocol": proto.name,
        "rounds": proto.rounds,
        "gap": proto.rounds - info.diameter,
        "exact": result.exact(tol),
        "max_rel_error": f"{result.max_rel_error:.3e}",
        "tol": tol,
    }


def audit_table(families: list[gr.CayleySpec], products: bool, max_n: int, tol: float, seed: int) -> list[dict]:
    rows = [audit_row(f, tol, seed) for f in families]
    if products:
        sizes = [r["n"] for r in rows]
        for i, left in enumerate(families):
            for j in range(i, len(families)):
                if sizes[i] * sizes[j] <= max_n:
                    rows.append(audit_row(gr.CayleySpec("product", factors=(left, families[j])), tol, seed))
    return rows


def cmd_audit(args) -> int:
    tol = 1e-9 if args.tol is None else args.tol
    rows = audit_table(expand_families(args.families), args.products, args.max_n, tol, args.seed)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=AUDIT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    failed = [r for r in rows if not r["exact"]]
    if args.require_zero_gap:
        failed += [r for r in rows if r["gap"] != 0]
    return EXIT_FAIL if failed else EXIT_PASS


def _common_flags(default=None) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=default, help="pass/fail tolerance")
    common.add_argument("--cluster-tol", type=float, default=default, help="eigenvalue clustering tolerance")
    common.add_argument("--seed", type=int, default=default)
    common.add_argument("--trace", action="store_true", default=default or False, help="record per-round states")
    common.add_argument("--out", default=default, help="write the report here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true", default=default or False)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    # Nested factor actions accept the same flags without clobbering the outer values.
    nested = _common_flags(argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="globalsum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a graph file for a family")
    p.add_argument("family", nargs="+", help="e.g. 'cycle 5', 'product cycle 5 complete 2', 'circulant 9 1,2'")
    p.add_argument("--format", choices=("text", "json"), default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("spectrum", parents=[common], help="distinct eigenvalues, diameter and bounds")
    p.add_argument("graph", help="graph file or family description")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("run", parents=[common], help="run a protocol and check exactness")
    p.add_argument("graph", nargs="?", default=None)
    p.add_argument("--protocol", choices=PROTOCOLS, default=None)
    p.add_argument("--input", default=None, help="ones | 'unit K' | 'uniform SEED' | 'file PATH'")
    p.add_argument("--m", type=int, default=None, help="degree for the approximate protocol")
    p.add_argument("--root", type=int, default=None)
    p.add_argument("--schedule", default=None, help="triplet schedule file for schedule-file")
    p.add_argument("--factor-protocol", choices=("best", "hoffman", "tree"), default=None)
    p.add_argument("--config", default=None, help="ExperimentConfig as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("factor", parents=[common], help="factorizations of J into step matrices")
    p.add_argument("graph")
    actions = p.add_subparsers(dest="action", required=True)
    a = actions.add_parser("verify", parents=[nested])
    a.add_argument("file")
    actions.add_parser("eigen", parents=[nested])
    a = actions.add_parser("search", parents=[nested])
    a.add_argument("m", type=int)
    a.add_argument("budget", type=int)
    a.add_argument("search_seed", type=int)
    a.add_argument("--restarts", type=int, default=4)
    a = actions.add_parser("fourier", parents=[nested])
    a.add_argument("file", nargs="?", default=None)
    p.set_defaults(func=cmd_factor)

    p = sub.add_parser("audit", parents=[common], help="CSV of rounds versus diameter")
    p.add_argument("families", nargs="+", help="e.g. cycle:3-12 hypercube:1-5 petersen")
    p.add_argument("--products", action="store_true", help="add pairwise Cartesian products")
    p.add_argument("--max-n", type=int, default=64)
    p.add_argument("--require-zero-gap", action="store_true")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "generate":
        args.family = " ".join(args.family)
    if args.command != "run" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"globalsum: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (gr.GraphError, engine.TripletFormatError, sp.SpectrumError, OSError) as exc:
        print(f"globalsum: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"globalsum: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
