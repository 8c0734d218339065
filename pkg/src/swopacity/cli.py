"""Command-line interface.

Exit codes: 0 success (or opaque), 1 not opaque / infeasible /
inconclusive, 2 input error.  Errors are written to stderr as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .abstraction import AbstractionError
from .design import (InfeasiblePlanError, QuantizationPlan, build_gain_graph, check_cycle_condition,
                     design_parameters, network_params, validate_plan)
from .gains import GainError, GainFunction
from .io import bundle_document, load_systems, read_json, to_dot, write_json
from .model import SpecError, parse_network_spec
from .network import CompositionError, compose
from .opacity import DEFAULT_TOLERANCE, TransferError, check_opacity
from .pipeline import build_parts, run_pipeline
from .sets import SetError
from .transys import DumpError, to_document


class InputError(ValueError):
    pass


def _load_spec(path):
    return parse_network_spec(read_json(path))


def _load_sigma(path, names):
    if path is None:
        return None
    doc = read_json(path)
    if isinstance(doc, dict):
        doc = [doc[n] for n in names]
    if len(doc) != len(names):
        raise InputError(f"sigma file lists {len(doc)} functions for {len(names)} subsystems")
    return tuple(GainFunction.from_json(g) for g in doc)


def _emit_text(text: str, path):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_design(args) -> int:
    spec = _load_spec(args.config)
    certs, params, dwell = network_params(spec, conservative=args.conservative)
    graph = build_gain_graph(params, spec.edges, spec.names)
    plan = design_parameters(graph, params, args.epsilon, _load_sigma(args.sigma, spec.names), spec,
                             grid_snap=not args.no_snap)
    doc = plan.to_document()
    doc["aggregates"] = {s.name: p.to_json() for s, p in zip(spec.subsystems, params)}
    doc["small_gain"] = check_cycle_condition(graph).to_json()
    doc["validation"] = validate_plan(plan, params).to_json()
    write_json(doc, args.output)
    return 0


def cmd_abstract(args) -> int:
    spec = _load_spec(args.config)
    plan = QuantizationPlan.from_document(read_json(args.plan))
    certs, _, _ = network_params(spec, conservative=args.conservative)
    missing = [n for n in spec.names if n not in plan.eta]
    if missing:
        raise InputError(f"plan has no entry for subsystems {missing}")
    parts = build_parts(spec, plan, certs, workers=args.workers)
    write_json(bundle_document(parts), args.output)
    return 0


def cmd_compose(args) -> int:
    parts = [T for p in args.systems for T in load_systems(p)]
    plan = QuantizationPlan.from_document(read_json(args.plan)) if args.plan else None
    edges = [(str(b["source"]), str(T.name)) for T in parts for b in T.internal_blocks]
    phi = plan.phi if plan is not None else {}
    net = compose(parts, edges, phi, full_product=args.full_product, workers=args.workers,
                  name=args.name)
    doc = to_document(net.system)
    doc.setdefault("meta", {})["composition"] = dict(net.report)
    write_json(doc, args.output)
    return 0


def cmd_check(args) -> int:
    systems = load_systems(args.network)
    if len(systems) != 1:
        raise InputError("check expects a single closed system dump")
    T = systems[0]
    verdict = check_opacity(T, args.delta, tolerance=args.tolerance)
    write_json(verdict.to_json(T), args.output)
    return 0 if verdict.opaque else 1


def cmd_verify_smallgain(args) -> int:
    spec = _load_spec(args.config)
    _, params, _ = network_params(spec, conservative=args.conservative)
    graph = build_gain_graph(params, spec.edges, spec.names)
    verdict = check_cycle_condition(graph)
    write_json({"format_version": 1, "network": spec.name, "gain_graph": graph.to_json(),
                "aggregates": {s.name: p.to_json() for s, p in zip(spec.subsystems, params)},
                **verdict.to_json()}, args.output)
    return 0 if verdict.ok else 1


def cmd_pipeline(args) -> int:
    spec = _load_spec(args.config)
    sigma = _load_sigma(args.sigma, spec.names)
    res = run_pipeline(spec, args.epsilon, args.delta, sigma=sigma, full_product=args.full_product,
                       workers=args.workers, tolerance=args.tolerance, conservative=args.conservative)
    write_json(res.report, args.output)
    return 0 if res.concrete_verdict.opaque else 1


def cmd_export(args) -> int:
    systems = load_systems(args.system)
    if args.index is not None:
        systems = [systems[args.index]]
    if len(systems) != 1:
        raise InputError(f"the input holds {len(systems)} systems; choose one with --index")
    T = systems[0]
    if args.format == "dot":
        _emit_text(to_dot(T), args.output)
    else:
        write_json(to_document(T), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=1, help="worker threads for parallel stages")
    common.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE,
                        help="absolute tolerance for output comparisons")
    common.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")

    p = argparse.ArgumentParser(prog="swopacity", parents=[common],
                                description="Opacity-preserving finite abstractions of switched-system networks")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", parents=[common], help="design quantization parameters")
    d.add_argument("config")
    d.add_argument("--epsilon", type=float, required=True)
    d.add_argument("--sigma", help="JSON list (or name map) of sigma gain functions")
    d.add_argument("--no-snap", action="store_true", help="keep eta at its exact bound")
    d.add_argument("--conservative", action="store_true", help="evaluate alpha_bar at the last dwell counter")
    d.set_defaults(func=cmd_design)

    a = sub.add_parser("abstract", parents=[common], help="build local abstractions from a plan")
    a.add_argument("config")
    a.add_argument("--plan", required=True)
    a.add_argument("--conservative", action="store_true")
    a.set_defaults(func=cmd_abstract)

    c = sub.add_parser("compose", parents=[common], help="compose local abstractions")
    c.add_argument("systems", nargs="+", help="system dumps or bundles")
    c.add_argument("--plan", help="plan supplying phi per edge (default 0)")
    c.add_argument("--full-product", action="store_true")
    c.add_argument("--name", default="network")
    c.set_defaults(func=cmd_compose)

    k = sub.add_parser("check", parents=[common], help="check approximate initial-state opacity")
    k.add_argument("network")
    k.add_argument("--delta", type=float, required=True)
    k.set_defaults(func=cmd_check)

    v = sub.add_parser("verify-smallgain", parents=[common], help="check the cyclic small-gain condition")
    v.add_argument("config")
    v.add_argument("--conservative", action="store_true")
    v.set_defaults(func=cmd_verify_smallgain)

    r = sub.add_parser("pipeline", parents=[common], help="design, abstract, compose, check and transfer")
    r.add_argument("config")
    r.add_argument("--epsilon", type=float, required=True)
    r.add_argument("--delta", type=float, required=True)
    r.add_argument("--sigma")
    r.add_argument("--full-product", action="store_true")
    r.add_argument("--conservative", action="store_true")
    r.set_defaults(func=cmd_pipeline)

    e = sub.add_parser("export", parents=[common], help="export a system as DOT or JSON")
    e.add_argument("system")
    e.add_argument("--format", choices=("dot", "json"), default="dot")
    e.add_argument("--index", type=int, help="system index inside a bundle")
    e.set_defaults(func=cmd_export)
    return p


def _error(kind: str, exc: Exception, **extra) -> None:
    obj = {"error": kind, "message": str(exc), **extra}
    sys.stderr.write(json.dumps(obj, sort_keys=True, default=str) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasiblePlanError as exc:
        _error("infeasible", exc, report=exc.report)
        return 1
    except TransferError as exc:
        _error("transfer-hypothesis", exc)
        return 1
    except CompositionError as exc:
        _error("composition", exc, edge=list(exc.edge) if exc.edge else None)
        return 2
    except SpecError as exc:
        _error("spec", exc, edge=list(getattr(exc, "edge", None) or []) or None)
        return 2
    except (DumpError, SetError, AbstractionError, GainError, InputError) as exc:
        _error(type(exc).__name__, exc)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        _error("io", exc)
        return 2
    except (ValueError, KeyError, IndexError) as exc:
        _error("input", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
