"""End-to-end run: design, abstract, compose, check, transfer."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .abstraction import build_local_abstraction
from .design import (InfeasiblePlanError, QuantizationPlan, build_gain_graph, check_cycle_condition,
                     design_parameters, network_params)
from .model import NetworkSpec
from .network import ComposedNetwork, compose, concrete_network_metadata
from .opacity import DEFAULT_TOLERANCE, OpacityVerdict, check_opacity, transfer_verdict


@dataclass
class PipelineResult:
    plan: QuantizationPlan
    parts: list
    network: ComposedNetwork
    abstract_verdict: OpacityVerdict
    concrete_verdict: OpacityVerdict
    report: dict = field(default_factory=dict)


def build_parts(spec: NetworkSpec, plan: QuantizationPlan, certs, *, workers: int = 1, backend=None) -> list:
    parts = []
    for sub, cert in zip(spec.subsystems, certs):
        augmented = (not cert.common_lyapunov) if cert is not None else sub.lyapunov == "multiple"
        parts.append(build_local_abstraction(sub, cert, plan.eta[sub.name], plan.w_steps_for(sub.name),
                                             augmented=augmented, workers=workers, backend=backend))
    return parts


def run_pipeline(spec: NetworkSpec, epsilon: float, delta: float, *, sigma=None, full_product: bool = False,
                 workers: int = 1, tolerance: float = DEFAULT_TOLERANCE, conservative: bool = False,
                 backend=None) -> PipelineResult:
    timings = {}
    t0 = time.perf_counter()
    certs, params, dwell = network_params(spec, conservative=conservative)
    bad = {n: d for n, d in dwell.items() if not d.ok}
    if bad:
        n, d = next(iter(bad.items()))
        raise InfeasiblePlanError({"binding": "dwell time", "subsystem": n, "value": d.margin,
                                   "message": f"subsystem {n}: dwell time is {d.required - d.margin:g}, "
                                              f"needs at least {d.required:g}"})
    graph = build_gain_graph(params, spec.edges, spec.names)
    cycles = check_cycle_condition(graph)
    plan = design_parameters(graph, params, epsilon, sigma, spec)
    timings["design"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    parts = build_parts(spec, plan, certs, workers=workers, backend=backend)
    timings["abstract"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    net = compose(parts, spec.edges, plan.phi, full_product=full_product, workers=workers, name=spec.name)
    timings["compose"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    abstract_delta = max(0.0, delta - 2 * plan.eps_hat)
    verdict = check_opacity(net.system, abstract_delta, tolerance=tolerance, backend=backend)
    concrete = transfer_verdict(verdict, plan.epsilon, None, delta, eps_hat=plan.eps_hat)
    timings["check"] = time.perf_counter() - t0

    report = {
        "format_version": 1,
        "network": spec.name,
        "epsilon": epsilon,
        "delta": delta,
        "aggregates": {s.name: p.to_json() for s, p in zip(spec.subsystems, params)},
        "dwell_time": {n: {"ok": d.ok, "margin": d.margin, "required": d.required} for n, d in dwell.items()},
        "gain_graph": graph.to_json(),
        "small_gain": cycles.to_json(),
        "plan": plan.to_document(),
        "abstractions": {T.name: {**T.stats(), "blocking_triples": T.meta.get("blocking_triples", 0),
                                  "blocking_examples": T.meta.get("blocking", []),
                                  "internal_input_grid": [] if T.internal_inputs is None
                                  else T.internal_inputs.tolist()} for T in parts},
        "composition": dict(net.report),
        "concrete_metadata": concrete_network_metadata(spec),
        "abstract_verdict": verdict.to_json(net.system),
        "concrete_verdict": concrete.to_json(net.system),
        "timings": timings,
    }
    return PipelineResult(plan, parts, net, verdict, concrete, report)
