"""Compositional design of quantization parameters.

Per subsystem, the certificate data is aggregated into ``(kappa, rho,
gamma_hat, alpha_bar, alpha)``.  The interconnection gains
``gamma_ij = (1 - kappa_i)^-1 rho_i o alpha_j^-1`` must compose to less
than the identity around every cycle; then a precision ``epsilon`` is split
into local precisions and internal-input tolerances ``phi_ij``, and the
state quantization ``eta_i`` is the largest admissible value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import networkx as nx
import numpy as np

from .gains import (IDENTITY, ZERO, GainError, GainFunction, gain_compose, gain_eval, gain_invert,
                    gain_lt, gain_lt_identity, gain_max)
from .model import (KAPPA_FLOOR, NetworkSpec, SpecError, StabilityCertificate, SwitchedSubsystem,
                    derive_affine_certificate, span_bound)

SLACK_TOL = 1e-12
PHI_FRACTION = 0.5
MAX_PHI_HALVINGS = 30


class InfeasiblePlanError(ValueError):
    """Raised with a structured report naming the binding constraint."""

    def __init__(self, report: dict):
        super().__init__(report.get("message", "infeasible"))
        self.report = report


@dataclass(frozen=True)
class AggregateParams:
    kappa: float
    rho: GainFunction
    gamma_hat: GainFunction
    alpha_bar: GainFunction
    alpha: GainFunction = IDENTITY
    provenance: str = "certificate"

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValueError(f"aggregate contraction factor must lie in (0, 1), got {self.kappa}")

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "rho": self.rho.to_json(), "gamma_hat": self.gamma_hat.to_json(),
                "alpha_bar": self.alpha_bar.to_json(), "alpha": self.alpha.to_json(),
                "provenance": self.provenance}


def aggregate_mode_params(cert: StabilityCertificate, k_d: int = 1, *,
                          conservative: bool = False) -> AggregateParams:
    """Collapse per-mode certificate data into the four aggregates.

    With a common Lyapunov function the plain maxima are used.  Otherwise
    each mode's gains are inflated by ``kappa_p^(-k_d/eps)``; ``alpha_bar``
    uses counter value 0 (initial states), or ``k_d - 1`` when
    ``conservative`` is set.
    """
    try:
        if cert.common_lyapunov:
            return AggregateParams(
                kappa=max(cert.kappa), rho=gain_max(cert.rho), gamma_hat=gain_max(cert.gamma),
                alpha_bar=gain_max(cert.alpha_upper), alpha=cert.alpha)
        eps = cert.epsilon
        l = k_d - 1 if conservative else 0
        kappa = max(k ** ((eps - 1) / eps) for k in cert.kappa)
        rho = gain_max(r.scaled(k ** (-k_d / eps)) for r, k in zip(cert.rho, cert.kappa))
        gamma_hat = gain_max(g.scaled(k ** (-k_d / eps)) for g, k in zip(cert.gamma, cert.kappa))
        alpha_bar = gain_max(a.scaled(k ** (-l / eps)) for a, k in zip(cert.alpha_upper, cert.kappa))
    except GainError as exc:
        raise GainError(f"cannot aggregate modes in closed form: {exc}") from None
    return AggregateParams(kappa=kappa, rho=rho, gamma_hat=gamma_hat, alpha_bar=alpha_bar, alpha=cert.alpha)


def pinned_params(pinned: Mapping, cert: StabilityCertificate | None = None) -> AggregateParams:
    """Aggregates given verbatim in a configuration (provenance ``user-pinned``)."""
    missing = [k for k in ("kappa", "rho", "gamma_hat", "alpha_bar") if k not in pinned]
    if missing:
        raise SpecError(f"pinned aggregates lack {missing}")
    if "alpha" in pinned:
        alpha = GainFunction.from_json(pinned["alpha"])
    else:
        alpha = cert.alpha if cert is not None else IDENTITY
    return AggregateParams(
        kappa=float(pinned["kappa"]), rho=GainFunction.from_json(pinned["rho"]),
        gamma_hat=GainFunction.from_json(pinned["gamma_hat"]),
        alpha_bar=GainFunction.from_json(pinned["alpha_bar"]), alpha=alpha, provenance="user-pinned")


def subsystem_params(sub: SwitchedSubsystem, *, kappa_floor: float = KAPPA_FLOOR,
                     conservative: bool = False):
    """Certificate and aggregates of one subsystem; pinned aggregates win over derived ones."""
    try:
        cert = derive_affine_certificate(sub, kappa_floor)
    except (SpecError, ValueError):
        if sub.pinned is None:
            raise
        cert = None
    if sub.pinned is not None:
        return cert, pinned_params(sub.pinned, cert)
    return cert, aggregate_mode_params(cert, sub.dwell_time, conservative=conservative)


@dataclass(frozen=True)
class DwellCheck:
    ok: bool
    margin: float
    required: float
    per_mode: tuple[float, ...]


def dwell_time_check(cert: StabilityCertificate, k_d: int) -> DwellCheck:
    """``k_d >= eps * ln(mu) / ln(1/kappa_p) + 1`` for every mode."""
    from .model import DEFAULT_TUNING_EXPONENT
    eps = cert.epsilon if cert.epsilon is not None else DEFAULT_TUNING_EXPONENT
    rhs = tuple(eps * math.log(cert.mu) / math.log(1.0 / k) + 1.0 for k in cert.kappa)
    req = max(rhs)
    margin = k_d - req
    return DwellCheck(ok=margin >= -SLACK_TOL * max(1.0, req), margin=margin, required=req, per_mode=rhs)


# ------------------------------------------------------------------ gain graph

@dataclass(frozen=True)
class GainGraph:
    names: tuple[str, ...]
    gains: tuple[tuple[GainFunction, ...], ...]    # gains[i][j] = gamma_ij
    edges: tuple[tuple[str, str], ...] = ()        # (source j, target i)
    sigma: tuple[GainFunction, ...] | None = None

    @property
    def size(self) -> int:
        return len(self.names)

    def coefficient_matrix(self) -> np.ndarray:
        return np.array([[g.c for g in row] for row in self.gains], dtype=float).reshape(self.size, self.size)

    @property
    def all_linear(self) -> bool:
        return all(g.is_linear for row in self.gains for g in row)

    def to_json(self) -> dict:
        return {"names": list(self.names),
                "gains": [[g.to_json() for g in row] for row in self.gains],
                "edges": [list(e) for e in self.edges]}


def build_gain_graph(params: Sequence[AggregateParams], edges, names: Sequence[str] | None = None) -> GainGraph:
    names = tuple(str(n) for n in (names if names is not None else range(1, len(params) + 1)))
    pos = {n: k for k, n in enumerate(names)}
    N = len(names)
    G = [[ZERO] * N for _ in range(N)]
    for j, i in edges:
        pi, pj = params[pos[str(i)]], params[pos[str(j)]]
        if pi.rho.is_zero:
            continue
        G[pos[str(i)]][pos[str(j)]] = gain_compose(pi.rho.scaled(1.0 / (1.0 - pi.kappa)), gain_invert(pj.alpha))
    return GainGraph(names, tuple(tuple(r) for r in G), tuple((str(j), str(i)) for j, i in edges))


def max_cycle_gain_linear(C) -> float:
    """Largest geometric-mean cycle weight of a nonnegative matrix (0 if acyclic).

    Karp's maximum mean cycle algorithm on log-weights; equals the
    max-times spectral radius, independent of cycle enumeration.
    """
    C = np.asarray(C, dtype=float)
    n = len(C)
    if n == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        W = np.where(C > 0, np.log(np.where(C > 0, C, 1.0)), -np.inf)
    D = np.full((n + 1, n), -np.inf)
    D[0] = 0.0
    for k in range(1, n + 1):
        D[k] = np.max(D[k - 1][:, None] + W, axis=0)
    best = -np.inf
    for v in range(n):
        if not np.isfinite(D[n, v]):
            continue
        worst = min((D[n, v] - D[k, v]) / (n - k) for k in range(n) if np.isfinite(D[k, v]))
        best = max(best, worst)
    return float(math.exp(best)) if np.isfinite(best) else 0.0


@dataclass(frozen=True)
class CycleVerdict:
    ok: bool
    witness: tuple[str, ...] | None = None
    witness_gain: GainFunction | None = None
    reason: str = ""
    cycles_checked: int = 0
    max_cycle_gain: float | None = None       # linear graphs only
    spectral_radius: float | None = None      # ordinary, linear graphs only

    def to_json(self) -> dict:
        return {"ok": self.ok, "witness": list(self.witness) if self.witness else None,
                "witness_gain": self.witness_gain.to_json() if self.witness_gain else None,
                "reason": self.reason, "cycles_checked": self.cycles_checked,
                "max_cycle_gain": self.max_cycle_gain, "spectral_radius": self.spectral_radius}


def check_cycle_condition(graph: GainGraph) -> CycleVerdict:
    """Every simple cycle ``gamma_i1i2 o ... o gamma_iri1`` must lie below the identity.

    Cycles that revisit a node split into simple cycles, so simple ones
    suffice.  For linear graphs the verdict is cross-checked against the
    maximum cycle gain computed independently.
    """
    N = graph.size
    G = nx.DiGraph()
    G.add_nodes_from(range(N))
    for i in range(N):
        for j in range(N):
            if not graph.gains[i][j].is_zero:
                G.add_edge(i, j)
    worst, worst_cycle, count = None, None, 0
    failure = None
    for cyc in nx.simple_cycles(G):
        count += 1
        k = cyc.index(min(cyc))
        cyc = cyc[k:] + cyc[:k]
        g = IDENTITY
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            g = gain_compose(g, graph.gains[a][b])
        if not gain_lt_identity(g):
            cand = (tuple(graph.names[v] for v in cyc), g)
            if failure is None or (len(cand[0]), cand[0]) < (len(failure[0]), failure[0]):
                failure = cand
        elif worst is None or g.c > worst.c:
            worst, worst_cycle = g, cyc
    mcg = rho = None
    if graph.all_linear:
        C = graph.coefficient_matrix()
        mcg = max_cycle_gain_linear(C)
        rho = float(max(abs(np.linalg.eigvals(C)))) if N else 0.0
        if (mcg < 1.0) != (failure is None):
            raise AssertionError(
                f"cycle enumeration and maximum cycle gain disagree (max cycle gain {mcg!r})")
    if failure is not None:
        cyc, g = failure
        reason = ("composed gain is not below the identity" if g.is_linear
                  else "composed gain is not globally below the identity (exponent differs from 1)")
        return CycleVerdict(False, cyc, g, reason, count, mcg, rho)
    return CycleVerdict(True, None, None, "every cycle gain is below the identity" if count else
                        "no cycles", count, mcg, rho)


def check_sigma(graph: GainGraph, sigma: Sequence[GainFunction]) -> tuple[bool, str]:
    """``max_j gamma_ij o sigma_j < sigma_i`` for every node with neighbours."""
    for i in range(graph.size):
        for j in range(graph.size):
            g = graph.gains[i][j]
            if g.is_zero:
                continue
            if not gain_lt(gain_compose(g, sigma[j]), sigma[i]):
                return False, f"gamma_{graph.names[i]},{graph.names[j]} o sigma_{graph.names[j]} is not below sigma_{graph.names[i]}"
    return True, ""


# ------------------------------------------------------------------ plans

@dataclass
class QuantizationPlan:
    names: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    epsilon: float
    r: float
    eps: dict
    theta: dict
    eta: dict
    phi: dict
    w_step: dict = field(default_factory=dict)
    eta_bound: dict = field(default_factory=dict)
    eta_binding: dict = field(default_factory=dict)
    eta_caps: dict = field(default_factory=dict)
    eps_hat: float | None = None
    sigma: tuple = ()

    def w_steps_for(self, name: str) -> dict:
        return {j: self.w_step.get((j, i), self.phi[(j, i)]) for j, i in self.edges if i == name}

    def to_document(self) -> dict:
        return {
            "format_version": 1,
            "epsilon": self.epsilon,
            "r": self.r,
            "eps_hat": self.eps_hat,
            "subsystems": [{
                "name": n, "epsilon": self.eps[n], "theta": self.theta[n], "eta": self.eta[n],
                "eta_bound": self.eta_bound.get(n), "eta_binding": self.eta_binding.get(n),
                "eta_caps": self.eta_caps.get(n, {}),
                "sigma": self.sigma[k].to_json() if self.sigma else None,
            } for k, n in enumerate(self.names)],
            "edges": [{"source": j, "target": i, "phi": self.phi[(j, i)],
                       "w_step": self.w_step.get((j, i), self.phi[(j, i)])} for j, i in self.edges],
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> QuantizationPlan:
        subs = doc["subsystems"]
        names = tuple(str(s["name"]) for s in subs)
        edges = tuple((str(e["source"]), str(e["target"])) for e in doc.get("edges", []))
        sig = tuple(GainFunction.from_json(s["sigma"]) for s in subs) if all(
            s.get("sigma") is not None for s in subs) else ()
        return cls(
            names=names, edges=edges, epsilon=float(doc["epsilon"]), r=float(doc.get("r", math.nan)),
            eps={str(s["name"]): float(s["epsilon"]) for s in subs},
            theta={str(s["name"]): float(s["theta"]) for s in subs},
            eta={str(s["name"]): float(s["eta"]) for s in subs},
            phi={(str(e["source"]), str(e["target"])): float(e["phi"]) for e in doc.get("edges", [])},
            w_step={(str(e["source"]), str(e["target"])): float(e.get("w_step", e["phi"]))
                    for e in doc.get("edges", [])},
            eta_bound={str(s["name"]): s.get("eta_bound") for s in subs},
            eta_binding={str(s["name"]): s.get("eta_binding") for s in subs},
            eta_caps={str(s["name"]): dict(s.get("eta_caps") or {}) for s in subs},
            eps_hat=doc.get("eps_hat"), sigma=sig,
        )


@dataclass(frozen=True)
class PlanValidation:
    ok: bool
    constraints: tuple[dict, ...]

    @property
    def failures(self) -> list[dict]:
        return [c for c in self.constraints if not c["ok"]]

    def min_slack(self) -> float:
        return min((c["slack"] for c in self.constraints), default=math.inf)

    def to_json(self) -> dict:
        return {"ok": self.ok, "constraints": list(self.constraints)}


def _tol(*vals) -> float:
    return SLACK_TOL * max([1.0] + [abs(v) for v in vals if math.isfinite(v)])


def _quant_bound(p: AggregateParams, eps_i: float, theta_i: float):
    """Positivity margin and the two terms of the quantization bound."""
    q = (1.0 - p.kappa) * eps_i - gain_eval(p.rho, theta_i)
    first = gain_eval(gain_invert(p.gamma_hat), q) if q > 0 and not p.gamma_hat.is_zero else (
        math.inf if q > 0 else -math.inf)
    second = gain_eval(gain_invert(p.alpha_bar), eps_i) if not p.alpha_bar.is_zero else math.inf
    return q, first, second


def validate_plan(plan: QuantizationPlan, params: Sequence[AggregateParams]) -> PlanValidation:
    """Re-check the interconnection and quantization constraints of a (possibly hand-edited) plan."""
    pos = {n: k for k, n in enumerate(plan.names)}
    out = []

    def add(name, where, lhs, rhs, strict=False):
        slack = rhs - lhs
        ok = slack > 0 if strict else slack >= -_tol(lhs, rhs)
        out.append({"constraint": name, "where": where, "lhs": lhs, "rhs": rhs, "slack": slack, "ok": bool(ok)})

    add("epsilon is the max local precision", "network", max(plan.eps.values()), plan.epsilon)
    add("epsilon is the max local precision (reverse)", "network", plan.epsilon, max(plan.eps.values()))
    for j, i in plan.edges:
        a = gain_eval(gain_invert(params[pos[j]].alpha), plan.eps[j])
        add("interconnection: alpha_j^-1(eps_j) + phi_ij <= theta_i", f"{j}->{i}",
            a + plan.phi[(j, i)], plan.theta[i])
        add("phi_ij >= 0", f"{j}->{i}", 0.0, plan.phi[(j, i)])
    for n in plan.names:
        p = params[pos[n]]
        q, first, second = _quant_bound(p, plan.eps[n], plan.theta[n])
        add("positivity: rho(theta) < (1 - kappa) eps", n, gain_eval(p.rho, plan.theta[n]),
            (1.0 - p.kappa) * plan.eps[n], strict=True)
        add("eta > 0", n, 0.0, plan.eta[n], strict=True)
        add("quantization: eta <= gamma_hat^-1((1 - kappa) eps - rho(theta))", n, plan.eta[n], first)
        add("quantization: eta <= alpha_bar^-1(eps)", n, plan.eta[n], second)
        for cap, val in (plan.eta_caps.get(n) or {}).items():
            add(f"cap: eta <= {cap}", n, plan.eta[n], float(val))
    return PlanValidation(all(c["ok"] for c in out), tuple(out))


def _endpoint_gcd(values: Sequence[float]) -> Fraction | None:
    g = Fraction(0)
    for v in values:
        f = Fraction(repr(float(v)))
        g = Fraction(math.gcd(g.numerator * f.denominator, f.numerator * g.denominator),
                     g.denominator * f.denominator)
    return g if g > 0 else None


def snap_down(bound: float, values: Sequence[float]) -> float:
    """Largest ``g / k`` (``g`` the rational gcd of ``values``) not exceeding ``bound``."""
    g = _endpoint_gcd(values)
    if g is None or not math.isfinite(bound):
        return bound
    k = max(1, math.ceil(float(g) / bound * (1 - 1e-12)))
    while float(g / k) > bound * (1 + 1e-12):
        k += 1
    return float(g / k)


def _state_caps(sub: SwitchedSubsystem) -> dict:
    caps = {"secret span": span_bound(sub), "state span": sub.state_set.span}
    return {k: v for k, v in caps.items() if math.isfinite(v)}


def _edge_fits(spec: NetworkSpec, j: str, i: str, eta_j: float, step: float, radius: float) -> bool:
    """Every grid output of ``j`` towards ``i`` has an internal-input grid point of ``i`` within ``radius``."""
    from .abstraction import AbstractionError, quantize
    from .network import _near
    sj, si = spec.subsystem(j), spec.subsystem(i)
    blk = next(b for b in si.input_blocks if b.source == j)
    try:
        wgrid = quantize(blk.box, step)
        xgrid = quantize(sj.state_set, eta_j)
    except AbstractionError:
        return False
    if len(wgrid) == 0:
        return False
    ys = np.unique(xgrid.points @ sj.output_block(i).matrix.T, axis=0)
    return all(_near(wgrid.points, y, radius, step) for y in ys)


def design_parameters(graph: GainGraph, params: Sequence[AggregateParams], epsilon: float,
                      sigma: Sequence[GainFunction] | None = None, spec: NetworkSpec | None = None, *,
                      grid_snap: bool = True, phi_fraction: float = PHI_FRACTION) -> QuantizationPlan:
    """Split ``epsilon`` into local precisions and pick ``phi_ij`` and ``eta_i``.

    With ``spec`` the grids are known: ``phi_ij = 0`` is kept on edges whose
    output grid lands exactly on the internal-input grid, ``eta_i`` is
    capped by the state- and secret-set spans and (with ``grid_snap``)
    rounded down to a divisor of the set endpoints.  Other edges get
    ``phi_ij = phi_fraction`` times the interconnection bound.
    """
    names, N = graph.names, graph.size
    pos = {n: k for k, n in enumerate(names)}
    edges = graph.edges
    if not epsilon > 0:
        raise InfeasiblePlanError({"binding": "precision", "message": f"epsilon must be positive, got {epsilon}"})
    verdict = check_cycle_condition(graph)
    if not verdict.ok:
        raise InfeasiblePlanError({"binding": "small-gain", "witness": list(verdict.witness),
                                   "message": f"small-gain condition fails on cycle {verdict.witness}: {verdict.reason}"})
    note = None
    if sigma is None:
        # identity sigma is guaranteed to work when every gamma_ij is below the identity; otherwise
        # it is still tried, and the constraint checks below decide
        sigma = (IDENTITY,) * N
        if not all(gain_lt_identity(g) for row in graph.gains for g in row):
            note = "some gamma_ij is not below the identity; identity sigma was tried, supply sigma functions"
    else:
        sigma = tuple(sigma)
        ok, why = check_sigma(graph, sigma)
        if not ok:
            raise InfeasiblePlanError({"binding": "sigma", "message": f"sigma functions rejected: {why}"})
    try:
        return _design(graph, params, epsilon, sigma, spec, grid_snap, phi_fraction)
    except InfeasiblePlanError as exc:
        if note is not None:
            exc.report["note"] = note
        raise


def _design(graph, params, epsilon, sigma, spec, grid_snap, phi_fraction) -> QuantizationPlan:
    names, N = graph.names, graph.size
    pos = {n: k for k, n in enumerate(names)}
    edges = graph.edges

    # max_i sigma_i(r) = epsilon has the closed-form root min_i sigma_i^-1(epsilon)
    roots = [gain_eval(gain_invert(s), epsilon) for s in sigma]
    r = min(roots)
    eps = {n: min(epsilon, gain_eval(sigma[k], r)) for k, n in enumerate(names)}
    eps[names[int(np.argmin(roots))]] = epsilon
    a = {n: gain_eval(gain_invert(params[pos[n]].alpha), eps[n]) for n in names}

    nbrs = {n: [j for j, i in edges if i == n] for n in names}
    B = {}
    for n in names:
        if not nbrs[n]:
            continue
        p = params[pos[n]]
        amax = max(a[j] for j in nbrs[n])
        B[n] = math.inf if p.rho.is_zero else gain_eval(gain_invert(p.rho), (1 - p.kappa) * eps[n]) - amax
        if B[n] <= 0:
            # rho(theta) >= rho(max_j alpha_j^-1(eps_j)) >= (1 - kappa) eps for every phi >= 0
            raise InfeasiblePlanError({
                "binding": "quantization positivity", "subsystem": n, "value": B[n],
                "interconnection_bound": B[n],
                "message": f"subsystem {n}: (1 - kappa) eps - rho(theta) <= 0 for every phi >= 0 "
                           f"(interconnection bound on phi is {B[n]:g} <= 0)"})

    caps = {n: _state_caps(spec.subsystem(n)) for n in names} if spec is not None else {n: {} for n in names}

    def positive_phi(j, i):
        cap = B[i]
        if spec is not None:
            cap = min(cap, spec.subsystem(i).input_blocks[[b.source for b in spec.subsystem(i).input_blocks].index(j)].box.span)
        if not math.isfinite(B[i]):
            return min(cap, eps[i])
        return min(cap, phi_fraction * B[i])

    phi = {e: 0.0 if spec is not None else positive_phi(*e) for e in edges}
    w_step = dict(phi)

    def solve_eta():
        theta, eta, bound, binding, qs = {}, {}, {}, {}, {}
        for n in names:
            p = params[pos[n]]
            theta[n] = max((a[j] + phi[(j, n)] for j in nbrs[n]), default=0.0)
            q, first, second = _quant_bound(p, eps[n], theta[n])
            if q <= 0:
                raise InfeasiblePlanError({
                    "binding": "quantization positivity", "subsystem": n, "value": q,
                    "message": f"subsystem {n}: (1 - kappa) eps - rho(theta) = {q:g} <= 0"})
            terms = {"quantization": first, "output": second, **caps[n]}
            b = min(terms.values())
            if not math.isfinite(b):
                raise InfeasiblePlanError({"binding": "quantization", "subsystem": n,
                                           "message": f"subsystem {n}: eta is unbounded; provide a state set"})
            bound[n] = b
            binding[n] = min(terms, key=terms.get)
            if grid_snap and spec is not None:
                sub = spec.subsystem(n)
                vals = sub.state_set.endpoints() + sub.secret_set.endpoints() + sub.initial_set.endpoints()
                eta[n] = snap_down(b, vals)
            else:
                eta[n] = b
            qs[n] = q
        return theta, eta, bound, binding

    theta, eta, bound, binding = solve_eta()
    if spec is not None:
        for _ in range(len(edges) + 2):
            changed = False
            for j, i in edges:
                if phi[(j, i)] == 0.0:
                    if _edge_fits(spec, j, i, eta[j], eta[j], 0.0):
                        w_step[(j, i)] = eta[j]
                        continue
                    f = positive_phi(j, i)
                    for _ in range(MAX_PHI_HALVINGS):
                        if _edge_fits(spec, j, i, eta[j], f, f):
                            break
                        f /= 2
                    else:
                        raise InfeasiblePlanError({"binding": "covering", "edge": [j, i], "message":
                                                   f"edge {j} -> {i}: no internal-input grid covers the outputs"})
                    phi[(j, i)] = f
                    w_step[(j, i)] = f
                    changed = True
            if not changed:
                break
            theta, eta, bound, binding = solve_eta()

    eps_hat = max(gain_eval(gain_invert(params[pos[n]].alpha), epsilon) for n in names)
    plan = QuantizationPlan(names=names, edges=edges, epsilon=max(eps.values()), r=r, eps=eps, theta=theta,
                            eta=eta, phi=phi, w_step=w_step, eta_bound=bound, eta_binding=binding,
                            eta_caps=caps, eps_hat=eps_hat, sigma=sigma)
    check = validate_plan(plan, params)
    if not check.ok:
        raise InfeasiblePlanError({"binding": "validation", "failures": check.failures,
                                   "message": "designed plan failed validation"})
    return plan


def network_params(spec: NetworkSpec, *, conservative: bool = False, kappa_floor: float = KAPPA_FLOOR):
    """Certificates, aggregates and dwell-time checks for every subsystem."""
    certs, params, dwell = [], [], {}
    for sub in spec.subsystems:
        cert, p = subsystem_params(sub, kappa_floor=kappa_floor, conservative=conservative)
        certs.append(cert)
        params.append(p)
        if cert is not None and not cert.common_lyapunov:
            dwell[sub.name] = dwell_time_check(cert, sub.dwell_time)
    return certs, params, dwell
