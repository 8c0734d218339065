"""Approximate initial-state opacity of finite systems.

The checker explores pairs ``(z, B)``: ``z`` is the current state of a run
started in a secret initial state and ``B`` is the set of states reachable
by runs from non-secret initial states whose outputs stayed within
``delta`` of ``z``'s outputs so far.  The system is opaque iff no reachable
pair has ``B`` empty.  Inputs are unconstrained on both sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .gains import GainFunction, gain_eval, gain_invert
from .transys import FiniteTransitionSystem

DEFAULT_TOLERANCE = 1e-9


class TransferError(ValueError):
    pass


@dataclass(frozen=True)
class OpacityVerdict:
    opaque: bool | None
    delta: float
    tolerance: float = DEFAULT_TOLERANCE
    status: str = ""
    level: str = "abstract"
    counterexample: tuple | None = None     # ((state, input), ...), last input is None
    empty_step: int | None = None
    vacuous: bool = False
    nodes: int = 0
    transfer: dict | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.status:
            object.__setattr__(self, "status", {True: "opaque", False: "not-opaque", None: "inconclusive"}[self.opaque])

    def to_json(self, T: FiniteTransitionSystem | None = None) -> dict:
        doc = {
            "format_version": 1,
            "level": self.level,
            "status": self.status,
            "opaque": self.opaque,
            "delta": self.delta,
            "tolerance": self.tolerance,
            "vacuous": self.vacuous,
            "nodes_explored": self.nodes,
            "notes": list(self.notes),
        }
        if self.counterexample is not None:
            steps = []
            for z, u in self.counterexample:
                step = {"state": int(z), "input": None if u is None else int(u)}
                if T is not None:
                    step["output"] = T.outputs[z].tolist()
                    if u is not None:
                        lab = T.inputs[u]
                        step["input_label"] = list(lab) if isinstance(lab, tuple) else lab
                steps.append(step)
            doc["counterexample"] = {"steps": steps, "empty_step": self.empty_step}
        if self.transfer is not None:
            doc["transfer"] = dict(self.transfer)
        return doc


def close_matrix(T: FiniteTransitionSystem, delta: float, tolerance: float = DEFAULT_TOLERANCE,
                 backend=None) -> np.ndarray:
    return _kernels.close_matrix(T.outputs, T.outputs, delta + tolerance, backend=backend)


def _pack(row: np.ndarray) -> bytes:
    return np.packbits(row).tobytes()


def _first_input(T: FiniteTransitionSystem, s: int, d: int) -> int:
    tr = T.transitions
    mask = (tr[:, 0] == s) & (tr[:, 3] == d)
    return int(tr[mask, 1].min())


def check_opacity(T: FiniteTransitionSystem, delta: float, *, tolerance: float = DEFAULT_TOLERANCE,
                  backend=None, max_nodes: int | None = None) -> OpacityVerdict:
    """Breadth-first belief exploration; counterexamples are shortest."""
    if not T.is_closed:
        raise ValueError("opacity is checked on closed systems (compose open parts first)")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    n = T.num_states
    init = np.zeros(n, dtype=bool)
    init[T.initial] = True
    sec = np.zeros(n, dtype=bool)
    sec[T.secret] = True
    starts = np.nonzero(init & sec)[0]
    if len(starts) == 0:
        return OpacityVerdict(True, delta, tolerance, vacuous=True,
                              notes=("no initial state is secret; opacity holds vacuously",))
    post = np.ascontiguousarray(T.post)
    close = close_matrix(T, delta, tolerance, backend)
    nonsecret_init = init & ~sec

    # node bookkeeping: tracked state, parent node id
    node_z, node_parent = [], []
    seen = set()
    frontier_ids = []
    beliefs = []
    for z in starts:
        b = nonsecret_init & close[z]
        key = (int(z), _pack(b))
        if key in seen:
            continue
        seen.add(key)
        node_z.append(int(z))
        node_parent.append(-1)
        frontier_ids.append(len(node_z) - 1)
        beliefs.append(b)
        if not b.any():
            return _not_opaque(T, delta, tolerance, node_z, node_parent, len(node_z) - 1)
    frontier_b = np.array(beliefs, dtype=bool).reshape(-1, n)

    while frontier_ids:
        z_arr = np.array([node_z[k] for k in frontier_ids], dtype=np.int64)
        parent, succ, children = _kernels.expand_beliefs(post, close, z_arr, frontier_b, backend=backend)
        next_ids, next_b = [], []
        for p, s, child in zip(parent, succ, children):
            key = (int(s), _pack(child))
            if key in seen:
                continue
            seen.add(key)
            node_z.append(int(s))
            node_parent.append(frontier_ids[p])
            if not child.any():
                return _not_opaque(T, delta, tolerance, node_z, node_parent, len(node_z) - 1)
            next_ids.append(len(node_z) - 1)
            next_b.append(child)
        if max_nodes is not None and len(node_z) > max_nodes:
            raise RuntimeError(f"belief exploration exceeded {max_nodes} nodes")
        frontier_ids = next_ids
        frontier_b = np.array(next_b, dtype=bool).reshape(-1, n)
    return OpacityVerdict(True, delta, tolerance, nodes=len(node_z))


def _not_opaque(T, delta, tolerance, node_z, node_parent, k) -> OpacityVerdict:
    path = []
    while k >= 0:
        path.append(node_z[k])
        k = node_parent[k]
    path.reverse()
    steps = tuple((z, _first_input(T, z, path[t + 1]) if t + 1 < len(path) else None)
                  for t, z in enumerate(path))
    return OpacityVerdict(False, delta, tolerance, counterexample=steps, empty_step=len(path) - 1,
                          nodes=len(node_z))


def belief_trace(T: FiniteTransitionSystem, states, delta: float,
                 tolerance: float = DEFAULT_TOLERANCE) -> list[np.ndarray]:
    """Beliefs along a given run (replays counterexamples)."""
    close = close_matrix(T, delta, tolerance, "numpy")
    init = np.zeros(T.num_states, dtype=bool)
    init[T.initial] = True
    sec = np.zeros(T.num_states, dtype=bool)
    sec[T.secret] = True
    b = init & ~sec & close[states[0]]
    out = [b]
    post = T.post.astype(np.uint8)
    for z in states[1:]:
        b = ((b.astype(np.uint8) @ post) > 0) & close[z]
        out.append(b)
    return out


# ------------------------------------------------------------------ relation

@dataclass(frozen=True)
class RelationResult:
    ok: bool
    relation: np.ndarray | None
    failed: str | None = None
    witness: int | None = None
    rounds: int = 0

    def pairs(self) -> list[tuple[int, int]]:
        if self.relation is None:
            return []
        return [(int(a), int(b)) for a, b in np.argwhere(self.relation)]


def compute_initsop_relation(T: FiniteTransitionSystem, T_hat: FiniteTransitionSystem, eps_hat: float, *,
                             tolerance: float = DEFAULT_TOLERANCE) -> RelationResult:
    """Greatest relation with outputs within ``eps_hat`` that is closed under both transfer conditions.

    Returns a refusal naming the failed initial-state condition (``1a``
    or ``1b``) and a witness state when the greatest relation does not
    relate the initial states as required.
    """
    if not (T.is_closed and T_hat.is_closed):
        raise ValueError("both systems must be closed")
    if T.outputs.shape[1] != T_hat.outputs.shape[1]:
        raise ValueError("output dimensions differ")
    R = _kernels.close_matrix(T.outputs, T_hat.outputs, eps_hat + tolerance, backend="numpy")
    P = T.post.astype(np.int64)
    Ph = T_hat.post.astype(np.int64)
    rounds = 0
    while True:
        rounds += 1
        Q = (R.astype(np.int64) @ Ph.T) > 0          # Q[z+, zh]: some successor of zh relates to z+
        ok_a = (P @ (~Q).astype(np.int64)) == 0
        Q2 = (P @ R.astype(np.int64)) > 0            # Q2[z, zh+]: some successor of z relates to zh+
        ok_b = ((~Q2).astype(np.int64) @ Ph.T) == 0
        R_new = R & ok_a & ok_b
        if np.array_equal(R_new, R):
            break
        R = R_new
    sec = np.zeros(T.num_states, bool)
    sec[T.secret] = True
    init = np.zeros(T.num_states, bool)
    init[T.initial] = True
    sec_h = np.zeros(T_hat.num_states, bool)
    sec_h[T_hat.secret] = True
    init_h = np.zeros(T_hat.num_states, bool)
    init_h[T_hat.initial] = True
    for z in np.nonzero(init & sec)[0]:
        if not (R[z] & init_h & sec_h).any():
            return RelationResult(False, None, "1a", int(z), rounds)
    for zh in np.nonzero(init_h & ~sec_h)[0]:
        if not (R[:, zh] & init & ~sec).any():
            return RelationResult(False, None, "1b", int(zh), rounds)
    R.setflags(write=False)
    return RelationResult(True, R, rounds=rounds)


# ------------------------------------------------------------------ transfer

def network_eps_hat(epsilon: float, alphas) -> float:
    """``alpha^-1(epsilon)`` for ``alpha`` the inverse of ``max_i alpha_i^-1``."""
    return max(gain_eval(gain_invert(a), epsilon) for a in alphas)


def transfer_verdict(abstract: OpacityVerdict, epsilon: float, alpha: GainFunction | float, delta: float, *,
                     eps_hat: float | None = None) -> OpacityVerdict:
    """Carry an abstract verdict to the concrete network at precision ``delta``.

    Needs ``eps_hat = alpha^-1(epsilon) <= delta / 2``.  An abstract system
    opaque at ``delta - 2 eps_hat`` (or below) gives a concrete ``delta``
    verdict; anything else is inconclusive.
    """
    if eps_hat is None:
        a = alpha if isinstance(alpha, GainFunction) else GainFunction(float(alpha))
        eps_hat = gain_eval(gain_invert(a), epsilon)
    slack = 1e-12 * max(1.0, delta)
    if eps_hat > delta / 2 + slack:
        raise TransferError(f"eps_hat = {eps_hat:g} exceeds delta / 2 = {delta / 2:g}")
    needed = max(0.0, delta - 2 * eps_hat)
    record = {"epsilon": epsilon, "alpha": alpha.to_json() if isinstance(alpha, GainFunction) else alpha,
              "eps_hat": eps_hat, "abstract_delta": abstract.delta, "required_abstract_delta": needed,
              "concrete_delta": delta, "abstract_status": abstract.status}
    notes = []
    if abstract.opaque and abstract.delta <= needed + slack:
        opaque = True
    else:
        opaque = None
        if abstract.opaque:
            notes.append(f"abstract verdict used delta {abstract.delta:g} > {needed:g}; cannot transfer")
        else:
            notes.append("abstract system is not opaque; the transfer only works in one direction")
    return replace(abstract, opaque=opaque, status="", delta=delta, level="concrete", transfer=record,
                   notes=abstract.notes + tuple(notes))
