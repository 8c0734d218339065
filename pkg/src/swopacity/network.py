"""Composition of local abstractions into a closed finite network.

Part ``i`` receives, on its block from neighbour ``j``, any internal-input
grid value within ``phi[(j, i)]`` of the neighbour's current output
``y_ji``.  The joint input is the tuple of local mode labels and the
network output concatenates each part's external block ``h_ii``.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import NetworkSpec
from .transys import FiniteTransitionSystem

REL_TOL = 1e-9


class CompositionError(ValueError):
    def __init__(self, message: str, edge: tuple[str, str] | None = None):
        super().__init__(message)
        self.edge = edge


def _block_slice(T: FiniteTransitionSystem, target: str):
    for t, a, b in T.output_layout:
        if str(t) == str(target):
            return slice(a, b)
    return None


def _input_block(T: FiniteTransitionSystem, source: str):
    for blk in T.internal_blocks:
        if str(blk["source"]) == str(source):
            return blk
    return None


@dataclass(frozen=True)
class _BlockGrid:
    """Per-block view of a part's internal-input grid."""

    values: tuple[np.ndarray, ...]     # distinct block values, one array per block
    codes: dict                        # tuple of block indices -> internal-input id


def _block_grid(T: FiniteTransitionSystem) -> _BlockGrid:
    W = T.internal_inputs
    values, cols = [], []
    for blk in T.internal_blocks:
        sub = W[:, blk["start"]:blk["stop"]]
        uniq, inv = np.unique(sub, axis=0, return_inverse=True)
        values.append(uniq)
        cols.append(inv.ravel())
    codes = {tuple(int(c[r]) for c in cols): r for r in range(len(W))}
    return _BlockGrid(tuple(values), codes)


def _tol(phi: float, step: float) -> float:
    return REL_TOL * max(phi, step, 1e-12)


def _near(values: np.ndarray, y: np.ndarray, phi: float, step: float) -> list[int]:
    if values.shape[1] == 0:
        return list(range(len(values)))
    dist = np.abs(values - y[None, :]).max(axis=1)
    return [int(k) for k in np.nonzero(dist <= phi + _tol(phi, step))[0]]


def internal_input_candidates(T_i: FiniteTransitionSystem, neighbor_outputs: Mapping[str, Sequence[float]],
                              phi: Mapping[str, float]) -> list[int]:
    """Ids of internal inputs of ``T_i`` whose block from each neighbour ``j`` lies within ``phi[j]`` of ``y_ji``."""
    if T_i.is_closed:
        return []
    bg = _block_grid(T_i)
    per_block = []
    for blk, values in zip(T_i.internal_blocks, bg.values):
        j = str(blk["source"])
        y = np.atleast_1d(np.asarray(neighbor_outputs[j], dtype=float))
        per_block.append(_near(values, y, float(phi.get(j, 0.0)), float(blk.get("step", 0.0))))
    return sorted(bg.codes[c] for c in itertools.product(*per_block) if c in bg.codes)


def check_covering(parts: Sequence[FiniteTransitionSystem], edges, phi: Mapping) -> None:
    """Every reachable neighbour output must have a grid input within ``phi`` on its edge."""
    by_name = {str(T.name): T for T in parts}
    for j, i in edges:
        Tj, Ti = by_name[str(j)], by_name[str(i)]
        sl = _block_slice(Tj, i)
        blk = _input_block(Ti, j)
        if sl is None or blk is None:
            raise CompositionError(f"edge {j} -> {i} has no matching output/input blocks", (str(j), str(i)))
        values = _block_grid(Ti).values[Ti.internal_blocks.index(blk)]
        f = float(phi.get((str(j), str(i)), 0.0))
        for y in np.unique(Tj.outputs[:, sl], axis=0):
            if not _near(values, y, f, float(blk.get("step", 0.0))):
                raise CompositionError(
                    f"edge {j} -> {i}: neighbour output {y.tolist()} has no internal-input grid point "
                    f"within phi = {f:g}", (str(j), str(i)))


@dataclass(frozen=True, eq=False)
class ComposedNetwork:
    system: FiniteTransitionSystem
    parts: tuple[FiniteTransitionSystem, ...]
    edges: tuple[tuple[str, str], ...]
    phi: Mapping[tuple[str, str], float]
    report: Mapping = field(default_factory=dict)

    def component_labels(self, z: int) -> tuple:
        return tuple(T.labels[s] for T, s in zip(self.parts, self.system.labels[z]))

    def candidates(self, z: int) -> list[list[int]]:
        """Per part, the internal-input ids allowed at joint state ``z``."""
        comp = self.system.labels[z]
        names = [str(T.name) for T in self.parts]
        out = []
        for i, T in enumerate(self.parts):
            if T.is_closed:
                out.append([-1])
                continue
            ys = {}
            for blk in T.internal_blocks:
                j = names.index(str(blk["source"]))
                ys[str(blk["source"])] = self.parts[j].outputs[comp[j], _block_slice(self.parts[j], T.name)]
            phis = {str(blk["source"]): self.phi.get((str(blk["source"]), str(T.name)), 0.0)
                    for blk in T.internal_blocks}
            out.append(internal_input_candidates(T, ys, phis))
        return out

    def witnesses(self, src: int, u: int, dst: int) -> list[int] | None:
        """For a joint transition, one internal-input id per part reproducing it locally (or None)."""
        a, b = self.system.labels[src], self.system.labels[dst]
        labels = self.system.inputs[u]
        out = []
        for T, s, d, ul, cands in zip(self.parts, a, b, labels, self.candidates(src)):
            uid = T.inputs.index(ul)
            hit = None
            for w in cands:
                if d in T.successors(s, uid, None if w < 0 else w):
                    hit = w
                    break
            if hit is None:
                return None
            out.append(hit)
        return out


def compose(parts: Sequence[FiniteTransitionSystem], edges, phi: Mapping | None = None, *,
            full_product: bool = False, workers: int = 1, check: bool = True,
            name: str = "network") -> ComposedNetwork:
    """Closed network of ``parts`` interconnected along ``edges`` (pairs ``(source, target)``).

    By default only joint states reachable from the joint initial set are
    kept; ``full_product`` keeps the whole product in lexicographic order.
    """
    parts = tuple(parts)
    if not parts:
        raise CompositionError("nothing to compose")
    kinds = {bool(T.augmented) for T in parts}
    if len(kinds) > 1:
        raise CompositionError("cannot mix dwell-time-augmented and plain abstractions")
    names = [str(T.name) for T in parts]
    if len(set(names)) != len(names):
        raise CompositionError("part names must be unique")
    pos = {n: k for k, n in enumerate(names)}
    edges = tuple((str(j), str(i)) for j, i in edges)
    phi = {(str(k[0]), str(k[1])): float(v) for k, v in (phi or {}).items()}
    for j, i in edges:
        if j not in pos or i not in pos:
            raise CompositionError(f"edge {j} -> {i} refers to an unknown part", (j, i))
    for T in parts:
        sources = sorted(str(b["source"]) for b in T.internal_blocks)
        expected = sorted(j for j, i in edges if i == str(T.name))
        if sources != expected:
            raise CompositionError(f"part {T.name}: input blocks {sources} do not match edges {expected}")
    if check:
        check_covering(parts, edges, phi)

    N = len(parts)
    # per part and block: neighbour position, and candidate block ids per neighbour state
    block_info = []
    for T in parts:
        if T.is_closed:
            block_info.append(None)
            continue
        bg = _block_grid(T)
        per_block = []
        for blk, values in zip(T.internal_blocks, bg.values):
            j = pos[str(blk["source"])]
            Tj = parts[j]
            sl = _block_slice(Tj, T.name)
            f = phi.get((str(blk["source"]), str(T.name)), 0.0)
            step = float(blk.get("step", 0.0))
            cands = [tuple(_near(values, Tj.outputs[s, sl], f, step)) for s in range(Tj.num_states)]
            per_block.append((j, cands))
        block_info.append((bg, per_block))

    # local transition tables: (s, u) -> {w: successors}
    tables = []
    for T in parts:
        tab: dict = {}
        for s, u, w, d in T.transitions:
            tab.setdefault((int(s), int(u)), {}).setdefault(int(w), []).append(int(d))
        tables.append(tab)

    local_cache: dict = {}
    empty_candidates = [0]

    def local_successors(i, z):
        T = parts[i]
        info = block_info[i]
        if info is None:
            key, ws = (i, z[i]), {-1}
        else:
            bg, per_block = info
            nbr = tuple(z[j] for j, _ in per_block)
            key = (i, z[i], nbr)
            if key in local_cache:
                return local_cache[key]
            combos = itertools.product(*[cands[z[j]] for j, cands in per_block])
            ws = {bg.codes[c] for c in combos if c in bg.codes}
            if not ws:
                empty_candidates[0] += 1
        if key in local_cache:
            return local_cache[key]
        out = []
        for u in range(len(T.inputs)):
            by_w = tables[i].get((z[i], u), {})
            succ = set()
            for w in ws:
                succ.update(by_w.get(w, ()))
            out.append(tuple(sorted(succ)))
        local_cache[key] = out
        return out

    sizes = [len(T.inputs) for T in parts]
    radix = [int(np.prod(sizes[k + 1:])) for k in range(N)]
    joint_inputs = tuple(itertools.product(*[T.inputs for T in parts]))

    def expand(z):
        locs = [local_successors(i, z) for i in range(N)]
        out = []
        for us in itertools.product(*[range(s) for s in sizes]):
            succ = [locs[i][us[i]] for i in range(N)]
            if any(not s for s in succ):
                continue
            uid = sum(u * r for u, r in zip(us, radix))
            for d in itertools.product(*succ):
                out.append((uid, d))
        return out

    initial = list(itertools.product(*[[int(s) for s in T.initial] for T in parts]))

    def run_level(frontier):
        if workers > 1 and len(frontier) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                return list(ex.map(expand, frontier))
        return [expand(z) for z in frontier]

    edges_out: dict = {}
    if full_product:
        states = list(itertools.product(*[range(T.num_states) for T in parts]))
        for z, succ in zip(states, run_level(states)):
            edges_out[z] = succ
    else:
        seen = set(initial)
        frontier = sorted(seen)
        while frontier:
            nxt = set()
            for z, succ in zip(frontier, run_level(frontier)):
                edges_out[z] = succ
                for _, d in succ:
                    if d not in seen:
                        seen.add(d)
                        nxt.add(d)
            frontier = sorted(nxt)
        states = sorted(seen)

    ids = {z: k for k, z in enumerate(states)}
    rows = [(ids[z], u, -1, ids[d]) for z in states for u, d in edges_out[z]]
    secret_sets = [set(int(s) for s in T.secret) for T in parts]
    init_sets = [set(int(s) for s in T.initial) for T in parts]
    secret = [ids[z] for z in states if all(z[i] in secret_sets[i] for i in range(N))]
    init = [ids[z] for z in states if all(z[i] in init_sets[i] for i in range(N))]

    ext = []
    layout = []
    col = 0
    for T in parts:
        sl = _block_slice(T, T.name)
        if sl is None:
            continue
        ext.append((T, sl))
        layout.append((str(T.name), col, col + sl.stop - sl.start))
        col += sl.stop - sl.start
    outputs = np.zeros((len(states), col))
    for k, z in enumerate(states):
        parts_out = [T.outputs[z[pos[str(T.name)]], sl] for T, sl in ext]
        if parts_out:
            outputs[k] = np.concatenate(parts_out)

    transitions = np.array(rows, dtype=np.int64).reshape(-1, 4)
    has_out = np.zeros(len(states), dtype=bool)
    has_out[transitions[:, 0]] = True
    report = {
        "parts": names,
        "edges": [list(e) for e in edges],
        "phi": {f"{j}->{i}": phi.get((j, i), 0.0) for j, i in edges},
        "full_product": bool(full_product),
        "product_size": int(np.prod([T.num_states for T in parts])),
        "states": len(states),
        "transitions": int(len(transitions)),
        "empty_candidate_events": int(empty_candidates[0]),
        "blocking_states": int((~has_out).sum()),
        "total_blocking": bool(len(transitions) == 0),
    }
    system = FiniteTransitionSystem(
        name=name, labels=tuple(states), initial=init, secret=secret, inputs=joint_inputs,
        transitions=transitions, outputs=outputs, output_layout=tuple(layout),
        augmented=parts[0].augmented, kind="network",
        meta={"components": names, "component_states": [[list(map(_plain, lab)) for lab in T.labels] for T in parts]},
    )
    return ComposedNetwork(system=system, parts=parts, edges=edges, phi=phi, report=report)


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def concrete_network_metadata(spec: NetworkSpec) -> dict:
    """Product initial and secret sets of the concrete network, plus its external output layout."""
    layout, col = [], 0
    for s in spec.subsystems:
        blk = s.output_block(s.name)
        if blk is not None:
            layout.append({"subsystem": s.name, "start": col, "stop": col + blk.dim})
            col += blk.dim
    secret_empty = any(s.secret_set.is_empty for s in spec.subsystems)
    return {
        "initial": [s.initial_set.to_json() for s in spec.subsystems],
        "secret": [s.secret_set.to_json() for s in spec.subsystems],
        "secret_empty": secret_empty,
        "secret_equals_state": all(s.secret_set.difference(s.state_set).is_empty
                                   and s.state_set.difference(s.secret_set).is_empty for s in spec.subsystems),
        "output_layout": layout,
        "output_dim": col,
    }
