"""Grid quantization and local finite abstractions of switched subsystems.

States are grid points of the state set (common Lyapunov function) or
triples ``(point, mode, counter)`` when the dwell-time counter is tracked.
A grid point ``x+`` is a successor of ``(x, p, w)`` when it lies within
``eta`` (infinity norm) of the mode image ``A_p x + D_p w + b_p``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import _kernels
from .model import AffineMode, StabilityCertificate, SwitchedSubsystem, span_bound
from .sets import BoxUnion, IntervalBox
from .transys import FiniteTransitionSystem

REL_TOL = 1e-9
MAX_REPORTED_BLOCKING = 100


class AbstractionError(ValueError):
    def __init__(self, message: str, box=None):
        super().__init__(message)
        self.box = box


@dataclass(frozen=True, eq=False)
class Grid:
    """Finite set ``[S]_eta``: points ``k * step`` lying in ``S``.

    ``index`` holds the integer multipliers, which identify points exactly;
    ``points`` is the reconstruction ``index * steps``.
    """

    steps: np.ndarray
    index: np.ndarray
    source: BoxUnion | IntervalBox | None = None

    @property
    def points(self) -> np.ndarray:
        return self.index * self.steps

    @property
    def dim(self) -> int:
        return len(self.steps)

    @property
    def eta(self) -> float:
        return float(self.steps.max()) if len(self.steps) else 0.0

    def __len__(self) -> int:
        return len(self.index)

    def lookup(self) -> dict[tuple, int]:
        return {tuple(int(v) for v in row): k for k, row in enumerate(self.index)}

    def ids_of(self, other: Grid) -> list[int]:
        """Positions in ``self`` of the points of ``other`` (same steps); missing points are skipped."""
        if not np.array_equal(self.steps, other.steps):
            raise AbstractionError("grids with different steps cannot be matched")
        table = self.lookup()
        out = []
        for row in other.index:
            k = table.get(tuple(int(v) for v in row))
            if k is not None:
                out.append(k)
        return sorted(out)

    def to_list(self) -> list:
        return self.points.tolist()


def _box_indices(box: IntervalBox, steps: np.ndarray) -> np.ndarray:
    axes = []
    for iv, h in zip(box.intervals, steps):
        tol = REL_TOL * h
        k_lo = math.ceil((iv.lo - tol) / h)
        k_hi = math.floor((iv.hi + tol) / h)
        ks = [k for k in range(k_lo, k_hi + 1) if iv.contains(k * h, tol)]
        axes.append(ks)
    if any(not ax for ax in axes):
        return np.zeros((0, len(steps)), dtype=np.int64)
    return np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, len(steps))


def quantize(box_set, eta) -> Grid:
    """``[S]_eta`` for a box or a union of boxes, enumerated lexicographically.

    ``eta`` is a scalar or one step per dimension; each step must not exceed
    the side length of every box in that dimension.
    """
    union = box_set if isinstance(box_set, BoxUnion) else BoxUnion.of([box_set])
    steps = np.broadcast_to(np.asarray(eta, dtype=float), (union.dim,)).copy()
    if not np.all(steps > 0) or not np.all(np.isfinite(steps)):
        raise AbstractionError(f"quantization step must be positive and finite, got {eta}")
    parts = []
    for box in union.boxes:
        for d, (iv, h) in enumerate(zip(box.intervals, steps)):
            if h > iv.width * (1 + 1e-12):
                raise AbstractionError(
                    f"step {h:g} exceeds the side length {iv.width:g} of box {box} in dimension {d}", box)
        parts.append(_box_indices(box, steps))
    if parts:
        idx = np.unique(np.vstack(parts), axis=0)
    else:
        idx = np.zeros((0, union.dim), dtype=np.int64)
    steps.setflags(write=False)
    idx.setflags(write=False)
    return Grid(steps, idx, union)


def mode_image(mode: AffineMode, x, w) -> np.ndarray:
    """``A x + D w + b``; ``w`` may be empty for subsystems without neighbours."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float)) if np.size(w) else np.zeros(mode.m)
    if x.shape[-1] != mode.n or w.shape[-1] != mode.m:
        raise ValueError(f"dimension mismatch: mode expects x in R^{mode.n}, w in R^{mode.m}")
    return mode.image(x, w)


def abstract_successors(sub: SwitchedSubsystem, state_grid: Grid, x_hat, p: int, w_hat, eta: float,
                        backend=None) -> list[tuple]:
    """Grid points within ``eta`` of the image of ``x_hat`` under mode ``p`` (0-based)."""
    x = np.atleast_2d(np.asarray(x_hat, dtype=float))
    w = np.atleast_2d(np.asarray(w_hat, dtype=float)) if np.size(w_hat) else np.zeros((1, sub.m))
    image = sub.mode_image(p, x, w)
    _, g = _kernels.ball_pairs(image, state_grid.points, eta * (1 + REL_TOL), backend=backend)
    pts = state_grid.points[np.sort(g)]
    return [tuple(float(v) for v in row) for row in pts]


def internal_input_grid(sub: SwitchedSubsystem, w_steps: Mapping[str, float] | float | None):
    """Blockwise grid of the internal-input set: block ``j`` uses its own step.

    Returns ``(points, blocks)`` or ``(None, ())`` for a subsystem without neighbours.
    """
    if not sub.input_blocks:
        return None, ()
    if w_steps is None:
        raise AbstractionError(f"subsystem {sub.name}: internal-input steps are required")
    grids, blocks, start = [], [], 0
    for blk in sub.input_blocks:
        step = w_steps if isinstance(w_steps, (int, float)) else w_steps[blk.source]
        step = float(step)
        g = quantize(blk.box, step)
        grids.append(g.points)
        blocks.append({"source": blk.source, "start": start, "stop": start + blk.dim,
                       "step": step, "box": blk.box.to_json(), "size": len(g)})
        start += blk.dim
    combos = [np.hstack(rows) for rows in itertools.product(*grids)]
    pts = np.array(combos, dtype=float).reshape(-1, start)
    return pts, tuple(blocks)


def _mode_pairs(sub, p, xs, ws, radius, grid_pts, workers, backend):
    """All (x index, w index, successor index) triples for mode ``p``."""
    nx, nw = len(xs), len(ws)
    chunks = max(1, min(workers, nx))
    bounds = np.linspace(0, nx, chunks + 1).astype(int)

    def run(k):
        a0, a1 = bounds[k], bounds[k + 1]
        X = np.repeat(xs[a0:a1], nw, axis=0)
        W = np.tile(ws, (a1 - a0, 1))
        img = sub.mode_image(p, X, W)
        i, g = _kernels.ball_pairs(img, grid_pts, radius, backend=backend)
        return i // nw + a0, i % nw, g

    if chunks == 1:
        parts = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=chunks) as ex:
            parts = list(ex.map(run, range(chunks)))
    a = np.concatenate([q[0] for q in parts])
    b = np.concatenate([q[1] for q in parts])
    g = np.concatenate([q[2] for q in parts])
    return a, b, g


def build_local_abstraction(sub: SwitchedSubsystem, cert: StabilityCertificate | None, eta: float,
                            w_steps: Mapping[str, float] | float | None = None, *,
                            augmented: bool | None = None, check_span: bool = True,
                            workers: int = 1, backend=None) -> FiniteTransitionSystem:
    """Finite abstraction of one subsystem on the grid ``[X]_eta``.

    ``augmented`` defaults to ``not cert.common_lyapunov``; augmented
    systems track ``(point, mode, counter)`` with the three dwell-time
    scenarios.  ``w_steps`` gives the internal-input grid step per
    neighbour.  Transitions whose image leaves every ``eta``-ball are
    dropped and listed in ``meta['blocking']``.
    """
    if augmented is None:
        augmented = cert is not None and not cert.common_lyapunov
    if not eta > 0:
        raise AbstractionError(f"subsystem {sub.name}: eta must be positive, got {eta}")
    if check_span:
        bound = span_bound(sub)
        if eta > bound * (1 + 1e-12):
            raise AbstractionError(
                f"subsystem {sub.name}: eta = {eta:g} exceeds min(span of secret set, span of its "
                f"complement) = {bound:g}; the secret grid would not discretize the secret set faithfully")
    grid = quantize(sub.state_set, eta)
    if len(grid) == 0:
        raise AbstractionError(f"subsystem {sub.name}: state grid is empty at eta = {eta:g}")
    init_ids = grid.ids_of(quantize(sub.initial_set, eta))
    secret_ids = grid.ids_of(quantize(sub.secret_set, eta)) if not sub.secret_set.is_empty else []

    w_pts, blocks = internal_input_grid(sub, w_steps)
    ws = w_pts if w_pts is not None else np.zeros((1, 0))
    xs = grid.points
    nx, nw, P = len(xs), len(ws), len(sub.modes)
    kd = int(sub.dwell_time) if augmented else 1
    radius = eta * (1 + REL_TOL)

    C = sub.output_matrix
    outputs_pt = xs @ C.T if C.shape[0] else np.zeros((nx, 0))
    rows, blocking, n_blocking = [], [], 0
    for p in range(P):
        a, b, g = _mode_pairs(sub, p, xs, ws, radius, xs, workers, backend)
        hit = np.zeros((nx, nw), dtype=bool)
        hit[a, b] = True
        missing = np.argwhere(~hit)
        n_blocking += len(missing)
        for ia, ib in missing[:max(0, MAX_REPORTED_BLOCKING - len(blocking))]:
            blocking.append({"state": xs[ia].tolist(), "mode": p + 1,
                             "internal_input": ws[ib].tolist() if w_pts is not None else None})
        wcol = b if w_pts is not None else np.full_like(b, -1)
        if not augmented:
            rows.append(np.column_stack([a, np.full_like(a, p), wcol, g]))
            continue
        # state id of (point k, mode q, counter l) is (k * P + q) * kd + l
        for l in range(kd):
            src = (a * P + p) * kd + l
            if l < kd - 1:
                rows.append(np.column_stack([src, np.full_like(a, p), wcol, (g * P + p) * kd + l + 1]))
                continue
            rows.append(np.column_stack([src, np.full_like(a, p), wcol, (g * P + p) * kd + l]))
            for q in range(P):
                if q != p:
                    rows.append(np.column_stack([src, np.full_like(a, p), wcol, (g * P + q) * kd]))
    transitions = np.vstack(rows) if rows else np.zeros((0, 4), dtype=np.int64)

    points = [tuple(float(v) for v in row) for row in xs]
    if augmented:
        labels = tuple((points[k], q + 1, l) for k in range(nx) for q in range(P) for l in range(kd))
        initial = [(k * P + q) * kd for k in init_ids for q in range(P)]
        secret = [(k * P + q) * kd + l for k in secret_ids for q in range(P) for l in range(kd)]
        outputs = np.repeat(outputs_pt, P * kd, axis=0)
    else:
        labels = tuple((pt, None, None) for pt in points)
        initial, secret, outputs = init_ids, secret_ids, outputs_pt

    meta = {
        "subsystem": sub.name,
        "eta": float(eta),
        "dwell_time": kd,
        "state_grid_size": nx,
        "blocking_triples": int(n_blocking),
        "blocking": blocking,
    }
    return FiniteTransitionSystem(
        name=sub.name, labels=labels, initial=initial, secret=secret, inputs=sub.mode_labels,
        transitions=transitions, outputs=outputs, internal_inputs=w_pts,
        output_layout=tuple(sub.output_layout()), internal_blocks=blocks, augmented=augmented,
        kind="local", meta=meta,
    )


def dwell_scenario(src: tuple, u: int, dst: tuple, kd: int) -> int | None:
    """Which dwell-time scenario (1, 2 or 3) a labelled transition follows, or None."""
    (_, p, l), (_, p2, l2) = src, dst
    if u != p:
        return None
    if l < kd - 1 and p2 == p and l2 == l + 1:
        return 1
    if l == kd - 1 and p2 == p and l2 == kd - 1:
        return 2
    if l == kd - 1 and p2 != p and l2 == 0:
        return 3
    return None


def check_dwell_scenarios(T: FiniteTransitionSystem, kd: int) -> list[int]:
    """Row numbers of transitions that match no dwell-time scenario (empty when all conform)."""
    bad = []
    for r, (s, u, _, d) in enumerate(T.transitions):
        if dwell_scenario(T.labels[s], T.inputs[u], T.labels[d], kd) is None:
            bad.append(r)
    return bad
