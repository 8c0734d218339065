"""Generator for the scalar ring benchmark (room-temperature style network).

Subsystem ``i`` reads the state of subsystem ``i-1`` (subsystem 1 reads the
last one) through ``x+ = a_p x + d w + b_p``.  Only the last state is
externally visible, so the network output is ``[0, ..., 0, x_n]``.
"""

from __future__ import annotations

A_VALUES = ("0.05", "0.1")
B_VALUES = ("0.1", "0.15")
D_VALUE = "0.05"
STATE_SET = "(0, 0.6)"
PINNED = {"kappa": 0.1, "rho": 0.06, "gamma_hat": 1.05, "alpha_bar": 1.0, "alpha": 1.0}


def ring_document(n: int = 3, *, pinned: bool = True, name: str | None = None) -> dict:
    if n < 1:
        raise ValueError("ring needs at least one subsystem")
    names = [str(i) for i in range(1, n + 1)]
    subs, adjacency, secrets, outputs = [], [], {}, {}
    for k, nm in enumerate(names):
        src = names[k - 1] if n > 1 else None
        modes = [{"A": [[a]], "D": [[D_VALUE]] if src else [], "b": [b]} for a, b in zip(A_VALUES, B_VALUES)]
        entry = {"name": nm, "state_set": STATE_SET, "initial_set": STATE_SET, "modes": modes}
        if src:
            entry["internal_inputs"] = {src: STATE_SET}
            adjacency.append([src, nm])
        subs.append(entry)
        if k == 0:
            secrets[nm] = ["(0, 0.2]"]
        elif k == 1:
            secrets[nm] = ["[0.4, 0.6)"]
        else:
            secrets[nm] = [STATE_SET]
        out = {nm: [[1 if k == n - 1 else 0]]}
        if n > 1:
            out[names[(k + 1) % n]] = [[1]]
        outputs[nm] = out
    doc = {
        "format_version": 1,
        "name": name or f"ring{n}",
        "subsystems": subs,
        "adjacency": adjacency,
        "dwell_time": 1,
        "secrets": secrets,
        "outputs": outputs,
    }
    if pinned:
        doc["aggregates"] = {nm: dict(PINNED) for nm in names}
    return doc
