"""One discrete time step of a brain area driven by a sensory fiber."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import Area, Fiber, SparseWeights


class InhibitedAreaError(RuntimeError):
    pass


@dataclass
class StepReport:
    cap: np.ndarray
    first_timers: int
    synaptic_inputs: np.ndarray | None = None
    prev_overlap: int = 0

    def to_json(self, step):
        return json.dumps({"step": step, "first_timers": int(self.first_timers),
                           "cap_overlap_prev": int(self.prev_overlap)})


@dataclass
class StepInput:
    sensory_firing: np.ndarray
    fiber: Fiber
    area: Area

    def __post_init__(self):
        x = np.asarray(self.sensory_firing, dtype=np.float64)
        if x.shape != (self.fiber.n_src,):
            raise ValueError(f"sensory vector has shape {x.shape}, fiber expects ({self.fiber.n_src},)")
        if x.size and (x.min() < 0 or x.max() > 1):
            raise ValueError("sensory activations must lie in [0, 1]")
        self.sensory_firing = x


def synaptic_input(area: Area, fiber: Fiber | None, sensory_firing) -> np.ndarray:
    if area.inhibited:
        raise InhibitedAreaError("synaptic input requested for an inhibited area")
    si = np.zeros(area.n)
    if fiber is not None:
        if fiber.n_tgt != area.n:
            raise ValueError("fiber target size does not match area")
        si += fiber.weights.drive(sensory_firing)
    if len(area.firing):
        si += area.recurrent.drive_from(area.firing)
    return si


def k_cap(si, k) -> np.ndarray:
    """Indices of the k largest entries, ties going to the lowest index.

    Returns a sorted int64 array.  Uses a partial partition, not a full sort.
    """
    si = np.asarray(si)
    n = si.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"cap size {k} outside [0, {n}]")
    if k == n:
        return np.arange(n, dtype=np.int64)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    threshold = np.partition(si, n - k)[n - k]
    above = np.flatnonzero(si > threshold)
    tied = np.flatnonzero(si == threshold)[: k - above.size]
    return np.union1d(above, tied).astype(np.int64)


def k_cap_rows(si, k) -> np.ndarray:
    """Row-wise ``k_cap`` for a 2-D batch; returns an (rows, k) index array."""
    si = np.asarray(si)
    rows, n = si.shape
    if k == n:
        return np.broadcast_to(np.arange(n), (rows, n)).copy()
    thresh = np.partition(si, n - k, axis=1)[:, n - k][:, None]
    above = si > thresh
    # lowest-index tie-break: take tied entries in index order until k are chosen
    tied = si == thresh
    need = k - above.sum(axis=1, keepdims=True)
    chosen = above | (tied & (np.cumsum(tied, axis=1) <= need))
    return np.nonzero(chosen)[1].reshape(rows, k)


def hebbian_update(weights: SparseWeights, pre_firing, post_cap, beta) -> None:
    """Multiply w(j, i) by (1 + beta * x_j) for every edge with i in the cap.

    ``pre_firing`` is either an index set (binary activity) or a full
    activation vector of length n_src with entries in [0, 1].
    """
    if beta == 0:
        return
    post = np.zeros(weights.n_tgt, dtype=bool)
    post[np.asarray(post_cap, dtype=np.intp)] = True
    pre = np.asarray(pre_firing)
    if pre.shape == (weights.n_src,) and pre.dtype.kind == "f":
        x = pre
    else:
        x = np.zeros(weights.n_src)
        x[pre.astype(np.intp)] = 1.0
    mask = post[weights.targets] & (x[weights.indices] > 0)
    weights.data[mask] *= 1.0 + beta * x[weights.indices[mask]]


def area_step(step_input: StepInput, beta, plastic=True, keep_inputs=False,
              bias=None) -> StepReport:
    """Advance the area by one step.

    The cap is chosen from pre-step weights and the previous firing set; only
    then are the fiber (stimulus -> cap) and recurrent (previous cap -> cap)
    synapses strengthened.  ``bias`` is an optional additive term on the
    synaptic input (an array, or a callable of the raw input), used by the
    large-area feature extractor.
    """
    area, fiber, x = step_input.area, step_input.fiber, step_input.sensory_firing
    if area.inhibited:
        raise InhibitedAreaError("cannot step an inhibited area")
    si = synaptic_input(area, fiber, x)
    if bias is not None:
        si = si + (bias(si) if callable(bias) else bias)
    cap = k_cap(si, area.k)
    prev = area.firing
    first = int((~area.ever_fired[cap]).sum())
    overlap = int(np.intersect1d(prev, cap, assume_unique=True).size)
    if plastic and beta > 0:
        hebbian_update(fiber.weights, x, cap, beta)
        if len(prev):
            hebbian_update(area.recurrent, prev, cap, beta)
    area.firing = cap
    area.ever_fired[cap] = True
    return StepReport(cap=cap, first_timers=first,
                      synaptic_inputs=si if keep_inputs else None, prev_overlap=overlap)


def inhibit(area: Area) -> None:
    area.inhibited = True
    area.firing = np.zeros(0, dtype=np.int64)


def disinhibit(area: Area) -> None:
    area.inhibited = False


def reset_phase(area: Area) -> None:
    """Start a fresh training phase: forget firing history, keep weights."""
    area.ever_fired[:] = False
    area.firing = np.zeros(0, dtype=np.int64)


@dataclass
class ConvergenceTrace:
    """First-timer counts and consecutive-cap overlaps over one phase."""
    first_timers: list = field(default_factory=list)
    prev_overlap: list = field(default_factory=list)

    def record(self, report: StepReport):
        self.first_timers.append(int(report.first_timers))
        self.prev_overlap.append(int(report.prev_overlap))

    def converged_at(self):
        """First step (1-based) after which no first-timer ever appears, or None."""
        ft = self.first_timers
        for t in range(1, len(ft)):
            if all(v == 0 for v in ft[t:]):
                return t + 1
        return None

    def to_jsonl(self):
        return "".join(json.dumps({"step": t + 1, "first_timers": f, "cap_overlap_prev": o}) + "\n"
                       for t, (f, o) in enumerate(zip(self.first_timers, self.prev_overlap)))
