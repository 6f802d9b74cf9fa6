"""Structural transforms on drivers: induction, conjugation, suspension flows.

Each transform emits a drop-in increment stream (see streams.MatrixStream),
so the estimators run on transformed systems unchanged.  The spectrum laws
these transforms realize -- proportionality under first-return induction,
invariance under bounded conjugation, linearity of flow discretization, and
the roof-integral relation between a flow and its cross-section -- are
exercised by the transform-laws property suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drivers import GregDriver
from .errors import InvalidArgument, NonReturningSet
from .liealg import GroupElement
from .streams import MatrixCursor, MatrixStream

MAX_CYLINDER_DEPTH = 8
ABORT_THRESHOLD = 10 ** 7
_PILOT_STEPS = 4096
_PILOT_IDS = 8


@dataclass(frozen=True)
class CylinderMembership:
    """Finite union of cylinder sets over driver states.

    A point belongs to the section iff the label word starting at its time
    matches one of ``words`` (tuples of label indices, depth at most 8).
    """

    words: tuple

    def __post_init__(self):
        words = tuple(tuple(int(s) for s in w) for w in self.words)
        if not words:
            raise InvalidArgument("membership needs at least one cylinder word")
        for w in words:
            if not 1 <= len(w) <= MAX_CYLINDER_DEPTH:
                raise InvalidArgument(
                    f"cylinder depth must be in 1..{MAX_CYLINDER_DEPTH}, got {len(w)}")
        object.__setattr__(self, "words", words)

    @property
    def depth(self) -> int:
        return max(len(w) for w in self.words)

    def matches(self, window: np.ndarray) -> np.ndarray:
        """Membership of each time offset given labels (B, L); the result has
        shape (B, L - depth + 1)."""
        B, L = window.shape
        n = L - self.depth + 1
        out = np.zeros((B, n), dtype=bool)
        for w in self.words:
            hit = np.ones((B, n), dtype=bool)
            for off, sym in enumerate(w):
                hit &= window[:, off:off + n] == sym
            out |= hit
        return out


@dataclass(frozen=True)
class PilotStats:
    measure: float
    mean_return: float
    n_visits: int


class _InducedCursor(MatrixCursor):
    """Emit first-return products of the parent increments.

    Walks the parent labels once; a product accumulates between consecutive
    section visits and is flushed as one induced increment.  Per-trajectory
    emission buffers absorb the different return-time clocks.
    """

    _PARENT_BLOCK = 512

    def __init__(self, stream: "InducedStream", ids: np.ndarray):
        self.stream = stream
        self.ids = ids
        d = stream.dim
        B = ids.size
        self._fwd = stream.driver.block_cursor(ids)
        self._tail = np.empty((B, 0), dtype=np.int64)
        self._P = np.broadcast_to(np.eye(d), (B, d, d)).copy()
        self._active = np.zeros(B, dtype=bool)
        self._since = np.zeros(B, dtype=np.int64)
        self._pending = [[] for _ in range(B)]
        self.return_times = [[] for _ in range(B)]
        # backward side, created lazily
        self._bwd = None
        self._bwd_tail = None
        self._bP = None
        self._bsince = None
        self._bpending = None

    # -- forward ---------------------------------------------------------

    def _advance_parent(self):
        mem = self.stream.membership
        depth = mem.depth
        eye = np.eye(self.stream.dim)
        labs = self._fwd.forward(self._PARENT_BLOCK)
        window = np.concatenate([self._tail, labs], axis=1)
        member = mem.matches(window)
        mats = self.stream.rep_arr[window]
        usable = window.shape[1] - depth + 1
        for j in range(usable):
            hit = member[:, j]
            if np.any(hit):
                for b in np.nonzero(hit)[0]:
                    if self._active[b]:
                        self._pending[b].append(self._P[b].copy())
                        self.return_times[b].append(int(self._since[b]))
                    else:
                        self._active[b] = True
                    self._P[b] = eye.copy()
                    self._since[b] = 0
            self._P = mats[:, j] @ self._P
            self._since += 1
            if not np.all(self._active):
                # products only start at the first section visit
                self._P[~self._active] = eye
            if np.any(self._since > self.stream.abort_threshold):
                raise NonReturningSet(
                    "no return to the section within the abort threshold")
        self._tail = window[:, usable:]

    def forward(self, k: int):
        B = self.ids.size
        d = self.stream.dim
        while min(len(p) for p in self._pending) < k:
            self._advance_parent()
        out = np.empty((B, k, d, d))
        for b in range(B):
            for j in range(k):
                out[b, j] = self._pending[b][j]
            del self._pending[b][:k]
        return out

    # -- backward --------------------------------------------------------

    def _init_backward(self):
        mem = self.stream.membership
        depth = mem.depth
        d = self.stream.dim
        B = self.ids.size
        cursor = self.stream.driver.block_cursor(self.ids)
        # locate the first section visit at time >= 0 and fold the increments
        # below it into the first backward product
        self._bP = np.broadcast_to(np.eye(d), (B, d, d)).copy()
        self._bsince = np.zeros(B, dtype=np.int64)
        self._bpending = [[] for _ in range(B)]
        found = np.zeros(B, dtype=bool)
        window = cursor.forward(depth)
        guard = 0
        while not np.all(found):
            member = mem.matches(window)[:, 0]
            fresh = member & ~found
            found |= fresh
            step = ~found
            if np.any(step):
                mats = self.stream.rep_arr[window[:, 0]]
                upd = mats[step] @ self._bP[step]
                self._bP[step] = upd
                self._bsince[step] += 1
            window = np.concatenate([window[:, 1:], cursor.forward(1)], axis=1)
            guard += 1
            if guard > self.stream.abort_threshold:
                raise NonReturningSet(
                    "no section visit at nonnegative times within the abort threshold")
        # history of labels just above the backward edge (times 0..depth-2)
        self._bwd = self.stream.driver.block_cursor(self.ids)
        if depth > 1:
            anchor = self.stream.driver.block_cursor(self.ids)
            self._bwd_hist = anchor.forward(depth - 1)
        else:
            self._bwd_hist = np.zeros((B, 0), dtype=np.int64)

    def _advance_parent_backward(self):
        mem = self.stream.membership
        depth = mem.depth
        labs = self._bwd.backward(self._PARENT_BLOCK)  # times -1, -2, ...
        mats = self.stream.rep_arr[labs]
        B = labs.shape[0]
        for j in range(labs.shape[1]):
            self._bP = self._bP @ mats[:, j]
            self._bsince += 1
            if depth > 1:
                window = np.concatenate([labs[:, j:j + 1], self._bwd_hist], axis=1)
            else:
                window = labs[:, j:j + 1]
            hit = mem.matches(window)[:, 0]
            for b in np.nonzero(hit)[0]:
                self._bpending[b].append(self._bP[b].copy())
                self._bP[b] = np.eye(self.stream.dim)
                self._bsince[b] = 0
            if depth > 1:
                self._bwd_hist = window[:, :-1]
            if np.any(self._bsince > self.stream.abort_threshold):
                raise NonReturningSet(
                    "no backward return to the section within the abort threshold")

    def backward(self, k: int):
        if self._bwd is None:
            self._init_backward()
        B = self.ids.size
        d = self.stream.dim
        while min(len(p) for p in self._bpending) < k:
            self._advance_parent_backward()
        out = np.empty((B, k, d, d))
        for b in range(B):
            for j in range(k):
                out[b, j] = self._bpending[b][j]
            del self._bpending[b][:k]
        return out


class InducedStream(MatrixStream):
    """First-return (induced) increment stream over a cylinder section."""

    def __init__(self, driver: GregDriver, membership: CylinderMembership,
                 rep=None, abort_threshold: int = ABORT_THRESHOLD):
        self.driver = driver
        self.membership = membership
        self.rep_arr = driver.element_array(rep)
        self.model = driver.model
        self.abort_threshold = abort_threshold
        if np.any(np.array([max(w) for w in membership.words]) >= driver.n_labels):
            raise InvalidArgument("membership word uses an unknown label index")

    def open(self, ids):
        return _InducedCursor(self, np.asarray(ids, dtype=np.int64))

    def pilot_stats(self, n_steps: int = _PILOT_STEPS,
                    n_ids: int = _PILOT_IDS, id_offset: int = 0) -> PilotStats:
        """Empirical section measure and mean return time over a pilot run."""
        mem = self.membership
        ids = np.arange(id_offset, id_offset + n_ids, dtype=np.int64)
        cursor = self.driver.block_cursor(ids)
        labs = cursor.forward(n_steps + mem.depth - 1)
        member = mem.matches(labs)
        measure = float(member.mean())
        gaps = []
        for b in range(n_ids):
            times = np.nonzero(member[b])[0]
            if times.size >= 2:
                gaps.extend(np.diff(times).tolist())
        mean_return = float(np.mean(gaps)) if gaps else float("inf")
        return PilotStats(measure=measure, mean_return=mean_return,
                          n_visits=int(member.sum()))


def induce(parent: GregDriver, membership, rep=None,
           abort_threshold: int = ABORT_THRESHOLD,
           min_measure: float = 1e-3) -> InducedStream:
    """Kakutani induction: first-return increments over a cylinder section.

    A pilot run estimates the section measure; configurations below
    ``min_measure`` are rejected up front rather than allowed to stall.
    """
    if not isinstance(membership, CylinderMembership):
        membership = CylinderMembership(tuple(membership))
    stream = InducedStream(parent, membership, rep, abort_threshold)
    pilot = stream.pilot_stats()
    if pilot.measure < min_measure:
        raise InvalidArgument(
            f"section measure {pilot.measure:.2e} below the {min_measure:.0e} floor")
    return stream


class _ConjugatedCursor(MatrixCursor):
    def __init__(self, stream: "ConjugatedStream", ids: np.ndarray):
        self.stream = stream
        self._fwd = stream.driver.block_cursor(ids)
        self._look = self._fwd.forward(1)[:, 0]
        anchor = stream.driver.block_cursor(ids)
        self._blook = anchor.forward(1)[:, 0]
        self._bwd = stream.driver.block_cursor(ids)

    def forward(self, k):
        labs = self._fwd.forward(k)
        seq = np.concatenate([self._look[:, None], labs], axis=1)
        self._look = seq[:, -1]
        return self.stream.pair_table[seq[:, :-1], seq[:, 1:]]

    def backward(self, k):
        labs = self._bwd.backward(k)
        above = np.concatenate([self._blook[:, None], labs[:, :-1]], axis=1)
        self._blook = labs[:, -1]
        return self.stream.pair_table[labs, above]


class ConjugatedStream(MatrixStream):
    """Cocycle conjugation by a bounded per-state table.

    The emitted increment at time t is s(state at t+1) F(t) s(state at t)^-1.
    n-step products of the output telescope to s(T^n x) F_n(x) s(x)^-1
    exactly, so the spectrum is unchanged.
    """

    def __init__(self, driver: GregDriver, conjugator, rep=None):
        self.driver = driver
        self.rep_arr = driver.element_array(rep)
        self.model = driver.model
        s = [np.asarray(g.entries if isinstance(g, GroupElement) else g, dtype=float)
             for g in conjugator]
        if len(s) != driver.n_labels:
            raise InvalidArgument("conjugator table must cover every driver state")
        s_inv = [np.linalg.inv(m) for m in s]
        L, d = driver.n_labels, driver.model.dim
        table = np.empty((L, L, d, d))
        for i in range(L):  # state at t
            for j in range(L):  # state at t+1
                table[i, j] = s[j] @ self.rep_arr[i] @ s_inv[i]
        self.pair_table = table
        self.conjugator = [np.array(m) for m in s]

    def open(self, ids):
        return _ConjugatedCursor(self, np.asarray(ids, dtype=np.int64))


def conjugate(driver: GregDriver, conjugator, rep=None) -> ConjugatedStream:
    """Conjugated increment stream D(x) = s(Tx) F(x) s(x)^-1 for a state table s."""
    return ConjugatedStream(driver, conjugator, rep)


@dataclass(frozen=True)
class SuspensionGreg:
    """Suspension flow data: base driver, per-state roof values, floor 2*delta.

    The roof is constant on each label's cylinder, so crossing arithmetic is
    exact.  ``delta`` certifies inf(roof) >= 2*delta > 0.
    """

    driver: GregDriver
    roof: tuple
    delta: float

    def __post_init__(self):
        roof = np.array(self.roof, dtype=float)
        if roof.shape != (self.driver.n_labels,):
            raise InvalidArgument("need one roof value per driver state")
        if self.delta <= 0 or np.any(roof < 2 * self.delta):
            raise InvalidArgument("roof must satisfy roof >= 2*delta with delta > 0")
        object.__setattr__(self, "roof", tuple(roof.tolist()))

    @property
    def roof_array(self) -> np.ndarray:
        return np.array(self.roof, dtype=float)


class _DiscretizedCursor(MatrixCursor):
    """Time-t map of the suspension flow, started on the section.

    Every parent increment is one roof crossing; crossings are bucketed into
    consecutive length-t flow windows (right-closed), and each window's
    ordered product is one emitted increment -- the identity if no crossing
    fell inside it.
    """

    _PARENT_BLOCK = 512

    def __init__(self, stream: "DiscretizedFlowStream", ids: np.ndarray):
        self.stream = stream
        self.ids = ids
        B = ids.size
        d = stream.dim
        self._fwd = stream.driver.block_cursor(ids)
        self._bwd = stream.driver.block_cursor(ids)
        eye = np.broadcast_to(np.eye(d), (B, d, d)).copy()
        self._P = eye.copy()
        self._cum = np.zeros(B)
        self._bucket = np.zeros(B, dtype=np.int64)
        self._emitted = {b: {} for b in range(B)}
        self._next_out = 0
        self._bP = eye.copy()
        self._bcum = np.zeros(B)
        self._bbucket = np.ones(B, dtype=np.int64)
        self._bemitted = {b: {} for b in range(B)}
        self._bnext_out = 1

    def _flush(self, b, bucket, back: bool):
        store = self._bemitted[b] if back else self._emitted[b]
        if back:
            store[bucket] = self._bP[b].copy()
            self._bP[b] = np.eye(self.stream.dim)
        else:
            store[bucket] = self._P[b].copy()
            self._P[b] = np.eye(self.stream.dim)

    def _advance(self):
        t = self.stream.t
        roof = self.stream.roof
        labs = self._fwd.forward(self._PARENT_BLOCK)
        mats = self.stream.rep_arr[labs]
        r = roof[labs]
        for j in range(labs.shape[1]):
            self._cum += r[:, j]
            new_bucket = np.ceil(self._cum / t).astype(np.int64) - 1
            changed = np.nonzero(new_bucket != self._bucket)[0]
            for b in changed:
                self._flush(b, int(self._bucket[b]), back=False)
            self._bucket = new_bucket
            self._P = mats[:, j] @ self._P

    def forward(self, k: int):
        B = self.ids.size
        d = self.stream.dim
        hi = self._next_out + k  # buckets [next_out, hi)
        while np.min(self._bucket) < hi:
            self._advance()
        out = np.empty((B, k, d, d))
        for b in range(B):
            store = self._emitted[b]
            for j in range(k):
                out[b, j] = store.pop(self._next_out + j, np.eye(d))
        self._next_out = hi
        return out

    def _advance_back(self):
        t = self.stream.t
        roof = self.stream.roof
        labs = self._bwd.backward(self._PARENT_BLOCK)  # times -1, -2, ...
        mats = self.stream.rep_arr[labs]
        r = roof[labs]
        for j in range(labs.shape[1]):
            new_bucket = np.floor(self._bcum / t).astype(np.int64) + 1
            changed = np.nonzero(new_bucket != self._bbucket)[0]
            for b in changed:
                self._flush(b, int(self._bbucket[b]), back=True)
            self._bbucket = new_bucket
            self._bP = self._bP @ mats[:, j]
            self._bcum += r[:, j]

    def backward(self, k: int):
        B = self.ids.size
        d = self.stream.dim
        hi = self._bnext_out + k
        while np.min(self._bbucket) < hi:
            self._advance_back()
        out = np.empty((B, k, d, d))
        for b in range(B):
            store = self._bemitted[b]
            for j in range(k):
                out[b, j] = store.pop(self._bnext_out + j, np.eye(d))
        self._bnext_out = hi
        return out


class DiscretizedFlowStream(MatrixStream):
    """Increments of the time-t map of a suspension flow."""

    def __init__(self, susp: SuspensionGreg, t: float, rep=None):
        if t <= 0:
            raise InvalidArgument("discretization time must be positive")
        self.susp = susp
        self.driver = susp.driver
        self.rep_arr = susp.driver.element_array(rep)
        self.model = susp.driver.model
        self.roof = susp.roof_array
        self.t = float(t)

    def open(self, ids):
        return _DiscretizedCursor(self, np.asarray(ids, dtype=np.int64))


def discretize_flow(susp: SuspensionGreg, t: float, rep=None) -> DiscretizedFlowStream:
    """Time-t map of the suspension flow as a drop-in increment stream."""
    return DiscretizedFlowStream(susp, t, rep)


@dataclass(frozen=True)
class RoofIntegralEstimate:
    mean: float
    stderr: float
    n_samples: int


def roof_integral(susp: SuspensionGreg, n_steps: int = _PILOT_STEPS,
                  n_ids: int = _PILOT_IDS, id_offset: int = 0) -> RoofIntegralEstimate:
    """Birkhoff estimate of the roof integral over the base measure."""
    ids = np.arange(id_offset, id_offset + n_ids, dtype=np.int64)
    labs = susp.driver.block_cursor(ids).forward(n_steps)
    vals = susp.roof_array[labs]
    per_traj = vals.mean(axis=1)
    mean = float(per_traj.mean())
    stderr = float(per_traj.std(ddof=1) / math.sqrt(n_ids)) if n_ids > 1 else 0.0
    return RoofIntegralEstimate(mean=mean, stderr=stderr, n_samples=n_steps * n_ids)


def cross_section_greg(susp: SuspensionGreg, rep=None,
                       n_pilot: int = _PILOT_STEPS):
    """The integer system read on the flow's cross-section.

    Flowing from a section point for exactly its roof value crosses the roof
    once, so the section increment is the base increment itself; the second
    return value is the Birkhoff estimate of the roof integral which relates
    the section spectrum to the flow spectrum.
    """
    from .streams import DriverStream

    stream = DriverStream(susp.driver, rep)
    return stream, roof_integral(susp, n_steps=n_pilot)
