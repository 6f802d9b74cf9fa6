"""Base ergodic systems realized as seeded streams of group increments.

A driver is an ergodic base system together with a labelling of its points by
group elements; a trajectory is the bi-infinite increment sequence read along
one orbit.  Labels at every signed time are pure functions of
(driver parameters, seed, trajectory id), so forward and backward traversal
are consistent by construction and trajectories parallelize trivially.

Three base systems are shipped: i.i.d. draws from a finite support, a
stationary two-sided Markov shift, and an irrational circle rotation with a
piecewise-constant label map (deterministic; used for zero-drift scenarios
with compact image).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import InvalidArgument
from .liealg import GroupElement, GroupModel

_INIT_CHANNEL = 1
_BURNIN_CHANNEL = 2
_MARKOV_BURNIN = 1000
DEFAULT_MAX_HORIZON = 10 ** 7


def _common_model(elements) -> GroupModel:
    if not elements:
        raise InvalidArgument("driver needs at least one group element label")
    model = elements[0].model
    for g in elements:
        if g.model != model:
            raise InvalidArgument("all driver labels must share one group model")
        g.validate()
    return model


class GregDriver:
    """Shared surface of the base-system drivers (see subclasses).

    Subclasses implement ``initial_states`` plus the two directed label
    methods; everything else (cursors, representation tables) is generic.
    """

    elements: tuple
    seed: int
    max_horizon: int

    @property
    def model(self) -> GroupModel:
        return self._model

    @property
    def n_labels(self) -> int:
        return len(self.elements)

    def element_array(self, rep=None) -> np.ndarray:
        """Labels as a stacked (L, d, d) array, optionally re-mapped by a
        representation table (sequence or dict keyed by label index)."""
        if rep is None:
            mats = [g.entries for g in self.elements]
        elif isinstance(rep, dict):
            mats = [np.asarray(rep[i].entries if isinstance(rep[i], GroupElement)
                               else rep[i], dtype=float)
                    for i in range(self.n_labels)]
        else:
            if len(rep) != self.n_labels:
                raise InvalidArgument(
                    f"representation table has {len(rep)} entries, driver has "
                    f"{self.n_labels} labels")
            mats = [np.asarray(g.entries if isinstance(g, GroupElement) else g,
                               dtype=float) for g in rep]
        return np.stack(mats)

    # -- label streams -------------------------------------------------
    #
    # States anchor the Markov chain; stateless drivers pass them through.
    # forward_labels serves times t0 .. t0+k-1 given the state at t0 and
    # returns the state at t0+k; backward_labels serves t0-1 .. t0-k given
    # the state at t0 and returns the state at t0-k.

    def initial_states(self, ids: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def forward_labels(self, ids, t0: int, k: int, states):
        raise NotImplementedError

    def backward_labels(self, ids, t0: int, k: int, states):
        raise NotImplementedError

    def block_cursor(self, ids) -> "BlockCursor":
        return BlockCursor(self, np.asarray(ids, dtype=np.int64))

    def cursor(self, trajectory_id: int) -> "TrajectoryCursor":
        return TrajectoryCursor(self, int(trajectory_id))


@dataclass(frozen=True)
class IIDDriver(GregDriver):
    """Independent draws from a finite support with fixed probabilities."""

    pairs: tuple
    seed: int = 0
    max_horizon: int = DEFAULT_MAX_HORIZON

    def __post_init__(self):
        pairs = tuple((g, float(p)) for g, p in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        elements = tuple(g for g, _ in pairs)
        probs = np.array([p for _, p in pairs], dtype=float)
        if np.any(probs < 0):
            raise InvalidArgument("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidArgument(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "_model", _common_model(elements))
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    def _draw(self, ids, times):
        keys = rng.stream_keys(self.seed, ids)
        u = rng.uniform(keys[:, None], np.asarray(times, dtype=np.int64)[None, :])
        lab = np.searchsorted(self._cum, u.ravel(), side="right")
        lab = np.minimum(lab, len(self.elements) - 1).astype(np.int64)
        return lab.reshape(len(ids), len(times))

    def initial_states(self, ids):
        return self._draw(ids, np.zeros(1, dtype=np.int64))[:, 0]

    def forward_labels(self, ids, t0, k, states):
        times = np.arange(t0, t0 + k, dtype=np.int64)
        return self._draw(ids, times), states

    def backward_labels(self, ids, t0, k, states):
        times = np.arange(t0 - 1, t0 - k - 1, -1, dtype=np.int64)
        return self._draw(ids, times), states


def _chain_period(support: np.ndarray) -> int:
    """Period of an irreducible chain: gcd of (level[u] + 1 - level[v]) over edges."""
    n = support.shape[0]
    level = np.full(n, -1, dtype=int)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(support[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    for u in range(n):
        for v in np.nonzero(support[u])[0]:
            g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g)


def _strongly_connected(support: np.ndarray) -> bool:
    def reach(adj):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(adj[u])[0]:
                if v not in seen:
                    seen.add(int(v))
                    stack.append(int(v))
        return len(seen) == adj.shape[0]

    return reach(support) and reach(support.T)


@dataclass(frozen=True)
class MarkovDriver(GregDriver):
    """Stationary two-sided Markov shift over finitely many states.

    The label at time t is the chain state at time t.  Backward steps use
    the time-reversed kernel, so one counter-based uniform per signed time
    index determines the whole bi-infinite path.  The chain must be
    irreducible and aperiodic; this is verified at construction.
    """

    transition: tuple
    state_elements: tuple
    initial_law: tuple | None = None
    seed: int = 0
    max_horizon: int = DEFAULT_MAX_HORIZON

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        n = P.shape[0]
        if P.ndim != 2 or P.shape != (n, n):
            raise InvalidArgument("transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidArgument("transition matrix rows must be probability vectors")
        if len(self.state_elements) != n:
            raise InvalidArgument("need exactly one group element per state")
        support = P > 0
        if not _strongly_connected(support):
            raise InvalidArgument("chain is not irreducible")
        if _chain_period(support) != 1:
            raise InvalidArgument("chain is not aperiodic")
        object.__setattr__(self, "transition", tuple(map(tuple, P.tolist())))
        object.__setattr__(self, "_P", P)
        elements = tuple(self.state_elements)
        object.__setattr__(self, "_model", _common_model(elements))
        object.__setattr__(self, "elements", elements)

        if self.initial_law is not None:
            pi = np.array(self.initial_law, dtype=float)
            if pi.shape != (n,) or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
                raise InvalidArgument("initial law must be a probability vector")
            if np.linalg.norm(pi @ P - pi, ord=1) > 1e-9:
                raise InvalidArgument("supplied initial law is not stationary")
            object.__setattr__(self, "initial_law", tuple(pi.tolist()))
        else:
            pi = self._stationary_from_eigen(P)
        object.__setattr__(self, "_pi", pi)
        # reversed kernel: P_rev[j, i] = pi[i] P[i, j] / pi[j]
        rev = (P.T * pi[None, :]) / pi[:, None]
        object.__setattr__(self, "_rev_cum", np.cumsum(rev, axis=1))
        object.__setattr__(self, "_cum", np.cumsum(P, axis=1))

    @staticmethod
    def _stationary_from_eigen(P: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eig(P.T)
        k = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.abs(np.real(vecs[:, k]))
        return pi / pi.sum()

    @property
    def stationary_law(self) -> np.ndarray:
        return self._pi.copy()

    @staticmethod
    def _step(states, u, cum):
        rows = cum[states]
        return (u[:, None] > rows[:, :-1]).sum(axis=1).astype(np.int64)

    def initial_states(self, ids):
        keys = rng.stream_keys(self.seed, ids)
        zeros = np.zeros(len(ids), dtype=np.int64)
        n = self._P.shape[0]
        if self.initial_law is not None:
            u = rng.uniform(keys, zeros, channel=_INIT_CHANNEL)
            cum = np.cumsum(np.array(self.initial_law))
            st = np.searchsorted(cum, u, side="right")
            return np.minimum(st, n - 1).astype(np.int64)
        # uniform start, fixed burn-in discarded
        u0 = rng.uniform(keys, zeros, channel=_INIT_CHANNEL)
        states = np.minimum((u0 * n).astype(np.int64), n - 1)
        for t in range(_MARKOV_BURNIN):
            u = rng.uniform(keys, np.full(len(ids), t, dtype=np.int64),
                            channel=_BURNIN_CHANNEL)
            states = self._step(states, u, self._cum)
        return states

    def forward_labels(self, ids, t0, k, states):
        keys = rng.stream_keys(self.seed, ids)
        out = np.empty((len(ids), k), dtype=np.int64)
        cur = states
        for j in range(k):
            out[:, j] = cur
            t = np.full(len(ids), t0 + j + 1, dtype=np.int64)
            cur = self._step(cur, rng.uniform(keys, t), self._cum)
        return out, cur

    def backward_labels(self, ids, t0, k, states):
        keys = rng.stream_keys(self.seed, ids)
        out = np.empty((len(ids), k), dtype=np.int64)
        cur = states
        for j in range(k):
            t = np.full(len(ids), t0 - 1 - j, dtype=np.int64)
            cur = self._step(cur, rng.uniform(keys, t), self._rev_cum)
            out[:, j] = cur
        return out, cur


@dataclass(frozen=True)
class RotationDriver(GregDriver):
    """Irrational circle rotation with a piecewise-constant label map.

    Deterministic base dynamics; the only randomness is the initial point.
    Shipped for zero-drift tests with compact image (it does not satisfy the
    independence assumptions the positivity theory needs).
    """

    alpha: float
    breakpoints: tuple
    segment_elements: tuple
    seed: int = 0
    max_horizon: int = DEFAULT_MAX_HORIZON

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size == 0 or bp[0] != 0.0:
            raise InvalidArgument("breakpoints must start at 0.0")
        if (bp.size > 1 and np.any(np.diff(bp) <= 0)) or bp[-1] >= 1.0:
            raise InvalidArgument("breakpoints must be strictly increasing in [0, 1)")
        if len(self.segment_elements) != bp.size:
            raise InvalidArgument("need exactly one group element per segment")
        elements = tuple(self.segment_elements)
        object.__setattr__(self, "_model", _common_model(elements))
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "_bp", bp)

    def initial_points(self, ids) -> np.ndarray:
        keys = rng.stream_keys(self.seed, ids)
        return rng.uniform(keys, np.zeros(len(ids), dtype=np.int64),
                           channel=_INIT_CHANNEL)

    def _classify(self, ids, times):
        x0 = self.initial_points(ids)
        pts = np.mod(x0[:, None] + times[None, :].astype(float) * self.alpha, 1.0)
        lab = np.searchsorted(self._bp, pts.ravel(), side="right") - 1
        return lab.reshape(len(ids), len(times)).astype(np.int64)

    def initial_states(self, ids):
        return self._classify(ids, np.zeros(1, dtype=np.int64))[:, 0]

    def forward_labels(self, ids, t0, k, states):
        times = np.arange(t0, t0 + k, dtype=np.int64)
        return self._classify(ids, times), states

    def backward_labels(self, ids, t0, k, states):
        times = np.arange(t0 - 1, t0 - k - 1, -1, dtype=np.int64)
        return self._classify(ids, times), states


class BlockCursor:
    """Vectorized two-edge cursor over a batch of trajectories.

    ``forward(k)`` serves labels at the next k times on the forward edge
    (starting at time 0); ``backward(k)`` serves labels at times -1, -2, ...
    on the backward edge.  The edges are independent, which matches the
    estimators' access pattern (backward burn-in, then forward averaging).
    """

    def __init__(self, driver: GregDriver, ids: np.ndarray):
        self.driver = driver
        self.ids = ids
        init = driver.initial_states(ids)
        self._fwd_time = 0
        self._bwd_time = 0
        self._fwd_state = init
        self._bwd_state = init

    def forward(self, k: int) -> np.ndarray:
        lab, state = self.driver.forward_labels(self.ids, self._fwd_time, k,
                                                self._fwd_state)
        self._fwd_time += k
        self._fwd_state = state
        return lab

    def backward(self, k: int) -> np.ndarray:
        lab, state = self.driver.backward_labels(self.ids, self._bwd_time, k,
                                                 self._bwd_state)
        self._bwd_time -= k
        self._bwd_state = state
        return lab


class TrajectoryCursor:
    """Single-trajectory cursor with a signed time index.

    ``step_forward`` returns the increment at the current time and advances;
    ``step_backward`` retreats and returns the increment just stepped over,
    so the two traverse one bi-infinite sequence in opposite directions.
    Labels are cached, so any traversal order replays identical values.
    """

    def __init__(self, driver: GregDriver, trajectory_id: int):
        self.driver = driver
        self.trajectory_id = trajectory_id
        self.time = 0
        self._ids = np.array([trajectory_id], dtype=np.int64)
        self._labels: dict[int, int] = {}
        init = driver.initial_states(self._ids)
        self._lo, self._hi = 0, 0
        self._lo_state, self._hi_state = init, init

    def _extend_to(self, t: int) -> None:
        if t >= self._hi:
            k = t + 1 - self._hi
            lab, state = self.driver.forward_labels(self._ids, self._hi, k,
                                                    self._hi_state)
            for j in range(k):
                self._labels[self._hi + j] = int(lab[0, j])
            self._hi += k
            self._hi_state = state
        elif t < self._lo:
            k = self._lo - t
            lab, state = self.driver.backward_labels(self._ids, self._lo, k,
                                                     self._lo_state)
            for j in range(k):
                self._labels[self._lo - 1 - j] = int(lab[0, j])
            self._lo -= k
            self._lo_state = state

    def label_at(self, t: int) -> int:
        if abs(t) > self.driver.max_horizon:
            raise InvalidArgument(f"time index {t} exceeds the configured horizon")
        if t not in self._labels:
            self._extend_to(t)
        return self._labels[t]

    def element_at(self, t: int) -> GroupElement:
        return self.driver.elements[self.label_at(t)]

    def step_forward(self) -> GroupElement:
        g = self.element_at(self.time)
        self.time += 1
        return g

    def step_backward(self) -> GroupElement:
        self.time -= 1
        return self.element_at(self.time)

    def cocycle_product(self, n: int, base: int = 0) -> GroupElement:
        """The n-step cocycle value at the shifted base point.

        Positive n multiplies the increments at times base+n-1, ..., base
        (newest on the left); n = 0 is the identity; negative n multiplies
        the inverse increments at times base+n, ..., base-1 oldest-first.
        """
        if abs(n) + abs(base) > self.driver.max_horizon:
            raise InvalidArgument("requested horizon exceeds the configured maximum")
        model = self.driver.model
        out = np.eye(model.dim)
        if n > 0:
            for t in range(base + n - 1, base - 1, -1):
                out = out @ self.element_at(t).entries
        elif n < 0:
            for t in range(base + n, base):
                out = out @ np.linalg.inv(self.element_at(t).entries)
        return GroupElement(model, out)


def sample_initial(driver: GregDriver, trajectory_id: int) -> TrajectoryCursor:
    """Deterministic per-trajectory cursor; distinct ids give independent streams."""
    return driver.cursor(trajectory_id)


def step_forward(cursor: TrajectoryCursor) -> GroupElement:
    return cursor.step_forward()


def step_backward(cursor: TrajectoryCursor) -> GroupElement:
    return cursor.step_backward()


def cocycle_product(cursor: TrajectoryCursor, n: int, base: int = 0) -> GroupElement:
    return cursor.cocycle_product(n, base)
