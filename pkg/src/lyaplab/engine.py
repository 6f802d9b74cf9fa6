"""Lyapunov spectrum estimators and the diagnostic criteria built on them.

Three estimators share one batched orthogonal-triangular recursion:

* ``estimate_kingman_qr`` -- the subadditive/ergodic limit of normalized
  Cartan projections, realized as the classical QR method: push an
  orthonormal frame through the cocycle, refactor every step, accumulate
  the log diagonal.
* ``estimate_iwasawa_formula`` -- the spectrum as the space average of the
  Iwasawa cocycle evaluated along the equivariant flag section; the flag is
  obtained by backward tracking and then advanced by the cocycle itself,
  so only one burn-in is paid.
* ``estimate_block_svd`` -- extracts the full Cartan projection of the
  running product at checkpoints from its triangular factor, kept in
  log-rescaled form; an independent cross-check on short horizons.

Estimates carry per-trajectory replicates; trajectories are independent by
stream construction, so standard errors are plain replicate statistics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .liealg import (CartanVector, Flag, RootSystemInfo, canonicalize_frame,
                     exterior_power)
from .streams import as_stream

_BLOCK = 1024
_DENSE_SPREAD_LIMIT = 25.0

METHOD_KINGMAN_QR = "kingman_qr"
METHOD_IWASAWA = "iwasawa_formula"
METHOD_BLOCK_SVD = "block_svd"


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs shared by the estimators.

    ``burn_in`` frames are discarded before the QR accumulation starts;
    ``flag_burn_in`` is the backward horizon of the flag tracker.  A zero
    burn-in is allowed so that estimators can be compared on literally the
    same step window.
    """

    n_steps: int = 100_000
    n_trajectories: int = 64
    burn_in: int = 1000
    renorm_interval: int = 10_000
    seed: int = 0
    flag_burn_in: int = 500
    checkpoint_every: int | None = None

    def __post_init__(self):
        if self.n_steps < 1 or self.n_trajectories < 1:
            raise InvalidArgument("n_steps and n_trajectories must be positive")
        if self.burn_in < 0 or self.flag_burn_in < 1 or self.renorm_interval < 1:
            raise InvalidArgument("burn-in lengths and renorm interval out of range")
        if self.burn_in > 0 and self.burn_in >= self.n_steps:
            raise InvalidArgument("burn_in must be smaller than n_steps")

    def checkpoints(self) -> list[int]:
        """Checkpoint step counts: powers of two times 1000 by default."""
        out = []
        if self.checkpoint_every is not None:
            out = list(range(self.checkpoint_every, self.n_steps,
                             self.checkpoint_every))
        else:
            c = 1000
            while c < self.n_steps:
                out.append(c)
                c *= 2
        out.append(self.n_steps)
        return out


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Estimated spectrum with per-trajectory replicates and a convergence curve."""

    lam: CartanVector
    per_trajectory: list
    stderr: np.ndarray
    convergence_curve: list
    n_steps: int
    n_trajectories: int
    burn_in: int
    method: str
    model_kind: str
    dim: int
    sort_permuted: bool = False

    @property
    def coords(self) -> np.ndarray:
        return self.lam.coords

    def per_trajectory_matrix(self) -> np.ndarray:
        return np.stack([v.coords for v in self.per_trajectory])


def combined_stderr(a: SpectrumEstimate, b: SpectrumEstimate) -> np.ndarray:
    return np.sqrt(a.stderr ** 2 + b.stderr ** 2)


def _mgs(M: np.ndarray, step: int, want_r: bool = False):
    """Batched modified Gram-Schmidt with positive diagonal.

    Factors each matrix in the (B, d, d) batch as Q R with orthonormal Q and
    upper-triangular R whose diagonal is strictly positive; returns
    (Q, log diag R) and optionally R itself.  Raises on breakdown, which is
    how estimator blow-ups surface with their step index.
    """
    B, d, _ = M.shape
    Q = np.empty_like(M)
    logr = np.empty((B, d))
    R = np.zeros((B, d, d)) if want_r else None
    V = M.copy()
    for j in range(d):
        v = V[:, :, j]
        nrm2 = np.einsum("bi,bi->b", v, v)
        if not np.all(np.isfinite(nrm2)) or np.any(nrm2 <= 0.0):
            raise NumericalFailure("orthogonal-triangular refactorization broke down",
                                   step=step)
        nrm = np.sqrt(nrm2)
        logr[:, j] = np.log(nrm)
        q = v / nrm[:, None]
        Q[:, :, j] = q
        if want_r:
            R[:, j, j] = nrm
        if j + 1 < d:
            c = np.einsum("bi,bij->bj", q, V[:, :, j + 1:])
            V[:, :, j + 1:] -= q[:, :, None] * c[:, None, :]
            if want_r:
                R[:, j, j + 1:] = c
    if want_r:
        return Q, logr, R
    return Q, logr


def _track_flags(cursor, dim: int, burn_in: int) -> np.ndarray:
    """Backward flag tracking: apply the last ``burn_in`` backward increments,
    oldest first, to the standard frame and keep the orthogonal factor."""
    mats = cursor.backward(burn_in)  # times -1, -2, ..., -burn_in
    B = mats.shape[0]
    Q = np.broadcast_to(np.eye(dim), (B, dim, dim)).copy()
    for j in range(burn_in - 1, -1, -1):
        Q, _ = _mgs(mats[:, j] @ Q, step=-(j + 1))
    return Q


def _chunks(n: int, parts: int) -> list[np.ndarray]:
    ids = np.arange(n, dtype=np.int64)
    parts = max(1, min(parts, n))
    return [c for c in np.array_split(ids, parts) if c.size]


def _run_workers(worker, n_trajectories: int, threads: int) -> list:
    chunks = _chunks(n_trajectories, threads)
    if len(chunks) == 1 or threads <= 1:
        return [worker(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, chunks))


def _finalize(acc_over_n: np.ndarray, curve_raw, cfg: EstimatorConfig, method: str,
              model) -> SpectrumEstimate:
    # sort each replicate non-increasing; flag if sorting actually permuted
    order_changed = bool(np.any(np.diff(acc_over_n, axis=1) > 1e-12))
    per_traj = -np.sort(-acc_over_n, axis=1)
    lam = per_traj.mean(axis=0)
    stderr = per_traj.std(axis=0, ddof=1) / math.sqrt(per_traj.shape[0]) \
        if per_traj.shape[0] > 1 else np.zeros(per_traj.shape[1])
    curve = []
    for n_at, partial in curve_raw:
        p = -np.sort(-partial, axis=1)
        se = p.std(axis=0, ddof=1) / math.sqrt(p.shape[0]) if p.shape[0] > 1 \
            else np.zeros(p.shape[1])
        curve.append((n_at, p.mean(axis=0), se))
    return SpectrumEstimate(
        lam=CartanVector(lam),
        per_trajectory=[CartanVector(v) for v in per_traj],
        stderr=stderr,
        convergence_curve=curve,
        n_steps=cfg.n_steps,
        n_trajectories=cfg.n_trajectories,
        burn_in=cfg.burn_in,
        method=method,
        model_kind=model.kind.value,
        dim=model.dim,
        sort_permuted=order_changed,
    )


def estimate_kingman_qr(source, rep=None, cfg: EstimatorConfig | None = None,
                        threads: int = 1) -> SpectrumEstimate:
    """QR-method estimate of the Lyapunov spectrum.

    Pushes an orthonormal frame through the cocycle, refactoring every step
    and accumulating the log diagonal after the burn-in window; replicates
    are averaged across trajectories.  Works on a driver plus representation
    table or on any increment stream.
    """
    cfg = cfg or EstimatorConfig()
    stream = as_stream(source, rep, cfg.seed)
    d = stream.dim
    checkpoints = cfg.checkpoints()

    def worker(ids):
        cursor = stream.open(ids)
        B = ids.size
        Q = np.broadcast_to(np.eye(d), (B, d, d)).copy()
        acc = np.zeros((B, d))
        curve = []
        done = 0
        total = cfg.burn_in + cfg.n_steps
        next_cp = 0
        while done < total:
            k = min(_BLOCK, total - done)
            mats = cursor.forward(k)
            for j in range(k):
                step = done + j
                Q, logr = _mgs(mats[:, j] @ Q, step=step)
                if step >= cfg.burn_in:
                    acc += logr
                    n_post = step - cfg.burn_in + 1
                    if next_cp < len(checkpoints) and n_post == checkpoints[next_cp]:
                        curve.append((n_post, acc / n_post))
                        next_cp += 1
            done += k
        return acc / cfg.n_steps, curve

    results = _run_workers(worker, cfg.n_trajectories, threads)
    acc = np.concatenate([r[0] for r in results], axis=0)
    curve_raw = [(n, np.concatenate([r[1][i][1] for r in results], axis=0))
                 for i, (n, _) in enumerate(results[0][1])]
    return _finalize(acc, curve_raw, cfg, METHOD_KINGMAN_QR, stream.model)


def track_forward_flag(cursor, rep=None, burn_in: int = 500) -> Flag:
    """Approximate the equivariant flag at a trajectory's base point.

    Applies the backward increments, oldest first, to the standard frame and
    returns the canonicalized orthogonal factor.  ``cursor`` may be a
    single-trajectory driver cursor or a (stream, trajectory_id) pair.
    """
    if burn_in < 1:
        raise InvalidArgument("flag tracking needs burn_in >= 1")
    if isinstance(cursor, tuple):
        stream, tid = cursor
        stream = as_stream(stream, rep)
        ids = np.array([tid], dtype=np.int64)
    else:
        stream = as_stream(cursor.driver, rep)
        ids = np.array([cursor.trajectory_id], dtype=np.int64)
    mcur = stream.open(ids)
    frames = _track_flags(mcur, stream.dim, burn_in)
    return Flag(canonicalize_frame(frames[0]))


def estimate_iwasawa_formula(source, rep=None, cfg: EstimatorConfig | None = None,
                             threads: int = 1) -> SpectrumEstimate:
    """Spectrum as the Birkhoff average of the Iwasawa cocycle on tracked flags.

    Per trajectory, the equivariant flag is approximated by backward
    tracking over ``cfg.flag_burn_in`` steps; the forward average then starts
    immediately at time zero, with the flag advanced by the cocycle itself.
    """
    cfg = cfg or EstimatorConfig()
    stream = as_stream(source, rep, cfg.seed)
    d = stream.dim
    checkpoints = cfg.checkpoints()

    def worker(ids):
        cursor = stream.open(ids)
        Q = _track_flags(cursor, d, cfg.flag_burn_in)
        acc = np.zeros((ids.size, d))
        curve = []
        done = 0
        next_cp = 0
        while done < cfg.n_steps:
            k = min(_BLOCK, cfg.n_steps - done)
            mats = cursor.forward(k)
            for j in range(k):
                Q, sigma = _mgs(mats[:, j] @ Q, step=done + j)
                acc += sigma
                n = done + j + 1
                if next_cp < len(checkpoints) and n == checkpoints[next_cp]:
                    curve.append((n, acc / n))
                    next_cp += 1
            done += k
        return acc / cfg.n_steps, curve

    results = _run_workers(worker, cfg.n_trajectories, threads)
    acc = np.concatenate([r[0] for r in results], axis=0)
    curve_raw = [(n, np.concatenate([r[1][i][1] for r in results], axis=0))
                 for i, (n, _) in enumerate(results[0][1])]
    return _finalize(acc, curve_raw, cfg, METHOD_IWASAWA, stream.model)


def _kappa_from_factors(a: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Cartan projection of Q diag(exp a) U from the triangular factor.

    Dense SVD when the diagonal spread fits double precision comfortably;
    otherwise the partial sums are read off scaled exterior-power norms,
    which never overflow and are exact when U is the identity.
    """
    d = a.shape[0]
    spread = float(a.max() - a.min())
    if spread < _DENSE_SPREAD_LIMIT and float(np.abs(a).max()) < 300.0:
        sv = np.linalg.svd(np.exp(a)[:, None] * U, compute_uv=False)
        return np.log(np.maximum(sv, 1e-300))
    partial = np.empty(d + 1)
    partial[0] = 0.0
    for k in range(1, d):
        wk = exterior_power(U, k)
        a_I = np.array([a[list(c)].sum() for c in
                        itertools.combinations(range(d), k)])
        m = a_I.max()
        scaled = np.exp(a_I - m)[:, None] * wk
        s1 = np.linalg.svd(scaled, compute_uv=False)[0]
        partial[k] = m + np.log(max(s1, 1e-300))
    partial[d] = a.sum()  # det of U is exactly one
    return np.diff(partial)


def estimate_block_svd(source, rep=None, cfg: EstimatorConfig | None = None,
                       threads: int = 1) -> SpectrumEstimate:
    """Direct Cartan projection of the running product at checkpoints.

    The product is carried as orthogonal x triangular factors with the
    triangular part log-rescaled (unit diagonal times a log-diagonal
    accumulator), and the projection is extracted from that factor at each
    checkpoint.  Intended for short horizons as an independent check of the
    QR estimator on identical streams; burn-in does not apply.
    """
    cfg = cfg or EstimatorConfig()
    stream = as_stream(source, rep, cfg.seed)
    d = stream.dim
    checkpoints = cfg.checkpoints()

    def worker(ids):
        cursor = stream.open(ids)
        B = ids.size
        Q = np.broadcast_to(np.eye(d), (B, d, d)).copy()
        U = np.broadcast_to(np.eye(d), (B, d, d)).copy()
        a = np.zeros((B, d))
        curve = []
        done = 0
        next_cp = 0
        tri = np.triu(np.ones((d, d), dtype=bool), k=1)
        while done < cfg.n_steps:
            k = min(_BLOCK, cfg.n_steps - done)
            mats = cursor.forward(k)
            for j in range(k):
                step = done + j
                Q, logr, R = _mgs(mats[:, j] @ Q, step=step, want_r=True)
                a_new = a + logr
                # W = diag(exp(-a_new)) R diag(exp(a)); strict upper part only
                E = a[:, None, :] - a_new[:, :, None]
                if np.any(E[:, tri] > 690.0):
                    raise NumericalFailure(
                        "triangular factor overflow despite rescaling", step=step)
                W = R * np.exp(np.minimum(E, 700.0))
                W[:, ~tri] = 0.0
                W[:, np.arange(d), np.arange(d)] = 1.0
                U = W @ U
                if not np.all(np.isfinite(U)):
                    raise NumericalFailure("non-finite triangular factor", step=step)
                a = a_new
                n = step + 1
                if n % cfg.renorm_interval == 0:
                    # both models are unimodular; recentring undoes det drift
                    a = a - a.mean(axis=1, keepdims=True)
                if next_cp < len(checkpoints) and n == checkpoints[next_cp]:
                    kap = np.stack([_kappa_from_factors(a[b], U[b]) / n
                                    for b in range(B)])
                    curve.append((n, kap))
                    next_cp += 1
            done += k
        return curve[-1][1], curve

    results = _run_workers(worker, cfg.n_trajectories, threads)
    kap = np.concatenate([r[0] for r in results], axis=0)
    curve_raw = [(n, np.concatenate([r[1][i][1] for r in results], axis=0))
                 for i, (n, _) in enumerate(results[0][1])]
    return _finalize(kap, curve_raw, cfg, METHOD_BLOCK_SVD, stream.model)


@dataclass(frozen=True, eq=False)
class KestenReport:
    mean: float
    stderr: float
    fraction_diverging: float
    verdict: str  # POSITIVE | ZERO | NEGATIVE | INCONCLUSIVE


def kesten_drift_check(scalar_samples, partial_sums, checkpoints,
                       zero_floor: float = 1e-12) -> KestenReport:
    """Sign verdict for the drift of a scalar ergodic cocycle.

    ``scalar_samples`` are per-step increment samples; ``partial_sums`` maps
    a step count n to an array of h_n values across trajectories.  POSITIVE
    needs the mean above three standard errors and almost every trajectory
    still climbing between the two final checkpoints, mirroring the
    equivalence between positive integral and divergence of the cocycle.
    ``zero_floor`` is an absolute noise floor: an exactly-zero cocycle
    accumulates roundoff at the 1e-17 scale with even smaller replicate
    spread, which must not read as a sign.
    """
    samples = np.asarray(scalar_samples, dtype=float)
    if samples.size == 0:
        raise InvalidArgument("kesten_drift_check needs at least one sample")
    checkpoints = sorted(int(c) for c in checkpoints)
    if not checkpoints:
        raise InvalidArgument("kesten_drift_check needs at least one checkpoint")
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(samples.size)) \
        if samples.size > 1 else 0.0
    bar = max(3 * stderr, zero_floor)

    frac_up = []
    frac_down = []
    for n in checkpoints[-2:]:
        h_n = np.asarray(partial_sums(n), dtype=float)
        h_half = np.asarray(partial_sums(n // 2), dtype=float)
        frac_up.append(float(np.mean((h_n > h_half) & (h_half > 0))))
        frac_down.append(float(np.mean((h_n < h_half) & (h_half < 0))))
    if mean > bar and min(frac_up) > 0.99:
        verdict, frac = "POSITIVE", min(frac_up)
    elif mean < -bar and min(frac_down) > 0.99:
        verdict, frac = "NEGATIVE", min(frac_down)
    elif abs(mean) <= bar:
        verdict, frac = "ZERO", max(min(frac_up), min(frac_down))
    else:
        verdict, frac = "INCONCLUSIVE", max(min(frac_up), min(frac_down))
    return KestenReport(mean=mean, stderr=stderr, fraction_diverging=frac,
                        verdict=verdict)


@dataclass(frozen=True, eq=False)
class SimplicityReport:
    gaps: np.ndarray
    gap_stderr: np.ndarray
    min_gap: float
    simple: bool
    verdict: str  # simple | not_simple | inconclusive


def simplicity_report(est: SpectrumEstimate, rs: RootSystemInfo) -> SimplicityReport:
    """Three-valued simplicity verdict at three standard errors.

    A spectrum is reported simple when every simple-root gap clears three
    standard errors (computed from per-trajectory replicates of the gaps).
    Gaps that are unresolved but certified small against the spectrum scale
    give ``not_simple``; noisy unresolved gaps give ``inconclusive``.
    """
    per = est.per_trajectory_matrix()
    gaps_per = per @ rs.root_matrix.T
    gaps = gaps_per.mean(axis=0)
    if per.shape[0] > 1:
        se = gaps_per.std(axis=0, ddof=1) / math.sqrt(per.shape[0])
    else:
        se = np.zeros_like(gaps)
    resolved = gaps > 3 * se
    if np.all(resolved):
        verdict = "simple"
    else:
        scale = float(np.max(np.abs(est.coords))) if est.coords.size else 0.0
        floor = max(1e-9, 0.05 * scale)
        ucb = gaps + 3 * se
        verdict = "not_simple" if np.all(ucb[~resolved] < floor) else "inconclusive"
    return SimplicityReport(gaps=gaps, gap_stderr=se, min_gap=float(gaps.min()),
                            simple=verdict == "simple", verdict=verdict)


@dataclass(frozen=True, eq=False)
class SweepRow:
    theta: float
    estimate: SpectrumEstimate


@dataclass(frozen=True, eq=False)
class SweepResult:
    rows: list
    successive_diffs: list  # max-abs coordinate difference between neighbours

    def diff_moduli(self) -> np.ndarray:
        return np.asarray(self.successive_diffs, dtype=float)


def continuity_sweep(driver, rep_family, thetas, cfg: EstimatorConfig | None = None,
                     method: str = METHOD_KINGMAN_QR, threads: int = 1) -> SweepResult:
    """Spectrum along a representation family with common random numbers.

    The same seed (hence literally the same increment streams) is used at
    every parameter value, so successive differences measure the spectrum's
    variation rather than Monte Carlo noise.
    """
    cfg = cfg or EstimatorConfig()
    estimator = {METHOD_KINGMAN_QR: estimate_kingman_qr,
                 METHOD_IWASAWA: estimate_iwasawa_formula,
                 METHOD_BLOCK_SVD: estimate_block_svd}[method]
    rows = []
    for theta in thetas:
        rep = rep_family(theta)
        est = estimator(driver, rep, cfg, threads=threads)
        rows.append(SweepRow(theta=float(theta), estimate=est))
    diffs = [float(np.max(np.abs(rows[i + 1].estimate.coords - rows[i].estimate.coords)))
             for i in range(len(rows) - 1)]
    return SweepResult(rows=rows, successive_diffs=diffs)
