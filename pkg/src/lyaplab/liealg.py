"""Matrix-group kernels: group models, Cartan/Iwasawa projections, root geometry.

Two matrix models are supported: the special linear group (unit determinant)
and the symplectic group (preserving the standard antisymmetric form).  The
Cartan subalgebra is realized as diagonal log coordinates, so the Cartan
projection of a matrix is its vector of log singular values and the Iwasawa
projection is the log diagonal of the triangular factor in an
orthogonal-triangular factorization with positive diagonal.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, InvalidArgument

TOL_DET = 1e-9
TOL_FORM = 1e-9
TOL_ORTH = 1e-9
DOMINANCE_TOL = 1e-9
SV_FLOOR = 1e-300


class GroupKind(str, enum.Enum):
    SPECIAL_LINEAR = "special_linear"
    SYMPLECTIC = "symplectic"


@dataclass(frozen=True)
class GroupModel:
    """A matrix group model: which group, and the matrix size d.

    For the symplectic model d = 2m must be even and the preserved form is
    J = [[0, I_m], [-I_m, 0]].
    """

    kind: GroupKind
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgument(f"matrix dimension must be positive, got {self.dim}")
        if self.kind == GroupKind.SYMPLECTIC and self.dim % 2 != 0:
            raise InvalidArgument(f"symplectic model needs even dimension, got {self.dim}")

    @property
    def rank(self) -> int:
        """Dimension of the Cartan subalgebra (number of independent exponents)."""
        if self.kind == GroupKind.SPECIAL_LINEAR:
            return self.dim - 1
        return self.dim // 2

    def symplectic_form(self) -> np.ndarray:
        if self.kind != GroupKind.SYMPLECTIC:
            raise InvalidArgument("symplectic form only defined for the symplectic model")
        m = self.dim // 2
        J = np.zeros((self.dim, self.dim))
        J[:m, m:] = np.eye(m)
        J[m:, :m] = -np.eye(m)
        return J

    def defect(self, entries: np.ndarray) -> float:
        """Distance of a matrix from the model: |det-1| or the form residual."""
        entries = np.asarray(entries, dtype=float)
        if entries.shape != (self.dim, self.dim):
            raise InvalidArgument(
                f"expected a {self.dim}x{self.dim} matrix, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DegenerateInput("matrix has non-finite entries")
        if self.kind == GroupKind.SPECIAL_LINEAR:
            return abs(np.linalg.det(entries) - 1.0)
        J = self.symplectic_form()
        return float(np.linalg.norm(entries.T @ J @ entries - J))

    def contains(self, entries: np.ndarray, tol: float | None = None) -> bool:
        if tol is None:
            tol = TOL_DET if self.kind == GroupKind.SPECIAL_LINEAR else TOL_FORM
        return self.defect(entries) <= tol

    def identity(self) -> "GroupElement":
        return GroupElement(self, np.eye(self.dim))


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A square real matrix tagged with its group model."""

    model: GroupModel
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.shape != (self.model.dim, self.model.dim):
            raise InvalidArgument(
                f"expected a {self.model.dim}x{self.model.dim} matrix, got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DegenerateInput("matrix has non-finite entries")

    def validate(self, tol: float | None = None) -> "GroupElement":
        defect = self.model.defect(self.entries)
        limit = tol if tol is not None else (
            TOL_DET if self.model.kind == GroupKind.SPECIAL_LINEAR else TOL_FORM)
        if defect > limit:
            raise DegenerateInput(
                f"matrix violates the {self.model.kind.value} model (defect {defect:.3e})")
        return self

    def inverse(self) -> "GroupElement":
        return GroupElement(self.model, np.linalg.inv(self.entries))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.model != self.model:
            raise InvalidArgument("cannot multiply elements of different group models")
        return GroupElement(self.model, self.entries @ other.entries)


@dataclass(frozen=True, eq=False)
class CartanVector:
    """A point of the diagonal Cartan subalgebra (vector of log coordinates)."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))

    def __len__(self) -> int:
        return self.coords.shape[0]

    def is_nonincreasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.coords) <= tol))

    def __add__(self, other: "CartanVector") -> "CartanVector":
        return CartanVector(self.coords + other.coords)

    def __neg__(self) -> "CartanVector":
        return CartanVector(-self.coords)


@dataclass(frozen=True, eq=False)
class Flag:
    """A full flag represented by an orthonormal frame.

    Column i of the frame spans the i-th step of the flag.  Two frames carry
    the same flag iff they differ by a diagonal sign matrix on the right;
    canonicalization makes the first nonzero entry of every column positive.
    """

    frame: np.ndarray

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        object.__setattr__(self, "frame", frame)
        d = frame.shape[0]
        if frame.shape != (d, d):
            raise InvalidArgument(f"flag frame must be square, got shape {frame.shape}")
        if np.linalg.norm(frame.T @ frame - np.eye(d)) > TOL_ORTH:
            raise DegenerateInput("flag frame is not orthonormal")

    @staticmethod
    def standard(dim: int) -> "Flag":
        return Flag(np.eye(dim))

    def canonicalized(self) -> "Flag":
        return Flag(canonicalize_frame(self.frame))


def canonicalize_frame(frame: np.ndarray, zero_tol: float = 1e-12) -> np.ndarray:
    """Fix the 2^d sign ambiguity: first nonzero entry of each column positive."""
    frame = np.array(frame, dtype=float, copy=True)
    for j in range(frame.shape[1]):
        col = frame[:, j]
        nz = np.nonzero(np.abs(col) > zero_tol)[0]
        lead = col[nz[0]] if nz.size else 0.0
        if lead < 0:
            frame[:, j] = -col
    return frame


def flag_distance(a: Flag, b: Flag) -> float:
    """Sign-invariant distance: max Frobenius gap between partial projectors."""
    d = a.frame.shape[0]
    dist = 0.0
    for i in range(1, d):
        pa = a.frame[:, :i] @ a.frame[:, :i].T
        pb = b.frame[:, :i] @ b.frame[:, :i].T
        dist = max(dist, float(np.linalg.norm(pa - pb)))
    return dist


@dataclass(frozen=True, eq=False)
class RootSystemInfo:
    """Simple roots of the model, as linear functionals on Cartan coordinates."""

    model: GroupModel
    root_matrix: np.ndarray = field(init=False)

    def __post_init__(self):
        d = self.model.dim
        if self.model.kind == GroupKind.SPECIAL_LINEAR:
            rows = np.zeros((d - 1, d))
            for i in range(d - 1):
                rows[i, i], rows[i, i + 1] = 1.0, -1.0
        else:
            m = d // 2
            rows = np.zeros((m, d))
            for i in range(m - 1):
                rows[i, i], rows[i, i + 1] = 1.0, -1.0
            rows[m - 1, m - 1] = 1.0
        object.__setattr__(self, "root_matrix", rows)

    @property
    def simple_roots(self) -> list[np.ndarray]:
        return [row.copy() for row in self.root_matrix]

    def gaps(self, coords: np.ndarray) -> np.ndarray:
        return self.root_matrix @ np.asarray(coords, dtype=float)

    def in_open_chamber(self, coords: np.ndarray, tol: float = 0.0) -> bool:
        """Membership predicate for the open Weyl chamber (all simple roots > tol)."""
        return bool(np.all(self.gaps(coords) > tol))


def _entries(g) -> np.ndarray:
    return g.entries if isinstance(g, GroupElement) else np.asarray(g, dtype=float)


def _model_of(g) -> GroupModel | None:
    return g.model if isinstance(g, GroupElement) else None


def cartan_projection(g) -> CartanVector:
    """Cartan projection: sorted log singular values.

    Parameters
    ----------
    g : GroupElement or ndarray
        Invertible square matrix.

    Returns
    -------
    CartanVector
        Log singular values in non-increasing order.  For the symplectic
        model the (i, d+1-i) antisymmetry is enforced by averaging, which
        removes roundoff asymmetry.
    """
    a = _entries(g)
    if not np.all(np.isfinite(a)):
        raise DegenerateInput("matrix has non-finite entries")
    try:
        sv = np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInput("SVD failed to converge") from exc
    if sv[-1] <= 0.0:
        raise DegenerateInput("matrix is numerically singular")
    coords = np.log(np.maximum(sv, SV_FLOOR))
    model = _model_of(g)
    if model is not None and model.kind == GroupKind.SYMPLECTIC:
        coords = 0.5 * (coords - coords[::-1])
        coords = np.sort(coords)[::-1]
    return CartanVector(coords)


def iwasawa_cocycle(g, xi: Flag) -> tuple[CartanVector, Flag]:
    """Iwasawa cocycle: the log diagonal of the triangular factor of g.k.

    Factors g @ xi.frame = k' r with k' orthogonal and r upper triangular
    with strictly positive diagonal.  Returns (log diag r, canonicalized k'),
    so the second component represents the flag g.xi and the cocycle identity
    sigma(g g', xi) = sigma(g, g'.xi) + sigma(g', xi) holds up to roundoff.
    """
    a = _entries(g)
    m = a @ xi.frame
    if not np.all(np.isfinite(m)):
        raise DegenerateInput("matrix has non-finite entries")
    q, r = np.linalg.qr(m)
    diag = np.diagonal(r).copy()
    if np.any(np.abs(diag) < SV_FLOOR) or not np.all(np.isfinite(diag)):
        raise DegenerateInput("numerically rank-deficient product in Iwasawa factorization")
    signs = np.sign(diag)
    q = q * signs[None, :]
    sigma = np.log(np.abs(diag))
    return CartanVector(sigma), Flag(canonicalize_frame(q))


def length(g) -> float:
    """Operator-norm length: log max(||g||, ||g^-1||) = max(k_1, -k_d)."""
    coords = cartan_projection(g).coords
    return float(max(coords[0], -coords[-1]))


def wedge_log_norm(g, k: int) -> float:
    """log of the operator norm of the k-th exterior power: top-k sum of kappa."""
    coords = cartan_projection(g).coords
    if not 1 <= k <= coords.shape[0]:
        raise InvalidArgument(f"wedge order k={k} out of range 1..{coords.shape[0]}")
    return float(np.sum(coords[:k]))


def exterior_power(matrix: np.ndarray, k: int) -> np.ndarray:
    """Dense k-th exterior power (compound matrix of k x k minors)."""
    matrix = np.asarray(matrix, dtype=float)
    d = matrix.shape[0]
    if not 1 <= k <= d:
        raise InvalidArgument(f"wedge order k={k} out of range 1..{d}")
    subsets = list(itertools.combinations(range(d), k))
    out = np.empty((len(subsets), len(subsets)))
    for i, rows in enumerate(subsets):
        sub = matrix[np.ix_(rows, range(d))]
        for j, cols in enumerate(subsets):
            out[i, j] = np.linalg.det(sub[:, cols])
    return out


def simple_root_gaps(v: CartanVector, rs: RootSystemInfo) -> np.ndarray:
    """Evaluate every simple root on v; all entries > 0 iff v is in the open chamber."""
    return rs.gaps(v.coords)


def dominance_leq(u: CartanVector, v: CartanVector, tol: float = DOMINANCE_TOL) -> bool:
    """Dominance (majorization) order: every prefix sum of u at most that of v.

    Both vectors must be sorted non-increasing.  Total sums are required to
    agree, which is the model constraint for trace-free log coordinates.
    The tolerance is absolute, scaled by the magnitude of the inputs.
    """
    uc, vc = u.coords, v.coords
    if uc.shape != vc.shape:
        raise InvalidArgument(f"length mismatch: {uc.shape[0]} vs {vc.shape[0]}")
    scale = max(1.0, float(np.max(np.abs(uc))), float(np.max(np.abs(vc))))
    eps = tol * scale
    pu, pv = np.cumsum(uc), np.cumsum(vc)
    if np.any(pu[:-1] > pv[:-1] + eps):
        return False
    return bool(abs(pu[-1] - pv[-1]) <= eps)


def weyl_orbit(v: np.ndarray, model: GroupModel) -> np.ndarray:
    """The Weyl orbit of v: coordinate permutations, plus paired sign flips
    for the symplectic model.  Rows are the orbit points (duplicates kept)."""
    v = np.asarray(v, dtype=float)
    d = model.dim
    if model.kind == GroupKind.SPECIAL_LINEAR:
        return np.array([np.take(v, p) for p in itertools.permutations(range(d))])
    m = d // 2
    half = v[:m]
    orbit = []
    for perm in itertools.permutations(range(m)):
        p = np.take(half, perm)
        for signs in itertools.product((1.0, -1.0), repeat=m):
            top = p * np.array(signs)
            orbit.append(np.concatenate([top, -top[::-1]]))
    return np.array(orbit)


def _dominant_representative(v: np.ndarray, model: GroupModel) -> np.ndarray:
    if model.kind == GroupKind.SPECIAL_LINEAR:
        return np.sort(v)[::-1]
    m = model.dim // 2
    half = np.sort(np.abs(0.5 * (v[:m] - v[::-1][:m])))[::-1]
    return np.concatenate([half, -half[::-1]])


def kostant_hull_check(v: CartanVector, k: Flag, n_weyl_samples: int = 0,
                       model: GroupModel | None = None,
                       tol: float = 1e-9) -> bool:
    """Test the convexity identity for the Iwasawa projection of exp(v).k.

    Computes sigma = iota(exp(v) k) via the Iwasawa cocycle and checks
    membership of sigma in the convex hull of the Weyl orbit of v by the
    majorization criterion (prefix-sum dominance with equal totals).  When
    ``n_weyl_samples`` is positive and at least the orbit size, membership is
    additionally cross-checked by an exact convex-combination solve over the
    enumerated orbit vertices.
    """
    d = len(v)
    if model is None:
        model = GroupModel(GroupKind.SPECIAL_LINEAR, d)
    g = np.diag(np.exp(v.coords))
    sigma, _ = iwasawa_cocycle(g, k)
    vbar = _dominant_representative(v.coords, model)
    sbar = _dominant_representative(sigma.coords, model)
    scale = max(1.0, float(np.max(np.abs(vbar))))
    eps = tol * scale
    inside = bool(np.all(np.cumsum(sbar)[:-1] <= np.cumsum(vbar)[:-1] + eps)
                  and abs(np.sum(sbar) - np.sum(vbar)) <= eps)
    if inside and n_weyl_samples > 0:
        orbit = weyl_orbit(vbar, model)
        if orbit.shape[0] <= n_weyl_samples:
            inside = _in_hull(sigma.coords, orbit, eps)
    return inside


def _in_hull(point: np.ndarray, vertices: np.ndarray, eps: float) -> bool:
    # LP feasibility: point = sum c_i vertex_i, c >= 0, sum c = 1
    from scipy.optimize import linprog

    n = vertices.shape[0]
    a_eq = np.vstack([vertices.T, np.ones(n)])
    b_eq = np.concatenate([point, [1.0]])
    res = linprog(np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * n,
                  method="highs")
    if res.status == 0:
        return True
    # retry with slack for roundoff at the hull boundary
    res = linprog(np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * n,
                  method="highs", options={"primal_feasibility_tolerance": max(eps, 1e-9)})
    return res.status == 0


def renormalize_determinant(entries: np.ndarray, model: GroupModel) -> np.ndarray:
    """Rescale to unit determinant by scalar division (drift control on long orbits)."""
    d = model.dim
    det = np.linalg.det(entries)
    if not np.isfinite(det) or det == 0.0:
        raise DegenerateInput("cannot renormalize a singular matrix")
    if model.kind == GroupKind.SPECIAL_LINEAR and det < 0:
        raise DegenerateInput("negative determinant is outside the special linear model")
    return entries / abs(det) ** (1.0 / d)


def random_element(model: GroupModel, rng: np.random.Generator,
                   spread: float = 1.0) -> GroupElement:
    """Random model element: useful for identity suites and fuzz tests.

    Special linear: entrywise Gaussian, rescaled to unit determinant (resampled
    on a negative determinant).  Symplectic: matrix exponential of a random
    element of the symplectic Lie algebra.
    """
    d = model.dim
    if model.kind == GroupKind.SPECIAL_LINEAR:
        while True:
            a = rng.normal(scale=spread, size=(d, d))
            det = np.linalg.det(a)
            if det > 1e-8:
                return GroupElement(model, a / det ** (1.0 / d))
    from scipy.linalg import expm

    m = d // 2
    a = rng.normal(scale=spread, size=(m, m))
    b = rng.normal(scale=spread, size=(m, m))
    c = rng.normal(scale=spread, size=(m, m))
    b = 0.5 * (b + b.T)
    c = 0.5 * (c + c.T)
    x = np.block([[a, b], [c, -a.T]])
    return GroupElement(model, expm(x))
