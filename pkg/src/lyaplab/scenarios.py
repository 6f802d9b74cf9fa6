"""Shipped scenarios: named driver/representation setups used by the check
suites, the CLI examples, and the acceptance tests.

The parametric representation families form a small closed set; they are
name-addressable from sweep configs rather than a user expression language.
"""

from __future__ import annotations

import numpy as np

from .drivers import IIDDriver, MarkovDriver, RotationDriver
from .errors import InvalidArgument
from .liealg import GroupElement, GroupKind, GroupModel

SL2 = GroupModel(GroupKind.SPECIAL_LINEAR, 2)
SL3 = GroupModel(GroupKind.SPECIAL_LINEAR, 3)
SP4 = GroupModel(GroupKind.SYMPLECTIC, 4)

GOLDEN_FRAC = 0.6180339887498949  # (sqrt(5)-1)/2, the canonical irrational angle


def _sl2(rows) -> GroupElement:
    return GroupElement(SL2, np.array(rows, dtype=float))


def _rot2(theta: float) -> GroupElement:
    c, s = np.cos(theta), np.sin(theta)
    return GroupElement(SL2, np.array([[c, -s], [s, c]]))


def diag_iid_driver(seed: int = 0) -> IIDDriver:
    """Uniform draws from two commuting diagonal SL2 elements.

    The spectrum has the closed form (log(6)/2, -log(6)/2): the top
    exponent is the mean of log 2 and log 3.
    """
    return IIDDriver(pairs=((_sl2([[2, 0], [0, 0.5]]), 0.5),
                            (_sl2([[3, 0], [0, 1 / 3]]), 0.5)), seed=seed)


DIAG_IID_TOP_EXPONENT = 0.5 * (np.log(2.0) + np.log(3.0))


def sl2_iid_unipotent_driver(seed: int = 0) -> IIDDriver:
    """Uniform draws from the two standard unipotent generators of SL2(Z)."""
    return IIDDriver(pairs=((_sl2([[1, 1], [0, 1]]), 0.5),
                            (_sl2([[1, 0], [1, 1]]), 0.5)), seed=seed)


def sl3_zariski_dense_driver(seed: int = 0) -> IIDDriver:
    """Uniform draws from three generators of SL3(Z) (a Zariski-dense group)."""
    t = GroupElement(SL3, np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1]], dtype=float))
    lo = GroupElement(SL3, np.array([[1, 0, 0], [1, 1, 0], [0, 0, 1]], dtype=float))
    cyc = GroupElement(SL3, np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float))
    return IIDDriver(pairs=((t, 1 / 3), (lo, 1 / 3), (cyc, 1 / 3)), seed=seed)


def rotation_compact_driver(seed: int = 0) -> RotationDriver:
    """Golden rotation labelled by two SO(2) elements: compact image, zero drift."""
    return RotationDriver(alpha=GOLDEN_FRAC, breakpoints=(0.0, 0.5),
                          segment_elements=(_rot2(0.7), _rot2(2.1)), seed=seed)


def markov2_sl2_driver(seed: int = 0) -> MarkovDriver:
    """Two-state mixing Markov chain labelled by the SL2 unipotent pair."""
    return MarkovDriver(transition=((0.7, 0.3), (0.4, 0.6)),
                        state_elements=(_sl2([[1, 1], [0, 1]]),
                                        _sl2([[1, 0], [1, 1]])),
                        initial_law=(4 / 7, 3 / 7), seed=seed)


def bernoulli2_sl2_driver(seed: int = 0) -> IIDDriver:
    """Bernoulli(1/2, 1/2) on the SL2 unipotent pair (for induction tests)."""
    return sl2_iid_unipotent_driver(seed)


def sp4_iid_driver(seed: int = 0) -> IIDDriver:
    """Uniform draws from three Sp(4) generators (block unipotents + diagonal)."""
    eye = np.eye(2)
    b = np.array([[1.0, 0.5], [0.5, 1.0]])
    c = np.array([[1.0, -0.3], [-0.3, 0.7]])
    m = np.diag([2.0, 0.5])
    upper = np.block([[eye, b], [np.zeros((2, 2)), eye]])
    lower = np.block([[eye, np.zeros((2, 2))], [c, eye]])
    diag = np.block([[m, np.zeros((2, 2))],
                     [np.zeros((2, 2)), np.linalg.inv(m.T)]])
    els = tuple(GroupElement(SP4, x) for x in (upper, lower, diag))
    return IIDDriver(pairs=tuple((g, 1 / 3) for g in els), seed=seed)


DRIVERS = {
    "diag_iid": diag_iid_driver,
    "sl2_iid_unipotent": sl2_iid_unipotent_driver,
    "sl3_zariski_dense": sl3_zariski_dense_driver,
    "rotation_compact": rotation_compact_driver,
    "markov2_sl2": markov2_sl2_driver,
    "sp4_iid": sp4_iid_driver,
}


def driver(name: str, seed: int = 0):
    try:
        return DRIVERS[name](seed)
    except KeyError:
        raise InvalidArgument(f"unknown scenario {name!r}; "
                              f"known: {sorted(DRIVERS)}") from None


def sl2_unipotent_theta(theta: float) -> list:
    """Family g1(theta) = [[1, 1+theta], [0, 1]] against the fixed lower
    unipotent; Lipschitz-like in theta near 0."""
    return [_sl2([[1, 1 + theta], [0, 1]]), _sl2([[1, 0], [1, 1]])]


def sl2_conjugated_theta(theta: float) -> list:
    """The unipotent pair conjugated by exp(theta E12): constant spectrum."""
    h = np.array([[1.0, theta], [0.0, 1.0]])
    hinv = np.array([[1.0, -theta], [0.0, 1.0]])
    base = [np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [1.0, 1.0]])]
    return [GroupElement(SL2, h @ g @ hinv) for g in base]


FAMILIES = {
    "sl2_unipotent_theta": ("sl2_iid_unipotent", sl2_unipotent_theta),
    "sl2_conjugated_theta": ("sl2_iid_unipotent", sl2_conjugated_theta),
}


def family(name: str):
    try:
        return FAMILIES[name]
    except KeyError:
        raise InvalidArgument(f"unknown representation family {name!r}; "
                              f"known: {sorted(FAMILIES)}") from None
