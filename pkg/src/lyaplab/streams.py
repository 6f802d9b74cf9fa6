"""Matrix increment streams: the surface the estimators consume.

A stream hands out batches of increment matrices for a set of trajectories,
forward (times 0, 1, 2, ...) and backward (times -1, -2, ...).  Plain
driver+representation pairs become streams here; the transforms module
builds derived streams (induced, conjugated, flow-discretized) that are
drop-in substitutes.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .drivers import GregDriver
from .errors import InvalidArgument
from .liealg import GroupModel


class MatrixCursor:
    """Batch cursor over increment matrices; see DriverStream for semantics."""

    def forward(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def backward(self, k: int) -> np.ndarray:
        raise NotImplementedError


class MatrixStream:
    model: GroupModel

    @property
    def dim(self) -> int:
        return self.model.dim

    def open(self, ids: np.ndarray) -> MatrixCursor:
        raise NotImplementedError


class _DriverCursor(MatrixCursor):
    def __init__(self, driver: GregDriver, rep_arr: np.ndarray, ids: np.ndarray):
        self._block = driver.block_cursor(ids)
        self._rep = rep_arr

    def forward(self, k):
        return self._rep[self._block.forward(k)]

    def backward(self, k):
        return self._rep[self._block.backward(k)]


class DriverStream(MatrixStream):
    """Increment matrices of a base driver under a representation table.

    ``forward(k)`` returns the matrices at the next k forward times as a
    (B, k, d, d) array; ``backward(k)`` those at times -1, -2, ... in that
    order.  A seed override rekeys the underlying label streams, which is
    how common random numbers across a parameter sweep are obtained.
    """

    def __init__(self, driver: GregDriver, rep=None, seed: int | None = None):
        if seed is not None and seed != driver.seed:
            driver = dataclasses.replace(driver, seed=seed)
        self.driver = driver
        self.rep_arr = driver.element_array(rep)
        d = self.rep_arr.shape[1]
        if self.rep_arr.shape[1:] != (d, d) or d != driver.model.dim:
            raise InvalidArgument("representation matrices must match the driver model size")
        self.model = driver.model

    def open(self, ids):
        return _DriverCursor(self.driver, self.rep_arr, np.asarray(ids, dtype=np.int64))


def as_stream(source, rep=None, seed: int | None = None) -> MatrixStream:
    """Coerce a GregDriver (plus optional representation) or a ready stream."""
    if isinstance(source, MatrixStream):
        if rep is not None:
            raise InvalidArgument("representation tables only apply to raw drivers")
        return source
    if isinstance(source, GregDriver):
        return DriverStream(source, rep, seed)
    raise InvalidArgument(f"cannot interpret {type(source).__name__} as an increment stream")
