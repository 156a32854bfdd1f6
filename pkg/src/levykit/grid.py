"""Uniform one-dimensional grid functions with an exterior extension."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class GridFunction1D:
    """Nodal values on ``n`` interior nodes of (a, b).

    Node ``i`` sits at ``a + (i + 1) h`` with ``h = (b - a) / (n + 1)``;
    outside (a, b) the function is ``exterior`` (zero by default).
    """

    a: float
    b: float
    values: np.ndarray
    exterior: Callable = _zero

    def __post_init__(self):
        if not self.b > self.a:
            raise ValidationError("need a < b")
        v = np.asarray(self.values, dtype=float).copy()
        if v.ndim != 1 or v.size < 1:
            raise ValidationError("values must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size

    @property
    def h(self):
        return (self.b - self.a) / (self.n + 1)

    @property
    def nodes(self):
        return self.a + self.h * np.arange(1, self.n + 1)

    def __call__(self, x):
        """Piecewise-linear interpolant inside, exterior data outside."""
        x = np.asarray(x, dtype=float)
        xs = np.concatenate([[self.a], self.nodes, [self.b]])
        ga, gb = np.asarray(self.exterior(np.array([self.a, self.b])), dtype=float)
        vs = np.concatenate([[ga], self.values, [gb]])
        inside = (x > self.a) & (x < self.b)
        out = np.where(inside, np.interp(x, xs, vs), 0.0)
        if np.any(~inside):
            out = np.where(inside, out, self.exterior(np.where(inside, self.a - 1.0, x)))
        return out

    def scaled(self, c):
        return GridFunction1D(self.a, self.b, c * self.values, lambda x, g=self.exterior: c * g(x))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.nodes, self.values]), delimiter=",", header="x,u", comments="")
