"""Multivariate polynomials in the uncertain parameter and matrices of them."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolyScalar:
    """Real polynomial in ``n_theta`` variables.

    ``terms`` maps exponent tuples to coefficients. Construction merges
    duplicate monomials and drops zero coefficients, so two equal
    polynomials always compare equal.
    """

    n_theta: int
    terms: tuple[tuple[tuple[int, ...], float], ...] = ()

    def __post_init__(self):
        if self.n_theta < 0:
            raise ValueError("n_theta must be non-negative")
        merged: dict[tuple[int, ...], float] = {}
        for exps, coeff in self.terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n_theta:
                raise ValueError(
                    f"exponent vector {exps} has length {len(exps)}, expected {self.n_theta}"
                )
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        normalized = tuple(sorted((e, c) for e, c in merged.items() if c != 0.0))
        object.__setattr__(self, "terms", normalized)

    @classmethod
    def constant(cls, value: float, n_theta: int) -> PolyScalar:
        return cls(n_theta, (((0,) * n_theta, float(value)),))

    @classmethod
    def variable(cls, index: int, n_theta: int, coeff: float = 1.0) -> PolyScalar:
        exps = [0] * n_theta
        exps[index] = 1
        return cls(n_theta, ((tuple(exps), coeff),))

    @classmethod
    def from_mapping(cls, terms: Mapping[tuple[int, ...], float], n_theta: int) -> PolyScalar:
        return cls(n_theta, tuple(terms.items()))

    @property
    def is_constant(self) -> bool:
        return all(not any(e) for e, _ in self.terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise ValueError(f"theta must have shape ({self.n_theta},), got {theta.shape}")
        total = 0.0
        for exps, coeff in self.terms:
            total += coeff * float(np.prod(theta ** np.asarray(exps)))
        return total

    def _coerce(self, other) -> PolyScalar:
        if isinstance(other, PolyScalar):
            if other.n_theta != self.n_theta:
                raise ValueError("polynomials live in different parameter spaces")
            return other
        return PolyScalar.constant(float(other), self.n_theta)

    def __add__(self, other) -> PolyScalar:
        other = self._coerce(other)
        return PolyScalar(self.n_theta, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self) -> PolyScalar:
        return PolyScalar(self.n_theta, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other) -> PolyScalar:
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> PolyScalar:
        return self._coerce(other) - self

    def __mul__(self, other) -> PolyScalar:
        other = self._coerce(other)
        terms = [
            (tuple(x + y for x, y in zip(e1, e2)), c1 * c2)
            for e1, c1 in self.terms
            for e2, c2 in other.terms
        ]
        return PolyScalar(self.n_theta, tuple(terms))

    __rmul__ = __mul__

    def to_json(self) -> list[dict]:
        return [{"exponents": list(e), "coeff": c} for e, c in self.terms]

    @classmethod
    def from_json(cls, obj, n_theta: int) -> PolyScalar:
        if isinstance(obj, (int, float)):
            return cls.constant(obj, n_theta)
        return cls(n_theta, tuple((tuple(t["exponents"]), t["coeff"]) for t in obj))


class ParamMatrixFamily:
    """Matrix-valued polynomial map ``theta -> M(theta)``.

    Entries are :class:`PolyScalar`. Constant entries are stored once as a
    dense array so evaluation only touches the parameter-dependent ones.
    """

    def __init__(self, entries: Sequence[Sequence[PolyScalar]], n_theta: int, shape=None):
        rows = [list(r) for r in entries]
        if shape is None:
            if not rows:
                raise ValueError("shape is required for an empty family")
            shape = (len(rows), len(rows[0]))
        self.shape = (int(shape[0]), int(shape[1]))
        if len(rows) != self.shape[0] or any(len(r) != self.shape[1] for r in rows):
            if not (self.shape[0] * self.shape[1] == 0 and sum(map(len, rows)) == 0):
                raise ValueError(f"entry grid does not match shape {self.shape}")
        self.n_theta = int(n_theta)
        self._const = np.zeros(self.shape)
        self._varying: list[tuple[int, int, PolyScalar]] = []
        self.entries = rows
        for i, row in enumerate(rows):
            for j, p in enumerate(row):
                if not isinstance(p, PolyScalar):
                    p = PolyScalar.constant(p, self.n_theta)
                    row[j] = p
                if p.n_theta != self.n_theta:
                    raise ValueError("entry lives in a different parameter space")
                if p.is_constant:
                    self._const[i, j] = p(np.zeros(self.n_theta))
                else:
                    self._varying.append((i, j, p))

    @classmethod
    def constant(cls, matrix, n_theta: int) -> ParamMatrixFamily:
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        entries = [[PolyScalar.constant(v, n_theta) for v in row] for row in matrix]
        return cls(entries, n_theta, shape=matrix.shape)

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def __call__(self, theta) -> np.ndarray:
        return eval_family(self, theta)

    def __add__(self, other: ParamMatrixFamily) -> ParamMatrixFamily:
        if other.shape != self.shape or other.n_theta != self.n_theta:
            raise ValueError("families must share shape and parameter space")
        entries = [
            [self.entries[i][j] + other.entries[i][j] for j in range(self.cols)]
            for i in range(self.rows)
        ]
        return ParamMatrixFamily(entries, self.n_theta, shape=self.shape)

    def to_json(self) -> list[list]:
        return [
            [p.terms[0][1] if p.is_constant and p.terms else (0.0 if not p.terms else p.to_json())
             for p in row]
            for row in self.entries
        ]

    @classmethod
    def from_json(cls, rows: Iterable, n_theta: int, shape=None) -> ParamMatrixFamily:
        entries = [[PolyScalar.from_json(e, n_theta) for e in row] for row in rows]
        if shape is None and entries and not entries[0]:
            shape = (len(entries), 0)
        return cls(entries, n_theta, shape=shape)


def eval_family(fam: ParamMatrixFamily, theta) -> np.ndarray:
    """Evaluate every entry of ``fam`` at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (fam.n_theta,):
        raise ValueError(f"theta must have shape ({fam.n_theta},), got {theta.shape}")
    out = fam._const.copy()
    for i, j, p in fam._varying:
        out[i, j] = p(theta)
    return out
