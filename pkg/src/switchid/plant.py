"""Uncertain plants, controller modes and closed-loop assembly."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .poly import ParamMatrixFamily


@dataclass(frozen=True)
class UncertaintyBox:
    """Axis-aligned box of admissible parameter vectors.

    Components with ``lower == upper`` are known exactly; the number of the
    remaining ones is the box dimension.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of the same length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box must be bounded")
        if np.any(lo > hi):
            raise ValueError("lower must not exceed upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_theta(self) -> int:
        return self.lower.size

    @property
    def free_axes(self) -> np.ndarray:
        return np.flatnonzero(self.upper > self.lower)

    @property
    def dim(self) -> int:
        return int(self.free_axes.size)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, theta, atol: float = 1e-12) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol))

    def clip(self, theta) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def vertices(self) -> np.ndarray:
        free = self.free_axes
        out = []
        for corner in itertools.product((0, 1), repeat=free.size):
            v = self.lower.copy()
            for axis, hi in zip(free, corner):
                if hi:
                    v[axis] = self.upper[axis]
            out.append(v)
        return np.array(out)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.n_theta)) * self.widths


@dataclass(frozen=True)
class Plant:
    """``x' = A(theta) x + B(theta) u``, ``y = C(theta) x`` over a box."""

    A: ParamMatrixFamily
    B: ParamMatrixFamily
    C: ParamMatrixFamily
    theta_box: UncertaintyBox

    def __post_init__(self):
        nx = self.A.rows
        if self.A.cols != nx:
            raise ValueError("A must be square")
        if self.B.rows != nx:
            raise ValueError(f"B must have {nx} rows")
        if self.C.cols != nx:
            raise ValueError(f"C must have {nx} columns")
        for fam in (self.A, self.B, self.C):
            if fam.n_theta != self.theta_box.n_theta:
                raise ValueError("matrix families and box disagree on n_theta")

    @property
    def n_x(self) -> int:
        return self.A.rows

    @property
    def n_u(self) -> int:
        return self.B.cols

    @property
    def n_y(self) -> int:
        return self.C.rows

    @property
    def n_theta(self) -> int:
        return self.theta_box.n_theta

    def matrices(self, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.A(theta), self.B(theta), self.C(theta)


@dataclass(frozen=True)
class ControllerMode:
    """LTI controller ``xi' = F xi - G y``, ``u = H xi - K y``."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n_u, n_y = K.shape
        F = np.asarray(self.F, dtype=float)
        F = np.atleast_2d(F) if F.size else np.zeros((0, 0))
        n_xi = F.shape[0]
        G = np.asarray(self.G, dtype=float).reshape(n_xi, n_y)
        H = np.asarray(self.H, dtype=float).reshape(n_u, n_xi)
        if F.shape != (n_xi, n_xi):
            raise ValueError("F must be square")
        for name, arr in (("F", F), ("G", G), ("H", H), ("K", K)):
            object.__setattr__(self, name, arr)

    @classmethod
    def static(cls, K) -> ControllerMode:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        n_u, n_y = K.shape
        return cls(np.zeros((0, 0)), np.zeros((0, n_y)), np.zeros((n_u, 0)), K)

    @property
    def n_xi(self) -> int:
        return self.F.shape[0]

    @property
    def n_u(self) -> int:
        return self.K.shape[0]

    @property
    def n_y(self) -> int:
        return self.K.shape[1]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.F.ravel(), self.G.ravel(), self.H.ravel(), self.K.ravel()])


@dataclass(frozen=True)
class ControllerBank:
    modes: tuple[ControllerMode, ...] = field(default_factory=tuple)

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("a controller bank needs at least one mode")
        dims = {(m.n_xi, m.n_u, m.n_y) for m in modes}
        if len(dims) != 1:
            raise ValueError(f"modes disagree on (n_xi, n_u, n_y): {sorted(dims)}")
        object.__setattr__(self, "modes", modes)

    def __len__(self) -> int:
        return len(self.modes)

    def __getitem__(self, i) -> ControllerMode:
        return self.modes[i]

    def __iter__(self):
        return iter(self.modes)

    @property
    def n_xi(self) -> int:
        return self.modes[0].n_xi

    def with_mode(self, mode: ControllerMode) -> ControllerBank:
        return ControllerBank(self.modes + (mode,))

    @classmethod
    def random(cls, n_modes: int, n_xi: int, n_u: int, n_y: int,
               rng: np.random.Generator, center: ControllerMode | None = None,
               scale: float = 1.0) -> ControllerBank:
        """Bank whose entries are ``center + scale * N(0, 1)``, drawn i.i.d."""
        modes = []
        for _ in range(n_modes):
            F = rng.standard_normal((n_xi, n_xi))
            G = rng.standard_normal((n_xi, n_y))
            H = rng.standard_normal((n_u, n_xi))
            K = rng.standard_normal((n_u, n_y))
            parts = [scale * p for p in (F, G, H, K)]
            if center is not None:
                parts = [c + p for c, p in zip((center.F, center.G, center.H, center.K), parts)]
            modes.append(ControllerMode(*parts))
        return cls(tuple(modes))


class ClosedLoopMatrices(NamedTuple):
    """State-space data of one plant/mode interconnection.

    ``chi' = Psi chi + Xi v`` and ``z = Lambda chi + Gamma v`` with
    ``chi = (x, xi)``, ``z = (u, y)`` and ``v = (d, n)``.
    """

    Psi: np.ndarray
    Lambda: np.ndarray
    Xi: np.ndarray
    Gamma: np.ndarray


def closed_loop_from_matrices(A, B, C, mode: ControllerMode) -> ClosedLoopMatrices:
    A = np.atleast_2d(A)
    nx = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(nx, -1)
    C = np.asarray(C, dtype=float).reshape(-1, nx)
    nu, ny = B.shape[1], C.shape[0]
    if mode.K.shape != (nu, ny):
        raise ValueError(f"controller K has shape {mode.K.shape}, plant needs {(nu, ny)}")
    F, G, H, K = mode.F, mode.G, mode.H, mode.K
    nxi = F.shape[0]
    BK = B @ K
    Psi = np.block([[A - BK @ C, B @ H], [-G @ C, F]])
    Lam = np.block([[-K @ C, H], [C, np.zeros((ny, nxi))]])
    Xi = np.block([[np.eye(nx), -BK], [np.zeros((nxi, nx)), -G]])
    Gam = np.block([[np.zeros((nu, nx)), -K], [np.zeros((ny, nx)), np.eye(ny)]])
    return ClosedLoopMatrices(Psi, Lam, Xi, Gam)


def assemble_closed_loop(plant: Plant, mode: ControllerMode, theta) -> ClosedLoopMatrices:
    """Closed-loop matrices of ``plant`` at ``theta`` under ``mode``."""
    if mode.n_u != plant.n_u or mode.n_y != plant.n_y:
        raise ValueError(
            f"mode is {mode.n_u}x{mode.n_y} (n_u x n_y), plant needs {plant.n_u}x{plant.n_y}"
        )
    return closed_loop_from_matrices(*plant.matrices(theta), mode)
