"""Discernibility certificates, random bank synthesis and stability screening."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import brentq

from .linalg import RANK_TOL, char_poly, check_observability, markov_parameters, uncontrollable_charpoly
from .plant import ControllerBank, ControllerMode, Plant, assemble_closed_loop

logger = logging.getLogger(__name__)

RESULTANT_TOL = 1e-9


class ObservabilityError(ValueError):
    """``(A(theta), C(theta))`` is not observable, so no controller can discern."""


class SynthesisError(RuntimeError):
    """No random bank passed certification within the attempt budget."""

    def __init__(self, message, best_bank=None, failing_pairs=()):
        super().__init__(message)
        self.best_bank = best_bank
        self.failing_pairs = list(failing_pairs)


def sylvester_matrix(p, q) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m, n = p.size - 1, q.size - 1
    S = np.zeros((m + n, m + n))
    for i in range(n):
        S[i, i:i + m + 1] = p
    for i in range(m):
        S[n + i, i:i + n + 1] = q
    return S


def _bareiss_det(rows: list[list[Fraction]]) -> Fraction:
    M = [r[:] for r in rows]
    n = len(M)
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if M[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if M[i][k] != 0), None)
            if swap is None:
                return Fraction(0)
            M[k], M[swap] = M[swap], M[k]
            sign = -sign
        pivot = M[k][k]
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * pivot - M[i][k] * M[k][j]) / prev
            M[i][k] = Fraction(0)
        prev = pivot
    return sign * M[-1][-1]


def sylvester_resultant(p, q, exact: bool = True) -> float:
    """Determinant of the Sylvester matrix of ``p`` and ``q`` (descending coefficients).

    With ``exact=True`` the determinant is computed in rational arithmetic
    from the binary values of the coefficients and rounded once at the end.
    """
    p = np.trim_zeros(np.asarray(p, dtype=float), "f")
    q = np.trim_zeros(np.asarray(q, dtype=float), "f")
    if p.size < 2 or q.size < 2:
        raise ValueError("resultant needs polynomials of degree at least 1")
    S = sylvester_matrix(p, q)
    if not exact:
        return float(np.linalg.det(S))
    rows = [[Fraction(float(x)) for x in row] for row in S]
    return float(_bareiss_det(rows))


def resultant_scale(p, q) -> float:
    """``(1 + max |coeff|) ** (deg p + deg q)``."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    c = max(np.abs(p).max(), np.abs(q).max())
    return (1.0 + c) ** (p.size - 1 + q.size - 1)


def normalized_resultant(p, q, exact: bool = True) -> float:
    return sylvester_resultant(p, q, exact) / resultant_scale(p, q)


def closed_loop_charpoly(plant: Plant, mode: ControllerMode, theta) -> np.ndarray:
    return char_poly(assemble_closed_loop(plant, mode, theta).Psi)


def pair_coprime(plant: Plant, mode: ControllerMode, theta, theta_prime,
                 tol: float = RESULTANT_TOL) -> tuple[bool, float]:
    """Whether the two closed-loop characteristic polynomials are coprime.

    Returns the verdict and the normalized resultant it is based on.
    """
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    if np.array_equal(theta, theta_prime):
        raise ValueError("pair_coprime needs two distinct parameter vectors")
    r = normalized_resultant(closed_loop_charpoly(plant, mode, theta),
                             closed_loop_charpoly(plant, mode, theta_prime))
    return abs(r) > tol, r


def separability_conditions(plant: Plant, theta, theta_prime, tol: float = RESULTANT_TOL) -> tuple[bool, bool]:
    """Plant-level conditions for some controller to separate ``theta`` from ``theta_prime``.

    Returns ``(transfer functions differ, uncontrollable parts coprime)``.
    """
    mats = []
    for th in (theta, theta_prime):
        A, B, C = plant.matrices(np.asarray(th, dtype=float))
        if not check_observability(A, C, RANK_TOL):
            raise ObservabilityError(f"(A, C) is unobservable at theta={np.asarray(th).tolist()}")
        mats.append((A, B, C))
    n = plant.n_x
    h1 = np.concatenate([m.ravel() for m in markov_parameters(*mats[0], 2 * n)])
    h2 = np.concatenate([m.ravel() for m in markov_parameters(*mats[1], 2 * n)])
    scale = max(1.0, np.abs(h1).max(initial=0.0), np.abs(h2).max(initial=0.0))
    tf_differ = bool(np.abs(h1 - h2).max(initial=0.0) > tol * scale)
    p1 = uncontrollable_charpoly(mats[0][0], mats[0][1], RANK_TOL)
    p2 = uncontrollable_charpoly(mats[1][0], mats[1][1], RANK_TOL)
    if p1.size == 1 or p2.size == 1:
        coprime = True
    else:
        coprime = abs(normalized_resultant(p1, p2)) > tol
    return tf_differ, coprime


check_lemma2_conditions = separability_conditions  # public interface name


@dataclass(frozen=True)
class PairReport:
    theta: np.ndarray
    theta_prime: np.ndarray
    resultants: np.ndarray
    separating_modes: tuple[int, ...]
    origin: str = "random"

    def to_json(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "theta_prime": self.theta_prime.tolist(),
            "resultants": self.resultants.tolist(),
            "separating_modes": list(self.separating_modes),
            "origin": self.origin,
        }


@dataclass(frozen=True)
class DiscernCertificate:
    """Sampled evidence that every pair of parameters is separated by some mode."""

    reports: tuple[PairReport, ...]
    tol: float
    verdict: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "verdict", all(r.separating_modes for r in self.reports))

    @property
    def pair_grid(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(r.theta, r.theta_prime) for r in self.reports]

    @property
    def failing(self) -> list[PairReport]:
        return [r for r in self.reports if not r.separating_modes]

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "tol": self.tol,
            "n_pairs": len(self.reports),
            "n_failing": len(self.failing),
            "pairs": [r.to_json() for r in self.reports],
        }


class _ModeResultant:
    """Normalized resultant of one mode as a function of a parameter pair."""

    def __init__(self, plant: Plant, mode: ControllerMode):
        self.plant = plant
        self.mode = mode
        self._cache: dict[bytes, np.ndarray] = {}

    def poly(self, theta: np.ndarray) -> np.ndarray:
        key = theta.tobytes()
        p = self._cache.get(key)
        if p is None:
            p = closed_loop_charpoly(self.plant, self.mode, theta)
            if len(self._cache) < 4096:
                self._cache[key] = p
        return p

    def __call__(self, theta, theta_prime, exact: bool = True) -> float:
        return normalized_resultant(self.poly(theta), self.poly(theta_prime), exact)


def _random_pairs(box, rng, n):
    a = box.sample(rng, n)
    b = box.sample(rng, n)
    keep = np.any(a != b, axis=1)
    return list(zip(a[keep], b[keep]))


def _vertex_pairs(box):
    V = box.vertices()
    return [(V[i], V[j]) for i, j in itertools.combinations(range(len(V)), 2)]


def _unit_directions(box, rng, k):
    free = box.free_axes
    D = np.zeros((k, box.n_theta))
    D[:, free] = rng.standard_normal((k, free.size)) * box.widths[free]
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def _near_diagonal_pairs(box, rng, n, rel_radius):
    out = []
    if box.dim == 0:
        return out
    base = box.sample(rng, n)
    dirs = _unit_directions(box, rng, n)
    radius = rel_radius * box.diameter
    for th, d in zip(base, dirs):
        other = box.clip(th + radius * d)
        if np.linalg.norm(other - th) < 0.25 * radius:
            other = box.clip(th - radius * d)
        if np.any(other != th):
            out.append((th, other))
    return out


def _zero_set_pairs(box, res: _ModeResultant, rng, n_base, n_scan, tol, min_sep):
    """Pairs on or near the zero set of one mode's resultant.

    Around random base points, scan a circle (a segment when the box is
    one-dimensional) for sign changes of the resultant and refine each by
    bisection. Points already below ``tol`` are kept as found.
    """
    if box.dim == 0:
        return []
    out = []
    diam = box.diameter
    for _ in range(n_base):
        th = box.sample(rng, 1)[0]
        if box.dim == 1:
            axis = np.zeros(box.n_theta)
            axis[box.free_axes[0]] = 1.0
            i = box.free_axes[0]
            ts = np.linspace(box.lower[i] - th[i], box.upper[i] - th[i], n_scan)

            def point(t, th=th, axis=axis):
                return th + t * axis
        else:
            d1, d2 = _unit_directions(box, rng, 2)
            d2 = d2 - (d2 @ d1) * d1
            nrm = np.linalg.norm(d2)
            if nrm < 1e-8:
                continue
            d2 /= nrm
            r = diam * rng.uniform(0.02, 0.5)
            ts = np.linspace(0.0, 2 * np.pi, n_scan, endpoint=False)

            def point(t, th=th, d1=d1, d2=d2, r=r):
                return th + r * (np.cos(t) * d1 + np.sin(t) * d2)

        vals = []
        for t in ts:
            p = point(t)
            if not box.contains(p) or np.linalg.norm(p - th) < min_sep:
                vals.append(None)
                continue
            v = res(th, p, exact=False)
            vals.append(v)
            if abs(v) <= tol:
                out.append((th, p))
        for k in range(len(ts) - 1):
            a, b = vals[k], vals[k + 1]
            if a is None or b is None or a == 0.0 or b == 0.0 or (a > 0) == (b > 0):
                continue
            try:
                # near the root the float resultant is rounding noise; take the last iterate
                t_star = brentq(lambda t: res(th, point(t), exact=False), ts[k], ts[k + 1],
                                xtol=1e-14, disp=False)
            except ValueError:
                continue
            p = point(t_star)
            if box.contains(p) and np.linalg.norm(p - th) >= min_sep:
                out.append((th, box.clip(p)))
    return out


def certify_bank(plant: Plant, bank: ControllerBank, pair_count: int = 100, rng_seed: int = 0,
                 tol: float = RESULTANT_TOL, *, near_diagonal: int = 20, near_radius: float = 1e-2,
                 include_vertices: bool = True, zero_set_base: int = 12, zero_set_scan: int = 48,
                 extra_pairs=()) -> DiscernCertificate:
    """Check on sampled pairs that some mode always keeps the closed-loop polynomials coprime.

    The pair set holds uniform random pairs, all pairs of box vertices,
    near-diagonal pairs and, for each mode, pairs found on that mode's
    resultant zero set (where the other modes must do the separating).
    Zero-set pairs of mode ``i`` come from a stream seeded by
    ``(rng_seed, i)`` so appending a mode only adds pairs.
    """
    if pair_count < 0:
        raise ValueError("pair_count must be non-negative")
    box = plant.theta_box
    rng = np.random.default_rng([rng_seed, 0])
    resultants = [_ModeResultant(plant, m) for m in bank]
    labelled = [(p, "random") for p in _random_pairs(box, rng, pair_count)]
    if include_vertices:
        labelled += [(p, "vertex") for p in _vertex_pairs(box)]
    labelled += [(p, "near") for p in _near_diagonal_pairs(box, rng, near_diagonal, near_radius)]
    min_sep = near_radius * box.diameter
    for i, res in enumerate(resultants):
        zrng = np.random.default_rng([rng_seed, 1, i])
        found = _zero_set_pairs(box, res, zrng, zero_set_base, zero_set_scan, tol, min_sep)
        labelled += [(p, f"zero-set:{i}") for p in found]
    labelled += [((np.asarray(a, float), np.asarray(b, float)), "extra") for a, b in extra_pairs]

    reports = []
    for (th, thp), origin in labelled:
        if np.array_equal(th, thp):
            continue
        vals = np.array([res(th, thp) for res in resultants])
        sep = tuple(int(i) for i in np.flatnonzero(np.abs(vals) > tol))
        reports.append(PairReport(np.array(th), np.array(thp), vals, sep, origin))
    return DiscernCertificate(tuple(reports), tol)


@dataclass(frozen=True)
class StabilityReport:
    """Common quadratic Lyapunov screening on a parameter grid.

    ``max_eig[g, i]`` is the largest eigenvalue of
    ``Psi_i' Pi + Pi Psi_i`` at grid point ``g`` (``nan`` where ``Pi``
    could not be formed).
    """

    grid: np.ndarray
    max_eig: np.ndarray
    pi_matrices: tuple
    pi_min_eig: np.ndarray

    @property
    def feasible_points(self) -> np.ndarray:
        ok = np.isfinite(self.max_eig).all(axis=1)
        ok &= np.nan_to_num(self.max_eig, nan=1.0).max(axis=1) < 0
        ok &= np.nan_to_num(self.pi_min_eig, nan=-1.0) > 0
        return ok

    @property
    def feasible(self) -> bool:
        return bool(self.feasible_points.all())

    @property
    def margin(self) -> float:
        """Worst (largest) ``max_eig`` over the grid; negative when feasible."""
        return float(np.nanmax(self.max_eig)) if np.isfinite(self.max_eig).any() else math.nan

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "margin": self.margin,
            "grid": self.grid.tolist(),
            "max_eig": [[None if not np.isfinite(x) else float(x) for x in row] for row in self.max_eig],
            "pi_min_eig": [None if not np.isfinite(x) else float(x) for x in self.pi_min_eig],
            "feasible_points": self.feasible_points.tolist(),
            "pi": [None if P is None else P.tolist() for P in self.pi_matrices],
        }


def stability_check(plant: Plant, bank: ControllerBank, theta_grid) -> StabilityReport:
    """Solve ``Psi_1' Pi + Pi Psi_1 = -I`` at each grid point and test every mode against ``Pi``."""
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("stability grid must be nonempty")
    for th in grid:
        if not plant.theta_box.contains(th):
            raise ValueError(f"grid point {th.tolist()} lies outside the uncertainty box")
    max_eig = np.full((grid.shape[0], len(bank)), np.nan)
    pi_min = np.full(grid.shape[0], np.nan)
    pis = []
    for g, th in enumerate(grid):
        psis = [assemble_closed_loop(plant, m, th).Psi for m in bank]
        P = _lyapunov_anchor(psis[0])
        pis.append(P)
        if P is None:
            continue
        pi_min[g] = np.linalg.eigvalsh(P)[0]
        for i, Psi in enumerate(psis):
            L = Psi.T @ P + P @ Psi
            max_eig[g, i] = np.linalg.eigvalsh(0.5 * (L + L.T))[-1]
    return StabilityReport(grid, max_eig, tuple(pis), pi_min)


def _lyapunov_anchor(Psi: np.ndarray):
    n = Psi.shape[0]
    ev = np.linalg.eigvals(Psi)
    sums = np.abs(ev[:, None] + ev[None, :])
    if sums.min() <= 1e-12 * max(1.0, np.abs(ev).max()):
        return None
    P = solve_continuous_lyapunov(Psi.T, -np.eye(n))
    if not np.all(np.isfinite(P)):
        return None
    return 0.5 * (P + P.T)


def validation_grid(box, rng: np.random.Generator, n_random: int = 16) -> np.ndarray:
    return np.vstack([box.vertices(), box.center[None, :], box.sample(rng, n_random)])


def synthesize_bank(plant: Plant, n_xi: int = 0, n_modes: int | None = None, rng_seed: int = 0,
                    stability_grid=None, max_attempts: int = 20, *, center: ControllerMode | None = None,
                    scale: float = 1.0, certify_kwargs: dict | None = None) -> ControllerBank:
    """Draw random banks until one passes certification (and the stability screen, if asked).

    ``n_modes`` defaults to ``2 M + 1`` with ``M`` the box dimension; a
    point box needs a single mode. Entries are ``center + scale * N(0, 1)``.
    """
    box = plant.theta_box
    rng = np.random.default_rng([rng_seed, 7])
    for th in validation_grid(box, rng):
        A, _, C = plant.matrices(th)
        if not check_observability(A, C):
            raise ObservabilityError(f"(A, C) is unobservable at theta={th.tolist()}")
    if n_modes is None:
        n_modes = 2 * box.dim + 1 if box.dim > 0 else 1
    certify_kwargs = dict(certify_kwargs or {})
    seeds = np.random.SeedSequence(rng_seed).spawn(max_attempts)
    best, best_fail = None, None
    for attempt, ss in enumerate(seeds):
        arng = np.random.default_rng(ss)
        bank = ControllerBank.random(n_modes, n_xi, plant.n_u, plant.n_y, arng, center=center, scale=scale)
        cert = certify_bank(plant, bank, rng_seed=int(ss.generate_state(1)[0]), **certify_kwargs)
        failing = cert.failing
        if best_fail is None or len(failing) < len(best_fail):
            best, best_fail = bank, failing
        if failing:
            logger.info("attempt %d: %d failing pairs", attempt, len(failing))
            continue
        if stability_grid is not None:
            rep = stability_check(plant, bank, stability_grid)
            if not rep.feasible:
                logger.info("attempt %d: stability screen failed (margin %.3g)", attempt, rep.margin)
                continue
        return bank
    raise SynthesisError(
        f"no bank passed after {max_attempts} attempts",
        best_bank=best,
        failing_pairs=[(r.theta, r.theta_prime) for r in (best_fail or [])],
    )
