"""Multi-model least-squares estimation over a covering grid of the box."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .discern import _near_diagonal_pairs, _random_pairs, _vertex_pairs
from .gramian import EnvelopeTable, ModelResponse, NonDiscerningError
from .plant import ControllerBank, Plant, UncertaintyBox
from .sim import SwitchingSignal, Trajectory, default_dt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelGrid:
    """Finite parameter set with every box point within ``epsilon`` of a member."""

    points: np.ndarray
    epsilon: float

    def __len__(self) -> int:
        return self.points.shape[0]


def grid_sample(box: UncertaintyBox, epsilon: float) -> ModelGrid:
    """Uniform grid whose cells have half-diagonal at most ``epsilon``.

    Free axes get spacing at most ``2 epsilon / sqrt(M)``; fixed axes
    contribute their single value. The stored epsilon is the half-diagonal
    actually achieved.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    M = box.dim
    axes, spacing = [], []
    h = 2.0 * epsilon / math.sqrt(M) if M else math.inf
    for j in range(box.n_theta):
        w = box.widths[j]
        if w == 0:
            axes.append(np.array([box.lower[j]]))
            continue
        n = max(1, math.ceil(w / h - 1e-12))
        axes.append(np.linspace(box.lower[j], box.upper[j], n + 1))
        spacing.append(w / n)
    points = np.array(list(itertools.product(*axes)), dtype=float)
    achieved = 0.5 * math.sqrt(sum(s * s for s in spacing))
    return ModelGrid(points, achieved)


@dataclass
class EstimateResult:
    theta_hat: np.ndarray
    delta_values: np.ndarray
    argmin_index: int
    skipped: list[int] = field(default_factory=list)
    bound: float | None = None

    def to_json(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "argmin_index": self.argmin_index,
            "delta_values": [None if not np.isfinite(d) else float(d) for d in self.delta_values],
            "skipped": list(self.skipped),
            "bound": None if self.bound is None else (
                "inf" if math.isinf(self.bound) else float(self.bound)),
            "bound_finite": self.bound is not None and math.isfinite(self.bound),
        }


def _argmin(deltas: np.ndarray) -> int:
    best, best_i = math.inf, -1
    for i, d in enumerate(deltas):
        if np.isfinite(d) and d < best:
            best, best_i = d, i
    return best_i


def mm_estimate(z: Trajectory, plant: Plant, bank: ControllerBank, sigma: SwitchingSignal,
                grid: ModelGrid) -> EstimateResult:
    """Grid point minimizing the least-squares distance to ``z``; ties go to the lowest index."""
    models = [ModelResponse(plant, bank, sigma, th, dt=z.dt) for th in grid.points]
    return _estimate_with(models, grid.points, z)


def _estimate_with(models, points, z: Trajectory) -> EstimateResult:
    if len(models) == 0:
        raise ValueError("model grid is empty")
    deltas = np.full(len(models), np.nan)
    skipped = []
    for i, model in enumerate(models):
        try:
            deltas[i] = model.distance(z)
        except NonDiscerningError:
            logger.warning("skipping grid point %d: Gramian singular", i)
            skipped.append(i)
    i = _argmin(deltas)
    if i < 0:
        raise NonDiscerningError("every grid point has a singular Gramian")
    return EstimateResult(np.array(points[i]), deltas, i, skipped)


def error_bound(epsilon: float, envelopes: EnvelopeTable, gamma: float, v_sup: float,
                chi0_norm: float) -> float:
    """``alpha^{-1}(beta(epsilon) + 2 gamma v_sup / |chi0|)``; ``inf`` when out of range."""
    if chi0_norm <= 0:
        raise ValueError("chi0_norm must be positive")
    if envelopes.distances.size == 0:
        raise ValueError("envelope table is empty")
    y = envelopes.beta(epsilon) + 2.0 * gamma * v_sup / chi0_norm
    rho = envelopes.alpha_inverse(y)
    if math.isinf(rho):
        logger.info("error bound vacuous: %.3g exceeds the sampled range of alpha", y)
    return rho


def envelope_pair_set(box: UncertaintyBox, rng: np.random.Generator, n_random: int = 60,
                      n_near: int = 10, radii=(0.01, 0.03, 0.1, 0.3)) -> list:
    """Distinct parameter pairs spread over all separations, for sampling envelopes.

    Random and vertex pairs cover large distances; near-diagonal pairs at
    each relative radius fill in the small ones.
    """
    pairs = _random_pairs(box, rng, n_random) + _vertex_pairs(box)
    for r in radii:
        pairs += _near_diagonal_pairs(box, rng, n_near, r)
    return pairs


class MultiModelEstimator(BaseEstimator):
    """Least-squares parameter estimator over an ``epsilon``-dense model grid.

    Parameters
    ----------
    plant : Plant
        Uncertain plant; its box is the search region.
    bank : ControllerBank
        Controller modes in the loop while the data were recorded.
    signal : SwitchingSignal
        Switching schedule during the observation interval.
    epsilon : float
        Requested covering radius of the model grid.
    dt : float, optional
        Sample spacing of the trajectories to be fitted. Defaults to the
        aligned grid with about 2000 steps.

    Attributes
    ----------
    grid_ : ModelGrid
    dt_ : float
    models_ : list of ModelResponse
    """

    def __init__(self, plant: Plant, bank: ControllerBank, signal: SwitchingSignal,
                 epsilon: float = 0.1, dt: float | None = None):
        self.plant = plant
        self.bank = bank
        self.signal = signal
        self.epsilon = epsilon
        self.dt = dt

    def fit(self, X=None, y=None):
        """Build the model grid and precompute every candidate's free-response basis."""
        if not isinstance(self.plant, Plant):
            raise TypeError("plant must be a Plant")
        self.signal.check_bank(self.bank)
        self.grid_ = grid_sample(self.plant.theta_box, self.epsilon)
        self.dt_ = self.dt if self.dt is not None else default_dt(self.signal)
        self.models_ = [ModelResponse(self.plant, self.bank, self.signal, th, dt=self.dt_)
                        for th in self.grid_.points]
        return self

    def estimate(self, z: Trajectory) -> EstimateResult:
        check_is_fitted(self, "models_")
        return _estimate_with(self.models_, self.grid_.points, z)

    def predict(self, X) -> np.ndarray:
        """Estimated parameter vector for each trajectory in ``X``."""
        if isinstance(X, Trajectory):
            X = [X]
        return np.array([self.estimate(z).theta_hat for z in X])

    def transform(self, X) -> np.ndarray:
        """Distances from each trajectory to every grid model, shape ``(n, L)``."""
        if isinstance(X, Trajectory):
            X = [X]
        return np.array([self.estimate(z).delta_values for z in X])
