"""Observability Gramians of the switched loop and the distances built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .linalg import expm
from .plant import ControllerBank, Plant
from .sim import (
    SwitchedLoop,
    SwitchingSignal,
    Trajectory,
    sample_layout,
    sample_weights,
)

PSD_CLAMP = 1e-12


class NonDiscerningError(ValueError):
    """The Gramian needed for a least-squares fit is singular."""


def segment_gramian(Psi: np.ndarray, Lam: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """``(int_0^h e^{Psi' s} Lam' Lam e^{Psi s} ds, e^{Psi h})`` via Van Loan's block exponential."""
    n = Psi.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -Psi.T
    M[:n, n:] = Lam.T @ Lam
    M[n:, n:] = Psi
    E = expm(M * h)
    F22 = E[n:, n:]
    W = F22.T @ E[:n, n:]
    return 0.5 * (W + W.T), F22


def _switched_gramian(psis, lams, sigma: SwitchingSignal) -> np.ndarray:
    n = psis[0].shape[0]
    W = np.zeros((n, n))
    Phi = np.eye(n)
    for a, b, m in sigma.segments():
        Wseg, E = segment_gramian(psis[m], lams[m], b - a)
        W += Phi.T @ Wseg @ Phi
        Phi = E @ Phi
    return 0.5 * (W + W.T)


def observability_gramian(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta) -> np.ndarray:
    """``W_sigma(theta) = int_I Phi' Lambda' Lambda Phi dt``, exact per segment."""
    sigma.check_bank(bank)
    loop = SwitchedLoop(plant, bank, theta)
    return _switched_gramian([c.Psi for c in loop.modes], [c.Lambda for c in loop.modes], sigma)


@dataclass(frozen=True)
class GramianPair:
    """Gramians of the loops at ``theta`` and ``theta_hat`` and their cross term.

    ``W_joint = [[W_theta, U.T], [U, W_hat]]`` with
    ``U = int Phi_hat' Lambda_hat' Lambda Phi``, and ``V = W_hat^{-1} U``.
    """

    W_theta: np.ndarray
    W_hat: np.ndarray
    U: np.ndarray
    V: np.ndarray | None
    W_joint: np.ndarray

    @property
    def n(self) -> int:
        return self.W_theta.shape[0]

    def separation(self) -> float:
        """``sqrt(lambda_min(W_joint))``."""
        lam = np.linalg.eigvalsh(self.W_joint)[0]
        return math.sqrt(max(lam, 0.0))

    def upper_gain(self) -> float:
        """``sqrt(lambda_max([I; -V]' W_joint [I; -V]))``."""
        if self.V is None:
            raise NonDiscerningError("V is undefined because W_hat is singular")
        X = np.vstack([np.eye(self.n), -self.V])
        Q = X.T @ self.W_joint @ X
        lam = np.linalg.eigvalsh(0.5 * (Q + Q.T))[-1]
        return math.sqrt(max(lam, 0.0))


def joint_gramian(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta, theta_hat,
                  rcond: float = 1e-12) -> GramianPair:
    """Gramian of the two loops run in parallel with stacked output map ``[Lambda, Lambda_hat]``."""
    sigma.check_bank(bank)
    loop = SwitchedLoop(plant, bank, theta)
    hat = SwitchedLoop(plant, bank, theta_hat)
    psis = [block_diag(a.Psi, b.Psi) for a, b in zip(loop.modes, hat.modes)]
    lams = [np.hstack([a.Lambda, b.Lambda]) for a, b in zip(loop.modes, hat.modes)]
    W = _switched_gramian(psis, lams, sigma)
    n = loop.n_state
    W_theta, W_hat, U = W[:n, :n], W[n:, n:], W[n:, :n]
    lam = np.linalg.eigvalsh(W_hat)
    V = None
    if lam[0] > rcond * max(lam[-1], np.finfo(float).tiny):
        V = np.linalg.solve(W_hat, U)
    return GramianPair(W_theta.copy(), W_hat.copy(), U.copy(), V, W)


def natural_distance(gp: GramianPair, chi0) -> float:
    """Least-squares distance of the natural response from ``chi0`` to the ``theta_hat`` model."""
    if gp.V is None:
        raise NonDiscerningError("W_hat is singular; the distance is not defined by the quadratic form")
    chi0 = np.asarray(chi0, dtype=float).ravel()
    x = np.concatenate([chi0, -gp.V @ chi0])
    q = float(x @ gp.W_joint @ x)
    scale = float(np.abs(gp.W_joint).max() * (x @ x)) or 1.0
    if q < -PSD_CLAMP * scale:
        raise ArithmeticError(f"negative quadratic form {q:g}")
    return math.sqrt(max(q, 0.0))


class ModelResponse:
    """Sampled free responses of one candidate model, ready for least-squares fits.

    Holds the weighted basis ``sqrt(w_k) Lambda Phi(t_k)`` stacked over the
    grid and its thin QR factor, so fitting many trajectories costs one
    projection each.
    """

    def __init__(self, plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta_hat,
                 dt: float | None = None, rcond: float = 1e-10):
        sigma.check_bank(bank)
        self.sigma = sigma
        self.layout = sample_layout(sigma, dt)
        self.theta_hat = np.asarray(theta_hat, dtype=float)
        loop = SwitchedLoop(plant, bank, self.theta_hat)
        Y = loop.output_basis(self.layout)
        self.sqrt_w = np.sqrt(sample_weights(sigma, self.layout.dt))
        self.basis = (self.sqrt_w[:, None, None] * Y).reshape(-1, Y.shape[2])
        Q, R = np.linalg.qr(self.basis)
        d = np.abs(np.diag(R))
        self.rank_ok = bool(d.size == 0 or d.min() > rcond * max(d.max(), np.finfo(float).tiny))
        self._Q = Q
        self.gramian = self.basis.T @ self.basis

    def _weighted(self, z: Trajectory) -> np.ndarray:
        if z.samples.shape[0] != self.sqrt_w.size or abs(z.dt - self.layout.dt) > 1e-9 * self.layout.dt:
            raise ValueError("trajectory grid is not aligned with the model's sample grid")
        return (self.sqrt_w[:, None] * z.samples).ravel()

    def distance(self, z: Trajectory, allow_singular: bool = False) -> float:
        if not self.rank_ok and not allow_singular:
            raise NonDiscerningError(f"observability Gramian singular at theta_hat={self.theta_hat}")
        s = self._weighted(z)
        if self.rank_ok:
            r = s - self._Q @ (self._Q.T @ s)
        else:
            c, *_ = np.linalg.lstsq(self.basis, s, rcond=None)
            r = s - self.basis @ c
        return float(np.linalg.norm(r))

    def fit_initial_state(self, z: Trajectory) -> np.ndarray:
        c, *_ = np.linalg.lstsq(self.basis, self._weighted(z), rcond=None)
        return c


def data_distance(z: Trajectory, plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta_hat,
                  allow_singular: bool = False) -> float:
    """``min over chi0_hat of ||z - z(., chi0_hat, theta_hat)||_2`` on the sample grid.

    The minimization is solved as a weighted linear least-squares problem
    whose normal matrix is the quadrature Gramian on the same grid, so data
    generated by the model itself is fitted to rounding error.
    """
    return ModelResponse(plant, bank, sigma, theta_hat, dt=z.dt).distance(z, allow_singular)


def gamma_bound(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta,
                dt: float | None = None) -> float:
    """Gain ``gamma`` with ``||z_forced||_2 <= gamma ||v||_inf`` on the horizon.

    ``gamma = sqrt(T) max_t [|Lambda(t)| int_t0^t |Phi(t, tau) Xi(tau)| dtau + |Gamma(t)|]``
    with spectral norms. The inner integral uses the larger endpoint value
    on each step plus one extra step; the maximum runs over the grid.
    """
    sigma.check_bank(bank)
    lay = sample_layout(sigma, dt)
    loop = SwitchedLoop(plant, bank, theta)
    h = lay.dt
    Phi = loop.transition_samples(lay)
    Phi_inv = np.linalg.inv(Phi)
    Xi = np.stack([c.Xi for c in loop.modes])
    lam_norm = np.array([np.linalg.norm(c.Lambda, 2) for c in loop.modes])
    gam_norm = np.array([np.linalg.norm(c.Gamma, 2) for c in loop.modes])
    K = lay.n_steps
    # P[j] = Phi(t_j)^{-1} Xi(step j); left and right ends of step j see the same mode.
    P = np.einsum("kij,kjl->kil", Phi_inv[:K], Xi[lay.step_modes])
    P_right = np.einsum("kij,kjl->kil", Phi_inv[1:], Xi[lay.step_modes])
    S_left = np.einsum("kij,klj->kil", P, P)
    S_right = np.einsum("kij,klj->kil", P_right, P_right)
    # step_max[k, j]: larger endpoint value of |Phi(t_k, tau) Xi| on step j < k
    g = np.empty(K + 1)
    g[0] = 0.0
    chunk = max(1, 400_000 // max(K, 1))
    for k0 in range(1, K + 1, chunk):
        ks = np.arange(k0, min(K + 1, k0 + chunk))
        nl = _spectral_from_gram(Phi[ks], S_left)
        nr = _spectral_from_gram(Phi[ks], S_right)
        step_max = np.maximum(nl, nr)
        step_max[np.arange(K)[None, :] >= ks[:, None]] = 0.0
        g[ks] = h * (step_max.sum(axis=1) + step_max.max(axis=1))
    m = lay.sample_modes
    return math.sqrt(sigma.T) * float(np.max(lam_norm[m] * g + gam_norm[m]))


def _spectral_from_gram(Pk: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``|Pk[a] M_j|`` for every ``a, j`` given ``S_j = M_j M_j'``."""
    G = Pk[:, None] @ S[None] @ np.swapaxes(Pk, 1, 2)[:, None]
    if G.shape[-1] == 1:
        lam = G[..., 0, 0]
    elif G.shape[-1] == 2:
        p, q, r = G[..., 0, 0], 0.5 * (G[..., 0, 1] + G[..., 1, 0]), G[..., 1, 1]
        lam = 0.5 * (p + r) + np.sqrt(0.25 * (p - r) ** 2 + q * q)
    else:
        lam = np.linalg.eigvalsh(0.5 * (G + np.swapaxes(G, -1, -2)))[..., -1]
    return np.sqrt(np.maximum(lam, 0.0))


@dataclass(frozen=True)
class EnvelopeTable:
    """Sampled lower and upper comparison functions of the parameter distance.

    ``alpha(rho)`` is the smallest ``sqrt(lambda_min(W_joint))`` among
    sampled pairs at distance at least ``rho``; ``beta(rho)`` the largest
    upper gain among pairs at distance at most ``rho``. Between samples
    both are interpolated linearly, which keeps ``alpha`` below and
    ``beta`` above their step-function definitions.
    """

    distances: np.ndarray
    alpha_vals: np.ndarray
    beta_vals: np.ndarray

    def alpha(self, rho: float) -> float:
        return float(np.interp(rho, self.distances, self.alpha_vals))

    def beta(self, rho: float) -> float:
        return float(np.interp(rho, self.distances, self.beta_vals))

    def alpha_inverse(self, y: float) -> float:
        """Largest ``rho`` with ``alpha(rho) <= y``; ``inf`` past the sampled range."""
        d, a = self.distances, self.alpha_vals
        if y < 0:
            raise ValueError("alpha_inverse needs a nonnegative argument")
        if y >= a[-1]:
            return math.inf
        j = int(np.searchsorted(a, y, side="right"))
        # a[j-1] <= y < a[j]
        lo, hi = a[j - 1], a[j]
        return float(d[j - 1] + (y - lo) / (hi - lo) * (d[j] - d[j - 1]))

    def to_json(self) -> dict:
        return {
            "distances": self.distances.tolist(),
            "alpha": self.alpha_vals.tolist(),
            "beta": self.beta_vals.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> EnvelopeTable:
        return cls(np.array(obj["distances"]), np.array(obj["alpha"]), np.array(obj["beta"]))


def pair_envelope_values(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta_pairs):
    """Per-pair ``(distance, separation, upper gain)`` arrays."""
    dist, sep, gain = [], [], []
    for th, th_hat in theta_pairs:
        th, th_hat = np.asarray(th, float), np.asarray(th_hat, float)
        gp = joint_gramian(plant, bank, sigma, th, th_hat)
        dist.append(float(np.linalg.norm(th - th_hat)))
        sep.append(gp.separation())
        gain.append(gp.upper_gain())
    return np.array(dist), np.array(sep), np.array(gain)


def envelope_from_values(dist, sep, gain) -> EnvelopeTable:
    dist, sep, gain = map(np.asarray, (dist, sep, gain))
    if dist.size == 0:
        raise ValueError("envelope needs at least one pair")
    if np.any(dist <= 0):
        raise ValueError("envelope pairs must be distinct")
    levels = np.unique(dist)
    alpha = np.array([sep[dist >= r].min() for r in levels])
    beta = np.array([gain[dist <= r].max() for r in levels])
    return EnvelopeTable(
        np.concatenate([[0.0], levels]),
        np.concatenate([[0.0], alpha]),
        np.concatenate([[0.0], beta]),
    )


def envelope_tables(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta_pairs) -> EnvelopeTable:
    """Empirical comparison functions from a set of distinct parameter pairs."""
    pairs = list(theta_pairs)
    if not pairs:
        raise ValueError("envelope needs at least one pair")
    return envelope_from_values(*pair_envelope_values(plant, bank, sigma, pairs))
