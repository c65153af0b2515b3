"""Exact sampled simulation of the switched closed loop."""

from __future__ import annotations

import contextlib
import csv
import math
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .linalg import expm
from .plant import ClosedLoopMatrices, ControllerBank, Plant, assemble_closed_loop

DEFAULT_STEPS = 2000
_ALIGN_RTOL = 1e-9


@dataclass(frozen=True)
class SwitchingSignal:
    """Right-continuous piecewise-constant schedule of controller modes.

    Mode ``mode_indices[k]`` (zero-based into the bank) is active on
    ``[breakpoints[k], breakpoints[k + 1])``; the last one runs up to
    ``horizon_end``, which is included in the observation interval.
    """

    breakpoints: tuple[float, ...]
    mode_indices: tuple[int, ...]
    horizon_end: float
    dwell: float | None = None

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        modes = tuple(int(m) for m in self.mode_indices)
        if not bps or len(bps) != len(modes):
            raise ValueError("breakpoints and mode_indices must be nonempty and equally long")
        edges = np.array(bps + (float(self.horizon_end),))
        lengths = np.diff(edges)
        if np.any(lengths <= 0):
            raise ValueError("breakpoints must be strictly increasing and end before horizon_end")
        if any(m < 0 for m in modes):
            raise ValueError("mode indices must be non-negative")
        dwell = float(lengths.min()) if self.dwell is None else float(self.dwell)
        if dwell <= 0:
            raise ValueError("dwell time must be positive")
        if lengths.min() < dwell * (1 - 1e-12):
            raise ValueError(f"segment of length {lengths.min():g} violates dwell time {dwell:g}")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "mode_indices", modes)
        object.__setattr__(self, "horizon_end", float(self.horizon_end))
        object.__setattr__(self, "dwell", dwell)

    @property
    def t0(self) -> float:
        return self.breakpoints[0]

    @property
    def T(self) -> float:
        return self.horizon_end - self.t0

    def segments(self) -> list[tuple[float, float, int]]:
        ends = self.breakpoints[1:] + (self.horizon_end,)
        return list(zip(self.breakpoints, ends, self.mode_indices))

    def mode_at(self, t: float) -> int:
        if not self.t0 <= t <= self.horizon_end:
            raise ValueError(f"t={t} outside [{self.t0}, {self.horizon_end}]")
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.mode_indices[k]

    def active_time(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for a, b, m in self.segments():
            out[m] = out.get(m, 0.0) + (b - a)
        return out

    def check_bank(self, bank: ControllerBank) -> None:
        if max(self.mode_indices) >= len(bank):
            raise ValueError(f"signal uses mode {max(self.mode_indices)}, bank has {len(bank)}")


def make_round_robin_signal(N: int, t0: float, T: float, dwell: float | None = None) -> SwitchingSignal:
    """Cycle modes ``0..N-1`` in equal segments covering ``[t0, t0 + T]``.

    ``dwell`` defaults to ``T / (2N)``, which gives two full cycles. The
    number of cycles is the largest one keeping every segment at least
    ``dwell`` long; adjacent segments of the same mode are merged.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if T <= 0:
        raise ValueError("horizon must be positive")
    if dwell is None:
        dwell = T / (2 * N)
    if dwell <= 0:
        raise ValueError("dwell time must be positive")
    if N * dwell > T * (1 + 1e-12):
        raise ValueError(f"horizon {T:g} too short for {N} segments of length {dwell:g}")
    cycles = max(1, int(math.floor(T / (N * dwell) + 1e-9)))
    n_seg = cycles * N
    seg = T / n_seg
    bps, modes = [], []
    for k in range(n_seg):
        m = k % N
        if modes and modes[-1] == m:
            continue
        bps.append(t0 + k * seg)
        modes.append(m)
    return SwitchingSignal(tuple(bps), tuple(modes), t0 + T, dwell=min(dwell, seg))


def default_dt(sigma: SwitchingSignal, steps: int = DEFAULT_STEPS) -> float:
    """Roughly ``T / steps``, adjusted so every segment holds a whole number of steps."""
    fracs = [Fraction((b - a) / sigma.T).limit_denominator(10**6) for a, b, _ in sigma.segments()]
    denom = 1
    for f in fracs:
        denom = denom * f.denominator // math.gcd(denom, f.denominator)
    mult = max(1, math.ceil(steps / denom))
    return sigma.T / (denom * mult)


@dataclass(frozen=True)
class SampleLayout:
    """Sample grid ``t_k = t0 + k dt``, ``k = 0..n_steps``, aligned with a signal."""

    t0: float
    dt: float
    n_steps: int
    step_modes: np.ndarray       # mode on [t_k, t_k+1)
    sample_modes: np.ndarray     # mode at t_k (right-continuous; last sample keeps last mode)
    segment_starts: np.ndarray   # sample index of each breakpoint

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


def sample_layout(sigma: SwitchingSignal, dt: float | None = None) -> SampleLayout:
    if dt is None:
        dt = default_dt(sigma)
    if dt <= 0:
        raise ValueError("dt must be positive")
    counts = []
    for a, b, _ in sigma.segments():
        c = (b - a) / dt
        n = int(round(c))
        if n < 1 or abs(n - c) > _ALIGN_RTOL * max(c, 1.0):
            raise ValueError(f"dt={dt:g} does not divide segment [{a:g}, {b:g})")
        counts.append(n)
    step_modes = np.repeat(np.array(sigma.mode_indices), counts)
    sample_modes = np.append(step_modes, step_modes[-1])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    return SampleLayout(sigma.t0, float(dt), int(sum(counts)), step_modes, sample_modes, starts)


def sample_weights(sigma: SwitchingSignal, dt: float | None = None) -> np.ndarray:
    """Quadrature weights for integrals over the sample grid.

    Composite trapezoid on each switching segment. The sample sitting on a
    switching instant belongs to the next mode, so every segment except the
    last closes its final step with a linear extrapolation from its own two
    last samples. Weights are nonnegative and sum to ``T``.
    """
    lay = sample_layout(sigma, dt)
    h = lay.dt
    w = np.zeros(lay.n_steps + 1)
    ends = list(lay.segment_starts[1:]) + [lay.n_steps + 1]
    for j, (s, e) in enumerate(zip(lay.segment_starts, ends)):
        last = j == len(lay.segment_starts) - 1
        n = e - s
        if last:
            w[s] += h / 2
            w[s + 1:e - 1] += h
            w[e - 1] += h / 2
        elif n == 1:
            w[s] += h
        else:
            w[s] += h / 2
            w[s + 1:e - 1] += h
            w[e - 1] += h / 2 + 1.5 * h
            w[e - 2] -= 0.5 * h
    return w


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled closed-loop output ``z = (u, y)``."""

    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.shape[0] == 0:
            raise ValueError("trajectory needs at least one sample")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.shape[0])

    @property
    def n_outputs(self) -> int:
        return self.samples.shape[1]

    def __add__(self, other: Trajectory) -> Trajectory:
        _check_same_grid(self, other)
        return Trajectory(self.t0, self.dt, self.samples + other.samples)

    def __sub__(self, other: Trajectory) -> Trajectory:
        _check_same_grid(self, other)
        return Trajectory(self.t0, self.dt, self.samples - other.samples)

    def scaled(self, alpha: float) -> Trajectory:
        return Trajectory(self.t0, self.dt, alpha * self.samples)

    def l2_norm(self, sigma: SwitchingSignal) -> float:
        w = sample_weights(sigma, self.dt)
        if w.size != self.samples.shape[0]:
            raise ValueError("trajectory grid does not match the switching signal")
        return float(np.sqrt(w @ np.sum(self.samples**2, axis=1)))

    def to_csv(self, path) -> None:
        write_csv(path, self.times, self.samples, "z")

    @classmethod
    def from_csv(cls, path) -> Trajectory:
        t, data = read_csv(path)
        return cls(float(t[0]), _grid_step(t), data)


def _check_same_grid(a, b) -> None:
    if a.samples.shape != b.samples.shape or a.t0 != b.t0 or a.dt != b.dt:
        raise ValueError("trajectories live on different grids")


@dataclass(frozen=True)
class DisturbanceTrack:
    """Samples of ``v = (d, n)`` on a trajectory grid, held constant between samples."""

    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", s)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.samples, axis=1)))

    @classmethod
    def zeros(cls, t0, dt, n_samples, dim) -> DisturbanceTrack:
        return cls(t0, dt, np.zeros((n_samples, dim)))

    @classmethod
    def random(cls, rng: np.random.Generator, t0: float, dt: float, n_samples: int,
               dim: int, sup: float) -> DisturbanceTrack:
        """Random track whose largest sample norm is exactly ``sup``."""
        x = rng.standard_normal((n_samples, dim)) * rng.random((n_samples, 1))
        norms = np.linalg.norm(x, axis=1)
        peak = norms.max()
        if peak == 0.0 or sup == 0.0:
            return cls.zeros(t0, dt, n_samples, dim)
        return cls(t0, dt, x * (sup / peak))

    def to_csv(self, path) -> None:
        t = self.t0 + self.dt * np.arange(self.samples.shape[0])
        write_csv(path, t, self.samples, "v")

    @classmethod
    def from_csv(cls, path) -> DisturbanceTrack:
        t, data = read_csv(path)
        return cls(float(t[0]), _grid_step(t), data)


@contextlib.contextmanager
def atomic_open(path):
    """Open ``path`` for writing via a temp file renamed into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_table(path, header, rows) -> None:
    with atomic_open(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" for x in row])


def write_csv(path, t, data, prefix: str) -> None:
    header = ["t"] + [f"{prefix}_{i + 1}" for i in range(data.shape[1])]
    write_table(path, header, np.column_stack([t, data]))


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no samples")
    arr = np.array([[float(x) for x in r] for r in rows[1:]])
    return arr[:, 0], arr[:, 1:]


def _grid_step(t: np.ndarray) -> float:
    if t.size < 2:
        raise ValueError("need at least two samples to infer dt")
    steps = np.diff(t)
    dt = float((t[-1] - t[0]) / (t.size - 1))
    if np.max(np.abs(steps - dt)) > 1e-9 * max(abs(dt), 1.0):
        raise ValueError("samples are not uniformly spaced")
    return dt


class SwitchedLoop:
    """Closed-loop matrices of every bank mode at one parameter value."""

    def __init__(self, plant: Plant, bank: ControllerBank, theta):
        self.plant = plant
        self.bank = bank
        self.theta = np.asarray(theta, dtype=float)
        self.modes: list[ClosedLoopMatrices] = [assemble_closed_loop(plant, m, self.theta) for m in bank]

    @property
    def n_state(self) -> int:
        return self.modes[0].Psi.shape[0]

    @property
    def n_out(self) -> int:
        return self.modes[0].Lambda.shape[0]

    @property
    def n_dist(self) -> int:
        return self.modes[0].Xi.shape[1]

    def step_exponentials(self, dt: float) -> list[np.ndarray]:
        return [expm(cl.Psi * dt) for cl in self.modes]

    def zoh_matrices(self, dt: float) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(exp(Psi dt), int_0^dt exp(Psi s) ds Xi)`` per mode."""
        n, p = self.n_state, self.n_dist
        out = []
        for cl in self.modes:
            M = np.zeros((n + p, n + p))
            M[:n, :n] = cl.Psi
            M[:n, n:] = cl.Xi
            E = expm(M * dt)
            out.append((E[:n, :n], E[:n, n:]))
        return out

    def transition_samples(self, lay: SampleLayout) -> np.ndarray:
        """``Phi(t_k, t0)`` for every sample, shape ``(n_steps + 1, n, n)``."""
        E = self.step_exponentials(lay.dt)
        n = self.n_state
        Phi = np.empty((lay.n_steps + 1, n, n))
        Phi[0] = np.eye(n)
        for k, m in enumerate(lay.step_modes):
            Phi[k + 1] = E[m] @ Phi[k]
        return Phi

    def output_basis(self, lay: SampleLayout) -> np.ndarray:
        """``Lambda_sigma(t_k) Phi(t_k, t0)``, shape ``(n_steps + 1, m, n)``."""
        Phi = self.transition_samples(lay)
        Lam = np.stack([cl.Lambda for cl in self.modes])
        return np.einsum("kij,kjl->kil", Lam[lay.sample_modes], Phi)


def transition_matrix(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta, t: float) -> np.ndarray:
    """``Phi_sigma(t, t0, theta)`` as a chronological product of segment exponentials."""
    if not sigma.t0 <= t <= sigma.horizon_end:
        raise ValueError(f"t={t} outside [{sigma.t0}, {sigma.horizon_end}]")
    sigma.check_bank(bank)
    loop = SwitchedLoop(plant, bank, theta)
    Phi = np.eye(loop.n_state)
    for a, b, m in sigma.segments():
        if t <= a:
            break
        h = min(b, t) - a
        Phi = expm(loop.modes[m].Psi * h) @ Phi
    return Phi


def _check_chi0(loop: SwitchedLoop, chi0) -> np.ndarray:
    chi0 = np.asarray(chi0, dtype=float).ravel()
    if chi0.size != loop.n_state:
        raise ValueError(f"chi0 must have length {loop.n_state}, got {chi0.size}")
    return chi0


def simulate_autonomous(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta, chi0,
                        dt: float | None = None) -> Trajectory:
    """Natural response ``z(t_k) = Lambda Phi(t_k, t0) chi0`` on the aligned grid."""
    sigma.check_bank(bank)
    lay = sample_layout(sigma, dt)
    loop = SwitchedLoop(plant, bank, theta)
    chi0 = _check_chi0(loop, chi0)
    E = loop.step_exponentials(lay.dt)
    Lam = [cl.Lambda for cl in loop.modes]
    chi = chi0.copy()
    out = np.empty((lay.n_steps + 1, loop.n_out))
    for k in range(lay.n_steps + 1):
        out[k] = Lam[lay.sample_modes[k]] @ chi
        if k < lay.n_steps:
            chi = E[lay.step_modes[k]] @ chi
    return Trajectory(lay.t0, lay.dt, out)


def simulate_forced(plant: Plant, bank: ControllerBank, sigma: SwitchingSignal, theta, chi0,
                    v: DisturbanceTrack, dt: float | None = None) -> tuple[Trajectory, Trajectory]:
    """Response to ``chi0`` and a zero-order-hold disturbance ``v``.

    Returns ``(z, z_forced)``: the full output and the response from a zero
    initial state, each computed by its own recursion.
    """
    sigma.check_bank(bank)
    if dt is None:
        dt = v.dt
    lay = sample_layout(sigma, dt)
    loop = SwitchedLoop(plant, bank, theta)
    chi0 = _check_chi0(loop, chi0)
    if v.samples.shape != (lay.n_steps + 1, loop.n_dist):
        raise ValueError(
            f"disturbance must have shape {(lay.n_steps + 1, loop.n_dist)}, got {v.samples.shape}"
        )
    if abs(v.dt - lay.dt) > 1e-12 * lay.dt or abs(v.t0 - lay.t0) > 1e-12 * max(1.0, abs(lay.t0)):
        raise ValueError("disturbance grid does not match the simulation grid")
    zoh = loop.zoh_matrices(lay.dt)
    Lam = [cl.Lambda for cl in loop.modes]
    Gam = [cl.Gamma for cl in loop.modes]

    def run(x0):
        chi = x0.copy()
        out = np.empty((lay.n_steps + 1, loop.n_out))
        for k in range(lay.n_steps + 1):
            m = lay.sample_modes[k]
            out[k] = Lam[m] @ chi + Gam[m] @ v.samples[k]
            if k < lay.n_steps:
                Ed, Fd = zoh[lay.step_modes[k]]
                chi = Ed @ chi + Fd @ v.samples[k]
        return Trajectory(lay.t0, lay.dt, out)

    return run(chi0), run(np.zeros_like(chi0))
