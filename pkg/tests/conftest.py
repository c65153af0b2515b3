"""Shared fixtures and independent numerical oracles.

The oracles here use nothing from the package beyond plain matrices:
fixed-step RK4 for trajectories and trapezoid sums for Gramians.
"""

import numpy as np
import pytest

from switchid import ControllerBank, ControllerMode, Plant, UncertaintyBox
from switchid.models import gain_bank, servo_plant
from switchid.poly import ParamMatrixFamily, PolyScalar
from switchid.sim import make_round_robin_signal


def rk4_flow(M, x0, h, steps):
    """Integrate ``x' = M x`` with ``steps`` RK4 steps of size ``h``."""
    x = np.array(x0, dtype=float)
    for _ in range(steps):
        k1 = M @ x
        k2 = M @ (x + 0.5 * h * k1)
        k3 = M @ (x + 0.5 * h * k2)
        k4 = M @ (x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def rk4_rhs(f, x0, t0, t1, steps):
    """Integrate ``x' = f(t, x)`` from ``t0`` to ``t1``."""
    h = (t1 - t0) / steps
    x = np.array(x0, dtype=float)
    t = t0
    for _ in range(steps):
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def constant_plant(A, B, C, lower=(0.0,), upper=(1.0,)) -> Plant:
    """Plant whose matrices do not depend on the parameter."""
    n = len(lower)
    box = UncertaintyBox(list(lower), list(upper))

    def fam(M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return ParamMatrixFamily([[PolyScalar.constant(x, n) for x in row] for row in M], n,
                                 shape=M.shape)

    return Plant(fam(A), fam(B), fam(C), box)


def scalar_param_plant(lower=-2.0, upper=-1.0) -> Plant:
    """``x' = theta x + u``, ``y = x``."""
    box = UncertaintyBox([lower], [upper])
    th = PolyScalar.variable(0, 1)
    one = PolyScalar.constant(1.0, 1)
    return Plant(ParamMatrixFamily([[th]], 1), ParamMatrixFamily([[one]], 1),
                 ParamMatrixFamily([[one]], 1), box)


@pytest.fixture
def servo_two():
    """Two-parameter servo with a two-gain bank and round-robin schedule."""
    plant = servo_plant((1.0, 3.0), (1.0, 2.0))
    bank = gain_bank(0.5, 1.0)
    sigma = make_round_robin_signal(2, 0.0, 4.0)
    return plant, bank, sigma


@pytest.fixture
def dynamic_setup():
    """Random plant with a dynamic two-mode controller, for generic checks."""
    rng = np.random.default_rng(42)
    A = rng.standard_normal((3, 3)) - 1.5 * np.eye(3)
    B = rng.standard_normal((3, 1))
    C = rng.standard_normal((2, 3))
    plant = constant_plant(A, B, C)
    modes = []
    for _ in range(2):
        modes.append(ControllerMode(-np.eye(1) + 0.3 * rng.standard_normal((1, 1)),
                                    rng.standard_normal((1, 2)), rng.standard_normal((1, 1)),
                                    0.3 * rng.standard_normal((1, 2))))
    bank = ControllerBank(tuple(modes))
    sigma = make_round_robin_signal(2, 0.0, 2.0)
    return plant, bank, sigma


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
