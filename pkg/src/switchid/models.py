"""Ready-made plants.

``servo_plant`` is the second-order servo ``b / (s (s + a))`` with
``theta = (a, b)``:

    A = [[0, 1], [0, -a]],  B = [[0], [b]],  C = [[1, 0]]

Under a static gain ``u = -K y`` its closed-loop polynomial is
``s^2 + a s + b K``.
"""

from __future__ import annotations

import math

import numpy as np

from .plant import ControllerBank, ControllerMode, Plant, UncertaintyBox
from .poly import ParamMatrixFamily, PolyScalar


def servo_plant(a_range=(1.0, 2.0), b_range=(1.0, 2.0)) -> Plant:
    """Servo plant over ``a in a_range``, ``b in b_range``; a scalar fixes that component."""
    a_lo, a_hi = (a_range, a_range) if np.isscalar(a_range) else a_range
    b_lo, b_hi = (b_range, b_range) if np.isscalar(b_range) else b_range
    n = 2
    zero = PolyScalar.constant(0.0, n)
    one = PolyScalar.constant(1.0, n)
    a = PolyScalar.variable(0, n)
    b = PolyScalar.variable(1, n)
    A = ParamMatrixFamily([[zero, one], [zero, -a]], n)
    B = ParamMatrixFamily([[zero], [b]], n)
    C = ParamMatrixFamily([[one, zero]], n)
    return Plant(A, B, C, UncertaintyBox([a_lo, b_lo], [a_hi, b_hi]))


def gain_bank(*gains: float) -> ControllerBank:
    """Bank of static output-feedback gains ``u = -K_i y``."""
    return ControllerBank(tuple(ControllerMode.static([[k]]) for k in gains))


def servo_resultant_one_param(K: float, b: float, b_prime: float) -> float:
    """Closed-form resultant when only ``b`` varies: ``K^2 (b - b')^2``."""
    return K**2 * (b - b_prime) ** 2


def servo_resultant(K: float, a: float, b: float, a_prime: float, b_prime: float) -> float:
    """Closed-form resultant when both parameters vary."""
    return K**2 * (b - b_prime) ** 2 - K * (b * a_prime - a * b_prime) * (a - a_prime)


def servo_common_root_pair(a: float, b: float, K: float, eps: float, branch: int = 1):
    """A second parameter ``(a', b')`` whose loop under gain ``K`` shares a root with ``(a, b)``.

    Solves ``(b - b')^2 = eps`` and ``(b a' - a b')(a - a') = K eps``. Real
    solutions exist when ``a^2 >= 4 b K``, i.e. when the loop at ``(a, b)``
    has real poles.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    disc = a * a - 4 * b * K
    if disc < 0:
        raise ValueError("no real solution: the loop at (a, b) has complex poles")
    r = math.sqrt(eps)
    t = r * (a + branch * math.sqrt(disc)) / (2 * b)
    return a + t, b + r
