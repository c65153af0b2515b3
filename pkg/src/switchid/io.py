"""JSON documents for plants, controller banks and switching signals.

Plant document::

    {
      "A": [[0, 1], [0, [{"exponents": [1, 0], "coeff": -1.0}]]],
      "B": [[0], [[{"exponents": [0, 1], "coeff": 1.0}]]],
      "C": [[1, 0]],
      "theta_box": {"lower": [1, 1], "upper": [2, 2]}
    }

Matrices are row-major; an entry is either a number or a list of
monomials. Bank document::

    {"modes": [{"K": [[1.0]]}, {"F": [[-1]], "G": [[1]], "H": [[1]], "K": [[0.5]]}]}

``F``, ``G`` and ``H`` may be omitted for static output feedback.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .plant import ControllerBank, ControllerMode, Plant, UncertaintyBox
from .poly import ParamMatrixFamily
from .sim import SwitchingSignal, atomic_open


def plant_from_dict(doc: dict) -> Plant:
    try:
        box = UncertaintyBox(doc["theta_box"]["lower"], doc["theta_box"]["upper"])
        n = box.n_theta
        A = ParamMatrixFamily.from_json(doc["A"], n)
        nx = A.rows
        B = ParamMatrixFamily.from_json(doc["B"], n, shape=(nx, len(doc["B"][0]) if doc["B"] else 0))
        C = ParamMatrixFamily.from_json(doc["C"], n, shape=(len(doc["C"]), nx))
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed plant document: {exc!r}") from exc
    return Plant(A, B, C, box)


def plant_to_dict(plant: Plant) -> dict:
    return {
        "A": plant.A.to_json(),
        "B": plant.B.to_json(),
        "C": plant.C.to_json(),
        "theta_box": {
            "lower": plant.theta_box.lower.tolist(),
            "upper": plant.theta_box.upper.tolist(),
        },
    }


def bank_from_dict(doc: dict) -> ControllerBank:
    modes = []
    try:
        for m in doc["modes"]:
            K = np.atleast_2d(np.asarray(m["K"], dtype=float))
            if "F" not in m or not np.size(m["F"]):
                modes.append(ControllerMode.static(K))
            else:
                modes.append(ControllerMode(m["F"], m["G"], m["H"], K))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed bank document: {exc!r}") from exc
    return ControllerBank(tuple(modes))


def bank_to_dict(bank: ControllerBank) -> dict:
    out = []
    for m in bank:
        d = {"K": m.K.tolist()}
        if m.n_xi:
            d.update(F=m.F.tolist(), G=m.G.tolist(), H=m.H.tolist())
        out.append(d)
    return {"modes": out}


def signal_to_dict(sigma: SwitchingSignal) -> dict:
    return {
        "breakpoints": list(sigma.breakpoints),
        "mode_indices": list(sigma.mode_indices),
        "horizon_end": sigma.horizon_end,
        "dwell": sigma.dwell,
    }


def signal_from_dict(doc: dict) -> SwitchingSignal:
    return SwitchingSignal(tuple(doc["breakpoints"]), tuple(doc["mode_indices"]),
                           doc["horizon_end"], doc.get("dwell"))


def read_json(path) -> dict:
    with Path(path).open() as fh:
        return json.load(fh)


def write_json(path, obj) -> None:
    """Write ``obj`` atomically with sorted keys, so equal inputs give equal bytes."""
    with atomic_open(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plant(path) -> Plant:
    return plant_from_dict(read_json(path))


def load_bank(path) -> ControllerBank:
    return bank_from_dict(read_json(path))
