"""A subset of the Moré, Garbow & Hillstrom (1981) unconstrained test set.

Each problem is a sum of squares ``sum(r_i(x)**2)`` with its standard
starting point and known minimum value.
"""
from __future__ import annotations

import numpy as np

from ..optimizer import Problem

__all__ = ["more_suite", "MORE_NAMES"]


def _sumsq(residuals):
    def f(x):
        r = residuals(np.asarray(x, dtype=float))
        return float(r @ r)
    f.__name__ = residuals.__name__
    return f


def rosen(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])


def freud_roth(x):
    return np.array([
        -13.0 + x[0] + ((5.0 - x[1]) * x[1] - 2.0) * x[1],
        -29.0 + x[0] + ((x[1] + 1.0) * x[1] - 14.0) * x[1],
    ])


def beale(x):
    y = np.array([1.5, 2.25, 2.625])
    i = np.arange(1, 4)
    return y - x[0] * (1.0 - x[1] ** i)


def helical(x):
    theta = np.arctan(x[1] / x[0]) / (2 * np.pi) if x[0] != 0 else 0.25 * np.sign(x[1])
    if x[0] < 0:
        theta += 0.5
    return np.array([
        10.0 * (x[2] - 10.0 * theta),
        10.0 * (np.hypot(x[0], x[1]) - 1.0),
        x[2],
    ])


_BARD_Y = np.array([0.14, 0.18, 0.22, 0.25, 0.29, 0.32, 0.35, 0.39,
                    0.37, 0.58, 0.73, 0.96, 1.34, 2.10, 4.39])


def bard(x):
    u = np.arange(1.0, 16.0)
    v = 16.0 - u
    w = np.minimum(u, v)
    return _BARD_Y - (x[0] + u / (v * x[1] + w * x[2]))


def box_3d(x):
    t = 0.1 * np.arange(1.0, 11.0)
    return (np.exp(-t * x[0]) - np.exp(-t * x[1])
            - x[2] * (np.exp(-t) - np.exp(-10.0 * t)))


def powell_s(x):
    return np.array([
        x[0] + 10.0 * x[1],
        np.sqrt(5.0) * (x[2] - x[3]),
        (x[1] - 2.0 * x[2]) ** 2,
        np.sqrt(10.0) * (x[0] - x[3]) ** 2,
    ])


def wood(x):
    return np.array([
        10.0 * (x[1] - x[0] ** 2),
        1.0 - x[0],
        np.sqrt(90.0) * (x[3] - x[2] ** 2),
        1.0 - x[2],
        np.sqrt(10.0) * (x[1] + x[3] - 2.0),
        (x[1] - x[3]) / np.sqrt(10.0),
    ])


_KOW_Y = np.array([0.1957, 0.1947, 0.1735, 0.1600, 0.0844, 0.0627,
                   0.0456, 0.0342, 0.0323, 0.0235, 0.0246])
_KOW_U = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.167, 0.125, 0.1,
                   0.0833, 0.0714, 0.0625])


def kow_osb(x):
    u = _KOW_U
    return _KOW_Y - x[0] * (u ** 2 + u * x[1]) / (u ** 2 + u * x[2] + x[3])


def brown_den(x):
    t = np.arange(1.0, 21.0) / 5.0
    return ((x[0] + t * x[1] - np.exp(t)) ** 2
            + (x[2] + x[3] * np.sin(t) - np.cos(t)) ** 2)


def ex_rosen(x):
    odd, even = x[0::2], x[1::2]
    r = np.empty_like(x)
    r[0::2] = 10.0 * (even - odd ** 2)
    r[1::2] = 1.0 - odd
    return r


def ex_powell(x):
    x = x.reshape(-1, 4)
    r = np.column_stack([
        x[:, 0] + 10.0 * x[:, 1],
        np.sqrt(5.0) * (x[:, 2] - x[:, 3]),
        (x[:, 1] - 2.0 * x[:, 2]) ** 2,
        np.sqrt(10.0) * (x[:, 0] - x[:, 3]) ** 2,
    ])
    return r.reshape(-1)


# name -> (residuals, start, f*, argmin or None)
_TABLE = {
    "rosen": (rosen, [-1.2, 1.0], 0.0, [1.0, 1.0]),
    # the standard start lies in the basin of the local minimum; the global
    # one (f = 0 at (5, 4)) is not reachable by a descent method from there
    "freud_roth": (freud_roth, [0.5, -2.0], 48.98425367924002,
                   [11.412778986902094, -0.8968052532744765]),
    "beale": (beale, [1.0, 1.0], 0.0, [3.0, 0.5]),
    "helical": (helical, [-1.0, 0.0, 0.0], 0.0, [1.0, 0.0, 0.0]),
    "bard": (bard, [1.0, 1.0, 1.0], 8.214877306578989e-03, None),
    "box_3d": (box_3d, [0.0, 10.0, 20.0], 0.0, [1.0, 10.0, 1.0]),
    "powell_s": (powell_s, [3.0, -1.0, 0.0, 1.0], 0.0, [0.0] * 4),
    "wood": (wood, [-3.0, -1.0, -3.0, -1.0], 0.0, [1.0] * 4),
    "kow_osb": (kow_osb, [0.25, 0.39, 0.415, 0.39], 3.075056038492370e-04, None),
    "brown_den": (brown_den, [25.0, 5.0, -5.0, -1.0], 8.582220162635628e+04, None),
    "ex_rosen": (ex_rosen, [-1.2, 1.0] * 5, 0.0, [1.0] * 10),
    "ex_powell": (ex_powell, [3.0, -1.0, 0.0, 1.0] * 3, 0.0, [0.0] * 12),
}

MORE_NAMES = tuple(_TABLE)


def more_suite() -> list[Problem]:
    """The twelve registered test problems, each with ``known_optimum``."""
    out = []
    for name, (res, x0, fstar, xstar) in _TABLE.items():
        out.append(Problem(
            name=name,
            dim=len(x0),
            objective=_sumsq(res),
            x0=np.array(x0, dtype=float),
            known_optimum=(fstar, None if xstar is None else np.array(xstar)),
            description=f"Moré-Garbow-Hillstrom '{name}', n={len(x0)}",
        ))
    return out
