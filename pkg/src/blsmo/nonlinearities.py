"""Registry of named nonlinearities.

Callbacks cannot be serialized, so JSON documents refer to them by name plus
a parameter dict.  ``f`` entries have the signature ``f(t, u, y, q)`` and
``g`` entries ``g(t, u, y)``.  Each entry may also carry an upper bound on
its modulus of continuity, used when choosing the sliding gain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UnknownNonlinearity


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    func: Callable
    params: dict = field(default_factory=dict)
    modulus: Optional[Callable[[float], float]] = None

    def __call__(self, *args):
        return self.func(*args)

    def of_q(self, q) -> np.ndarray:
        """Evaluate an ``f`` entry as a function of ``q`` alone."""
        return np.atleast_1d(self.func(0.0, None, None, np.atleast_1d(q)))

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def _f_zero(n_f=1):
    return lambda t, u, y, q: np.zeros(n_f), lambda r: 0.0


def _f_cos(gain=1.0):
    g = float(gain)
    # valid for scalar q; vector q is bounded by the same expression times sqrt(n)
    return (lambda t, u, y, q: g * np.cos(q),
            lambda r: abs(g) * 2.0 * np.sin(min(r, np.pi) / 2.0))


def _f_sin(gain=1.0):
    g = float(gain)
    return (lambda t, u, y, q: g * np.sin(q),
            lambda r: abs(g) * 2.0 * np.sin(min(r, np.pi) / 2.0))


def _f_q_abs_q(scale=1.0):
    c = float(scale)
    # not uniformly continuous on R; no global modulus
    return lambda t, u, y, q: c * q * np.abs(q), None


def _f_cubic(scale=1.0):
    c = float(scale)
    return lambda t, u, y, q: c * q ** 3, None


def _f_linear(slope=1.0):
    k = float(slope)
    return lambda t, u, y, q: k * np.asarray(q, dtype=float), lambda r: abs(k) * r


def _g_zero(n_g=1):
    return lambda t, u, y: np.zeros(n_g), None


def _g_sin_of_y(gain=1.0, index=0):
    a, i = float(gain), int(index)
    return lambda t, u, y: np.array([a * np.sin(y[i])]), None


F_REGISTRY = {
    "zero": _f_zero,
    "cos_of_q": _f_cos,
    "sin_of_q": _f_sin,
    "q_abs_q": _f_q_abs_q,
    "cubic": _f_cubic,
    "linear": _f_linear,
}

G_REGISTRY = {
    "zero": _g_zero,
    "sin_of_y": _g_sin_of_y,
}


def _make(registry, kind, name, params):
    try:
        factory = registry[name]
    except KeyError:
        raise UnknownNonlinearity(
            f"unknown {kind} nonlinearity {name!r}; registered: {sorted(registry)}") from None
    try:
        func, modulus = factory(**(params or {}))
    except TypeError as exc:
        raise UnknownNonlinearity(f"bad parameters for {kind} nonlinearity {name!r}: {exc}") from None
    return Nonlinearity(name, func, dict(params or {}), modulus)


def make_f(name: str, params: dict | None = None) -> Nonlinearity:
    return _make(F_REGISTRY, "f", name, params)


def make_g(name: str, params: dict | None = None) -> Nonlinearity:
    return _make(G_REGISTRY, "g", name, params)
