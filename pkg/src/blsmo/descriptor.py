"""Plant model and its descriptor (augmented-state) representation.

The plant is

    x' = A x + Bf f(t, u, y, Cq x) + Bg g(t, u, y) + G w_x(t)
    y  = C x + D w_y(t)

and the descriptor form stacks ``xbar = [x; w_y]`` so that

    Ebar xbar' = Abar xbar + ...,   y = Cbar xbar

with ``Ebar = [I 0]``, ``Abar = [A 0]``, ``Cbar = [C D]``.  A left inverse of
``V = [Ebar; -Cbar]`` split column-wise gives ``(T1, T2)`` with
``T1 Ebar - T2 Cbar = I``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    RankDeficient,
    SingularNormalEquations,
    TooFewOutputs,
)
from .nonlinearities import Nonlinearity, make_f, make_g
from .signals import VectorSignal

IDENTITY_TOL = 1e-10
COND_LIMIT = 1e12


def _matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a bare list is read as a column
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def numerical_rank(M: np.ndarray) -> int:
    """Rank with singular-value cutoff ``max(dim) * eps * sigma_max``."""
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    tol = max(M.shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


@dataclass(frozen=True)
class PlantModel:
    """Nonlinear plant with unknown state and sensor disturbances.

    ``f`` and ``g`` are callbacks (``f(t, u, y, q)`` and ``g(t, u, y)``);
    ``w_x``/``w_y`` are only used by the simulator.
    """

    A: np.ndarray
    Bf: np.ndarray
    Bg: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Cq: np.ndarray
    f: Callable
    g: Optional[Callable] = None
    rho_x: float = 0.0
    w_x: Optional[Callable] = None
    w_y: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        for key in ("A", "Bf", "Bg", "G", "C", "D", "Cq"):
            object.__setattr__(self, key, _matrix(getattr(self, key), key))
        if self.rho_x < 0:
            raise ValueError("rho_x must be non-negative")
        self.validate()

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def m_x(self) -> int:
        return self.G.shape[1]

    @property
    def m_y(self) -> int:
        return self.D.shape[1]

    @property
    def n_q(self) -> int:
        return self.Cq.shape[0]

    @property
    def n_f(self) -> int:
        return self.Bf.shape[1]

    def validate(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        checks = (
            ("Bf", self.Bf.shape[0], n),
            ("Bg", self.Bg.shape[0], n),
            ("G", self.G.shape[0], n),
            ("C", self.C.shape[1], n),
            ("Cq", self.Cq.shape[1], n),
            ("D", self.D.shape[0], self.C.shape[0]),
        )
        for name, got, want in checks:
            if got != want:
                raise DimensionMismatch(
                    f"{name} has {got} along its state/output axis, expected {want}")
        if self.n_y < self.m_y:
            raise TooFewOutputs(
                f"need at least as many outputs as sensor disturbances (n_y={self.n_y}, m_y={self.m_y})")
        if numerical_rank(self.G) != self.m_x:
            raise RankDeficient("G must have full column rank")
        if numerical_rank(self.D) != self.m_y:
            raise RankDeficient("D must have full column rank")

    def f_of_q(self, q) -> np.ndarray:
        return np.atleast_1d(self.f(0.0, None, None, np.atleast_1d(q)))


@dataclass(frozen=True)
class DescriptorSystem:
    Ebar: np.ndarray
    Abar: np.ndarray
    Cbar: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    plant: PlantModel
    condition_number: float = field(default=1.0)

    @property
    def n(self) -> int:
        """Augmented state dimension ``n_x + m_y``."""
        return self.Ebar.shape[1]

    def identity_residual(self) -> float:
        return float(np.abs(self.T1 @ self.Ebar - self.T2 @ self.Cbar - np.eye(self.n)).max())


def compute_T(Ebar: np.ndarray, Cbar: np.ndarray, left_inverse: np.ndarray | None = None):
    """Split a left inverse of ``[Ebar; -Cbar]`` into ``(T1, T2)``.

    The Moore-Penrose pseudoinverse is used unless ``left_inverse`` is given.
    Returns ``(T1, T2, cond)`` where ``cond`` is the condition number of the
    normal-equations matrix ``V^T V``.
    """
    Ebar = np.asarray(Ebar, dtype=float)
    Cbar = np.asarray(Cbar, dtype=float)
    if Ebar.shape[1] != Cbar.shape[1]:
        raise DimensionMismatch("Ebar and Cbar must have the same number of columns")
    n_x, n = Ebar.shape
    V = np.vstack([Ebar, -Cbar])
    s = np.linalg.svd(V, compute_uv=False)
    cond = np.inf if s[-1] == 0 else float((s[0] / s[-1]) ** 2)
    if s.size < n or cond > COND_LIMIT:
        raise SingularNormalEquations(
            f"[Ebar; -Cbar] is numerically rank deficient (cond(V^T V) = {cond:.3g})")
    if left_inverse is None:
        T = np.linalg.pinv(V)
    else:
        T = np.asarray(left_inverse, dtype=float)
        if T.shape != (n, V.shape[0]):
            raise DimensionMismatch(f"left inverse must be {n}x{V.shape[0]}, got {T.shape}")
    resid = np.abs(T @ V - np.eye(n)).max()
    if resid > IDENTITY_TOL:
        raise SingularNormalEquations(f"left inverse residual {resid:.3g} exceeds {IDENTITY_TOL}")
    T1, T2 = T[:, :n_x].copy(), T[:, n_x:].copy()
    T1.setflags(write=False)
    T2.setflags(write=False)
    return T1, T2, cond


def build_descriptor(plant: PlantModel, left_inverse: np.ndarray | None = None) -> DescriptorSystem:
    plant.validate()
    n_x, m_y = plant.n_x, plant.m_y
    Ebar = np.hstack([np.eye(n_x), np.zeros((n_x, m_y))])
    Abar = np.hstack([plant.A, np.zeros((n_x, m_y))])
    Cbar = np.hstack([plant.C, plant.D])
    for M in (Ebar, Abar, Cbar):
        M.setflags(write=False)
    T1, T2, cond = compute_T(Ebar, Cbar, left_inverse)
    return DescriptorSystem(Ebar, Abar, Cbar, T1, T2, plant, cond)


def verify_structure_identity(T1, T2, Abar, Cbar, L1) -> float:
    """Max-abs entry of ``T1 Abar - Q T2 Cbar - R Cbar - Q``.

    ``Q = T1 Abar - L1 Cbar`` and ``R = L1 - Q T2``; the expression vanishes
    identically for any ``L1``, which is what makes the error dynamics
    independent of the augmented state.
    """
    T1, T2, Abar, Cbar, L1 = (np.atleast_2d(np.asarray(a, dtype=float))
                              for a in (T1, T2, Abar, Cbar, L1))
    n = T1.shape[0]
    if (T1.shape[1] != Abar.shape[0] or Abar.shape[1] != n or Cbar.shape[1] != n
            or T2.shape != (n, Cbar.shape[0]) or L1.shape != (n, Cbar.shape[0])):
        raise DimensionMismatch("incompatible shapes for the structure identity")
    Q = T1 @ Abar - L1 @ Cbar
    R = L1 - Q @ T2
    return float(np.abs(T1 @ Abar - Q @ T2 @ Cbar - R @ Cbar - Q).max())


# -- JSON documents ----------------------------------------------------------

def plant_from_dict(doc: dict) -> PlantModel:
    """Build a plant from a JSON-style document.

    Matrices are row-major nested lists; ``f``/``g`` are ``{"name", "params"}``
    registry references and ``w_x``/``w_y`` lists of waveform specs.
    """
    n_x = len(doc["A"])
    f = make_f(doc["f"]["name"], doc["f"].get("params"))
    g_doc = doc.get("g")
    g = make_g(g_doc["name"], g_doc.get("params")) if g_doc else None
    Bg = doc.get("Bg")
    if Bg is None:
        Bg = np.zeros((n_x, 1))
    w_x = VectorSignal.from_specs(doc.get("w_x", []))
    w_y = VectorSignal.from_specs(doc.get("w_y", []))
    G = _matrix(doc["G"], "G")
    D = _matrix(doc["D"], "D")
    if len(w_x) == 0:
        w_x = VectorSignal.zeros(G.shape[1])
    if len(w_y) == 0:
        w_y = VectorSignal.zeros(D.shape[1])
    if len(w_x) != G.shape[1] or len(w_y) != D.shape[1]:
        raise DimensionMismatch("disturbance generators must match the columns of G and D")
    rho_x = doc.get("rho_x")
    if rho_x is None:
        rho_x = w_x.sup_norm
    return PlantModel(
        A=doc["A"], Bf=doc["Bf"], Bg=Bg, G=G, C=doc["C"], D=D, Cq=doc["Cq"],
        f=f, g=g, rho_x=float(rho_x), w_x=w_x, w_y=w_y, name=doc.get("name", ""),
    )


def plant_to_dict(plant: PlantModel) -> dict:
    def ref(cb):
        if cb is None:
            return None
        if isinstance(cb, Nonlinearity):
            return cb.to_dict()
        raise TypeError("only registry nonlinearities can be serialized")

    doc = {key: getattr(plant, key).tolist() for key in ("A", "Bf", "Bg", "G", "C", "D", "Cq")}
    doc["f"] = ref(plant.f)
    doc["g"] = ref(plant.g)
    doc["rho_x"] = plant.rho_x
    for key in ("w_x", "w_y"):
        sig = getattr(plant, key)
        if isinstance(sig, VectorSignal):
            doc[key] = sig.to_list()
    if plant.name:
        doc["name"] = plant.name
    return doc
