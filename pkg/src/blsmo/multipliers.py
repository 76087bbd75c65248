"""Incremental multiplier matrices.

A symmetric ``M`` of size ``(n_q + n_f)`` certifies a nonlinearity ``f`` when

    [dq; df]^T M [dq; df] >= 0,   dq = q1 - q2,  df = f(q1) - f(q2)

for every pair ``q1, q2``.  Fixed-pattern classes return ``M`` up to a free
positive scale; the polytope and cone classes return block constraints on
``(M11, M12, M22)`` that the synthesis problem decides jointly with the
observer gains.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricM,
    AsymmetricR,
    ConfigInvalid,
    DimensionMismatch,
    EmptyVertexList,
    NonPositiveConstant,
)

KINDS = ("lipschitz", "quasi_lipschitz", "sector", "positively_real",
         "polytope_derivative", "cone_derivative", "fixed")

SYM_TOL = 1e-12


@dataclass(frozen=True)
class BlockConstraint:
    """One matrix (in)equality on the multiplier blocks.

    ``sense`` is ``"psd"`` (expr >= 0), ``"nsd"`` (expr <= 0) or ``"zero"``.
    ``expr`` maps ``(M11, M12, M22)`` to a matrix and must be affine.
    """

    name: str
    sense: str
    expr: Callable


@dataclass(frozen=True)
class MultiplierSpec:
    kind: str
    n_q: int
    n_f: int
    pattern: Optional[np.ndarray] = None
    constraints: tuple[BlockConstraint, ...] = field(default_factory=tuple)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown multiplier kind {self.kind!r}")
        if self.pattern is not None:
            P = np.array(self.pattern, dtype=float)
            _assert_symmetric(P)
            if P.shape != (self.size, self.size):
                raise DimensionMismatch(
                    f"pattern must be {self.size}x{self.size}, got {P.shape}")
            P.setflags(write=False)
            object.__setattr__(self, "pattern", P)

    @property
    def size(self) -> int:
        return self.n_q + self.n_f

    @property
    def has_free_blocks(self) -> bool:
        return self.pattern is None

    def instantiate(self, scale: float = 1.0) -> np.ndarray:
        """Concrete ``M = scale * pattern`` for fixed-pattern kinds."""
        if self.pattern is None:
            raise ValueError(f"{self.kind} multipliers have free blocks; use assemble()")
        if scale <= 0:
            raise NonPositiveConstant("multiplier scale must be positive")
        return scale * self.pattern

    def assemble(self, M11, M12, M22) -> np.ndarray:
        M11, M12, M22 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (M11, M12, M22))
        return np.block([[M11, M12], [M12.T, M22]])

    def constraint_report(self, M11, M12, M22) -> list[tuple[str, str, float]]:
        """Evaluate every block constraint at a candidate point.

        Returns ``(name, sense, value)`` where ``value`` is the smallest
        eigenvalue for ``psd``, the largest for ``nsd``, and the max-abs entry
        for ``zero``; the point satisfies a constraint when the value is
        respectively >= 0, <= 0 and == 0.
        """
        M11, M12, M22 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (M11, M12, M22))
        out = []
        for c in self.constraints:
            val = np.atleast_2d(c.expr(M11, M12, M22))
            if c.sense == "zero":
                v = float(np.abs(val).max())
            else:
                eig = np.linalg.eigvalsh((val + val.T) / 2)
                v = float(eig[0] if c.sense == "psd" else eig[-1])
            out.append((c.name, c.sense, v))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def _assert_symmetric(M: np.ndarray, exc=AsymmetricM):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > SYM_TOL * scale:
        raise exc("matrix is not symmetric")


def _as2d(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def imm_lipschitz(L_f: float, n_q: int = 1, n_f: int = 1) -> MultiplierSpec:
    """``[[L_f^2 I, 0], [0, -I]]`` for ``||df|| <= L_f ||dq||``."""
    if not L_f > 0:
        raise NonPositiveConstant("Lipschitz constant must be positive")
    pattern = np.block([
        [L_f ** 2 * np.eye(n_q), np.zeros((n_q, n_f))],
        [np.zeros((n_f, n_q)), -np.eye(n_f)],
    ])
    return MultiplierSpec("lipschitz", n_q, n_f, pattern, params={"L_f": float(L_f)})


def imm_quasi_lipschitz(L_f: float, Q, R) -> MultiplierSpec:
    """``[[2 L_f R, -Q], [-Q^T, 0]]`` for ``dq^T Q df <= L_f dq^T R dq``."""
    Q, R = _as2d(Q), _as2d(R)
    _assert_symmetric(R, AsymmetricR)
    n_q, n_f = Q.shape
    if R.shape != (n_q, n_q):
        raise DimensionMismatch(f"R must be {n_q}x{n_q}")
    pattern = np.block([[2.0 * L_f * R, -Q], [-Q.T, np.zeros((n_f, n_f))]])
    return MultiplierSpec("quasi_lipschitz", n_q, n_f, pattern,
                          params={"L_f": float(L_f), "Q": Q.tolist(), "R": R.tolist()})


def imm_sector(M11, M12, M21, M22, X) -> MultiplierSpec:
    """Multiplier for ``(M11 dq + M12 df)^T X (M21 dq + M22 df) >= 0``.

    The quadratic form of the returned matrix is exactly twice the left-hand
    side, for any square ``X``.
    """
    M11, M12, M21, M22, X = (_as2d(a) for a in (M11, M12, M21, M22, X))
    k, n_q = M11.shape
    n_f = M12.shape[1]
    if (M12.shape[0] != k or X.shape[0] != k or M21.shape[1] != n_q
            or M22.shape != (M21.shape[0], n_f) or X.shape[1] != M21.shape[0]):
        raise DimensionMismatch("sector blocks are not conformal")
    Ma = M11.T @ X @ M21 + M21.T @ X.T @ M11
    Mb = M11.T @ X @ M22 + M21.T @ X.T @ M12
    Mc = M12.T @ X @ M22 + M22.T @ X.T @ M12
    M = np.block([[Ma, Mb], [Mb.T, Mc]])
    _assert_symmetric(M)
    return MultiplierSpec("sector", n_q, n_f, (M + M.T) / 2,
                          params={"M11": M11.tolist(), "M12": M12.tolist(),
                                  "M21": M21.tolist(), "M22": M22.tolist(), "X": X.tolist()})


def imm_positively_real(X, kappa: float = 1.0) -> MultiplierSpec:
    """``kappa [[0, X^T], [X, 0]]`` for ``df^T X dq >= 0``."""
    if not kappa > 0:
        raise NonPositiveConstant("kappa must be positive")
    X = _as2d(X)
    n_f, n_q = X.shape
    pattern = kappa * np.block([[np.zeros((n_q, n_q)), X.T], [X, np.zeros((n_f, n_f))]])
    return MultiplierSpec("positively_real", n_q, n_f, pattern,
                          params={"X": X.tolist(), "kappa": float(kappa)})


def imm_fixed(M, n_q: int) -> MultiplierSpec:
    M = _as2d(M)
    _assert_symmetric(M)
    return MultiplierSpec("fixed", n_q, M.shape[0] - n_q, M, params={"M": M.tolist(), "n_q": n_q})


def _vertices(vertices: Sequence) -> list[np.ndarray]:
    if vertices is None or len(vertices) == 0:
        raise EmptyVertexList("at least one vertex matrix is required")
    verts = [_as2d(v) for v in vertices]
    shape = verts[0].shape
    if any(v.shape != shape for v in verts):
        raise DimensionMismatch("all vertex matrices must share one shape")
    return verts


def imm_polytope_constraints(vertices: Sequence) -> MultiplierSpec:
    """Block constraints for ``df/dq`` in the convex hull of ``vertices``.

    ``M22 <= 0`` and ``M11 + M12 th + th^T M12^T + th^T M22 th >= 0`` for
    every vertex ``th`` (each ``n_f x n_q``).
    """
    verts = _vertices(vertices)
    n_f, n_q = verts[0].shape
    cons = [BlockConstraint("M22_nsd", "nsd", lambda M11, M12, M22: M22)]
    for k, th in enumerate(verts, start=1):
        cons.append(BlockConstraint(
            f"vertex_{k}", "psd",
            lambda M11, M12, M22, th=th: M11 + M12 @ th + th.T @ M12.T + th.T @ M22 @ th))
    return MultiplierSpec("polytope_derivative", n_q, n_f, None, tuple(cons),
                          params={"vertices": [v.tolist() for v in verts]})


def imm_cone_constraints(vertices: Sequence) -> MultiplierSpec:
    """Block constraints for ``df/dq`` in the cone spanned by ``vertices``.

    ``M22 om = 0`` and ``M12 om + om^T M12^T >= 0`` for every vertex ``om``.
    """
    verts = _vertices(vertices)
    n_f, n_q = verts[0].shape
    cons = []
    for k, om in enumerate(verts, start=1):
        cons.append(BlockConstraint(f"vertex_{k}_null", "zero",
                                    lambda M11, M12, M22, om=om: M22 @ om))
        cons.append(BlockConstraint(f"vertex_{k}", "psd",
                                    lambda M11, M12, M22, om=om: M12 @ om + om.T @ M12.T))
    return MultiplierSpec("cone_derivative", n_q, n_f, None, tuple(cons),
                          params={"vertices": [v.tolist() for v in verts]})


def multiplier_from_dict(doc: dict) -> MultiplierSpec:
    """Build a multiplier from a config entry such as ``{"kind": "lipschitz", "L_f": 1}``."""
    doc = dict(doc)
    kind = doc.pop("kind")
    if kind == "lipschitz":
        return imm_lipschitz(doc["L_f"], doc.get("n_q", 1), doc.get("n_f", 1))
    if kind == "quasi_lipschitz":
        return imm_quasi_lipschitz(doc["L_f"], doc["Q"], doc["R"])
    if kind == "sector":
        return imm_sector(doc["M11"], doc["M12"], doc["M21"], doc["M22"], doc["X"])
    if kind == "positively_real":
        return imm_positively_real(doc["X"], doc.get("kappa", 1.0))
    if kind == "polytope_derivative":
        return imm_polytope_constraints(doc["vertices"])
    if kind == "cone_derivative":
        return imm_cone_constraints(doc["vertices"])
    if kind == "fixed":
        return imm_fixed(doc["M"], doc["n_q"])
    raise ConfigInvalid(f"unknown multiplier kind {kind!r}; expected one of {KINDS}")


# -- sampling check ----------------------------------------------------------

@dataclass(frozen=True)
class IqcReport:
    min_form_value: float
    violating_pair: Optional[tuple[np.ndarray, np.ndarray]]
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.violating_pair is None


def _eval_f(f, Q: np.ndarray) -> np.ndarray:
    rows = [np.atleast_1d(np.asarray(f(q), dtype=float)) for q in Q]
    return np.vstack(rows)


def check_iqc(M, f: Callable, n_q: int = 1, n_samples: int = 10_000,
              radius: float = 10.0, sampler: Optional[Callable] = None,
              seed: int = 0, tol: float = 1e-9) -> IqcReport:
    """Sample pairs ``(q1, q2)`` and evaluate the incremental quadratic form.

    ``f`` maps a length-``n_q`` vector to the nonlinearity value.  By default
    half of the pairs are drawn independently from the hypercube
    ``[-radius, radius]^n_q`` and half are near-coincident, to probe the
    local slope as well as large increments.  ``sampler(rng, n)`` may supply
    custom ``(Q1, Q2)`` arrays instead.  A clean report is evidence, not proof.
    """
    M = _as2d(M)
    _assert_symmetric(M)
    rng = np.random.default_rng(seed)
    if sampler is not None:
        Q1, Q2 = sampler(rng, n_samples)
        Q1, Q2 = np.asarray(Q1, float).reshape(-1, n_q), np.asarray(Q2, float).reshape(-1, n_q)
    else:
        n_far = n_samples - n_samples // 2
        Q1 = rng.uniform(-radius, radius, size=(n_samples, n_q))
        Q2 = np.empty_like(Q1)
        Q2[:n_far] = rng.uniform(-radius, radius, size=(n_far, n_q))
        near = rng.normal(scale=1e-3 * radius, size=(n_samples - n_far, n_q))
        Q2[n_far:] = np.clip(Q1[n_far:] + near, -radius, radius)
    F1, F2 = _eval_f(f, Q1), _eval_f(f, Q2)
    Z = np.hstack([Q1 - Q2, F1 - F2])
    if Z.shape[1] != M.shape[0]:
        raise DimensionMismatch(f"M is {M.shape[0]}x{M.shape[0]} but [dq; df] has {Z.shape[1]} entries")
    forms = np.einsum("ij,jk,ik->i", Z, M, Z)
    idx = int(np.argmin(forms))
    bad = np.flatnonzero(forms < -tol)
    violating = (Q1[bad[0]].copy(), Q2[bad[0]].copy()) if bad.size else None
    return IqcReport(float(forms[idx]), violating, len(forms))
