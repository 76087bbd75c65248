"""Solver-facing normal form for small semidefinite programs.

All decision variables are flattened into one scalar vector ``x``.  Each
semidefinite constraint is stored as ``F0 + sum_i x_i F_i >= 0`` (SDPA
convention), equalities as ``A x = b`` and the objective as ``min c^T x``.

Constraints are declared as ordinary numpy functions of named variable
values; because they are affine, their coefficient matrices are recovered by
evaluating them at zero and at each unit vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import Infeasible, NumericalFailure


@dataclass(frozen=True)
class Variable:
    name: str
    shape: tuple[int, int]
    symmetric: bool
    offset: int

    @property
    def size(self) -> int:
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c

    def unpack(self, x: np.ndarray) -> np.ndarray:
        vals = x[self.offset:self.offset + self.size]
        r, c = self.shape
        if not self.symmetric:
            return vals.reshape(r, c).copy()
        M = np.zeros((r, r))
        iu = np.triu_indices(r)
        M[iu] = vals
        return M + np.triu(M, 1).T


@dataclass
class LmiBlock:
    name: str
    F0: np.ndarray
    Fi: np.ndarray  # shape (n_vars, m, m)

    @property
    def dim(self) -> int:
        return self.F0.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.F0 + np.tensordot(x, self.Fi, axes=1)


@dataclass
class SdpProblem:
    variables: dict[str, Variable] = field(default_factory=dict)
    lmis: list[LmiBlock] = field(default_factory=list)
    eq_names: list[str] = field(default_factory=list)
    A_eq: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_vars(self) -> int:
        return sum(v.size for v in self.variables.values())

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: v.unpack(x) for name, v in self.variables.items()}

    def residuals(self, x: np.ndarray) -> dict[str, float]:
        """Smallest eigenvalue per LMI block and the max equality violation."""
        out = {blk.name: float(np.linalg.eigvalsh(blk.evaluate(x))[0]) for blk in self.lmis}
        if self.A_eq.size:
            out["equality"] = float(np.abs(self.A_eq @ x - self.b_eq).max())
        return out


class SdpBuilder:
    """Declare variables and affine constraints by example."""

    def __init__(self):
        self.problem = SdpProblem()
        self._eq_rows: list[np.ndarray] = []
        self._eq_rhs: list[float] = []
        self._objective: Optional[Callable] = None

    def _add(self, name, shape, symmetric):
        if name in self.problem.variables:
            raise ValueError(f"duplicate variable {name!r}")
        var = Variable(name, shape, symmetric, self.problem.n_vars)
        self.problem.variables[name] = var
        return var

    def symmetric(self, name: str, n: int) -> Variable:
        return self._add(name, (n, n), True)

    def matrix(self, name: str, rows: int, cols: int) -> Variable:
        return self._add(name, (rows, cols), False)

    def scalar(self, name: str) -> Variable:
        return self._add(name, (1, 1), False)

    def _basis(self, fn):
        n = self.problem.n_vars
        x = np.zeros(n)
        base = np.atleast_2d(np.asarray(fn(self.problem.unpack(x)), dtype=float))
        coeffs = np.empty((n,) + base.shape)
        for i in range(n):
            x[i] = 1.0
            coeffs[i] = np.atleast_2d(fn(self.problem.unpack(x))) - base
            x[i] = 0.0
        return base, coeffs

    def psd(self, name: str, fn: Callable, margin: float = 0.0) -> None:
        """Require ``fn(vars) >= margin * I``; ``fn`` must return a symmetric matrix."""
        base, coeffs = self._basis(fn)
        if base.shape[0] != base.shape[1]:
            raise ValueError(f"LMI {name!r} is not square")
        sym = lambda M: (M + np.swapaxes(M, -1, -2)) / 2
        base, coeffs = sym(base), sym(coeffs)
        base = base - margin * np.eye(base.shape[0])
        self.problem.lmis.append(LmiBlock(name, base, coeffs))

    def nsd(self, name: str, fn: Callable, margin: float = 0.0) -> None:
        """Require ``fn(vars) <= -margin * I``."""
        self.psd(name, lambda v: -np.atleast_2d(fn(v)), margin)

    def equal(self, name: str, fn: Callable) -> None:
        """Require every entry of ``fn(vars)`` to vanish."""
        base, coeffs = self._basis(fn)
        rows = coeffs.reshape(coeffs.shape[0], -1).T
        for k, row in enumerate(rows):
            if np.any(row) or base.flat[k] != 0:
                self._eq_rows.append(row)
                self._eq_rhs.append(-base.flat[k])
                self.problem.eq_names.append(f"{name}[{k}]")

    def minimize(self, fn: Callable) -> None:
        self._objective = fn

    def build(self) -> SdpProblem:
        n = self.problem.n_vars
        p = self.problem
        p.A_eq = np.array(self._eq_rows).reshape(-1, n)
        p.b_eq = np.array(self._eq_rhs, dtype=float)
        if self._objective is None:
            p.c = np.zeros(n)
        else:
            _, coeffs = self._basis(lambda v: np.atleast_2d(self._objective(v)))
            p.c = coeffs.reshape(n)
        return p


# -- backend -----------------------------------------------------------------

@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    status: str
    objective: float


def solve_cvxpy(problem: SdpProblem, solver: str = "CLARABEL", tol: float = 1e-9,
                verbose: bool = False) -> SolveResult:
    """Default backend: hand the normal form to cvxpy."""
    import cvxpy as cp

    n = problem.n_vars
    x = cp.Variable(n)
    cons = []
    for blk in problem.lmis:
        m = blk.dim
        S = cp.Variable((m, m), symmetric=True)
        G = blk.Fi.reshape(n, m * m).T
        cons += [S >> 0, cp.vec(S, order="C") == blk.F0.reshape(-1) + G @ x]
    if problem.A_eq.size:
        cons.append(problem.A_eq @ x == problem.b_eq)
    prob = cp.Problem(cp.Minimize(problem.c @ x), cons)
    opts = {}
    if solver == "CLARABEL":
        opts = {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol}
    elif solver == "SCS":
        opts = {"eps": tol, "max_iters": 200_000}
    try:
        prob.solve(solver=solver, verbose=verbose, **opts)
    except cp.error.SolverError as exc:
        raise NumericalFailure(f"{solver} failed: {exc}") from exc
    status = prob.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible(f"solver reports {status}", status=status)
    if x.value is None or status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise NumericalFailure(f"solver returned status {status}")
    return SolveResult(np.asarray(x.value, dtype=float), status, float(prob.value))


# -- serialization -----------------------------------------------------------

def write_sdpa(problem: SdpProblem, path) -> None:
    """Write the problem in SDPA sparse format (``.dat-s``).

    SDPA solves ``min c^T x  s.t.  sum_i x_i F_i - F_0 >= 0``; our blocks are
    ``F0 + sum x_i F_i >= 0`` so the constant matrix is written negated.
    Equalities become one diagonal block holding ``A x - b >= 0`` and
    ``-(A x - b) >= 0``.
    """
    n = problem.n_vars
    blocks = [(blk.F0, blk.Fi) for blk in problem.lmis]
    if problem.A_eq.size:
        A, b = problem.A_eq, problem.b_eq
        diag0 = np.concatenate([-b, b])
        diagi = np.vstack([A, -A]).T  # (n, 2p)
        blocks.append(("diag", diag0, diagi))
    sizes = []
    for blk in blocks:
        sizes.append(-len(blk[1]) if isinstance(blk[0], str) else blk[0].shape[0])
    lines = [f"* blsmo synthesis problem, {n} variables",
             str(n), str(len(blocks)), " ".join(str(s) for s in sizes),
             " ".join(repr(float(v)) for v in problem.c)]

    def emit(mat_no, blk_no, M):
        r, cidx = np.nonzero(np.triu(M))
        for i, j in zip(r, cidx):
            lines.append(f"{mat_no} {blk_no} {i + 1} {j + 1} {float(M[i, j])!r}")

    for b_no, blk in enumerate(blocks, start=1):
        if isinstance(blk[0], str):
            _, d0, di = blk
            for k, v in enumerate(-d0):
                if v:
                    lines.append(f"0 {b_no} {k + 1} {k + 1} {float(v)!r}")
            for i in range(n):
                for k, v in enumerate(di[i]):
                    if v:
                        lines.append(f"{i + 1} {b_no} {k + 1} {k + 1} {float(v)!r}")
        else:
            F0, Fi = blk
            emit(0, b_no, -F0)
            for i in range(n):
                emit(i + 1, b_no, Fi[i])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
