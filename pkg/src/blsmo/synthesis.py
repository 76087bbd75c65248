"""Observer gain synthesis.

With ``Y1 = P L1`` and fixed ``(alpha, L2)`` the design conditions are linear
in ``(P, Y1, F, M, mu)``:

    Xi + Phi^T M Phi <= 0
    G^T T1^T P = F Cbar
    [[P, I], [I, mu I]] >= 0
    rho >= rho_x

with

    Xi  = [[Acl^T P + P Acl + 2 alpha P,  P T1 Bf],
           [Bf^T T1^T P,                  0      ]],   Acl = T1 Abar - L1 Cbar
    Phi = [[Cq Ebar - L2 Cbar, 0], [0, I]].

The conditions are homogeneous in ``(P, Y1, F, M)``, so minimizing ``mu``
only makes sense with a scale cap.  ``p_max`` bounds ``P`` from above and
``y1_max`` bounds ``||Y1||``; leaving both unset lets ``mu`` drift to zero
while the gains blow up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .descriptor import DescriptorSystem, numerical_rank
from .errors import (
    Infeasible,
    MultiplierDimensionMismatch,
    NonFiniteModulus,
    NonPositiveArgument,
    NumericalFailure,
    PNotInvertible,
    RankDeficientT1G,
)
from .multipliers import MultiplierSpec
from .sdp import SdpBuilder, SdpProblem, solve_cvxpy

P_COND_LIMIT = 1e12
DEFINITE_EPS = 1e-9


@dataclass(frozen=True)
class SynthesisConfig:
    alpha: float
    L2: np.ndarray
    multiplier: MultiplierSpec
    rho_x: float
    eta: float
    minimize_mu: bool = True
    solver_tolerance: float = 1e-6
    rho: Optional[float] = None
    rho_safety: float = 1.0
    p_max: Optional[float] = None
    y1_max: Optional[float] = None
    zeta: Optional[float] = None
    zeta_min: float = 1e-6
    lmi_margin: float = DEFINITE_EPS
    solver: str = "CLARABEL"

    def __post_init__(self):
        if not self.alpha > 0:
            raise NonPositiveArgument("alpha must be positive")
        if not self.eta > 0:
            raise NonPositiveArgument("eta must be positive")
        if self.rho_x < 0:
            raise NonPositiveArgument("rho_x must be non-negative")
        L2 = np.atleast_2d(np.asarray(self.L2, dtype=float))
        L2.setflags(write=False)
        object.__setattr__(self, "L2", L2)


@dataclass(frozen=True)
class GainCheck:
    xi_max_eig: float
    equality_residual: float
    mu_block_min_eig: float
    p_min_eig: float
    rho_margin: float
    tolerance: float
    scale: float

    @property
    def passed(self) -> bool:
        tol = self.tolerance * self.scale
        return (self.xi_max_eig <= tol and self.equality_residual <= tol
                and self.mu_block_min_eig >= -tol and self.p_min_eig > 0
                and self.rho_margin >= 0)

    def to_dict(self) -> dict:
        return {"xi_max_eig": self.xi_max_eig, "equality_residual": self.equality_residual,
                "mu_block_min_eig": self.mu_block_min_eig, "p_min_eig": self.p_min_eig,
                "rho_margin": self.rho_margin, "tolerance": self.tolerance,
                "scale": self.scale, "passed": self.passed}


@dataclass(frozen=True)
class ObserverGains:
    P: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    F: np.ndarray
    rho: float
    eta: float
    mu: float
    M: np.ndarray
    alpha: float
    rho_x: float = 0.0
    zeta: Optional[float] = None
    Y1: Optional[np.ndarray] = None
    status: str = ""
    check: Optional[GainCheck] = None

    def with_rho(self, rho: float) -> "ObserverGains":
        return replace(self, rho=float(rho))

    def with_eta(self, eta: float) -> "ObserverGains":
        return replace(self, eta=float(eta))

    def to_dict(self) -> dict:
        doc = {
            "P": self.P.tolist(), "L1": self.L1.tolist(), "L2": self.L2.tolist(),
            "F": self.F.tolist(), "M": self.M.tolist(), "rho": self.rho, "eta": self.eta,
            "mu": self.mu, "alpha": self.alpha, "rho_x": self.rho_x, "zeta": self.zeta,
            "status": self.status,
        }
        if self.Y1 is not None:
            doc["Y1"] = self.Y1.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ObserverGains":
        arr = lambda k: np.atleast_2d(np.asarray(doc[k], dtype=float))
        return cls(
            P=arr("P"), L1=arr("L1"), L2=arr("L2"), F=arr("F"), rho=float(doc["rho"]),
            eta=float(doc["eta"]), mu=float(doc["mu"]), M=arr("M"), alpha=float(doc["alpha"]),
            rho_x=float(doc.get("rho_x", 0.0)), zeta=doc.get("zeta"),
            Y1=arr("Y1") if "Y1" in doc else None, status=doc.get("status", ""),
        )


def phi_matrix(descriptor: DescriptorSystem, L2: np.ndarray) -> np.ndarray:
    plant = descriptor.plant
    top = plant.Cq @ descriptor.Ebar - L2 @ descriptor.Cbar
    n_q, n = top.shape
    n_f = plant.n_f
    return np.block([[top, np.zeros((n_q, n_f))], [np.zeros((n_f, n)), np.eye(n_f)]])


def xi_matrix(descriptor: DescriptorSystem, P, Y1, alpha: float) -> np.ndarray:
    """The ``Xi`` block, linear in ``(P, Y1)``."""
    T1, Abar, Cbar = descriptor.T1, descriptor.Abar, descriptor.Cbar
    Bf = descriptor.plant.Bf
    TA = T1 @ Abar
    top_left = TA.T @ P - Cbar.T @ Y1.T + P @ TA - Y1 @ Cbar + 2.0 * alpha * P
    top_right = P @ T1 @ Bf
    n_f = Bf.shape[1]
    return np.block([[top_left, top_right], [top_right.T, np.zeros((n_f, n_f))]])


def _multiplier_value(spec: MultiplierSpec, v: dict, zeta_pinned: Optional[float]) -> np.ndarray:
    if spec.has_free_blocks:
        return spec.assemble(v["M11"], v["M12"], v["M22"])
    scale = zeta_pinned if zeta_pinned is not None else v["zeta"][0, 0]
    return scale * spec.pattern


def assemble_lmi(descriptor: DescriptorSystem, config: SynthesisConfig) -> SdpProblem:
    plant = descriptor.plant
    spec = config.multiplier
    if (spec.n_q, spec.n_f) != (plant.n_q, plant.n_f):
        raise MultiplierDimensionMismatch(
            f"multiplier is for (n_q, n_f)=({spec.n_q}, {spec.n_f}), plant has ({plant.n_q}, {plant.n_f})")
    if config.L2.shape != (plant.n_q, plant.n_y):
        raise MultiplierDimensionMismatch(f"L2 must be {plant.n_q}x{plant.n_y}, got {config.L2.shape}")
    n, n_y, m_x = descriptor.n, plant.n_y, plant.m_x
    T1G = descriptor.T1 @ plant.G
    Phi = phi_matrix(descriptor, config.L2)
    eye = np.eye(n)

    b = SdpBuilder()
    b.symmetric("P", n)
    b.matrix("Y1", n, n_y)
    b.matrix("F", m_x, n_y)
    if spec.has_free_blocks:
        b.symmetric("M11", spec.n_q)
        b.matrix("M12", spec.n_q, spec.n_f)
        b.symmetric("M22", spec.n_f)
    elif config.zeta is None:
        b.scalar("zeta")
    b.scalar("mu")

    M_of = lambda v: _multiplier_value(spec, v, config.zeta)
    # the f-f block is -M22 and vanishes for several multiplier classes, so the
    # strictness margin only applies to the state block
    margin = config.lmi_margin * np.diag(np.r_[np.ones(n), np.zeros(plant.n_f)])
    b.nsd("xi", lambda v: xi_matrix(descriptor, v["P"], v["Y1"], config.alpha)
          + Phi.T @ M_of(v) @ Phi + margin)
    b.equal("matching", lambda v: T1G.T @ v["P"] - v["F"] @ descriptor.Cbar)
    b.psd("mu_block", lambda v: np.block([[v["P"], eye], [eye, v["mu"][0, 0] * eye]]))
    b.psd("P_pos", lambda v: v["P"], margin=config.lmi_margin)
    if spec.has_free_blocks:
        for con in spec.constraints:
            fn = lambda v, con=con: con.expr(v["M11"], v["M12"], v["M22"])
            if con.sense == "psd":
                b.psd(con.name, fn)
            elif con.sense == "nsd":
                b.nsd(con.name, fn)
            else:
                b.equal(con.name, fn)
    elif config.zeta is None:
        b.psd("zeta_min", lambda v: v["zeta"] - config.zeta_min)
    if config.p_max is not None:
        b.psd("P_cap", lambda v: config.p_max * eye - v["P"])
    if config.y1_max is not None:
        r = config.y1_max
        b.psd("Y1_cap", lambda v: np.block([[r * eye, v["Y1"]], [v["Y1"].T, r * np.eye(n_y)]]))
    if config.minimize_mu:
        b.minimize(lambda v: v["mu"])
    return b.build()


def verify_gains(descriptor: DescriptorSystem, gains: ObserverGains,
                 tolerance: float = 1e-6) -> GainCheck:
    """Re-evaluate every design condition from the gains themselves."""
    P, L1 = gains.P, gains.L1
    n = descriptor.n
    Phi = phi_matrix(descriptor, gains.L2)
    lmi = xi_matrix(descriptor, P, P @ L1, gains.alpha) + Phi.T @ gains.M @ Phi
    lmi = (lmi + lmi.T) / 2
    T1G = descriptor.T1 @ descriptor.plant.G
    eq = T1G.T @ P - gains.F @ descriptor.Cbar
    eye = np.eye(n)
    mu_block = np.block([[P, eye], [eye, gains.mu * eye]])
    scale = max(1.0, float(np.linalg.norm(lmi, 2)), float(np.linalg.norm(P, 2)))
    return GainCheck(
        xi_max_eig=float(np.linalg.eigvalsh(lmi)[-1]),
        equality_residual=float(np.abs(eq).max()) if eq.size else 0.0,
        mu_block_min_eig=float(np.linalg.eigvalsh(mu_block)[0]),
        p_min_eig=float(np.linalg.eigvalsh(P)[0]),
        rho_margin=float(gains.rho - gains.rho_x),
        tolerance=tolerance,
        scale=scale,
    )


def solve_synthesis(problem: SdpProblem, config: SynthesisConfig,
                    descriptor: DescriptorSystem, backend: Callable = solve_cvxpy) -> ObserverGains:
    """Solve the assembled problem and return verified observer gains."""
    # the matching equality gives (T1 G)^T P (T1 G) = F Cbar T1 G, which must be
    # positive definite; a rank-deficient Cbar T1 G rules out every P > 0
    plant = descriptor.plant
    factors = (descriptor.Cbar, descriptor.T1, plant.G)
    reach = np.linalg.svd(factors[0] @ factors[1] @ factors[2], compute_uv=False)
    cutoff = 1e3 * np.finfo(float).eps * np.prod([np.linalg.norm(M, 2) for M in factors])
    if reach.size < plant.m_x or reach[-1] <= cutoff:
        raise Infeasible("Cbar T1 G lacks full column rank: the disturbance never reaches the "
                         "observable output, so no positive definite P satisfies the matching "
                         "equality", status="structural")
    res = backend(problem, solver=config.solver, tol=min(1e-8, config.solver_tolerance))
    v = problem.unpack(res.x)
    P = (v["P"] + v["P"].T) / 2
    eig = np.linalg.eigvalsh(P)
    if eig[0] <= 0 or eig[-1] / eig[0] > P_COND_LIMIT:
        raise PNotInvertible(f"P is not safely invertible (eigenvalues {eig[0]:.3g} .. {eig[-1]:.3g})")
    Y1 = v["Y1"]
    L1 = np.linalg.solve(P, Y1)
    spec = config.multiplier
    zeta = None
    if spec.has_free_blocks:
        M = spec.assemble(v["M11"], v["M12"], v["M22"])
    else:
        zeta = float(config.zeta if config.zeta is not None else v["zeta"][0, 0])
        M = zeta * spec.pattern
    mu = float(v["mu"][0, 0]) if config.minimize_mu else 1.0 / eig[0]
    rho = max(config.rho_x * config.rho_safety, config.rho or 0.0, config.rho_x)
    gains = ObserverGains(P=P, L1=L1, L2=config.L2, F=v["F"], rho=rho, eta=config.eta,
                          mu=mu, M=M, alpha=config.alpha, rho_x=config.rho_x, zeta=zeta,
                          Y1=Y1, status=res.status)
    check = verify_gains(descriptor, gains, config.solver_tolerance)
    gains = replace(gains, check=check)
    if not check.passed:
        raise NumericalFailure(f"solver point fails post-solve verification: {check.to_dict()}")
    return gains


def synthesize(descriptor: DescriptorSystem, config: SynthesisConfig, **kw) -> ObserverGains:
    return solve_synthesis(assemble_lmi(descriptor, config), config, descriptor, **kw)


def search_L2(descriptor: DescriptorSystem, config: SynthesisConfig,
              candidates: Iterable) -> tuple[Optional[ObserverGains], list[tuple[np.ndarray, Optional[float]]]]:
    """Try each candidate ``L2`` and keep the feasible one with smallest ``mu``."""
    best, table = None, []
    for L2 in candidates:
        cfg = replace(config, L2=np.atleast_2d(np.asarray(L2, dtype=float)))
        try:
            g = synthesize(descriptor, cfg)
        except (Infeasible, NumericalFailure, PNotInvertible):
            table.append((cfg.L2, None))
            continue
        table.append((cfg.L2, g.mu))
        if best is None or g.mu < best.mu:
            best = g
    return best, table


# -- derived quantities ------------------------------------------------------

def ultimate_bound(mu: float, eta: float, rho_x: float, alpha: float) -> float:
    """Asymptotic radius ``sqrt(mu * eta * rho_x / alpha)`` of the augmented error."""
    for name, val in (("mu", mu), ("eta", eta), ("rho_x", rho_x), ("alpha", alpha)):
        if not val > 0:
            raise NonPositiveArgument(f"{name} must be positive, got {val}")
    return math.sqrt(mu * eta * rho_x / alpha)


def compute_lambda1(P, T1, G) -> float:
    """Smallest eigenvalue of ``(T1 G)^T P (T1 G)``."""
    T1G = np.atleast_2d(T1) @ np.atleast_2d(G)
    if numerical_rank(T1G) < T1G.shape[1]:
        raise RankDeficientT1G("T1 G must have full column rank")
    W = T1G.T @ np.asarray(P, dtype=float) @ T1G
    return float(np.linalg.eigvalsh((W + W.T) / 2)[0])


def select_rho(gains: ObserverGains, descriptor: DescriptorSystem, e_sup: float,
               modulus: Callable[[float], float], rho_x: Optional[float] = None) -> float:
    """Sliding gain large enough to reach the boundary layer in finite time.

    Uses the triangle-inequality bound on the reaching condition with a
    caller-supplied envelope ``e_sup`` on the augmented error and a modulus
    of continuity ``modulus`` for ``f``.  Never returns less than ``rho_x``.
    """
    plant = descriptor.plant
    rho_x = gains.rho_x if rho_x is None else rho_x
    T1 = descriptor.T1
    S = gains.F @ descriptor.Cbar
    lam1 = compute_lambda1(gains.P, T1, plant.G)
    Acl = T1 @ descriptor.Abar - gains.L1 @ descriptor.Cbar
    q_gain = np.linalg.norm(plant.Cq @ descriptor.Ebar - gains.L2 @ descriptor.Cbar, 2)
    gamma = float(modulus(q_gain * e_sup))
    if not math.isfinite(gamma):
        raise NonFiniteModulus(f"modulus returned {gamma}")
    total = (np.linalg.norm(S @ Acl, 2) * e_sup
             + np.linalg.norm(S @ T1 @ plant.G, 2) * rho_x
             + np.linalg.norm(S @ T1 @ plant.Bf, 2) * gamma)
    return float(max(total / lam1, rho_x))


@dataclass(frozen=True)
class ModulusTable:
    """Sampled, monotone under-estimate of a modulus of continuity."""

    radii: np.ndarray
    values: np.ndarray

    def __call__(self, r: float) -> float:
        if r <= 0:
            return 0.0
        k = int(np.searchsorted(self.radii, r, side="left"))
        return float(self.values[min(k, len(self.values) - 1)])


def estimate_modulus(f: Callable, radii: Sequence[float], n_q: int = 1,
                     domain_radius: float = 10.0, n_samples: int = 2000,
                     seed: int = 0) -> ModulusTable:
    """Estimate ``gamma_f(r)`` on a grid of radii by sampling pairs at distance ``r``.

    ``f`` maps a length-``n_q`` vector to a vector.  Values are made
    non-decreasing by a running maximum and ``gamma_f(0) = 0``.
    """
    rng = np.random.default_rng(seed)
    radii = np.asarray(sorted(float(r) for r in radii))
    vals = np.zeros(radii.size)
    for k, r in enumerate(radii):
        if r <= 0:
            continue
        q1 = rng.uniform(-domain_radius, domain_radius, size=(n_samples, n_q))
        d = rng.normal(size=(n_samples, n_q))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        q2 = q1 + r * d
        diffs = [np.linalg.norm(np.atleast_1d(f(a)) - np.atleast_1d(f(c))) for a, c in zip(q1, q2)]
        vals[k] = max(diffs)
    vals = np.maximum.accumulate(vals)
    return ModulusTable(radii, vals)
