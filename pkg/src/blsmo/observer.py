"""Joint simulation of the plant and the boundary-layer sliding-mode observer.

Observer state ``z`` evolves as

    z'      = Q z + R y + T1 Bg g + T1 Bf f_hat + T1 G w_inj
    xbar^   = z - T2 y
    f_hat   = f(t, u, y, Cq Ebar xbar^ + L2 e_y),   e_y = y - Cbar xbar^

with ``Q = T1 Abar - L1 Cbar``, ``R = L1 - Q T2`` and the continuous
injection ``w_inj`` of :func:`injection_term`.  Plant and observer are
integrated as one ODE so ``y(t)`` is exact at every right-hand-side call.

The injection has slope ``rho/eta`` inside the boundary layer, which makes
the coupled system stiff for the small ``eta`` of interest.  The default
integrator is therefore an implicit adaptive one; classical fixed-step RK4 is
kept as an independent route with a step guard proportional to ``eta/rho``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .descriptor import DescriptorSystem, PlantModel
from .errors import ConfigInvalid, EmptyTrace, NonFiniteState, StepTooLarge
from .synthesis import ObserverGains, ultimate_bound

ADAPTIVE = ("radau", "bdf", "lsoda")
METHODS = ADAPTIVE + ("rk4",)
LAYER_RESOLUTION = 0.1


def injection_term(F, e_y, rho: float, eta: float) -> np.ndarray:
    """Boundary-layer relay ``rho * F e_y / max(||F e_y||, eta)``.

    Continuous in ``e_y`` and bounded by ``rho``.  ``e_y`` may be a single
    vector or a stack of row vectors.
    """
    F = np.atleast_2d(F)
    e_y = np.asarray(e_y, dtype=float)
    v = e_y @ F.T if e_y.ndim == 2 else F @ e_y
    n = np.linalg.norm(v, axis=-1, keepdims=e_y.ndim == 2)
    return rho * v / np.maximum(n, eta)


@dataclass(frozen=True)
class Scenario:
    plant: PlantModel
    gains: ObserverGains
    descriptor: DescriptorSystem
    x0: np.ndarray
    t_span: tuple[float, float]
    step: float
    z0: Optional[np.ndarray] = None
    u: Optional[Callable] = None
    w_x: Optional[Callable] = None
    w_y: Optional[Callable] = None
    method: str = "radau"
    rtol: float = 1e-8
    atol: float = 1e-10
    rk4_guard: float = 0.1
    name: str = ""

    def __post_init__(self):
        t0, tf = (float(v) for v in self.t_span)
        object.__setattr__(self, "t_span", (t0, tf))
        if not t0 < tf:
            raise ConfigInvalid(f"t_span must satisfy t0 < tf, got {self.t_span}")
        if not self.step > 0:
            raise ConfigInvalid("step must be positive")
        if self.method not in METHODS:
            raise ConfigInvalid(f"unknown integration method {self.method!r}; expected one of {METHODS}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != self.plant.n_x:
            raise ConfigInvalid(f"x0 must have {self.plant.n_x} entries")
        object.__setattr__(self, "x0", x0)
        if self.method in ADAPTIVE and self.gains.rho > 0:
            # tolerances that cannot resolve sigma inside the layer make the
            # implicit solvers chatter across it with ever smaller steps
            s_norm = float(np.linalg.norm(self.gains.F @ self.descriptor.Cbar, 2))
            resolution = s_norm * max(self.atol, self.rtol)
            if resolution > LAYER_RESOLUTION * self.gains.eta:
                raise ConfigInvalid(
                    f"rtol/atol resolve sigma only to {resolution:.3g}, coarser than "
                    f"{LAYER_RESOLUTION} * eta = {LAYER_RESOLUTION * self.gains.eta:.3g}; tighten them")
        z0 = np.zeros(self.descriptor.n) if self.z0 is None else np.asarray(self.z0, float).reshape(-1)
        if z0.size != self.descriptor.n:
            raise ConfigInvalid(f"z0 must have {self.descriptor.n} entries")
        object.__setattr__(self, "z0", z0)
        if self.w_x is None:
            object.__setattr__(self, "w_x", self.plant.w_x or _zeros(self.plant.m_x))
        if self.w_y is None:
            object.__setattr__(self, "w_y", self.plant.w_y or _zeros(self.plant.m_y))
        wx = self.sample_w_x(self.grid)
        peak = float(np.linalg.norm(wx, axis=1).max()) if wx.size else 0.0
        if peak > self.plant.rho_x * (1 + 1e-9) + 1e-12:
            raise ConfigInvalid(f"w_x reaches {peak:.6g} on the grid, above rho_x={self.plant.rho_x}")

    @property
    def grid(self) -> np.ndarray:
        t0, tf = self.t_span
        n = int(math.floor((tf - t0) / self.step + 1e-9))
        return t0 + self.step * np.arange(n + 1)

    def sample_w_x(self, grid) -> np.ndarray:
        return _sample(self.w_x, grid, self.plant.m_x)

    def sample_w_y(self, grid) -> np.ndarray:
        return _sample(self.w_y, grid, self.plant.m_y)


def _zeros(n):
    return lambda t: np.zeros(n)


def _sample(sig, grid, width) -> np.ndarray:
    if hasattr(sig, "sample"):
        return sig.sample(grid)
    return np.array([np.atleast_1d(sig(t)) for t in grid]).reshape(len(grid), width)


class _Dynamics:
    """Precomputed matrices for the coupled right-hand side."""

    def __init__(self, sc: Scenario):
        d, p, g = sc.descriptor, sc.plant, sc.gains
        self.sc = sc
        self.nx = p.n_x
        self.Q = d.T1 @ d.Abar - g.L1 @ d.Cbar
        self.R = g.L1 - self.Q @ d.T2
        self.T2, self.Cbar, self.F = d.T2, d.Cbar, g.F
        self.CqE = p.Cq @ d.Ebar
        self.L2 = g.L2
        self.T1Bf, self.T1Bg, self.T1G = d.T1 @ p.Bf, d.T1 @ p.Bg, d.T1 @ p.G
        self.A, self.Bf, self.Bg, self.G, self.C, self.D, self.Cq = p.A, p.Bf, p.Bg, p.G, p.C, p.D, p.Cq
        self.f, self.g = p.f, p.g
        self.rho, self.eta = g.rho, g.eta
        self.u = sc.u or (lambda t: None)

    def __call__(self, t, s):
        sc = self.sc
        x, z = s[:self.nx], s[self.nx:]
        u = self.u(t)
        y = self.C @ x + self.D @ np.atleast_1d(sc.w_y(t))
        xh = z - self.T2 @ y
        e_y = y - self.Cbar @ xh
        f_hat = np.atleast_1d(self.f(t, u, y, self.CqE @ xh + self.L2 @ e_y))
        gv = np.atleast_1d(self.g(t, u, y)) if self.g is not None else 0.0
        xd = self.A @ x + self.Bf @ np.atleast_1d(self.f(t, u, y, self.Cq @ x)) \
            + self.G @ np.atleast_1d(sc.w_x(t))
        zd = self.Q @ z + self.R @ y + self.T1Bf @ f_hat \
            + self.T1G @ injection_term(self.F, e_y, self.rho, self.eta)
        if self.g is not None:
            xd = xd + self.Bg @ gv
            zd = zd + self.T1Bg @ gv
        out = np.concatenate([xd, zd])
        if not np.all(np.isfinite(out)):
            raise NonFiniteState(f"non-finite derivative at t={t:.6g}")
        return out


def observer_rhs(t, z, y, u, gains: ObserverGains, descriptor: DescriptorSystem) -> np.ndarray:
    """Observer derivative for a given measurement ``y``."""
    p = descriptor.plant
    T1, T2, Cbar = descriptor.T1, descriptor.T2, descriptor.Cbar
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    Q = T1 @ descriptor.Abar - gains.L1 @ Cbar
    xh = z - T2 @ y
    e_y = y - Cbar @ xh
    f_hat = np.atleast_1d(p.f(t, u, y, p.Cq @ descriptor.Ebar @ xh + gains.L2 @ e_y))
    zd = Q @ z + (gains.L1 - Q @ T2) @ y + T1 @ p.Bf @ f_hat \
        + T1 @ p.G @ injection_term(gains.F, e_y, gains.rho, gains.eta)
    if p.g is not None:
        zd = zd + T1 @ p.Bg @ np.atleast_1d(p.g(t, u, y))
    if not np.all(np.isfinite(zd)):
        raise NonFiniteState(f"non-finite observer derivative at t={t:.6g}")
    return zd


@dataclass(frozen=True)
class SimulationTrace:
    grid: np.ndarray
    x: np.ndarray
    w_y: np.ndarray
    xbar_hat: np.ndarray
    w_hat_eta: np.ndarray
    w_x: np.ndarray
    S: np.ndarray
    eta: float
    t_S: Optional[float]
    info: dict = field(default_factory=dict)

    @property
    def n_x(self) -> int:
        return self.x.shape[1]

    @property
    def xbar(self) -> np.ndarray:
        return np.hstack([self.x, self.w_y])

    @property
    def e_bar(self) -> np.ndarray:
        return self.xbar - self.xbar_hat

    @property
    def sigma(self) -> np.ndarray:
        return self.e_bar @ self.S.T

    @property
    def x_hat(self) -> np.ndarray:
        return self.xbar_hat[:, :self.n_x]

    @property
    def w_y_hat(self) -> np.ndarray:
        return self.xbar_hat[:, self.n_x:]

    def to_csv(self, path) -> None:
        nx, my, mx = self.n_x, self.w_y.shape[1], self.w_hat_eta.shape[1]
        header = (["t"] + [f"x{i}" for i in range(nx)] + [f"xhat{i}" for i in range(nx)]
                  + [f"wy_hat{i}" for i in range(my)] + [f"w_inj{i}" for i in range(mx)]
                  + ["ebar_norm", "sigma_norm"])
        cols = np.column_stack([self.grid, self.x, self.x_hat, self.w_y_hat, self.w_hat_eta,
                                np.linalg.norm(self.e_bar, axis=1),
                                np.linalg.norm(self.sigma, axis=1)])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in cols:
                w.writerow([f"{v:.12g}" for v in row])


def reaching_time(grid, sigma, eta: float) -> Optional[float]:
    """First grid time after which ``||sigma|| < eta`` holds to the end, else None."""
    inside = np.linalg.norm(np.atleast_2d(sigma.T).T, axis=1) < eta
    if inside.size == 0 or not inside[-1]:
        return None
    out = np.flatnonzero(~inside)
    return float(grid[0] if out.size == 0 else grid[out[-1] + 1])


def _rk4(rhs, grid, s0, h_max):
    out = np.empty((grid.size, s0.size))
    out[0] = s = s0.copy()
    for k in range(grid.size - 1):
        t, dt = grid[k], grid[k + 1] - grid[k]
        n_sub = max(1, int(math.ceil(dt / h_max - 1e-9)))
        h = dt / n_sub
        for _ in range(n_sub):
            k1 = rhs(t, s)
            k2 = rhs(t + h / 2, s + h / 2 * k1)
            k3 = rhs(t + h / 2, s + h / 2 * k2)
            k4 = rhs(t + h, s + h * k3)
            s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        if not np.all(np.isfinite(s)):
            raise NonFiniteState(f"state diverged near t={grid[k + 1]:.6g}")
        out[k + 1] = s
    return out


def simulate(scenario: Scenario) -> SimulationTrace:
    sc = scenario
    rhs = _Dynamics(sc)
    grid = sc.grid
    s0 = np.concatenate([sc.x0, sc.z0])
    info = {"method": sc.method, "step": sc.step}
    if sc.method == "rk4":
        h = sc.step
        if sc.gains.rho > 0:
            h = min(h, sc.rk4_guard * sc.gains.eta / sc.gains.rho)
        states = _rk4(rhs, grid, s0, h)
        info["internal_step"] = h
    else:
        name = {"radau": "Radau", "bdf": "BDF", "lsoda": "LSODA"}[sc.method]
        sol = solve_ivp(rhs, sc.t_span, s0, method=name, t_eval=grid,
                        rtol=sc.rtol, atol=sc.atol)
        if sol.status != 0:
            raise NonFiniteState(f"integration stopped: {sol.message}")
        states = sol.y.T
        info.update(rtol=sc.rtol, atol=sc.atol, nfev=int(sol.nfev), njev=int(sol.njev))
    d, p, g = sc.descriptor, sc.plant, sc.gains
    X, Z = states[:, :p.n_x], states[:, p.n_x:]
    Wy = sc.sample_w_y(grid)
    Y = X @ p.C.T + Wy @ p.D.T
    Xh = Z - Y @ d.T2.T
    E_y = Y - Xh @ d.Cbar.T
    W_inj = injection_term(g.F, E_y, g.rho, g.eta)
    S = g.F @ d.Cbar
    sigma = (np.hstack([X, Wy]) - Xh) @ S.T
    return SimulationTrace(grid=grid, x=X, w_y=Wy, xbar_hat=Xh, w_hat_eta=W_inj,
                           w_x=sc.sample_w_x(grid), S=S, eta=g.eta,
                           t_S=reaching_time(grid, sigma, g.eta), info=info)


@dataclass(frozen=True)
class ErrorMetrics:
    terminal_sup_error: float
    terminal_state_error: float
    terminal_wy_error: float
    bound: float
    within_bound: bool
    t_S: Optional[float]
    window: float
    reference_bound: Optional[float] = None

    @property
    def within_reference(self) -> Optional[bool]:
        if self.reference_bound is None:
            return None
        return self.terminal_sup_error <= self.reference_bound

    def to_dict(self) -> dict:
        return {"terminal_sup_error": self.terminal_sup_error,
                "terminal_state_error": self.terminal_state_error,
                "terminal_wy_error": self.terminal_wy_error,
                "bound": self.bound, "within_bound": self.within_bound, "t_S": self.t_S,
                "window": self.window, "reference_bound": self.reference_bound,
                "within_reference": self.within_reference}


def error_metrics(trace: SimulationTrace, gains: ObserverGains, window: float = 0.2,
                  reference_bound: Optional[float] = None) -> ErrorMetrics:
    """Trailing-window error summary.

    ``window`` is the fraction of the span used as the stand-in for the
    limsup.  ``reference_bound`` is an externally supplied bound reported
    next to the computed one.
    """
    if trace.grid.size == 0:
        raise EmptyTrace("trace has no samples")
    t0, tf = trace.grid[0], trace.grid[-1]
    tail = trace.grid >= tf - window * (tf - t0)
    e = trace.e_bar[tail]
    nx = trace.n_x
    sup = lambda a: float(np.linalg.norm(a, axis=1).max()) if a.shape[1] else 0.0
    if min(gains.mu, gains.eta, gains.rho_x) > 0:
        bound = ultimate_bound(gains.mu, gains.eta, gains.rho_x, gains.alpha)
    else:
        bound = 0.0
    total = sup(e)
    return ErrorMetrics(
        terminal_sup_error=total, terminal_state_error=sup(e[:, :nx]),
        terminal_wy_error=sup(e[:, nx:]), bound=bound, within_bound=total <= bound,
        t_S=trace.t_S, window=window, reference_bound=reference_bound)


def check_step_convergence(scenario: Scenario, rel_tol: float = 0.1,
                           trace: Optional[SimulationTrace] = None) -> dict:
    """Compare terminal ``||e_bar||`` against a refined run.

    The refined run halves the step for RK4.  For the adaptive methods, whose
    step is chosen from tolerances, it divides ``rtol`` and ``atol`` by 32,
    the error reduction that halving the step buys a fifth-order scheme.
    Raises StepTooLarge when the relative change exceeds ``rel_tol``.
    """
    from dataclasses import replace

    if scenario.method == "rk4":
        fine = replace(scenario, step=scenario.step / 2)
    else:
        fine = replace(scenario, rtol=scenario.rtol / 32, atol=scenario.atol / 32)
    coarse = trace if trace is not None else simulate(scenario)
    refined = simulate(fine)
    e1 = float(np.linalg.norm(coarse.e_bar[-1]))
    e2 = float(np.linalg.norm(refined.e_bar[-1]))
    rel = abs(e1 - e2) / max(e2, 1e-300)
    report = {"coarse": e1, "refined": e2, "relative_change": rel, "rel_tol": rel_tol}
    if rel > rel_tol:
        raise StepTooLarge(f"refining the integrator changed terminal error by {rel:.3g}")
    return report


def write_metrics_json(path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
