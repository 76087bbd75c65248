"""State-disturbance reconstruction by smooth-window filtering.

The injection term of a converged observer tracks ``w_x`` up to a residual
that averages out.  Convolving each channel with a narrow mollifier
``h_beta(t) = h(t / beta) / beta`` recovers ``w_x`` to within the modulus of
continuity ``gamma(beta)`` away from jumps, and within twice the sup norm on
the ``beta``-neighbourhoods of jumps.

The convolution is symmetric, so the estimate at ``t`` uses samples up to
``t + beta`` and only the interior ``[t0 + beta, tf - beta]`` is defined.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import (
    BetaTooSmall,
    GapTooSmall,
    SignalTooShort,
    TBeyondSpan,
    TraceLacksInjection,
    UnknownKernel,
)


# -- kernels -----------------------------------------------------------------

def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True)
class Kernel:
    """Nonnegative window on ``[-1, 1]`` with unit integral."""

    name: str
    shape: Callable
    c: float
    params: dict

    def __call__(self, t):
        return self.c * self.shape(t)

    def scaled(self, beta: float) -> Callable:
        return lambda t: self(np.asarray(t, dtype=float) / beta) / beta


def _standard_bump():
    integral, _ = quad(lambda s: float(_bump(s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return _bump, 1.0 / integral


def _polynomial_bump(order: int = 4):
    k = int(order)
    if k < 1:
        raise UnknownKernel("polynomial_bump needs order >= 1")
    shape = lambda t: np.where(np.abs(np.asarray(t, float)) < 1.0,
                               np.clip(1.0 - np.asarray(t, float) ** 2, 0.0, None) ** k, 0.0)
    # integral of (1 - t^2)^k over [-1, 1] is B(1/2, k + 1)
    integral = math.sqrt(math.pi) * math.gamma(k + 1) / math.gamma(k + 1.5)
    return shape, 1.0 / integral


KERNELS = {"standard_bump": _standard_bump, "polynomial_bump": _polynomial_bump}


def make_window(kind: str = "standard_bump", params: Optional[dict] = None) -> Kernel:
    try:
        factory = KERNELS[kind]
    except KeyError:
        raise UnknownKernel(f"unknown kernel {kind!r}; registered: {sorted(KERNELS)}") from None
    try:
        shape, c = factory(**(params or {}))
    except TypeError as exc:
        raise UnknownKernel(f"bad parameters for kernel {kind!r}: {exc}") from None
    return Kernel(kind, shape, c, dict(params or {}))


# -- filtering ---------------------------------------------------------------

def kernel_taps(kernel: Kernel, beta: float, step: float) -> np.ndarray:
    """Quadrature weights of ``h_beta`` on a grid of spacing ``step``.

    Returned weights already include the factor ``step`` and sum to one.
    """
    if not beta >= 2 * step:
        raise BetaTooSmall(f"beta={beta} must be at least twice the grid step {step}")
    K = int(math.floor(beta / step + 1e-9))
    t = step * np.arange(-K, K + 1)
    w = kernel.scaled(beta)(t) * step
    return w / w.sum()


def filter_signal(signal, beta: float, kernel: Kernel, step: float):
    """Convolve one gridded channel with ``h_beta``.

    Returns ``(values, valid)``; samples closer than the kernel half-width to
    either end are NaN and flagged invalid.
    """
    s = np.asarray(signal, dtype=float).reshape(-1)
    taps = kernel_taps(kernel, beta, step)
    K = taps.size // 2
    if s.size < taps.size:
        raise SignalTooShort(f"signal has {s.size} samples, kernel needs {taps.size}")
    out = np.full(s.size, np.nan)
    out[K:s.size - K] = np.convolve(s, taps, mode="valid")
    valid = np.zeros(s.size, dtype=bool)
    valid[K:s.size - K] = True
    return out, valid


@dataclass(frozen=True)
class WindowFilter:
    """Diagonal bank of smooth windows, one width per channel."""

    kernel: Kernel
    betas: tuple[float, ...]
    step: float

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in np.atleast_1d(self.betas)))
        for b in self.betas:
            kernel_taps(self.kernel, b, self.step)

    @property
    def beta_max(self) -> float:
        return max(self.betas)

    def taps(self, channel: int) -> np.ndarray:
        return kernel_taps(self.kernel, self.betas[channel], self.step)

    def apply(self, signals: np.ndarray):
        """Filter an ``(N, m)`` array column by column; returns ``(values, valid)``."""
        signals = np.asarray(signals, dtype=float)
        if signals.ndim == 1:
            signals = signals[:, None]
        if signals.shape[1] != len(self.betas):
            raise ValueError(f"filter has {len(self.betas)} channels, signal has {signals.shape[1]}")
        cols = [filter_signal(signals[:, k], b, self.kernel, self.step) for k, b in enumerate(self.betas)]
        return np.column_stack([c[0] for c in cols]), np.column_stack([c[1] for c in cols])


def discontinuity_mask(times: Sequence[float], beta: float, grid) -> np.ndarray:
    """Grid points within ``beta`` of a declared jump time."""
    grid = np.asarray(grid, dtype=float)
    times = np.asarray(sorted(times), dtype=float)
    mask = np.zeros(grid.size, dtype=bool)
    if times.size == 0:
        return mask
    gaps = np.diff(times)
    if gaps.size and gaps.min() <= 2 * beta:
        raise GapTooSmall(f"jumps {gaps.min():.6g} apart cannot be separated by windows of half-width {beta}")
    tol = 1e-9 * max(1.0, beta)
    lo = np.searchsorted(grid, times - beta - tol, side="left")
    hi = np.searchsorted(grid, times + beta + tol, side="right")
    for a, b in zip(lo, hi):
        mask[a:b] = True
    return mask


@dataclass(frozen=True)
class ReconstructionReport:
    grid: np.ndarray
    w_hat: np.ndarray
    valid: np.ndarray
    discontinuity_mask: np.ndarray
    T: float
    t_end: float
    truth: Optional[np.ndarray] = None
    mse: Optional[float] = None
    mse_per_channel: Optional[tuple[float, ...]] = None
    max_error_outside: Optional[float] = None
    max_error_inside: Optional[float] = None
    max_error_per_channel: Optional[tuple[float, ...]] = None

    @property
    def evaluated(self) -> np.ndarray:
        """Samples that count toward the MSE, per channel."""
        span = (self.grid >= self.T) & (self.grid <= self.t_end)
        return self.valid & span[:, None] & ~self.discontinuity_mask

    def to_dict(self) -> dict:
        return {"T": self.T, "t_end": self.t_end, "mse": self.mse,
                "mse_per_channel": list(self.mse_per_channel) if self.mse_per_channel else None,
                "max_error_outside": self.max_error_outside,
                "max_error_inside": self.max_error_inside,
                "max_error_per_channel": (list(self.max_error_per_channel)
                                          if self.max_error_per_channel else None),
                "masked_samples": int(self.discontinuity_mask.sum())}

    def to_csv(self, path) -> None:
        m = self.w_hat.shape[1]
        header = ["t"] + [f"w_hat{k}" for k in range(m)]
        if self.truth is not None:
            header += [f"w_true{k}" for k in range(m)]
        header += [f"masked{k}" for k in range(m)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(self.grid):
                row = [f"{t:.12g}"] + [f"{v:.12g}" for v in self.w_hat[i]]
                if self.truth is not None:
                    row += [f"{v:.12g}" for v in self.truth[i]]
                row += [str(int(b)) for b in self.discontinuity_mask[i]]
                w.writerow(row)


def reconstruct_wx(trace, filt: WindowFilter, truth=None, T: Optional[float] = None,
                   discontinuities: Optional[Sequence[Sequence[float]]] = None,
                   t_end: Optional[float] = None) -> ReconstructionReport:
    """Filter the injection term of ``trace`` channel by channel.

    ``truth`` may be a callable of ``t`` or an ``(N, m)`` array on the trace
    grid.  The MSE is taken over ``[T, t_end]`` (``t_end`` defaults to
    ``tf - beta_max``), skipping invalid samples and the neighbourhoods of the
    declared ``discontinuities`` (one list of jump times per channel).
    """
    w_inj = getattr(trace, "w_hat_eta", None)
    if w_inj is None or np.size(w_inj) == 0:
        raise TraceLacksInjection("trace has no injection samples")
    grid = trace.grid
    t0, tf = float(grid[0]), float(grid[-1])
    bmax = filt.beta_max
    if T is None:
        T = (trace.t_S if trace.t_S is not None else t0) + 5 * bmax
    stop = tf - bmax if t_end is None else min(float(t_end), tf - bmax)
    if T >= stop:
        raise TBeyondSpan(f"onset T={T:.6g} leaves no samples before {stop:.6g}")
    w_hat, valid = filt.apply(w_inj)
    m = w_hat.shape[1]
    mask = np.zeros((grid.size, m), dtype=bool)
    if discontinuities is not None:
        for k in range(m):
            mask[:, k] = discontinuity_mask(discontinuities[k], filt.betas[k], grid)
    report = dict(grid=grid, w_hat=w_hat, valid=valid, discontinuity_mask=mask, T=float(T), t_end=stop)
    if truth is None:
        return ReconstructionReport(**report)
    if callable(truth):
        truth = np.array([np.atleast_1d(truth(t)) for t in grid], dtype=float).reshape(grid.size, m)
    truth = np.asarray(truth, dtype=float).reshape(grid.size, m)
    base = ReconstructionReport(**report, truth=truth)
    sel = base.evaluated
    err = w_hat - truth
    per = tuple(float(np.mean(err[sel[:, k], k] ** 2)) if sel[:, k].any() else float("nan")
                for k in range(m))
    peak = tuple(float(np.abs(err[sel[:, k], k]).max()) if sel[:, k].any() else float("nan")
                 for k in range(m))
    span = ((grid >= T) & (grid <= stop))[:, None] & valid
    inside = span & mask
    return ReconstructionReport(
        **report, truth=truth, mse=float(np.mean(err[sel] ** 2)), mse_per_channel=per,
        max_error_outside=float(np.abs(err[sel]).max()),
        max_error_inside=float(np.abs(err[inside]).max()) if inside.any() else None,
        max_error_per_channel=peak)
