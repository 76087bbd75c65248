"""Disturbance waveform generators.

Phase conventions follow ``scipy.signal``: ``sawtooth`` has period 2*pi and
rises linearly from -1 to 1, ``square`` has period 2*pi and takes the value 1
on the first half-period and -1 on the second.  Both are written out here as
plain numpy expressions because the scipy versions are slow on scalars, and
the simulator evaluates them inside the ODE right-hand side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

KINDS = ("zero", "constant", "sin", "cos", "sawtooth", "square")


@dataclass(frozen=True)
class Waveform:
    """``amplitude * shape(freq * t + phase) + offset``."""

    kind: str = "zero"
    amplitude: float = 1.0
    freq: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown waveform kind {self.kind!r}; expected one of {KINDS}")

    def __call__(self, t):
        arg = self.freq * np.asarray(t, dtype=float) + self.phase
        if self.kind == "zero":
            return np.zeros_like(arg)
        if self.kind == "constant":
            shape = np.ones_like(arg)
        elif self.kind == "sin":
            shape = np.sin(arg)
        elif self.kind == "cos":
            shape = np.cos(arg)
        elif self.kind == "sawtooth":
            shape = np.mod(arg, TWO_PI) / math.pi - 1.0
        else:
            shape = np.where(np.mod(arg, TWO_PI) < math.pi, 1.0, -1.0)
        return self.amplitude * shape + self.offset

    @property
    def sup_norm(self) -> float:
        if self.kind == "zero":
            return 0.0
        return abs(self.amplitude) + abs(self.offset)

    def discontinuities(self, t0: float, tf: float) -> np.ndarray:
        """Jump times inside ``[t0, tf]`` (empty for continuous kinds)."""
        if self.kind not in ("sawtooth", "square") or self.amplitude == 0 or self.freq == 0:
            return np.empty(0)
        # jumps where freq*t + phase hits a multiple of `spacing`
        spacing = TWO_PI if self.kind == "sawtooth" else math.pi
        a, b = sorted((self.freq * t0 + self.phase, self.freq * tf + self.phase))
        k = np.arange(math.ceil(a / spacing), math.floor(b / spacing) + 1)
        times = (k * spacing - self.phase) / self.freq
        return np.sort(times)

    @property
    def min_jump_gap(self) -> float:
        if self.kind not in ("sawtooth", "square") or self.freq == 0:
            return math.inf
        spacing = TWO_PI if self.kind == "sawtooth" else math.pi
        return spacing / abs(self.freq)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "freq": self.freq,
                "phase": self.phase, "offset": self.offset}


@dataclass(frozen=True)
class VectorSignal:
    """Stack of independent scalar waveforms, one per channel."""

    channels: tuple[Waveform, ...] = field(default_factory=tuple)

    @classmethod
    def from_specs(cls, specs: Sequence[dict | Waveform]) -> "VectorSignal":
        chans = tuple(s if isinstance(s, Waveform) else Waveform(**s) for s in specs)
        return cls(chans)

    @classmethod
    def zeros(cls, n: int) -> "VectorSignal":
        return cls(tuple(Waveform("zero") for _ in range(n)))

    def __len__(self):
        return len(self.channels)

    def __call__(self, t: float) -> np.ndarray:
        return np.array([float(w(t)) for w in self.channels])

    def sample(self, grid: np.ndarray) -> np.ndarray:
        """Values on a time grid, shape ``(len(grid), n_channels)``."""
        grid = np.asarray(grid, dtype=float)
        if not self.channels:
            return np.zeros((grid.size, 0))
        return np.column_stack([w(grid) for w in self.channels])

    @property
    def sup_norm(self) -> float:
        """Upper bound on the Euclidean norm of the signal over all time."""
        return float(np.sqrt(sum(w.sup_norm ** 2 for w in self.channels)))

    def discontinuities(self, t0: float, tf: float) -> list[np.ndarray]:
        return [w.discontinuities(t0, tf) for w in self.channels]

    def to_list(self) -> list[dict]:
        return [w.to_dict() for w in self.channels]
