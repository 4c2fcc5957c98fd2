"""Speaker message laws: Soft, Hard and Top-m, with optional tempering and
(for K=2) a bias tilt applied to the speaker's sampling distribution."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, UnsupportedConfiguration
from .simplex import as_simplex, bias_tilt, empirical_message, temper

SOFT = "soft"
HARD = "hard"
TOPM = "topm"
KINDS = (SOFT, HARD, TOPM)

INFINITE_BANDWIDTH = math.inf


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    m: Optional[int] = None
    temperature: Optional[float] = None
    bias_h: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown channel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == TOPM:
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ParameterError(f"Top-m channel needs an integer m >= 1, got {self.m!r}")
            object.__setattr__(self, "m", int(self.m))
        elif self.m is not None:
            expected = 1 if self.kind == HARD else None
            if self.m != expected:
                raise ParameterError(f"{self.kind} channel does not take m={self.m!r}")
        if self.temperature is not None and not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ParameterError(f"temperature must be positive, got {self.temperature!r}")
        if self.bias_h is not None and not math.isfinite(self.bias_h):
            raise ParameterError(f"bias_h must be finite, got {self.bias_h!r}")

    @classmethod
    def soft(cls, **kw):
        return cls(SOFT, **kw)

    @classmethod
    def hard(cls, **kw):
        return cls(HARD, **kw)

    @classmethod
    def topm(cls, m, **kw):
        return cls(TOPM, m=m, **kw)

    @property
    def quantized(self) -> bool:
        return self.kind != SOFT

    @property
    def bandwidth(self):
        return effective_bandwidth(self)

    @property
    def T(self) -> float:
        return 1.0 if self.temperature is None else float(self.temperature)

    @property
    def h(self) -> float:
        return 0.0 if self.bias_h is None else float(self.bias_h)

    def check_K(self, K: int):
        if self.h != 0.0 and K != 2:
            raise UnsupportedConfiguration(f"bias_h is defined for K=2 only, got K={K}")

    def without_modifiers(self) -> "ChannelSpec":
        return ChannelSpec(self.kind, self.m if self.kind == TOPM else None)

    def as_soft(self) -> "ChannelSpec":
        """Soft channel with the same modifiers (baseline for excess drift)."""
        return ChannelSpec(SOFT, None, self.temperature, self.bias_h)

    def to_dict(self) -> dict:
        d = {"channel": self.kind}
        if self.kind == TOPM:
            d["m"] = self.m
        if self.temperature is not None:
            d["temperature"] = self.temperature
        if self.bias_h is not None:
            d["bias_h"] = self.bias_h
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        kind = d["channel"]
        m = d.get("m")
        if kind == HARD and m == 1:
            m = None
        return cls(kind, m, d.get("temperature"), d.get("bias_h"))


def effective_bandwidth(spec: ChannelSpec):
    """1 for Hard, m for Top-m, ``math.inf`` for Soft."""
    if spec.kind == SOFT:
        return INFINITE_BANDWIDTH
    if spec.kind == HARD:
        return 1
    return spec.m


def source_distribution(x_S, spec: ChannelSpec) -> np.ndarray:
    """The distribution the speaker actually emits from: tilted, then tempered."""
    x = as_simplex(x_S)
    spec.check_K(x.size)
    if spec.h != 0.0:
        p0 = bias_tilt(x[0], spec.h)
        x = np.array([p0, 1.0 - p0])
    if spec.T != 1.0:
        x = temper(x, spec.T)
    return x


def emit_message(x_S, spec: ChannelSpec, rng) -> np.ndarray:
    src = source_distribution(x_S, spec)
    if spec.kind == SOFT:
        return src
    return empirical_message(src, effective_bandwidth(spec), rng)
