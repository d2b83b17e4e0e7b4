"""Local reactive-power control laws for PV inverters.

Every law maps local measurements at one node to an inverter reactive
injection ``q_g`` bounded by ``|q_g| <= q_max``.  The functions are written
against numpy arrays so the solver can evaluate a whole feeder at once, and
they accept plain floats as well.

Schemes
-------
``NoControl``   ``q_g = 0``.
``SigmoidV``    smoothed volt/VAR curve ``G`` acting on local voltage.
``LocalFlowK``  blend ``F(K)`` of loss-oriented and voltage-oriented rules
                built from local power flows only.
``HybridKV``    ``H = F + G`` with the sigmoid amplitude set to ``q_max - F``,
                followed by a final clamp to the inverter limit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_DELTA = 0.04


class Scheme(str, enum.Enum):
    NO_CONTROL = "NoControl"
    SIGMOID_V = "SigmoidV"
    LOCAL_FLOW_K = "LocalFlowK"
    HYBRID_KV = "HybridKV"

    @property
    def uses_k(self) -> bool:
        return self in (Scheme.LOCAL_FLOW_K, Scheme.HYBRID_KV)

    @property
    def voltage_dependent(self) -> bool:
        return self in (Scheme.SIGMOID_V, Scheme.HYBRID_KV)

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        key = str(value).strip().lower()
        for scheme in cls:
            if key == scheme.value.lower():
                return scheme
        if key in _ALIASES:
            return _ALIASES[key]
        raise ValueError(f"unknown control scheme {value!r}")


_LABELS = {
    Scheme.NO_CONTROL: "q=0",
    Scheme.SIGMOID_V: "G(V)",
    Scheme.LOCAL_FLOW_K: "F(K)",
    Scheme.HYBRID_KV: "H(K,V)",
}

_ALIASES = {
    "none": Scheme.NO_CONTROL, "q0": Scheme.NO_CONTROL,
    "g": Scheme.SIGMOID_V, "sigmoid": Scheme.SIGMOID_V,
    "f": Scheme.LOCAL_FLOW_K, "flow": Scheme.LOCAL_FLOW_K,
    "h": Scheme.HYBRID_KV, "hybrid": Scheme.HYBRID_KV,
}


@dataclass(frozen=True)
class ControlConfig:
    """Scheme selector and its parameters.

    ``limit_scale`` shrinks the inverter reactive limit for every scheme; 0.5
    gives the "G(V)/2" and "H(K,V)/2" variants.
    """

    scheme: Scheme = Scheme.NO_CONTROL
    k: float = 0.0
    delta: float = DEFAULT_DELTA
    limit_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"k must lie in [0, 1], got {self.k}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0.0 < self.limit_scale <= 1.0:
            raise ValueError(f"limit_scale must lie in (0, 1], got {self.limit_scale}")


@dataclass(frozen=True)
class LocalMeasurements:
    """Per-unit quantities observable at a node (scalars or equal-length arrays).

    ``q_max`` is the effective limit, already multiplied by ``limit_scale``.
    """

    p_c: np.ndarray | float
    q_c: np.ndarray | float
    p_g: np.ndarray | float
    v: np.ndarray | float
    q_max: np.ndarray | float

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.q_max) < 0):
            raise ValueError("q_max must be non-negative")

    def at_voltage(self, v) -> "LocalMeasurements":
        return LocalMeasurements(self.p_c, self.q_c, self.p_g, v, self.q_max)


def q_max(s_inv, p_g, limit_scale: float = 1.0):
    """Reactive headroom ``limit_scale * sqrt(s_inv**2 - p_g**2)``.

    Raises:
        ValueError: if any ``p_g`` exceeds its inverter rating.
    """
    s_inv = np.asarray(s_inv, dtype=float)
    p_g = np.asarray(p_g, dtype=float)
    if np.any(p_g < 0) or np.any(p_g > s_inv):
        raise ValueError("inverter overcommitted: need 0 <= p_g <= s_inv")
    out = limit_scale * np.sqrt(s_inv**2 - p_g**2)
    return float(out) if out.ndim == 0 else out


def constr(q, q_max):
    """Clamp ``q`` to ``[-q_max, q_max]``."""
    out = np.clip(q, -np.asarray(q_max), np.asarray(q_max))
    return float(out) if np.ndim(out) == 0 else out


def _sigmoid(v, delta):
    # 1 - 2/(1 + exp(-4(v-1)/delta)) written as tanh to avoid overflow
    return -np.tanh(2.0 * (np.asarray(v, dtype=float) - 1.0) / delta)


def _sigmoid_slope(v, delta):
    return -(2.0 / delta) / np.cosh(2.0 * (np.asarray(v, dtype=float) - 1.0) / delta) ** 2


def sigmoid_control(amplitude, v, delta: float = DEFAULT_DELTA):
    """Smoothed volt/VAR curve with arbitrary amplitude: ``+A`` at low, ``-A`` at high voltage."""
    out = np.asarray(amplitude) * _sigmoid(v, delta)
    return float(out) if out.ndim == 0 else out


def control_g(m: LocalMeasurements, delta: float = DEFAULT_DELTA):
    """Voltage-only control ``G(q_max, v, delta)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return sigmoid_control(m.q_max, m.v, delta)


def control_f_loss(m: LocalMeasurements):
    """Supply the local reactive consumption, within limits."""
    return constr(m.q_c, m.q_max)


def control_f_volt(m: LocalMeasurements, alpha: float):
    """Cancel the local contribution to ``r P + x Q``, within limits."""
    return constr(np.asarray(m.q_c) + (np.asarray(m.p_c) - np.asarray(m.p_g)) / alpha, m.q_max)


def blend_flow(f_loss, f_volt, k: float, q_max):
    """Convex blend ``K f_loss + (1 - K) f_volt``, clamped."""
    return constr(k * np.asarray(f_loss) + (1.0 - k) * np.asarray(f_volt), q_max)


def control_f(m: LocalMeasurements, k: float, alpha: float):
    """Flow-based control ``F(K)``; independent of the node voltage."""
    if not 0.0 <= k <= 1.0:
        raise ValueError("k must lie in [0, 1]")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return blend_flow(control_f_loss(m), control_f_volt(m, alpha), k, m.q_max)


def _hybrid_raw(m: LocalMeasurements, k: float, alpha: float, delta: float):
    f = np.asarray(control_f(m, k, alpha))
    return f, f + (np.asarray(m.q_max) - f) * _sigmoid(m.v, delta)


def control_h(m: LocalMeasurements, k: float, alpha: float, delta: float = DEFAULT_DELTA):
    """Hybrid control: ``F(K)`` near 1 pu, sliding to ``+q_max`` at low voltage.

    The unclamped sum tends to ``2F - q_max`` at high voltage, which can exceed
    the inverter limit, so the result is clamped again.
    """
    _, raw = _hybrid_raw(m, k, alpha, delta)
    return constr(raw, m.q_max)


def evaluate(m: LocalMeasurements, config: ControlConfig, alpha: float):
    """Reactive dispatch for ``config.scheme``; ``m.q_max`` must already be scaled."""
    scheme = config.scheme
    if scheme is Scheme.NO_CONTROL:
        out = np.zeros_like(np.asarray(m.v, dtype=float))
    elif scheme is Scheme.SIGMOID_V:
        out = np.asarray(control_g(m, config.delta))
    elif scheme is Scheme.LOCAL_FLOW_K:
        out = np.broadcast_to(np.asarray(control_f(m, config.k, alpha)),
                              np.shape(m.v)).astype(float)
    else:
        out = np.asarray(control_h(m, config.k, alpha, config.delta))
    return float(out) if out.ndim == 0 else out


def control_dq_dv(m: LocalMeasurements, config: ControlConfig, alpha: float):
    """Analytic derivative of the dispatch with respect to local voltage magnitude.

    Zero for the voltage-independent schemes and wherever the final clamp of
    the hybrid law is active.
    """
    scheme = config.scheme
    if scheme is Scheme.SIGMOID_V:
        out = np.asarray(m.q_max) * _sigmoid_slope(m.v, config.delta)
    elif scheme is Scheme.HYBRID_KV:
        f, raw = _hybrid_raw(m, config.k, alpha, config.delta)
        out = (np.asarray(m.q_max) - f) * _sigmoid_slope(m.v, config.delta)
        out = np.where(np.abs(raw) > np.asarray(m.q_max), 0.0, out)
    else:
        out = np.zeros_like(np.asarray(m.v, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
