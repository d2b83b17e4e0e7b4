"""Radial feeder data model and randomized load/PV scenario generation.

The feeder is a single radial line: node 0 is the substation (slack) and
segment ``j`` joins node ``j`` to node ``j + 1``.  All quantities stored here
are in SI units; the solvers convert to per-unit with :attr:`FeederModel.v_base`
and :attr:`FeederModel.s_base`.

Scenario randomness uses numpy's PCG64 bit generator seeded through a
``SeedSequence``.  Two independent streams are derived from one scenario
seed::

    SeedSequence([seed, 0])  -> PV placement (shared by both cases)
    SeedSequence([seed, 1])  -> loads, undergenerated case
    SeedSequence([seed, 2])  -> loads, overgenerated case

so the under- and overgenerated scenarios of one seed describe the same
physical circuit with independently drawn loads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class CaseKind(str, enum.Enum):
    UNDER = "Undergenerated"
    OVER = "Overgenerated"

    @property
    def short(self) -> str:
        return "under" if self is CaseKind.UNDER else "over"

    @classmethod
    def parse(cls, value: "str | CaseKind") -> "CaseKind":
        if isinstance(value, CaseKind):
            return value
        key = str(value).strip().lower()
        for kind in cls:
            if key in (kind.value.lower(), kind.short):
                return kind
        raise ValueError(f"unknown case kind {value!r}")


@dataclass(frozen=True)
class FeederConfig:
    """Physical description of the line, before validation.

    Defaults describe the 250-node prototypical rural circuit.
    """

    n_nodes: int = 250
    segment_length_km: float = 0.2
    r_ohm_per_km: float = 0.33
    x_ohm_per_km: float = 0.38
    v0_volts: float = 7200.0
    s_base_va: float = 100e3


@dataclass(frozen=True)
class FeederModel:
    """Immutable radial feeder.

    Attributes:
        n_nodes: Number of load nodes (the substation node 0 is extra).
        segment_length: Distance between neighbouring nodes [km].
        r_per_km, x_per_km: Series line impedance [ohm/km].
        v0: Nominal phase-to-neutral voltage [V]; also the voltage base.
        s_base: Per-unit power base [VA].
    """

    n_nodes: int
    segment_length: float
    r_per_km: float
    x_per_km: float
    v0: float
    s_base: float = 100e3

    def __post_init__(self) -> None:
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 1:
            raise ValueError(f"n_nodes must be a positive integer, got {self.n_nodes}")
        for name in ("segment_length", "r_per_km", "x_per_km", "v0", "s_base"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    @property
    def alpha(self) -> float:
        """r/x ratio of the conductor, identical for every segment."""
        return self.r_per_km / self.x_per_km

    @property
    def n_buses(self) -> int:
        return self.n_nodes + 1

    @property
    def r_segment(self) -> float:
        """Series resistance of one segment [ohm]."""
        return self.r_per_km * self.segment_length

    @property
    def x_segment(self) -> float:
        return self.x_per_km * self.segment_length

    @property
    def v_base(self) -> float:
        return self.v0

    @property
    def z_base(self) -> float:
        return self.v0**2 / self.s_base

    @property
    def z_segment_pu(self) -> complex:
        return complex(self.r_segment, self.x_segment) / self.z_base

    @property
    def r_pu(self) -> np.ndarray:
        """Per-segment resistance [pu], length ``n_nodes``."""
        return np.full(self.n_nodes, self.z_segment_pu.real)

    @property
    def x_pu(self) -> np.ndarray:
        return np.full(self.n_nodes, self.z_segment_pu.imag)


def build_feeder(config: FeederConfig | None = None) -> FeederModel:
    """Validate a :class:`FeederConfig` and return the matching model."""
    config = config or FeederConfig()
    return FeederModel(
        n_nodes=config.n_nodes,
        segment_length=config.segment_length_km,
        r_per_km=config.r_ohm_per_km,
        x_per_km=config.x_ohm_per_km,
        v0=config.v0_volts,
        s_base=config.s_base_va,
    )


class NodeLoad(NamedTuple):
    p_c: float
    q_c: float
    p_g: float
    s_inv: float


@dataclass(frozen=True)
class ScenarioParams:
    """Load and PV distributions used by :func:`sample_scenario` (SI units)."""

    under_load_max_w: float = 2500.0
    over_load_max_w: float = 1000.0
    pv_output_w: float = 2000.0
    inverter_va: float = 2200.0
    q_ratio_min: float = 0.2
    q_ratio_max: float = 0.3

    def __post_init__(self) -> None:
        if self.pv_output_w > self.inverter_va:
            raise ValueError("PV output exceeds inverter rating")
        if not 0 <= self.q_ratio_min <= self.q_ratio_max:
            raise ValueError("need 0 <= q_ratio_min <= q_ratio_max")
        if self.under_load_max_w < 0 or self.over_load_max_w < 0 or self.pv_output_w < 0:
            raise ValueError("load and PV magnitudes must be non-negative")


@dataclass(frozen=True, eq=False)
class Scenario:
    """One realization of loads and PV on the load nodes 1..n (SI units).

    Arrays are indexed by load node, so element ``i`` belongs to bus ``i + 1``.
    """

    case_kind: CaseKind
    p_c: np.ndarray
    q_c: np.ndarray
    p_g: np.ndarray
    s_inv: np.ndarray
    pv_mask: np.ndarray
    seed: int
    mean_load: bool = False
    penetration: float = field(default=0.5)

    def __post_init__(self) -> None:
        n = len(self.pv_mask)
        for name in ("p_c", "q_c", "p_g", "s_inv"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
        self.pv_mask.setflags(write=False)
        if np.any(self.p_g[~self.pv_mask] != 0) or np.any(self.s_inv[~self.pv_mask] != 0):
            raise ValueError("non-PV nodes cannot carry generation or inverter capacity")
        if np.any(self.p_g > self.s_inv):
            raise ValueError("PV output exceeds inverter rating")

    @property
    def n_nodes(self) -> int:
        return len(self.pv_mask)

    @property
    def loads(self) -> list[NodeLoad]:
        return [NodeLoad(*row) for row in zip(
            self.p_c.tolist(), self.q_c.tolist(), self.p_g.tolist(), self.s_inv.tolist())]

    def scaled(self, factor: float) -> "Scenario":
        """Copy with every power (and inverter rating) multiplied by ``factor``."""
        return Scenario(self.case_kind, self.p_c * factor, self.q_c * factor,
                        self.p_g * factor, self.s_inv * factor, self.pv_mask.copy(),
                        self.seed, self.mean_load, self.penetration)


def pv_count(penetration: float, n_nodes: int) -> int:
    """Number of PV nodes, rounding half up."""
    return int(math.floor(penetration * n_nodes + 0.5))


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), index])))


def sample_pv_mask(n_nodes: int, penetration: float, seed: int) -> np.ndarray:
    count = pv_count(penetration, n_nodes)
    chosen = _stream(seed, 0).choice(n_nodes, size=count, replace=False)
    mask = np.zeros(n_nodes, dtype=bool)
    mask[chosen] = True
    return mask


def sample_scenario(model: FeederModel, case: CaseKind | str, penetration: float = 0.5,
                    seed: int = 0, params: ScenarioParams | None = None,
                    mean_load: bool = False) -> Scenario:
    """Draw one load/generation realization.

    Undergenerated: ``p_c ~ U[0, 2500] W`` and no PV output.  Overgenerated:
    ``p_c ~ U[0, 1000] W`` and every PV node produces 2 kW.  Reactive load is
    ``q_c ~ U[0.2, 0.3] * p_c`` in both cases and every PV node has a 2.2 kVA
    inverter.

    With ``mean_load`` every ``p_c`` sits at its distribution mean and
    ``q_c = 0.25 p_c``; only the PV placement remains random.
    """
    case = CaseKind.parse(case)
    if not 0.0 <= penetration <= 1.0:
        raise ValueError(f"penetration must lie in [0, 1], got {penetration}")
    params = params or ScenarioParams()
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    n = model.n_nodes
    mask = sample_pv_mask(n, penetration, seed)

    load_max = params.under_load_max_w if case is CaseKind.UNDER else params.over_load_max_w
    if mean_load:
        p_c = np.full(n, load_max / 2)
        q_c = p_c * (params.q_ratio_min + params.q_ratio_max) / 2
    else:
        rng = _stream(seed, 1 if case is CaseKind.UNDER else 2)
        p_c = rng.uniform(0.0, load_max, size=n)
        q_c = p_c * rng.uniform(params.q_ratio_min, params.q_ratio_max, size=n)

    p_g = np.zeros(n)
    if case is CaseKind.OVER:
        p_g[mask] = params.pv_output_w
    s_inv = np.where(mask, params.inverter_va, 0.0)
    return Scenario(case, p_c, q_c, p_g, s_inv, mask, int(seed), mean_load, penetration)


def realization_seed(master_seed: int, index: int) -> int:
    """Seed of realization ``index``: first word of ``SeedSequence([master_seed, index])``."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)
    return int(state[0])
