"""Scheme x K x limit-scale x realization sweeps.

Realization ``i`` of a sweep uses the scenario seed
``realization_seed(master_seed, i)``, i.e. the first 64-bit word of
``numpy.random.SeedSequence([master_seed, i])``.  Both load cases of a
realization share that seed and hence the PV placement.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .control import ControlConfig, Scheme, DEFAULT_DELTA
from .feeder import CaseKind, FeederConfig, FeederModel, ScenarioParams, build_feeder, \
    realization_seed, sample_scenario
from .metrics import CaseMetrics, FrontierPoint, case_metrics, frontier_point
from .solver import PowerFlowError, SolverOptions, solve_ac

log = logging.getLogger(__name__)

DEFAULT_K_GRID = tuple(round(0.1 * i, 10) for i in range(11))
CASES = (CaseKind.UNDER, CaseKind.OVER)


@dataclass(frozen=True)
class SweepConfig:
    feeder: FeederConfig = FeederConfig()
    scenario: ScenarioParams = ScenarioParams()
    solver: SolverOptions = SolverOptions()
    penetration: float = 0.5
    delta: float = DEFAULT_DELTA
    schemes: tuple[Scheme, ...] = tuple(Scheme)
    k_grid: tuple[float, ...] = DEFAULT_K_GRID
    limit_scales: tuple[float, ...] = (1.0, 0.5)
    realizations: int = 20
    master_seed: int = 2011
    mean_load_mode: bool = False
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "schemes", tuple(Scheme.parse(s) for s in self.schemes))
        object.__setattr__(self, "k_grid", tuple(float(k) for k in self.k_grid))
        object.__setattr__(self, "limit_scales", tuple(float(s) for s in self.limit_scales))
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if any(not 0.0 <= k <= 1.0 for k in self.k_grid):
            raise ValueError("k_grid values must lie in [0, 1]")
        if any(not 0.0 < s <= 1.0 for s in self.limit_scales):
            raise ValueError("limit_scales must lie in (0, 1]")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not 0.0 <= self.penetration <= 1.0:
            raise ValueError("penetration must lie in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if any(s.uses_k for s in self.schemes) and not self.k_grid:
            raise ValueError("k_grid is empty but a K-parameterized scheme was requested")

    def controls(self) -> list[ControlConfig]:
        """Expand schemes over the K grid and limit scales (NoControl appears once)."""
        out = []
        for scheme in self.schemes:
            if scheme is Scheme.NO_CONTROL:
                out.append(ControlConfig(scheme, delta=self.delta))
                continue
            for scale in self.limit_scales:
                ks = self.k_grid if scheme.uses_k else (0.0,)
                out.extend(ControlConfig(scheme, k, self.delta, scale) for k in ks)
        return list(dict.fromkeys(out))


@dataclass(frozen=True)
class CaseRow:
    scheme: Scheme
    k: float | None
    scale: float
    seed: int
    case: CaseKind
    metrics: CaseMetrics | None
    iterations: int | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def sort_key(self):
        return (self.scheme.value, -1.0 if self.k is None else self.k, self.scale, self.seed,
                self.case.short)


@dataclass
class SweepResult:
    rows: list[CaseRow] = field(default_factory=list)
    frontier: list[FrontierPoint] = field(default_factory=list)

    @property
    def failures(self) -> list[CaseRow]:
        return [r for r in self.rows if not r.ok]


def _cell_key(control: ControlConfig):
    k = control.k if control.scheme.uses_k else None
    return control.scheme, k, control.limit_scale


def _run_realization(model: FeederModel, config: SweepConfig, seed: int) -> list[CaseRow]:
    controls = config.controls()
    rows = []
    for case in CASES:
        scenario = sample_scenario(model, case, config.penetration, seed, config.scenario,
                                   mean_load=config.mean_load_mode)
        base_error = None
        try:
            base = solve_ac(model, scenario, ControlConfig(delta=config.delta), config.solver)
            base_loss = base.loss_w
        except PowerFlowError as exc:
            base, base_loss, base_error = None, None, f"base solve failed: {exc}"
        for control in controls:
            scheme, k, scale = _cell_key(control)
            if base_error:
                rows.append(CaseRow(scheme, k, scale, seed, case, None, None, base_error))
                continue
            try:
                state = base if scheme is Scheme.NO_CONTROL else \
                    solve_ac(model, scenario, control, config.solver)
                metrics = case_metrics(state, base_loss)
                rows.append(CaseRow(scheme, k, scale, seed, case, metrics, state.iterations))
            except (PowerFlowError, ValueError) as exc:
                log.warning("solve failed: %s k=%s scale=%s seed=%d %s: %s",
                            scheme.value, k, scale, seed, case.short, exc)
                rows.append(CaseRow(scheme, k, scale, seed, case, None, None, str(exc)))
    return rows


def _aggregate(rows: list[CaseRow]) -> list[FrontierPoint]:
    cells: dict[tuple, dict[int, dict[CaseKind, CaseMetrics]]] = {}
    for row in rows:
        by_seed = cells.setdefault((row.scheme, row.k, row.scale), {})
        entry = by_seed.setdefault(row.seed, {})
        if row.ok:
            entry[row.case] = row.metrics
    points = []
    for (scheme, k, scale), by_seed in cells.items():
        pairs = [(m[CaseKind.UNDER], m[CaseKind.OVER]) for _, m in sorted(by_seed.items())
                 if len(m) == 2]
        if pairs:
            points.append(frontier_point(pairs, scheme.value, k, scale))
    points.sort(key=lambda p: (p.scheme, -1.0 if p.k is None else p.k, p.limit_scale))
    return points


def run_sweep(config: SweepConfig) -> SweepResult:
    """Solve every (control, realization, case) cell and aggregate frontier points.

    Solver failures are recorded on their rows instead of aborting the sweep.
    """
    model = build_feeder(config.feeder)
    seeds = [realization_seed(config.master_seed, i) for i in range(config.realizations)]
    if config.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_realization, [model] * len(seeds),
                                   [config] * len(seeds), seeds))
    else:
        chunks = [_run_realization(model, config, seed) for seed in seeds]
    rows = sorted((row for chunk in chunks for row in chunk), key=lambda r: r.sort_key)
    return SweepResult(rows, _aggregate(rows))


# --------------------------------------------------------------------------
# JSON configuration

def _build(cls, data: dict[str, Any] | None, where: str):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return cls(**data)


def config_from_dict(data: dict[str, Any]) -> SweepConfig:
    """Build a :class:`SweepConfig` from the JSON layout documented in :mod:`voltvar.cli`."""
    data = dict(data)
    allowed = {"feeder", "scenario", "solver", "control", "sweep", "output"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    control = dict(data.get("control") or {})
    sweep = dict(data.get("sweep") or {})
    output = dict(data.get("output") or {})
    if set(control) - {"delta"}:
        raise ValueError("control block accepts only 'delta'")
    if set(output) - {"out_dir"}:
        raise ValueError("output block accepts only 'out_dir'")
    sweep_keys = {"schemes", "k_grid", "limit_scales", "realizations", "master_seed",
                  "mean_load_mode", "penetration", "workers"}
    if set(sweep) - sweep_keys:
        raise ValueError(f"unknown key(s) in sweep: {', '.join(sorted(set(sweep) - sweep_keys))}")
    return SweepConfig(
        feeder=_build(FeederConfig, data.get("feeder"), "feeder"),
        scenario=_build(ScenarioParams, data.get("scenario"), "scenario"),
        solver=_build(SolverOptions, data.get("solver"), "solver"),
        delta=float(control.get("delta", DEFAULT_DELTA)),
        out_dir=str(output.get("out_dir", "results")),
        **sweep,
    )


def load_config(path: str | Path) -> SweepConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def config_to_dict(config: SweepConfig) -> dict[str, Any]:
    return {
        "feeder": dataclasses.asdict(config.feeder),
        "scenario": dataclasses.asdict(config.scenario),
        "solver": dataclasses.asdict(config.solver),
        "control": {"delta": config.delta},
        "sweep": {
            "schemes": [s.value for s in config.schemes],
            "k_grid": list(config.k_grid),
            "limit_scales": list(config.limit_scales),
            "realizations": config.realizations,
            "master_seed": config.master_seed,
            "mean_load_mode": config.mean_load_mode,
            "penetration": config.penetration,
            "workers": config.workers,
        },
        "output": {"out_dir": config.out_dir},
    }
