"""Robustness evaluation: parameter-grid sweeps, return statistics, and the
paired frozen-dimension protocol. Evaluation uses undiscounted returns and
never mutates the policy; tables are plain row dicts ready for CSV."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import trainer as trainer_mod
from .core import (
    STREAM_EVAL,
    ModelParams,
    SourceDistribution,
    ceil_percentile,
    discounted_return,
    rollout_batch,
    substream,
)
from .trainer import TrainConfig

PERCENTILE_LEVELS = (5, 10, 25, 50, 75, 90)


@dataclass
class GridAxis:
    name: str
    low: float
    high: float
    points: int

    def values(self) -> np.ndarray:
        if self.points < 2:
            raise ValueError("grid axes need at least 2 points")
        return np.linspace(self.low, self.high, self.points)


@dataclass
class GridSpec:
    axes: list                      # 1 or 2 GridAxis entries
    fixed: dict = field(default_factory=dict)
    episodes: int = 20

    def validate(self, env):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("grid supports 1 or 2 axes")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        known = set(env.spec.all_param_names)
        for axis in self.axes:
            if axis.name not in known:
                raise ValueError(
                    f"unknown parameter '{axis.name}' for env "
                    f"'{getattr(env, 'name', '?')}'; expected {sorted(known)}"
                )
            axis.values()
        for name in self.fixed:
            if name not in known:
                raise ValueError(f"unknown fixed parameter '{name}'")

    def cells(self, env):
        """Parameter vectors in row-major axis order."""
        self.validate(env)
        base = {n: v for n, v in self.fixed.items()}
        for name in env.spec.param_names:
            if name not in base and all(a.name != name for a in self.axes):
                raise ValueError(f"parameter '{name}' has no fixed value")
        combos = itertools.product(*[a.values() for a in self.axes])
        out = []
        for combo in combos:
            cell = dict(base)
            cell.update({a.name: float(v) for a, v in zip(self.axes, combo)})
            out.append(ModelParams.from_dict(cell))
        return out


@dataclass(frozen=True)
class ReturnStats:
    mean: float
    std: float
    percentiles: dict

    CSV_COLUMNS = ("mean", "std") + tuple(f"p{q}" for q in PERCENTILE_LEVELS)

    def csv_row(self) -> tuple:
        return (self.mean, self.std,
                *[self.percentiles[q] for q in PERCENTILE_LEVELS])


def return_statistics(returns) -> ReturnStats:
    """Sample mean/std (n-1 denominator, 0 for a single value) plus the
    fixed percentile levels under the ceil-index convention."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise ValueError("empty return list")
    std = float(r.std(ddof=1)) if r.size > 1 else 0.0
    pct = {q: ceil_percentile(r, q / 100.0) for q in PERCENTILE_LEVELS}
    return ReturnStats(mean=float(r.mean()), std=std, percentiles=pct)


def grid_evaluate(policy, env, grid: GridSpec, gamma: float = 1.0,
                  seed: int = 0, workers: int = 1):
    """Mean and 10th-percentile return per grid cell.

    Episode random streams are keyed by episode index only, so every cell
    sees the same initial states and action noise (stratified comparison).
    Returns (rows, all_returns) where rows are CSV-ready dicts and
    all_returns maps row index -> per-episode returns.
    """
    cells = grid.cells(env)
    horizon = env.spec.default_horizon
    rows = []
    per_cell_returns = []
    for cell in cells:
        rngs = [substream(seed, STREAM_EVAL, e) for e in range(grid.episodes)]
        taus = rollout_batch(env, [cell] * grid.episodes, policy, horizon,
                             rngs, workers=workers)
        returns = np.array([discounted_return(t, gamma) for t in taus])
        row = {a.name: cell.get(a.name) for a in grid.axes}
        row["mean_return"] = float(returns.mean())
        row["p10_return"] = ceil_percentile(returns, 0.10)
        rows.append(row)
        per_cell_returns.append(returns)
    return rows, per_cell_returns


GRID_CSV_BASE_COLUMNS = ("mean_return", "p10_return")


def grid_csv_columns(grid: GridSpec) -> tuple:
    return tuple(a.name for a in grid.axes) + GRID_CSV_BASE_COLUMNS


@dataclass
class PairedGridTables:
    """Frozen-dimension comparison: same grid, two policies."""

    full_rows: list
    reduced_rows: list
    full_returns: list
    reduced_returns: list


def unmodeled_protocol(env, full_source: SourceDistribution,
                       reduced_source: SourceDistribution,
                       frozen_param_name: str, train_config: TrainConfig,
                       grid: GridSpec, *, eval_seed: int = 0,
                       workers: int = 1) -> PairedGridTables:
    """Train one policy per source and grid-evaluate both along the frozen
    parameter's axis. reduced_source must equal full_source with the frozen
    dimension's sigma zeroed at its mu."""
    if frozen_param_name not in full_source.names:
        raise ValueError(f"'{frozen_param_name}' is not a source dimension")
    expected = full_source.freeze(frozen_param_name)
    same = (reduced_source.names == expected.names
            and np.array_equal(reduced_source.mu, expected.mu)
            and np.array_equal(reduced_source.sigma, expected.sigma)
            and np.array_equal(reduced_source.low, expected.low)
            and np.array_equal(reduced_source.high, expected.high))
    if not same:
        raise ValueError(
            "reduced_source must be full_source with the frozen dimension's "
            "sigma set to 0 at its mu"
        )
    policy_full, _ = trainer_mod.train(env, full_source, train_config,
                                       workers=workers)
    policy_reduced, _ = trainer_mod.train(env, reduced_source, train_config,
                                          workers=workers)
    full_rows, full_returns = grid_evaluate(policy_full, env, grid,
                                            seed=eval_seed, workers=workers)
    reduced_rows, reduced_returns = grid_evaluate(policy_reduced, env, grid,
                                                  seed=eval_seed, workers=workers)
    return PairedGridTables(full_rows, reduced_rows, full_returns,
                            reduced_returns)
