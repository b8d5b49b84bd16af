"""
Multistage graph over image columns and its dynamic-programming shortest path.

Vertices are pixels; stage j is column j. A node is either BLOCKED (no vertex)
or carries a finite non-negative nodal cost. Links join rows i and k of
adjacent columns when |i - k| <= delta and cost link_weight * |i - k|.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from techzsky.blade import ScoreMap
from techzsky.edges import EdgeMap
from techzsky.errors import ConfigError, ImageTooSmall, Infeasible, WeightOutOfRange
from techzsky.imagecore import GrayImage, gradient, normalize01


@dataclass(frozen=True)
class DpParams:
    delta: int = 4
    tog: int = 5
    link_weight: Optional[float] = None
    dummy_cost: float = 2.0

    def __post_init__(self) -> None:
        if self.delta < 1 or self.tog < 1:
            raise ConfigError(f"dp needs delta >= 1 and tog >= 1, got {self.delta}, {self.tog}")
        if self.link_weight is not None and self.link_weight < 0:
            raise ConfigError(f"dp.link_weight must be >= 0, got {self.link_weight}")
        if not self.dummy_cost > 0:
            raise ConfigError(f"dp.dummy_cost must be > 0, got {self.dummy_cost}")

    def link_weight_for(self, rows: int) -> float:
        """Explicit link weight, or 1 / rows when left unset."""
        return self.link_weight if self.link_weight is not None else 1.0 / rows


@dataclass(frozen=True, eq=False)
class CostGrid:
    """
    M x N nodal costs. `blocked` marks nodes without a vertex; their `nodal`
    entries are ignored. `dummy` marks nodes inserted by gap filling.
    """

    nodal: np.ndarray
    blocked: np.ndarray
    dummy: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        nodal = np.array(self.nodal, dtype=np.float64)
        blocked = np.array(self.blocked, dtype=bool)
        dummy = np.zeros_like(blocked) if self.dummy is None else np.array(self.dummy, dtype=bool)
        if nodal.ndim != 2 or nodal.shape != blocked.shape or dummy.shape != blocked.shape:
            raise ConfigError("cost grid arrays must share one 2-D shape")
        nodal[blocked] = 0.0
        open_costs = nodal[~blocked]
        if not np.all(np.isfinite(open_costs)) or (open_costs.size and open_costs.min() < 0):
            raise ConfigError("non-blocked nodal costs must be finite and >= 0")
        for array in (nodal, blocked, dummy):
            array.setflags(write=False)
        object.__setattr__(self, "nodal", nodal)
        object.__setattr__(self, "blocked", blocked)
        object.__setattr__(self, "dummy", dummy)

    @property
    def rows(self) -> int:
        return self.nodal.shape[0]

    @property
    def cols(self) -> int:
        return self.nodal.shape[1]

    def cost(self, row: int, col: int) -> Optional[float]:
        """Nodal cost, or None for a BLOCKED node."""
        if self.blocked[row, col]:
            return None
        return float(self.nodal[row, col])


@dataclass(frozen=True)
class SkylinePath:
    """One row per column, plus a per-column flag for gap-fill dummy nodes."""

    rows: Tuple[int, ...]
    dummy: Tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        flags = tuple(bool(f) for f in self.dummy) or (False,) * len(self.rows)
        object.__setattr__(self, "dummy", flags)

    def __len__(self) -> int:
        return len(self.rows)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=np.int64)


def _check_weight(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise WeightOutOfRange(f"{name} must lie in [0, 1], got {value}")


def cost_edges_only(edges: EdgeMap, l: float = 0.1) -> CostGrid:
    """Low cost `l` on edge pixels, BLOCKED elsewhere."""
    if l < 0:
        raise ConfigError(f"edge cost l must be >= 0, got {l}")
    return CostGrid(nodal=np.full(edges.mask.shape, float(l)), blocked=~edges.mask)


def cost_gradient(img: GrayImage, w1: float = 0.5) -> CostGrid:
    """
    Gradient baseline: w1 * d_grad + (1 - w1) * (1 - grad), grad normalized to
    [0, 1] and d_grad its absolute difference with the next column (0 on the
    last column). No node is BLOCKED.
    """
    _check_weight("w1", w1)
    if img.width < 2:
        raise ImageTooSmall("gradient cost needs at least two columns")
    grad = normalize01(gradient(img).magnitude)
    d_grad = np.zeros_like(grad)
    d_grad[:, :-1] = np.abs(grad[:, :-1] - grad[:, 1:])
    nodal = w1 * d_grad + (1.0 - w1) * (1.0 - grad)
    return CostGrid(nodal=nodal, blocked=np.zeros(grad.shape, dtype=bool))


def cost_proposed(scores: ScoreMap, strength: np.ndarray, edges: EdgeMap, v: float = 0.5) -> CostGrid:
    """
    Fused cost v * (1 - score) + (1 - v) * (1 - strength) on edge pixels, with
    `strength` already normalized to [0, 1]; BLOCKED elsewhere.
    """
    _check_weight("v", v)
    strength = np.asarray(strength, dtype=np.float64)
    if strength.shape != edges.mask.shape or scores.scores.shape != edges.mask.shape:
        raise ConfigError("scores, strength and edge map sizes differ")
    score = scores.filled(0.0)
    nodal = v * (1.0 - score) + (1.0 - v) * (1.0 - strength)
    blocked = ~edges.mask
    return CostGrid(nodal=np.where(blocked, 0.0, nodal), blocked=blocked)


def _window(rows: int, center: int, delta: int) -> slice:
    return slice(max(0, center - delta), min(rows, center + delta + 1))


def gap_fill(grid: CostGrid, params: DpParams) -> CostGrid:
    """
    Insert dummy nodes (cost `dummy_cost`) so the graph stays connected.

    1. A node (i, j) with no node within delta rows in column j + 1, but with
       one in some column j' in (j + 1, j + tog], is bridged by dummies at row i
       in columns j + 1 .. j' - 1.
    2. Columns left entirely BLOCKED are filled with dummies.
    3. Sweeping left to right, a column with no node reachable within delta
       from the previous column's reachable nodes gets dummies at those rows.
    """
    open_costs = grid.nodal[~grid.blocked & ~grid.dummy]
    if open_costs.size and params.dummy_cost <= open_costs.max():
        raise ConfigError(
            f"dummy_cost {params.dummy_cost} must exceed the largest nodal cost {open_costs.max()}"
        )
    rows, cols = grid.rows, grid.cols
    blocked = grid.blocked.copy()
    dummy = grid.dummy.copy()
    delta = params.delta

    for j in range(cols - 1):
        for i in np.flatnonzero(~grid.blocked[:, j]):
            if (~blocked[_window(rows, i, delta), j + 1]).any():
                continue
            last = min(cols - 1, j + params.tog)
            for target in range(j + 2, last + 1):
                if (~blocked[_window(rows, i, delta), target]).any():
                    dummy[i, j + 1 : target] |= blocked[i, j + 1 : target]
                    blocked[i, j + 1 : target] = False
                    break

    empty = blocked.all(axis=0)
    dummy[:, empty] = True
    blocked[:, empty] = False

    reachable = ~blocked[:, 0]
    for j in range(1, cols):
        spread = _dilate(reachable, delta)
        nxt = spread & ~blocked[:, j]
        if not nxt.any():
            blocked[reachable, j] = False
            dummy[reachable, j] = True
            nxt = reachable.copy()
        reachable = nxt

    nodal = np.where(dummy & ~grid.dummy, params.dummy_cost, grid.nodal)
    return CostGrid(nodal=nodal, blocked=blocked, dummy=dummy)


def _dilate(mask: np.ndarray, delta: int) -> np.ndarray:
    out = mask.copy()
    for d in range(1, delta + 1):
        out[d:] |= mask[:-d]
        out[:-d] |= mask[d:]
    return out


def shortest_path(grid: CostGrid, params: DpParams) -> Tuple[SkylinePath, float]:
    """
    Minimum-cost left-to-right path with per-column row steps <= delta.

    The total is accumulated as ((cost + link) + nodal) column by column. Ties
    go to the smaller final row, then to the smaller predecessor row.

    Raises:
        Infeasible: If some column has no reachable node.
    """
    rows, cols = grid.rows, grid.cols
    delta = params.delta
    link = params.link_weight_for(rows)
    offsets = np.arange(-delta, delta + 1)
    row_index = np.arange(rows)

    cost = np.where(grid.blocked[:, 0], np.inf, grid.nodal[:, 0])
    if np.isinf(cost).all():
        raise Infeasible("column 0 has no open node")
    back = np.zeros((rows, cols), dtype=np.int64)

    # candidates[d, i] is the cost of arriving at row i from row i + offsets[d]
    for j in range(1, cols):
        candidates = np.full((len(offsets), rows), np.inf)
        for d, offset in enumerate(offsets):
            src = row_index + offset
            valid = (src >= 0) & (src < rows)
            candidates[d, valid] = cost[src[valid]] + link * abs(int(offset))
        best = np.argmin(candidates, axis=0)
        arrival = candidates[best, row_index]
        step = arrival + grid.nodal[:, j]
        step[grid.blocked[:, j] | np.isinf(arrival)] = np.inf
        if np.isinf(step).all():
            raise Infeasible(f"column {j} has no node reachable from column {j - 1}")
        back[:, j] = row_index + offsets[best]
        cost = step

    end = int(np.argmin(cost))
    total = float(cost[end])
    path = [end]
    for j in range(cols - 1, 0, -1):
        path.append(int(back[path[-1], j]))
    path.reverse()
    flags = [bool(grid.dummy[r, j]) for j, r in enumerate(path)]
    return SkylinePath(tuple(path), tuple(flags)), total


def path_costs(grid: CostGrid, path: SkylinePath) -> List[float]:
    """Nodal cost of the chosen node in each column."""
    return [float(grid.nodal[r, j]) for j, r in enumerate(path.rows)]
