"""Market-level datasets: outcome counts by covariate cell."""

from __future__ import annotations

import csv
import warnings as _warnings
from dataclasses import dataclass

import numpy as np

from .games import DomainError, GameSpec
from .polytope import VectorizationOrder


class ParseError(ValueError):
    """Malformed dataset file; message carries the offending line number."""


@dataclass(frozen=True)
class MarketDataset:
    """Counts of observed action profiles per covariate cell.

    ``counts[y, x]`` is the number of markets with outcome index y and
    covariate index x; rows follow the canonical outcome order of the
    game (last player's action varies fastest).
    """

    counts: np.ndarray
    covariate_labels: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or np.any(c < 0):
            raise DomainError("counts must be a non-negative (|Y|, |X|) table")
        if len(self.covariate_labels) != c.shape[1]:
            raise DomainError("need one label per covariate cell")
        c = np.ascontiguousarray(c)
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "covariate_labels", tuple(self.covariate_labels))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def num_outcomes(self) -> int:
        return self.counts.shape[0]

    @property
    def num_covariates(self) -> int:
        return self.counts.shape[1]

    def n_x(self, x: int) -> int:
        return int(self.counts[:, x].sum())

    def p_hat(self, x: int) -> np.ndarray:
        n_x = self.n_x(x)
        if n_x == 0:
            raise DomainError(f"covariate cell {x} is empty")
        return self.counts[:, x] / n_x

    def summary(self) -> str:
        lines = [f"n = {self.n} markets, {self.num_covariates} covariate cells, "
                 f"{self.num_outcomes} outcomes"]
        for x, lab in enumerate(self.covariate_labels):
            n_x = self.n_x(x)
            freq = self.counts[:, x] / n_x if n_x else self.counts[:, x]
            lines.append(f"  x={lab}: n_x={n_x}, freq={np.array2string(freq, precision=3)}")
        return "\n".join(lines)


def load_dataset(path: str, spec: GameSpec) -> MarketDataset:
    """Read a market-level CSV into counts.

    Expected header: market_id, x_0..x_{d-1}, y_0..y_{N-1}.  The covariate
    columns must reproduce a vector in the game's covariate support;
    actions must lie in each player's action range.  Duplicate market ids
    only trigger a warning (ids are labels, not keys).
    """
    order = VectorizationOrder(spec.actions_per_player, (1,))
    d_x = len(spec.covariate_support[0])
    n_players = spec.num_players
    support_index = {tuple(float(v) for v in x): i for i, x in enumerate(spec.covariate_support)}
    counts = np.zeros((order.num_outcomes, len(spec.covariate_support)), dtype=np.int64)
    seen_ids = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        expected = 1 + d_x + n_players
        if len(header) != expected:
            raise ParseError(f"{path}:1: expected {expected} columns, found {len(header)}")
        rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != expected:
                raise ParseError(f"{path}:{lineno}: ragged row ({len(row)} fields)")
            mid = row[0]
            if mid in seen_ids:
                _warnings.warn(f"{path}:{lineno}: duplicate market_id {mid!r}; row kept")
            seen_ids.add(mid)
            try:
                xvec = tuple(float(v) for v in row[1:1 + d_x])
                yvec = tuple(int(v) for v in row[1 + d_x:])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if xvec not in support_index:
                raise ParseError(f"{path}:{lineno}: covariate {xvec} not in the game support")
            for i, (yi, k) in enumerate(zip(yvec, spec.actions_per_player)):
                if not 0 <= yi < k:
                    raise ParseError(f"{path}:{lineno}: action {yi} of player {i} out of range")
            counts[order.outcome_index(yvec), support_index[xvec]] += 1
            rows += 1
    if rows == 0:
        raise ParseError(f"{path}: no data rows")
    labels = tuple(",".join(f"{v:g}" for v in x) for x in spec.covariate_support)
    return MarketDataset(counts=counts, covariate_labels=labels)


def dataset_from_counts(counts, spec: GameSpec) -> MarketDataset:
    labels = tuple(",".join(f"{v:g}" for v in x) for x in spec.covariate_support)
    return MarketDataset(counts=np.asarray(counts, dtype=np.int64), covariate_labels=labels)
