"""Sequential testing over ordered baselines and per-market confidence sets.

An ordered chain of baselines (most informative first) can be tested at
level alpha without multiplicity correction: the first non-rejection
stops the sequence, so at most one true null is ever at risk.  Per-market
hypotheses, which carry no such ordering, instead get classical Holm or
Bonferroni control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import TestConfig, bootstrap_draws, _pvalue_cells
from .data import MarketDataset
from .games import DiscretizedGame, DomainError, InfoPartition, is_refinement


class OrderingError(DomainError):
    """Baseline chain is not ordered from most to least informative."""


@dataclass(frozen=True)
class BaselineChain:
    """Ordered baselines, most informative first; ordering is validated."""

    baselines: tuple[InfoPartition, ...]
    labels: tuple[str, ...] = None

    def __post_init__(self):
        bl = tuple(self.baselines)
        if not bl:
            raise DomainError("chain must contain at least one baseline")
        for j in range(len(bl) - 1):
            if not is_refinement(bl[j], bl[j + 1]):
                raise OrderingError(
                    f"baseline {j} does not refine baseline {j + 1}; "
                    "chains must run from most to least informative")
        labels = self.labels or tuple(b.label for b in bl)
        object.__setattr__(self, "baselines", bl)
        object.__setattr__(self, "labels", tuple(labels))

    def __len__(self) -> int:
        return len(self.baselines)


@dataclass
class SequentialTestResult:
    """Rejected prefix of the chain and the level at which testing stopped."""

    p_by_level: list
    rejected: list
    stop_index: int  # 1-based level at which the test stopped
    alpha: float


def _sup_pvalue(game, partition, data, config, xs, draws):
    """sup over the theta grid, early exit once the sup clears alpha."""
    sup_p, early = 0.0, False
    for theta in config.theta_domain.grid_points():
        res = _pvalue_cells(game, partition, theta, data, config, xs, draws)
        sup_p = max(sup_p, res.p_value)
        if sup_p > config.alpha:
            early = True
            break
    return sup_p, early


def sequential_test(game: DiscretizedGame, chain: BaselineChain, data: MarketDataset,
                    config: TestConfig) -> SequentialTestResult:
    """Test the chain top-down at level alpha, stopping at the first survival.

    Every level is tested at the full level alpha; the chain ordering makes
    the familywise error equal to the error at the first true null, so no
    step-down correction is applied.
    """
    draws = bootstrap_draws(data, config)
    p_by_level, rejected = [], []
    stop = len(chain)
    for j, partition in enumerate(chain.baselines):
        p_j, _ = _sup_pvalue(game, partition, data, config,
                             range(data.num_covariates), draws)
        p_by_level.append((chain.labels[j], p_j))
        if p_j > config.alpha:
            stop = j + 1
            break
        rejected.append(chain.labels[j])
    else:
        stop = len(chain)
    return SequentialTestResult(p_by_level=p_by_level, rejected=rejected,
                                stop_index=stop, alpha=config.alpha)


def market_pvalues(game: DiscretizedGame, baseline_by_x, data: MarketDataset,
                   config: TestConfig) -> dict:
    """Per-market p-values p_n(x) = sup over theta of the single-cell p-value.

    ``baseline_by_x`` is either one partition for every market or a
    sequence with one partition per covariate cell.  Values above alpha
    are reported as the early-exit lower bound, which leaves any
    rejection decision at thresholds <= alpha unchanged.
    """
    if isinstance(baseline_by_x, InfoPartition):
        baselines = [baseline_by_x] * data.num_covariates
    else:
        baselines = list(baseline_by_x)
        if len(baselines) != data.num_covariates:
            raise DomainError("need one baseline per covariate cell")
    draws = bootstrap_draws(data, config)
    out = {}
    for x in range(data.num_covariates):
        p_x, early = _sup_pvalue(game, baselines[x], data, config, [x], draws)
        out[x] = {"p": p_x, "lower_bound": early, "n_x": data.n_x(x)}
    return out


@dataclass
class MarketCSResult:
    """Retained markets after familywise-error control."""

    pvals: dict
    method: str
    thresholds: dict
    rejected: list
    retained: list

    @property
    def cs(self) -> list:
        return self.retained


def _extract(pvals):
    items = []
    for x, v in pvals.items():
        items.append((x, v["p"] if isinstance(v, dict) else float(v)))
    return items


def holm_select(pvals: dict, alpha: float) -> MarketCSResult:
    """Holm step-down: reject while p_(k) <= alpha/(|X|-k+1), then stop.

    Ties are broken by covariate index so the ordering is deterministic.
    """
    items = _extract(pvals)
    if not items:
        raise DomainError("no p-values supplied")
    K = len(items)
    items.sort(key=lambda t: (t[1], t[0]))
    thresholds, rejected = {}, []
    rejecting = True
    for k, (x, p) in enumerate(items, start=1):
        thr = alpha / (K - k + 1)
        thresholds[x] = thr
        if rejecting and p <= thr:
            rejected.append(x)
        else:
            rejecting = False
    retained = sorted(set(x for x, _ in items) - set(rejected))
    return MarketCSResult(pvals=dict(items), method="holm", thresholds=thresholds,
                          rejected=sorted(rejected), retained=retained)


def bonferroni_select(pvals: dict, alpha: float) -> MarketCSResult:
    """Bonferroni: reject x iff p_n(x) <= alpha/|X|."""
    items = _extract(pvals)
    if not items:
        raise DomainError("no p-values supplied")
    thr = alpha / len(items)
    rejected = sorted(x for x, p in items if p <= thr)
    retained = sorted(set(x for x, _ in items) - set(rejected))
    return MarketCSResult(pvals=dict(items), method="bonferroni",
                          thresholds={x: thr for x, _ in items},
                          rejected=rejected, retained=retained)
