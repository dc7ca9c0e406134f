"""Blocked rolling-window cross-validation and cost-sensitive cutpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import glm, metrics
from .data_io import write_csv
from .errors import DegenerateError, InsufficientDataError, TuningError, ValidationError
from .glm import ModelSpec, PenaltySpec

BLOCK_LEN = 288
BLOCK_STEP = 12
TRAIN_FRACTION = 5 / 6
_TIE_RTOL = 1e-12
CRITERIA = ("cost", "auprc", "logloss")


@dataclass(frozen=True)
class Block:
    start: int
    end: int
    train: range
    validation: range


@dataclass(frozen=True)
class BlockPlan:
    blocks: tuple[Block, ...]


def make_blocks(T: int, block_len: int = BLOCK_LEN, step: int = BLOCK_STEP,
                train_fraction: float = TRAIN_FRACTION) -> BlockPlan:
    """Overlapping blocks of ``block_len`` rows, ``step`` rows apart.

    Each block trains on its first ``ceil(train_fraction * block_len)`` rows
    and validates on the rest, so validation always follows training.
    """
    if T < block_len:
        raise InsufficientDataError(f"{T} rows of history, blocks need {block_len}")
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must lie in (0, 1)")
    n_train = math.ceil(train_fraction * block_len - 1e-9)
    if not 0 < n_train < block_len:
        raise ValidationError("block too short to split into train and validation")
    blocks = []
    for start in range(0, T - block_len + 1, step):
        end = start + block_len
        blocks.append(Block(start, end, range(start, start + n_train), range(start + n_train, end)))
    return BlockPlan(tuple(blocks))


@dataclass(frozen=True)
class CostSpec:
    cost_fn: float
    cost_fp: float

    def __post_init__(self):
        if self.cost_fn <= 0 or self.cost_fp <= 0:
            raise ValidationError("misclassification costs must be positive")
        if self.cost_fn < self.cost_fp:
            raise ValidationError("false negatives must cost at least as much as false positives")

    @classmethod
    def from_labels(cls, labels) -> "CostSpec":
        w = glm.class_weights(labels)
        return cls(w.w_pos, w.w_neg)


def threshold_costs(probabilities, labels, costs: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    """Candidate cutpoints and the total cost of calling ``p >= c`` a recession."""
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(labels)
    u = np.unique(p)
    cands = np.concatenate([[0.0], (u[:-1] + u[1:]) / 2, [1.0]])
    cands = np.unique(cands)
    order = np.argsort(p, kind="stable")
    ps, ys = p[order], y[order]
    below = np.searchsorted(ps, cands, side="left")  # rows with p < c
    fn = np.concatenate([[0], np.cumsum(ys == 1)])[below]
    fp = np.concatenate([[0], np.cumsum((ys == 0)[::-1])])[::-1][below]
    return cands, costs.cost_fn * fn + costs.cost_fp * fp


def optimal_threshold_with_cost(probabilities, labels, costs: CostSpec) -> tuple[float, float]:
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        raise DegenerateError("threshold optimization needs both classes")
    cands, cost = threshold_costs(probabilities, y, costs)
    best = cost.min()
    i = int(np.flatnonzero(cost <= best * (1 + _TIE_RTOL))[0])
    return float(cands[i]), float(cost[i])


def optimal_threshold(probabilities, labels, costs: CostSpec) -> float:
    """Cutpoint minimizing ``cost_fn * #FN + cost_fp * #FP``, smallest on ties."""
    return optimal_threshold_with_cost(probabilities, labels, costs)[0]


def lambda_grid(size: int = 1000, lo: float = 1e-5, hi: float = 1e2) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), size)


@dataclass(frozen=True)
class ModelFamily:
    """A model id plus its hyperparameter grid."""

    name: str
    weighted: bool
    alphas: tuple[float, ...]
    lambdas: tuple[float, ...]
    penalized: bool = True

    def candidates(self) -> list[PenaltySpec]:
        # lambda descending inside each alpha: warm starts run from sparse to dense
        lams = sorted(self.lambdas, reverse=True)
        return [PenaltySpec(a, float(lam)) for a in self.alphas for lam in lams]


def default_family(name: str, lambda_size: int | None = None, enet_lambda_size: int | None = None,
                   lam_lo: float = 1e-5, lam_hi: float = 1e2,
                   enet_alphas: tuple[float, ...] = (0.25, 0.5, 0.75)) -> ModelFamily:
    if name == "logit":
        return ModelFamily("logit", False, (0.0,), (0.0,), penalized=False)
    if name == "wlogit":
        return ModelFamily("wlogit", True, (0.0,), (0.0,), penalized=False)
    if name in ("ridge", "lasso"):
        grid = tuple(lambda_grid(lambda_size or 1000, lam_lo, lam_hi))
        return ModelFamily(name, True, (0.0,) if name == "ridge" else (1.0,), grid)
    if name == "enet":
        grid = tuple(lambda_grid(enet_lambda_size or 200, lam_lo, lam_hi))
        return ModelFamily("enet", True, tuple(enet_alphas), grid)
    raise ValidationError(f"unknown model {name!r}; expected logit, wlogit, ridge, lasso or enet")


MODEL_NAMES = ("logit", "wlogit", "lasso", "ridge", "enet")


@dataclass(frozen=True)
class TraceRow:
    candidate: PenaltySpec
    block: int
    cost: float
    threshold: float
    converged: bool


@dataclass(frozen=True)
class TuneResult:
    best: PenaltySpec
    per_block_thresholds: tuple[float, ...]
    threshold: float
    scores: dict = field(default_factory=dict)  # PenaltySpec -> mean validation cost
    trace: tuple[TraceRow, ...] = ()
    converged: bool = True


def _usable_blocks(y, plan: BlockPlan) -> list[int]:
    keep = []
    for i, b in enumerate(plan.blocks):
        if len(np.unique(y[b.validation.start:b.validation.stop])) < 2:
            continue
        if len(np.unique(y[b.train.start:b.train.stop])) < 2:
            continue
        keep.append(i)
    return keep


def grid_search(X, y, family: ModelFamily, costs: CostSpec | None = None, *,
                block_len: int = BLOCK_LEN, step: int = BLOCK_STEP,
                train_fraction: float = TRAIN_FRACTION,
                allow_nonconverged: bool | None = None, criterion: str = "cost") -> TuneResult:
    """Pick the candidate with the lowest mean validation score over the blocks.

    ``criterion`` is the per-block score: ``"cost"`` (misclassification cost
    at the block's optimal cutpoint), ``"auprc"`` (negated) or ``"logloss"``
    (class-weighted validation log-loss).

    Each block's cost is evaluated at that block's own optimal cutpoint; the
    returned threshold is the mean of the winner's per-block cutpoints.
    Blocks whose train or validation split holds a single class are skipped.
    Candidates with a non-converged block fit only win when no candidate
    converged everywhere; that is an error unless ``allow_nonconverged``
    (default: true for the unpenalized families, whose MLE need not exist).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if criterion not in CRITERIA:
        raise ValidationError(f"unknown selection criterion {criterion!r}; expected one of {CRITERIA}")
    if allow_nonconverged is None:
        allow_nonconverged = not family.penalized
    costs = costs or CostSpec.from_labels(y)
    plan = make_blocks(len(y), block_len, step, train_fraction)
    blocks = _usable_blocks(y, plan)
    if not blocks:
        raise TuningError("every validation block holds a single class")

    cands = family.candidates()
    per = {c: [] for c in cands}
    ok = {c: True for c in cands}
    trace = []
    for bi in blocks:
        b = plan.blocks[bi]
        Xt, yt = X[b.train.start:b.train.stop], y[b.train.start:b.train.stop]
        Xv, yv = X[b.validation.start:b.validation.stop], y[b.validation.start:b.validation.stop]
        warm = {}
        for c in cands:
            res = glm.fit(Xt, yt, ModelSpec(family.name, c, family.weighted), beta0=warm.get(c.alpha))
            warm[c.alpha] = res.coefficients
            pv = glm.predict_proba(res.coefficients, Xv)
            thr, cost = optimal_threshold_with_cost(pv, yv, costs)
            if criterion == "auprc":
                cost = -metrics.auprc(yv, pv)
            elif criterion == "logloss":
                cost = glm.neg_loglik(res.coefficients, Xv, yv, glm.row_weights(yv, True))
            per[c].append((cost, thr))
            ok[c] &= res.converged
            trace.append(TraceRow(c, bi, cost, thr, res.converged))

    scores = {c: float(np.mean([v[0] for v in per[c]])) for c in cands}
    pool = [c for c in cands if ok[c]]
    converged = bool(pool)
    if not pool:
        if not allow_nonconverged:
            raise TuningError(f"no {family.name} candidate converged on every block")
        pool = cands
    best_score = min(scores[c] for c in pool)
    best = next(c for c in pool if scores[c] <= best_score + _TIE_RTOL * abs(best_score))
    thresholds = tuple(v[1] for v in per[best])
    return TuneResult(best, thresholds, float(np.mean(thresholds)), scores, tuple(trace), converged)


def write_trace(path, result: TuneResult) -> Path:
    return write_csv(path, ("alpha", "lambda", "block", "cost", "threshold", "converged"),
                     [(float(r.candidate.alpha), float(r.candidate.lam), r.block, float(r.cost),
                       float(r.threshold), int(r.converged)) for r in result.trace])
