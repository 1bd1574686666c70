"""Sampling-based collision estimators: the Bernoulli-inclusion estimator,
its two-stage relative-error pipeline, and the doubling constant-factor
estimator with a modeled sublinear pair-finding cost.

All probability-driven choices flow through one seeded generator per run;
natural logarithms are used in every concentration-derived formula (the
base is recorded in run traces so base-2 reruns are comparable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .meter import QueryMeter

LOG_BASE = "natural"

#: Cost constant for the modeled sublinear pair-finding subcall.
PAIR_FINDER_COST = 1.0


@dataclass(frozen=True)
class SamplingRun:
    """One Bernoulli-inclusion estimate: m_hat = found / p_effective^2."""

    p: float
    p_effective: float
    sample_f: tuple[int, ...]
    sample_g: tuple[int, ...]
    collisions_found: int
    estimate: float
    queries: int
    clamped: bool


def sample_count(inst, p: float, rng: np.random.Generator,
                 meter: QueryMeter | None = None) -> SamplingRun:
    """Include each index on each side with probability p, join exactly.

    Estimates the collision count as found/p^2 (each collision pair
    survives with probability p^2).  Nominal p above 1 is clamped to full
    sampling, and the estimator divides by the clamped value; the clamp
    is flagged in the run record.
    """
    if p <= 0:
        raise ParameterError("inclusion probability must be positive")
    p_eff = min(1.0, float(p))
    n = inst.n
    include_f = rng.random(n) < p_eff
    include_g = rng.random(n) < p_eff
    sample_f = tuple(int(i) for i in np.nonzero(include_f)[0])
    sample_g = tuple(int(i) for i in np.nonzero(include_g)[0])
    values = {inst.f[i] for i in sample_f}
    found = sum(1 for j in sample_g if inst.g[j] in values)
    queries = len(sample_f) + len(sample_g)
    if meter is not None:
        meter.charge("oracle", queries)
    return SamplingRun(
        p=float(p), p_effective=p_eff, sample_f=sample_f, sample_g=sample_g,
        collisions_found=found, estimate=found / p_eff ** 2, queries=queries,
        clamped=p_eff < p,
    )


def inclusion_probability(epsilon: float, m_lower: float, nu: float) -> float:
    """Smallest inclusion probability with relative error epsilon and
    failure chance nu, from the concentration bound: (1/eps) *
    sqrt((3/m) ln(2/nu)), clamped to 1."""
    if not 0 < epsilon <= 1 or not 0 < nu <= 1:
        raise ParameterError("epsilon and nu must lie in (0, 1]")
    if m_lower <= 0:
        raise ParameterError("the collision lower bound must be positive")
    raw = (1.0 / epsilon) * math.sqrt((3.0 / m_lower) * math.log(2.0 / nu))
    return min(1.0, raw)


@dataclass(frozen=True)
class TwoStageResult:
    estimate: float
    stage1: SamplingRun
    stage1_retry: SamplingRun | None
    stage2: SamplingRun
    failed: bool
    queries: int


def two_stage_classical(inst, epsilon: float, m_bar: int, delta_fail: float, *,
                        seed=0, meter: QueryMeter | None = None) -> TwoStageResult:
    """Constant-factor stage then a refinement stage at accuracy epsilon.

    Stage 1 samples at the probability that achieves relative error 1/2
    from the known lower bound; stage 2 reuses the stage-1 estimate
    (scaled by 2/3 as a conservative lower bound) to set its own
    probability.  A stage-1 run that finds no collisions is retried once
    with doubled probability before reporting failure.
    """
    if not 0 < epsilon < 1:
        raise ParameterError("epsilon must lie in (0, 1)")
    if not 0 < delta_fail < 1:
        raise ParameterError("failure budget must lie in (0, 1)")
    if m_bar < 1:
        raise ParameterError("lower bound on collisions must be at least 1")
    rng = np.random.default_rng(seed)
    own = meter if meter is not None else QueryMeter()

    p1 = inclusion_probability(0.5, m_bar, delta_fail / 2.0)
    stage1 = sample_count(inst, p1, rng, own)
    retry = None
    if stage1.collisions_found == 0:
        retry = sample_count(inst, min(1.0, 2.0 * p1), rng, own)
        if retry.collisions_found == 0:
            total = stage1.queries + retry.queries
            return TwoStageResult(estimate=0.0, stage1=stage1, stage1_retry=retry,
                                  stage2=retry, failed=True, queries=total)
    rough = (retry or stage1).estimate

    p2 = inclusion_probability(epsilon, (2.0 / 3.0) * rough, delta_fail / 2.0)
    stage2 = sample_count(inst, p2, rng, own)
    total = stage1.queries + (retry.queries if retry else 0) + stage2.queries
    return TwoStageResult(estimate=stage2.estimate, stage1=stage1, stage1_retry=retry,
                          stage2=stage2, failed=False, queries=total)


# ---------------------------------------------------------------------------
# Doubling constant-factor estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DoublingRound:
    p: float
    p_effective: float
    size_f: int
    size_g: int
    guard_ok: bool
    collisions_found: int | None
    updated: bool
    modeled_queries: float


@dataclass(frozen=True)
class DoublingResult:
    estimate: float
    rounds: tuple[DoublingRound, ...]
    threshold: int
    failed: bool

    @property
    def doublings(self) -> int:
        return len(self.rounds)


def constant_factor(inst, m_bar: int, *, seed=0,
                    meter: QueryMeter | None = None,
                    log=math.log) -> DoublingResult:
    """Factor-2 collision estimate by doubling the inclusion probability.

    Starts at p = 2 sqrt((3/n) log(2n)) and doubles while
    p < 4 sqrt((3/m_bar) log(2n)).  Each round samples both sides, skips
    rounds whose samples exceed 10 log(n) * n * p, counts collisions on
    the sample exactly, and keeps found/p^2 whenever the count is below
    the floor(100 log(n)^2) cap.  The exact count stands in for a
    sublinear quantum pair finder, whose query cost is charged to the
    meter as (|S_f|+|S_g|)^{2/3} per subcall, one subcall per collision
    found plus one.
    """
    if m_bar < 1:
        raise ParameterError("lower bound on collisions must be at least 1")
    n = inst.n
    if n < 2:
        raise ParameterError("need a domain of at least 2 elements")
    rng = np.random.default_rng(seed)
    threshold = math.floor(100.0 * log(n) ** 2)
    guard_factor = 10.0 * log(n) * n
    estimate = 0.0
    updated_any = False
    rounds = []
    p = 2.0 * math.sqrt((3.0 / n) * log(2.0 * n))
    limit = 4.0 * math.sqrt((3.0 / m_bar) * log(2.0 * n))
    while p < limit:
        run = sample_count(inst, p, rng)
        guard_ok = (len(run.sample_f) <= guard_factor * p
                    and len(run.sample_g) <= guard_factor * p)
        found = None
        updated = False
        modeled = 0.0
        if guard_ok:
            found = run.collisions_found
            subcalls = min(found + 1, threshold)
            modeled = PAIR_FINDER_COST * (len(run.sample_f) + len(run.sample_g)) ** (2.0 / 3.0) \
                * subcalls
            if meter is not None:
                meter.charge_modeled("pair-finder", modeled)
            if found < threshold:
                estimate = found / run.p_effective ** 2
                updated = True
                updated_any = True
        rounds.append(DoublingRound(
            p=p, p_effective=run.p_effective, size_f=len(run.sample_f),
            size_g=len(run.sample_g), guard_ok=guard_ok, collisions_found=found,
            updated=updated, modeled_queries=modeled,
        ))
        p *= 2.0
    return DoublingResult(estimate=estimate, rounds=tuple(rounds),
                          threshold=threshold, failed=not updated_any)
