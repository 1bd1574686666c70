"""Query-cost accounting for walk-based search and counting runs.

Counters follow the standard cost model for search via quantum walk:
setup, update and checking operations are tallied separately, raw oracle
evaluations cover the classical baselines, and named modeled charges
cover subroutines whose quantum cost is modeled rather than simulated.
Predictions evaluate the corresponding complexity formulas with constant
1 and no polylog factors; reports compare measured/predicted ratios.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

from .errors import ParameterError

KINDS = ("setup", "update", "checking", "oracle")


@dataclass(frozen=True)
class MeterSnapshot:
    setup: int = 0
    update: int = 0
    checking: int = 0
    oracle: int = 0
    modeled: tuple[tuple[str, float], ...] = ()

    def modeled_total(self) -> float:
        return sum(v for _, v in self.modeled)

    def weighted_total(self, setup_cost: float = 1.0, update_cost: float = 1.0,
                       checking_cost: float = 1.0) -> float:
        """Total queries with per-operation costs supplied by the caller."""
        return (self.setup * setup_cost + self.update * update_cost
                + self.checking * checking_cost + self.oracle + self.modeled_total())

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in KINDS}
        out["modeled"] = dict(self.modeled)
        return out


def diff(after: MeterSnapshot, before: MeterSnapshot) -> MeterSnapshot:
    """Counter deltas between two snapshots of the same meter."""
    before_modeled = dict(before.modeled)
    modeled = tuple(
        (label, value - before_modeled.get(label, 0.0))
        for label, value in after.modeled
        if value - before_modeled.get(label, 0.0) != 0.0
    )
    return MeterSnapshot(
        setup=after.setup - before.setup,
        update=after.update - before.update,
        checking=after.checking - before.checking,
        oracle=after.oracle - before.oracle,
        modeled=modeled,
    )


class QueryMeter:
    """Monotone counter bundle; charging is atomic and thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = {k: 0 for k in KINDS}
        self._modeled: dict[str, float] = {}

    def charge(self, kind: str, amount: int = 1) -> None:
        if kind not in KINDS:
            raise ParameterError(f"unknown charge kind {kind!r}; use one of {KINDS}")
        if amount < 0:
            raise ParameterError("charge amount must be nonnegative")
        with self._lock:
            self._counts[kind] += int(amount)

    def charge_modeled(self, label: str, amount: float) -> None:
        if amount < 0:
            raise ParameterError("modeled charge must be nonnegative")
        with self._lock:
            self._modeled[label] = self._modeled.get(label, 0.0) + float(amount)

    def snapshot(self) -> MeterSnapshot:
        with self._lock:
            return MeterSnapshot(
                setup=self._counts["setup"],
                update=self._counts["update"],
                checking=self._counts["checking"],
                oracle=self._counts["oracle"],
                modeled=tuple(sorted(self._modeled.items())),
            )

    def merge(self, other: MeterSnapshot) -> None:
        """Fold a per-trial snapshot into this aggregate meter."""
        with self._lock:
            self._counts["setup"] += other.setup
            self._counts["update"] += other.update
            self._counts["checking"] += other.checking
            self._counts["oracle"] += other.oracle
            for label, value in other.modeled:
                self._modeled[label] = self._modeled.get(label, 0.0) + value


def predicted(formula: str, **params) -> float:
    """Evaluate a complexity-formula body with constant 1 and no polylogs.

    Formulas:
      walk-search:                  S + (1/√λ)((1/√δ)U + C)
      walk-counting:                S + (1/ε)(1/√λ)((1/√δ)U + C)
      collision-counting-quantum:   (1/ε^{25/24})(N/√m)^{2/3} + (N/√m̄)^{2/3}
      collision-counting-classical: (1/ε)(N/√m) + N/√m̄
    """
    p = dict(params)

    def need(*names):
        missing = [n for n in names if n not in p]
        if missing:
            raise ParameterError(f"formula {formula!r} needs parameters {missing}")
        return [float(p[n]) for n in names]

    if formula == "walk-search":
        S, lam, delta, U, C = need("setup", "lam", "delta", "update", "checking")
        return S + (1.0 / math.sqrt(lam)) * (U / math.sqrt(delta) + C)
    if formula == "walk-counting":
        S, eps, lam, delta, U, C = need("setup", "epsilon", "lam", "delta", "update", "checking")
        return S + (1.0 / eps) * (1.0 / math.sqrt(lam)) * (U / math.sqrt(delta) + C)
    if formula == "collision-counting-quantum":
        eps, n, m, m_bar = need("epsilon", "n", "m", "m_bar")
        return (1.0 / eps ** (25.0 / 24.0)) * (n / math.sqrt(m)) ** (2.0 / 3.0) \
            + (n / math.sqrt(m_bar)) ** (2.0 / 3.0)
    if formula == "collision-counting-classical":
        eps, n, m, m_bar = need("epsilon", "n", "m", "m_bar")
        return (1.0 / eps) * n / math.sqrt(m) + n / math.sqrt(m_bar)
    raise ParameterError(f"unknown formula {formula!r}")
