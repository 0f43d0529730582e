"""Simulated paying oracle for partially de-censoring instances.

A probe of depth ``k`` reveals up to ``k`` more years of follow-up for
one instance and always debits that instance's cost:

    t_new = min(t_obs + k, t_true)
    delta_new = delta_true if the horizon was reached, else 0

so a probe can uncensor an instance, move its censor time later, or
(at the horizon) reveal a terminal censoring event.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data import Dataset, SurvivalInstance
from .errors import BudgetExceededError, ValidationError


@dataclass
class ProbeResult:
    id: int
    t_old: float
    t_new: float
    delta_new: int
    cost_charged: float
    informative: bool = True  # False when probing an uncensored instance


@dataclass
class BudgetLedger:
    """Tracks spend against the total budget; never overdraws."""

    total: float
    spent: float = 0.0

    def __post_init__(self):
        if self.total < 0:
            raise ValidationError("budget must be non-negative")

    @property
    def remaining(self) -> float:
        return self.total - self.spent

    def can_afford(self, cost: float) -> bool:
        return self.spent + cost <= self.total + 1e-12

    def charge(self, cost: float) -> None:
        if not self.can_afford(cost):
            raise BudgetExceededError(
                f"cost {cost} exceeds remaining budget {self.remaining}")
        self.spent += cost


def probe(inst: SurvivalInstance, k: float, ledger: BudgetLedger,
          *, charge_uncensored: bool = True) -> ProbeResult:
    """Probe one instance for ``k`` more years of follow-up.

    Probing an already-uncensored instance is a no-op that still charges
    full cost (flip ``charge_uncensored`` to waive it); an unaffordable
    probe raises without executing.
    """
    if k < 0:
        raise ValidationError("probe depth must be non-negative")
    if inst.delta_obs == 1:
        if charge_uncensored:
            ledger.charge(inst.cost)
        return ProbeResult(inst.id, inst.t_obs, inst.t_obs, inst.delta_obs,
                           inst.cost if charge_uncensored else 0.0,
                           informative=False)
    ledger.charge(inst.cost)
    horizon = inst.t_obs + k
    if horizon >= inst.t_true:
        t_new, delta_new = inst.t_true, inst.delta_true
    else:
        t_new, delta_new = horizon, 0
    return ProbeResult(inst.id, inst.t_obs, t_new, delta_new, inst.cost)


def probe_batch(ids, ds: Dataset, k: float, ledger: BudgetLedger,
                *, audit_log=None,
                charge_uncensored: bool = True) -> list[ProbeResult]:
    """Probe a batch of pool positions, updating the pool labels in place.

    This is the one sanctioned mutation point for a dataset. The whole
    batch must be affordable up front; duplicate positions are rejected
    (repeat-probing one instance within a query is unsupported).
    """
    ids = [int(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate probe targets in one query")
    total_cost = float(sum(ds.cost[i] for i in ids)) if charge_uncensored \
        else float(sum(ds.cost[i] for i in ids if ds.delta_obs[i] == 0))
    if not ledger.can_afford(total_cost):
        raise BudgetExceededError(
            f"batch cost {total_cost} exceeds remaining {ledger.remaining}")

    results = []
    for i in ids:
        res = probe(ds.instance(i), k, ledger,
                    charge_uncensored=charge_uncensored)
        ds.t_obs[i] = res.t_new
        ds.delta_obs[i] = res.delta_new
        results.append(res)
        if audit_log is not None:
            audit_log.write(json.dumps({
                "id": res.id, "t_old": res.t_old, "t_new": res.t_new,
                "delta_new": res.delta_new, "cost": res.cost_charged,
                "spent_after": ledger.spent}) + "\n")
    return results
