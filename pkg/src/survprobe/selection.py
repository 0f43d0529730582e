"""Budget-constrained batch construction and its verification tools.

``greedy_ratio`` is the production selector: it repeatedly adds the
affordable candidate with the best marginal-gain/cost ratio and finally
keeps the better of the greedy batch and the best affordable singleton
(the singleton comparison is what gives a constant-factor guarantee
with non-uniform costs). ``greedy_enumerated`` is the expensive
enumeration-seeded variant with the full (1 - 1/e) guarantee, checked
here against a brute-force optimum on small budgeted-coverage
instances; ``check_submodular``/``check_monotone`` exhaustively verify
set-function properties on small ground sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ValidationError


@dataclass
class SelectionResult:
    batch: list
    total_cost: float
    value: float = 0.0
    score_trace: list = field(default_factory=list)  # (index, ratio) per step


@dataclass
class CoverageInstance:
    """Budgeted maximum coverage: weighted elements, costed sets."""

    weights: dict            # element -> weight >= 0
    sets: list               # list of collections of elements
    costs: list              # positive cost per set
    budget: float

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValidationError("element weights must be non-negative")
        if any(c <= 0 for c in self.costs):
            raise ValidationError("set costs must be positive")
        if len(self.costs) != len(self.sets):
            raise ValidationError("one cost per set required")
        self.sets = [frozenset(s) for s in self.sets]

    def weight_of(self, selected) -> float:
        covered = set()
        for i in selected:
            covered |= self.sets[i]
        return float(sum(self.weights.get(e, 0.0) for e in covered))

    def cost_of(self, selected) -> float:
        return float(sum(self.costs[i] for i in selected))

    def to_json(self) -> str:
        return json.dumps({
            "weights": {str(e): w for e, w in self.weights.items()},
            "sets": [{"elements": [str(e) for e in sorted(s, key=str)],
                      "cost": c}
                     for s, c in zip(self.sets, self.costs)],
            "budget": self.budget})

    @classmethod
    def from_json(cls, text: str) -> "CoverageInstance":
        d = json.loads(text)

        def elem(e):
            try:
                return int(e)
            except ValueError:
                return e

        return cls(weights={elem(e): w for e, w in d["weights"].items()},
                   sets=[{elem(e) for e in s["elements"]} for s in d["sets"]],
                   costs=[s["cost"] for s in d["sets"]],
                   budget=d["budget"])


def fill_budget(ranked, costs, budget: float) -> tuple[list, float]:
    """Walk a ranked candidate list, adding whatever still fits."""
    chosen, spent = [], 0.0
    for i in ranked:
        c = float(costs[i])
        if spent + c <= budget + 1e-12:
            chosen.append(i)
            spent += c
    return chosen, spent


def greedy_ratio(pool, budget: float, score_fn, costs,
                 trace_log=None) -> SelectionResult:
    """Marginal-gain-per-cost greedy under a knapsack budget.

    ``score_fn(batch) -> float`` must be a non-negative submodular batch
    objective; a scorer exposing ``extension_scores(candidates)`` and
    ``commit(index)`` (see ``MutualInformationScorer``) is used in its
    incremental form. Ties break toward the lowest index. The final
    result is the better of the greedy batch and the best affordable
    singleton.

    ``trace_log`` (file-like) receives one CSV row per candidate per
    step: ``step, candidate_id, marginal_gain_bits, cost, ratio, chosen``.
    """
    pool = [int(i) for i in pool]
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    if any(float(costs[i]) <= 0 for i in pool):
        raise ValidationError("costs must be positive")

    incremental = hasattr(score_fn, "extension_scores") and hasattr(
        score_fn, "commit")
    remaining = sorted(pool)
    batch: list[int] = []
    spent = 0.0
    score_a = 0.0
    trace: list[tuple[int, float]] = []
    singleton_scores: dict[int, float] = {}
    if trace_log is not None:
        trace_log.write(
            "step,candidate_id,marginal_gain_bits,cost,ratio,chosen\n")

    while True:
        affordable = [i for i in remaining
                      if float(costs[i]) <= budget - spent + 1e-12]
        if not affordable:
            break
        if incremental:
            ext = score_fn.extension_scores(affordable)
        else:
            ext = np.array([score_fn(batch + [i]) for i in affordable])
        if not batch:
            singleton_scores = dict(zip(affordable, ext.tolist()))
        ratios = (ext - score_a) / np.array([float(costs[i])
                                             for i in affordable])
        best = int(np.argmax(ratios))  # argmax takes the first maximum
        chosen = affordable[best]
        if trace_log is not None:
            for pos, i in enumerate(affordable):
                trace_log.write(
                    f"{len(batch)},{i},{ext[pos] - score_a},"
                    f"{float(costs[i])},{ratios[pos]},{int(i == chosen)}\n")
        trace.append((chosen, float(ratios[best])))
        if incremental:
            score_fn.commit(chosen)
        batch.append(chosen)
        spent += float(costs[chosen])
        score_a = float(ext[best])
        remaining.remove(chosen)

    if singleton_scores:
        best_val = max(singleton_scores.values())
        best_single = min(i for i, v in singleton_scores.items()
                          if v == best_val)
        if best_val > score_a:
            return SelectionResult([best_single], float(costs[best_single]),
                                   best_val, trace)
    return SelectionResult(batch, spent, score_a, trace)


def _ratio_greedy_completion(inst: CoverageInstance, seed: tuple) -> set:
    """Extend a seed by best weight-gain/cost, skipping what no longer
    fits (monotone coverage makes skipping dominate stopping)."""
    selected = set(seed)
    spent = inst.cost_of(selected)
    current = inst.weight_of(selected)
    remaining = [i for i in range(len(inst.sets)) if i not in selected]
    while True:
        affordable = [i for i in remaining
                      if inst.costs[i] <= inst.budget - spent + 1e-12]
        if not affordable:
            break
        gains = [(inst.weight_of(selected | {i}) - current) / inst.costs[i]
                 for i in affordable]
        best = affordable[int(np.argmax(gains))]
        selected.add(best)
        spent += inst.costs[best]
        current = inst.weight_of(selected)
        remaining.remove(best)
    return selected


def greedy_enumerated(inst: CoverageInstance, z: int = 3,
                      max_sets: int = 25) -> SelectionResult:
    """Enumeration-seeded greedy for budgeted maximum coverage.

    Takes the best feasible family of size < z by brute force, and the
    best ratio-greedy completion over every feasible size-z seed; z = 3
    is the smallest seed size with the full (1 - 1/e) guarantee.
    """
    if z < 1:
        raise ValidationError("z must be at least 1")
    n = len(inst.sets)
    if n > max_sets:
        raise ValidationError(f"{n} sets exceeds the exact-mode limit "
                              f"{max_sets}")

    best_small: tuple[float, set] = (0.0, set())
    for size in range(1, z):
        for combo in combinations(range(n), size):
            if inst.cost_of(combo) <= inst.budget + 1e-12:
                w = inst.weight_of(combo)
                if w > best_small[0]:
                    best_small = (w, set(combo))

    best_seeded: tuple[float, set] = (0.0, set())
    for combo in combinations(range(n), z):
        if inst.cost_of(combo) > inst.budget + 1e-12:
            continue
        completed = _ratio_greedy_completion(inst, combo)
        w = inst.weight_of(completed)
        if w > best_seeded[0]:
            best_seeded = (w, completed)

    weight, selected = max(best_small, best_seeded, key=lambda t: t[0])
    return SelectionResult(sorted(selected), inst.cost_of(selected), weight)


def brute_force_optimal(inst: CoverageInstance,
                        max_sets: int = 20) -> SelectionResult:
    """Exhaustive optimum over all feasible subsets (verification only)."""
    n = len(inst.sets)
    if n > max_sets:
        raise ValidationError(f"{n} sets exceeds the brute-force limit "
                              f"{max_sets}")
    best_w, best_sel = 0.0, set()
    for mask in range(1 << n):
        sel = [i for i in range(n) if mask >> i & 1]
        if inst.cost_of(sel) > inst.budget + 1e-12:
            continue
        w = inst.weight_of(sel)
        if w > best_w:
            best_w, best_sel = w, set(sel)
    return SelectionResult(sorted(best_sel), inst.cost_of(best_sel), best_w)


def check_submodular(f, ground_set, tol: float = 1e-9):
    """Exhaustively verify submodularity of ``f`` over a small ground set.

    Checks both the lattice inequality f(A)+f(B) >= f(A|B)+f(A&B) and
    diminishing returns; ``f`` takes a collection of elements (including
    the empty one). Returns (ok, witness) with the first violation as
    witness, or (True, None).
    """
    elems = list(ground_set)
    g = len(elems)
    if g > 10:
        raise ValidationError("exhaustive check limited to 10 elements")
    vals = np.array([f([elems[i] for i in range(g) if mask >> i & 1])
                     for mask in range(1 << g)])

    def members(mask):
        return {elems[i] for i in range(g) if mask >> i & 1}

    masks = np.arange(1 << g)
    for a in range(1 << g):
        lhs = vals[a] + vals
        rhs = vals[a | masks] + vals[a & masks]
        bad = np.flatnonzero(lhs < rhs - tol)
        if bad.size:
            b = int(bad[0])
            return False, ("lattice", members(a), members(b))

    for b_mask in range(1 << g):
        outside = [i for i in range(g) if not b_mask >> i & 1]
        sub = b_mask
        while True:  # enumerate all A subseteq B
            for i in outside:
                x = 1 << i
                gain_a = vals[sub | x] - vals[sub]
                gain_b = vals[b_mask | x] - vals[b_mask]
                if gain_a < gain_b - tol:
                    return False, ("diminishing", members(sub),
                                   members(b_mask), elems[i])
            if sub == 0:
                break
            sub = (sub - 1) & b_mask
    return True, None


def check_monotone(f, ground_set, tol: float = 1e-9):
    """Exhaustively verify f(A + x) >= f(A); same interface as
    :func:`check_submodular`."""
    elems = list(ground_set)
    g = len(elems)
    if g > 10:
        raise ValidationError("exhaustive check limited to 10 elements")
    vals = {mask: f([elems[i] for i in range(g) if mask >> i & 1])
            for mask in range(1 << g)}
    for mask in range(1 << g):
        for i in range(g):
            if mask >> i & 1:
                continue
            if vals[mask | 1 << i] < vals[mask] - tol:
                witness = ({elems[j] for j in range(g) if mask >> j & 1},
                           elems[i])
                return False, witness
    return True, None
