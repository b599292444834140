"""Sampling-rate allocation between important and other blocks.

The allocation is a two-variable linear program over the rates ``x1``
(important blocks) and ``x2`` (other blocks)::

    maximize    f(x) = I*w*h*x1 + O*w*h*x2
    subject to  x1 >= 1.1 * x2
                f(x) <= S
                x1_lower <= x1 <= x1_upper
                x2_lower <= x2 <= x2_upper

It is solved exactly by enumerating the vertices of the feasible polygon.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import BLOCK_H, BLOCK_SIZE, BLOCK_W, N_AZIMUTH, N_BLOCKS, N_RANGE, BlockIndex

FRAME_PIXELS = N_AZIMUTH * N_RANGE
PAPER_RATES = (0.10, 0.20, 0.30)
IMPORTANT_RATE_CAP = 0.55
OTHER_RATE_FLOOR = 0.07
RATIO = 1.1
_FEAS_TOL = 1e-9


class AllocationError(ValueError):
    pass


def _standard_rate(rate: float) -> float | None:
    for r in PAPER_RATES:
        if math.isclose(rate, r, abs_tol=1e-9):
            return r
    return None


def budget_for_rate(rate: float) -> int:
    """Total measurements per frame for a sampling ``rate`` in (0, 1]."""
    if not 0 < rate <= 1:
        raise AllocationError(f"sampling rate must be in (0, 1], got {rate}")
    return int(round(rate * FRAME_PIXELS))


def is_standard_rate(rate: float) -> bool:
    return _standard_rate(rate) is not None


def bounds_for_rate(rate: float, strict: bool = True) -> tuple[float, float, float, float]:
    """``(x1_lower, x1_upper, x2_lower, x2_upper)`` for a 10/20/30 % budget.

    With ``strict=False`` any rate in [0.07, 0.55] gets the same shape of
    bounds: the nominal rate as the important floor and the other cap.
    """
    r = _standard_rate(rate)
    if r is None:
        if strict or not OTHER_RATE_FLOOR <= rate <= IMPORTANT_RATE_CAP:
            raise AllocationError(f"unsupported rate {rate}; bounds are defined for {PAPER_RATES}")
        r = float(rate)
    return r, IMPORTANT_RATE_CAP, OTHER_RATE_FLOOR, r


@dataclass(frozen=True)
class BudgetLP:
    I: int
    O: int
    S: float
    x1_lower: float
    x1_upper: float
    x2_lower: float
    x2_upper: float
    w: int = BLOCK_W
    h: int = BLOCK_H
    ratio: float = RATIO

    def __post_init__(self):
        if self.I < 0 or self.O < 0:
            raise AllocationError("block counts must be non-negative")
        if self.I + self.O != N_BLOCKS:
            raise AllocationError(f"I + O must equal {N_BLOCKS}, got {self.I + self.O}")
        if not 0 < self.x1_lower <= self.x1_upper <= 1:
            raise AllocationError("need 0 < x1_lower <= x1_upper <= 1")
        if not 0 < self.x2_lower <= self.x2_upper <= 1:
            raise AllocationError("need 0 < x2_lower <= x2_upper <= 1")

    @classmethod
    def for_rate(cls, n_important: int, rate: float, strict: bool = True) -> "BudgetLP":
        return cls(n_important, N_BLOCKS - n_important, budget_for_rate(rate), *bounds_for_rate(rate, strict))

    @property
    def c1(self) -> float:
        return self.I * self.w * self.h

    @property
    def c2(self) -> float:
        return self.O * self.w * self.h

    def objective(self, x1: float, x2: float) -> float:
        return self.c1 * x1 + self.c2 * x2

    def violations(self, x1: float, x2: float) -> dict[str, float]:
        """Amount by which each constraint is violated (0 when satisfied).

        An empty class has no rate to constrain, so the ratio constraint is
        dropped when ``I == 0`` or ``O == 0``.
        """
        v = {
            "budget": self.objective(x1, x2) - self.S,
            "x1_lower": self.x1_lower - x1,
            "x1_upper": x1 - self.x1_upper,
            "x2_lower": self.x2_lower - x2,
            "x2_upper": x2 - self.x2_upper,
        }
        if self.I > 0 and self.O > 0:
            v["ratio"] = self.ratio * x2 - x1
        return {k: max(val, 0.0) for k, val in v.items()}


@dataclass(frozen=True)
class RateSolution:
    x1: float
    x2: float
    achieved_budget: float
    feasible: bool
    binding: tuple[str, ...] = ()
    violated: str | None = None
    relaxed: bool = False


def _lines(lp: BudgetLP) -> dict[str, tuple[float, float, float]]:
    # each constraint boundary as a*x1 + b*x2 = c
    lines = {
        "budget": (lp.c1, lp.c2, lp.S),
        "x1_lower": (1.0, 0.0, lp.x1_lower),
        "x1_upper": (1.0, 0.0, lp.x1_upper),
        "x2_lower": (0.0, 1.0, lp.x2_lower),
        "x2_upper": (0.0, 1.0, lp.x2_upper),
    }
    if lp.I > 0 and lp.O > 0:
        lines["ratio"] = (1.0, -lp.ratio, 0.0)
    return lines


def _feasible(lp: BudgetLP, x1: float, x2: float) -> bool:
    v = lp.violations(x1, x2)
    scale = max(lp.S, 1.0)
    return all((val <= _FEAS_TOL * scale if k == "budget" else val <= _FEAS_TOL) for k, val in v.items())


def _first_violation(lp: BudgetLP) -> str:
    if lp.I > 0 and lp.O > 0 and lp.ratio * lp.x2_lower > lp.x1_upper:
        return "ratio"
    return "budget"


def solve_rates(lp: BudgetLP) -> RateSolution:
    """Exact optimum of the allocation LP.

    Among optima on the budget face, the vertex with the larger ``x1`` wins,
    then the larger ``x2``. When a class is empty its rate does not enter
    the objective and is pinned to its lower bound.
    """
    lines = _lines(lp)
    candidates = []
    for (na, (a1, b1, c1)), (nb, (a2, b2, c2)) in itertools.combinations(lines.items(), 2):
        det = a1 * b2 - a2 * b1
        if abs(det) < 1e-15 * max(abs(a1) + abs(b1), 1.0) * max(abs(a2) + abs(b2), 1.0):
            continue
        x1 = (c1 * b2 - c2 * b1) / det
        x2 = (a1 * c2 - a2 * c1) / det
        if _feasible(lp, x1, x2):
            candidates.append((x1, x2))
    if not candidates:
        return RateSolution(math.nan, math.nan, math.nan, False, violated=_first_violation(lp))

    best_f = max(lp.objective(x1, x2) for x1, x2 in candidates)
    tol = 1e-12 * max(abs(best_f), 1.0)
    optimal = [(x1, x2) for x1, x2 in candidates if lp.objective(x1, x2) >= best_f - tol]
    if lp.I == 0:
        optimal = [(lp.x1_lower, x2) for _, x2 in optimal]
    if lp.O == 0:
        optimal = [(x1, lp.x2_lower) for x1, _ in optimal]
    x1, x2 = max(optimal)
    # snap to exact bound values so downstream floor() sees e.g. 0.55, not 0.5499999
    x1 = _snap(x1, (lp.x1_lower, lp.x1_upper))
    x2 = _snap(x2, (lp.x2_lower, lp.x2_upper))
    binding = tuple(
        name for name, (a, b, c) in lines.items()
        if abs(a * x1 + b * x2 - c) <= 1e-9 * max(abs(c), 1.0)
    )
    return RateSolution(x1, x2, lp.objective(x1, x2), True, binding)


def _snap(x: float, targets) -> float:
    for t in targets:
        if abs(x - t) <= 1e-12:
            return t
    return x


def solve_with_relaxation(lp: BudgetLP) -> tuple[BudgetLP, RateSolution]:
    """Solve, relaxing ``x1_lower`` to ``1.1 * x2_lower`` if the LP is infeasible."""
    sol = solve_rates(lp)
    if sol.feasible:
        return lp, sol
    relaxed_lower = lp.ratio * lp.x2_lower
    if relaxed_lower < lp.x1_lower and relaxed_lower <= lp.x1_upper:
        lp2 = BudgetLP(lp.I, lp.O, lp.S, relaxed_lower, lp.x1_upper, lp.x2_lower, lp.x2_upper,
                       lp.w, lp.h, lp.ratio)
        sol2 = solve_rates(lp2)
        if sol2.feasible:
            return lp2, RateSolution(sol2.x1, sol2.x2, sol2.achieved_budget, True, sol2.binding,
                                     violated=sol.violated, relaxed=True)
    raise AllocationError(f"allocation LP infeasible ({sol.violated} constraint) even after relaxation")


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Per-block sampling rates and measurement counts, flat block order."""

    rate_per_block: np.ndarray
    m_per_block: np.ndarray
    target_budget: int
    x1: float = math.nan
    x2: float = math.nan
    n_important: int = 0
    relaxed: bool = False
    important: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        rates = np.asarray(self.rate_per_block, dtype=np.float64)
        counts = np.asarray(self.m_per_block, dtype=np.int64)
        if rates.shape != (N_BLOCKS,) or counts.shape != (N_BLOCKS,):
            raise AllocationError(f"plans cover exactly {N_BLOCKS} blocks")
        if counts.min() < 1 or counts.max() > BLOCK_SIZE:
            raise AllocationError("block counts must lie in [1, 960]")
        object.__setattr__(self, "rate_per_block", rates)
        object.__setattr__(self, "m_per_block", counts)

    @property
    def total_m(self) -> int:
        return int(self.m_per_block.sum())

    @property
    def n_other(self) -> int:
        return N_BLOCKS - self.n_important

    @property
    def is_full(self) -> bool:
        return bool(np.all(self.m_per_block == BLOCK_SIZE))

    def __eq__(self, other):
        if not isinstance(other, SamplingPlan):
            return NotImplemented
        return (
            np.array_equal(self.rate_per_block, other.rate_per_block)
            and np.array_equal(self.m_per_block, other.m_per_block)
            and self.target_budget == other.target_budget
        )

    __hash__ = None


def _count(rate: float) -> int:
    # guard against 960 * 0.1 landing just under an integer
    return min(BLOCK_SIZE, max(1, math.floor(BLOCK_SIZE * rate + 1e-9)))


def plan_from_rates(important, sol: RateSolution, S: int) -> SamplingPlan:
    """Turn LP rates into integer per-block counts that never exceed ``S``.

    Each block gets ``floor(960 * rate)``. If that leaves more than one
    sample per block unspent, the remainder is handed out one sample at a
    time to important blocks in index order, capped at 960 per block.
    """
    if not sol.feasible:
        raise AllocationError("cannot build a plan from an infeasible rate solution")
    flats = sorted({(b.flat if isinstance(b, BlockIndex) else BlockIndex(*b).flat) for b in important})
    is_imp = np.zeros(N_BLOCKS, dtype=bool)
    is_imp[flats] = True
    rates = np.where(is_imp, sol.x1, sol.x2)
    counts = np.where(is_imp, _count(sol.x1), _count(sol.x2)).astype(np.int64)
    total = int(counts.sum())
    if total > S:
        raise AllocationError(f"rates imply {total} samples, above the budget {S}")
    if total < S - N_BLOCKS and flats:
        leftover = S - total
        while leftover > 0:
            progressed = False
            for f in flats:
                if leftover == 0:
                    break
                if counts[f] < BLOCK_SIZE:
                    counts[f] += 1
                    leftover -= 1
                    progressed = True
            if not progressed:
                break
    return SamplingPlan(rates, counts, int(S), sol.x1, sol.x2, len(flats), sol.relaxed,
                        frozenset(BlockIndex.from_flat(f) for f in flats))


def allocate(important, rate: float, strict: bool = True) -> SamplingPlan:
    """Plan for a frame given its important blocks and the nominal rate."""
    important = frozenset(important)
    lp = BudgetLP.for_rate(len(important), rate, strict)
    _, sol = solve_with_relaxation(lp)
    return plan_from_rates(important, sol, lp.S)


def uniform_plan(rate: float) -> SamplingPlan:
    """Standard-CS plan: every block at the same rate."""
    S = budget_for_rate(rate)
    m = _count(rate)
    return SamplingPlan(np.full(N_BLOCKS, float(rate)), np.full(N_BLOCKS, m), S, rate, rate, 0)


def full_plan() -> SamplingPlan:
    return SamplingPlan(np.ones(N_BLOCKS), np.full(N_BLOCKS, BLOCK_SIZE), FRAME_PIXELS, 1.0, 1.0, 0)


# ---------------------------------------------------------------------------
# .rplan files

_RPLAN_MAGIC = b"RPLAN1\x00\x00"
_RPLAN_HEADER = struct.Struct("<8sqhhdd")
_RPLAN_ROW = np.dtype([("rate", "<f4"), ("m", "<u2")])


def write_rplan(path, plan: SamplingPlan) -> None:
    """Header (S, I, O, x1, x2) followed by 240 (float32 rate, uint16 m) pairs."""
    rows = np.empty(N_BLOCKS, dtype=_RPLAN_ROW)
    rows["rate"] = plan.rate_per_block
    rows["m"] = plan.m_per_block
    with open(path, "wb") as fh:
        fh.write(_RPLAN_HEADER.pack(_RPLAN_MAGIC, plan.target_budget, plan.n_important,
                                    plan.n_other, plan.x1, plan.x2))
        fh.write(rows.tobytes())


def read_rplan(path) -> SamplingPlan:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, S, n_imp, _, x1, x2 = _RPLAN_HEADER.unpack_from(buf, 0)
    if magic != _RPLAN_MAGIC:
        raise ValueError(f"{path}: not an .rplan file")
    rows = np.frombuffer(buf, dtype=_RPLAN_ROW, offset=_RPLAN_HEADER.size, count=N_BLOCKS)
    return SamplingPlan(rows["rate"].astype(np.float64), rows["m"].astype(np.int64), S, x1, x2, n_imp)


def plan_csv_rows(plan: SamplingPlan):
    """(az_block, range_block, important, rate, m) for each block."""
    for flat in range(N_BLOCKS):
        b = BlockIndex.from_flat(flat)
        yield b.az_block, b.range_block, int(b in plan.important), float(plan.rate_per_block[flat]), int(plan.m_per_block[flat])
