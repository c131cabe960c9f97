"""Exact dynamic programming on integer-lattice laws.

Ground truth for everything the Monte Carlo engine estimates: the
probability that some lineage of length n stays above a linear kill line,
and the probability that a single random walk stays inside an integer
corridor.  Both recursions manipulate probabilities as convex combinations
and products only, so plain double precision is exact to rounding in the
regimes of interest (values stay above ~1e-300).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import models
from .analysis import CriticalProfile
from .errors import GridExhausted, LatticeError
from .models import DiscreteFinite, ExplicitFinite, OffspringLaw

# Kill lines at non-integer levels round to the strictest integer constraint
# (ceil for lower bounds); the 1e-9 nudge keeps near-integer thresholds
# inclusive, matching the Monte Carlo engine's boundary tolerance.
BARRIER_NUDGE = 1e-9


@dataclass(frozen=True)
class LatticeLaw:
    """Integer-displacement view of an offspring law.

    Product-structured laws carry the offspring pgf and the integer step
    pmf; explicit laws keep their atomic outcomes, since displacements
    within one brood are then dependent.
    """

    law: OffspringLaw
    pgf_coeffs: tuple[float, ...] | None
    step_values: tuple[int, ...]
    step_probs: tuple[float, ...] | None
    outcomes: tuple[tuple[tuple[int, ...], float], ...] | None

    @classmethod
    def from_law(cls, law: OffspringLaw) -> "LatticeLaw":
        if not models.is_lattice(law):
            raise LatticeError("exact DP requires finite integer displacements")
        if isinstance(law, ExplicitFinite):
            outs = tuple((tuple(int(round(d)) for d in ds), p) for ds, p in law.outcomes)
            values = tuple(sorted({d for ds, _ in outs for d in ds}))
            return cls(law, None, values, None, outs)
        pmf = models.offspring_pmf(law)
        kmax = max(k for k, _ in pmf)
        coeffs = [0.0] * (kmax + 1)
        for k, p in pmf:
            coeffs[k] += p
        step = models.step_law(law)
        assert isinstance(step, DiscreteFinite)
        values = tuple(int(round(v)) for v in step.values)
        return cls(law, tuple(coeffs), values, tuple(step.probs), None)

    @property
    def u_min(self) -> int:
        return min(self.step_values)

    @property
    def u_max(self) -> int:
        return max(self.step_values)


def _lower_bounds(c: float, n: int) -> np.ndarray:
    """Integer lower bounds ceil(c*i - nudge) for i = 1..n."""
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.ceil(c * i - BARRIER_NUDGE).astype(np.int64)


def exact_path_survival(ll: LatticeLaw, n: int, *, v_slope: float | None = None,
                        u_line: float | None = None,
                        profile: CriticalProfile | None = None) -> float:
    """P{some lineage of length n satisfies the kill constraint at every level}.

    The constraint is U(x_i) >= u_line * i for all 1 <= i <= n; a centered
    barrier ``V <= v_slope * i`` is translated through the profile via
    u_line = (psi(t*) - v_slope)/t*.  Backward recursion over extinction
    probabilities: a particle at level j with sum s dies out iff every child
    is killed or dies out, giving Q_j(s) = G_Z(E_Y[kill or Q_{j+1}(s+Y)])
    for product laws and the outcome-resolved product for explicit laws.
    """
    if (v_slope is None) == (u_line is None):
        raise ValueError("pass exactly one of v_slope / u_line")
    if v_slope is not None:
        if profile is None:
            raise ValueError("a centered-coordinate slope needs the critical profile")
        c = (profile.psi_tstar - v_slope) / profile.t_star
    else:
        c = float(u_line)
    if n <= 0:
        return 1.0

    lower = _lower_bounds(c, n)
    u_min, u_max = ll.u_min, ll.u_max
    steps = np.array(ll.step_values, dtype=np.int64)

    def window(j: int) -> tuple[int, int]:
        lo = max(int(lower[j - 1]), j * u_min) if j >= 1 else 0
        return lo, j * u_max

    # Q over the alive window at level j+1; starts at the leaves (survive).
    lo1, hi1 = window(n)
    q_next = np.zeros(max(hi1 - lo1 + 1, 0))

    for j in range(n - 1, -1, -1):
        lo, hi = window(j)
        if lo > hi:  # barrier already unreachable at this level
            q_next = np.empty(0)
            lo1, hi1 = lo, hi
            continue
        s = np.arange(lo, hi + 1, dtype=np.int64)

        def child_fail(y: int) -> np.ndarray:
            su = s + y
            dead = su < lo1
            if q_next.size == 0:
                return np.ones_like(su, dtype=np.float64)
            idx = np.clip(su - lo1, 0, q_next.size - 1)
            return np.where(dead, 1.0, q_next[idx])

        if ll.outcomes is None:
            w = np.zeros(s.size)
            for y, qy in zip(steps, ll.step_probs):
                w += qy * child_fail(int(y))
            q = npoly.polyval(w, np.asarray(ll.pgf_coeffs))
        else:
            fail_by_step = {int(y): child_fail(int(y)) for y in steps}
            q = np.zeros(s.size)
            for ds, p in ll.outcomes:
                prod = np.ones(s.size)
                for d in ds:
                    prod = prod * fail_by_step[d]
                q += p * prod
        q_next, lo1, hi1 = q, lo, hi

    return float(1.0 - q_next[0 - lo1])


def exact_corridor_walk(step_values, step_probs, lower, upper,
                        endpoint: tuple[int, int] | None = None) -> float:
    """P{an integer walk satisfies lower[i-1] <= S_i <= upper[i-1] for i <= n}.

    Bounds are inclusive; an empty corridor at some level gives probability
    zero (not an error).  ``endpoint`` further restricts S_n to a window.
    Forward DP over the occupation measure restricted to the corridor.
    """
    steps = np.asarray(step_values, dtype=np.int64)
    probs = np.asarray(step_probs, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.asarray(upper, dtype=np.int64)
    if lower.shape != upper.shape:
        raise ValueError("corridor arrays must have equal length")
    n = lower.size
    dist = np.ones(1)
    lo = hi = 0
    for i in range(n):
        nlo, nhi = int(lower[i]), int(upper[i])
        if nlo > nhi:
            return 0.0
        new = np.zeros(nhi - nlo + 1)
        for y, qy in zip(steps, probs):
            # old states s contribute to s+y; keep the part landing inside
            src_lo = max(lo, nlo - int(y))
            src_hi = min(hi, nhi - int(y))
            if src_lo > src_hi:
                continue
            new[src_lo + int(y) - nlo: src_hi + int(y) - nlo + 1] += \
                qy * dist[src_lo - lo: src_hi - lo + 1]
        dist, lo, hi = new, nlo, nhi
        if not dist.any():
            return 0.0
    if endpoint is not None:
        elo, ehi = max(int(endpoint[0]), lo), min(int(endpoint[1]), hi)
        if elo > ehi:
            return 0.0
        return float(dist[elo - lo: ehi - lo + 1].sum())
    return float(dist.sum())


def rho_limit(ll: LatticeLaw, profile: CriticalProfile, v_slope: float,
              rel_tol: float = 0.01, n_start: int = 128,
              n_max: int = 1 << 20) -> tuple[float, int]:
    """Depth-n survival iterated to its large-n limit.

    Doubles n until the relative change across one doubling falls below
    ``rel_tol`` (the finite-n proxy for the infinite-ray probability);
    returns (value, n at which the rule triggered).
    """
    n = n_start
    prev = exact_path_survival(ll, n, v_slope=v_slope, profile=profile)
    while n < n_max:
        n *= 2
        cur = exact_path_survival(ll, n, v_slope=v_slope, profile=profile)
        if cur > 0.0 and abs(cur - prev) / cur < rel_tol:
            return cur, n
        prev = cur
    raise GridExhausted(f"survival did not stabilize below n = {n_max}")


def gw_survival_to_n(ll: LatticeLaw, n: int) -> float:
    """P{generation n is non-empty} with no barrier, by pgf iteration."""
    if ll.pgf_coeffs is not None:
        coeffs = np.asarray(ll.pgf_coeffs)
    else:
        pmf = models.offspring_pmf(ll.law)
        coeffs = np.zeros(max(k for k, _ in pmf) + 1)
        for k, p in pmf:
            coeffs[k] += p
    q = 0.0
    for _ in range(n):
        q = float(npoly.polyval(q, coeffs))
    return 1.0 - q


__all__ = [
    "LatticeLaw", "exact_path_survival", "exact_corridor_walk",
    "rho_limit", "gw_survival_to_n", "BARRIER_NUDGE",
]
