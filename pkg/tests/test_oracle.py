import math
from functools import lru_cache
from itertools import product

import numpy as np
import pytest

from kbrw.analysis import solve_tstar
from kbrw.errors import LatticeError
from kbrw.models import DiscreteFinite, ProductLaw
from kbrw.oracle import (LatticeLaw, exact_corridor_walk, exact_path_survival,
                         gw_survival_to_n, rho_limit)


def _recursive_survival_binary(p, c, n):
    """Independent top-down oracle for the binary law, memoized on (level, sum)."""
    bounds = [math.ceil(c * i - 1e-9) for i in range(n + 1)]

    @lru_cache(maxsize=None)
    def die(j, s):
        if j == n:
            return 0.0
        acc = 0.0
        for y, q in ((0, 1 - p), (1, p)):
            su = s + y
            acc += q * (1.0 if su < bounds[j + 1] else die(j + 1, su))
        return acc * acc

    return 1.0 - die(0, 0)


def _label_enumeration_binary(p, c, n):
    """Fully literal oracle at tiny depth: enumerate every edge labeling of
    the complete binary tree and test for a surviving root-leaf path."""
    n_edges = 2 ** (n + 1) - 2
    total = 0.0
    # edges indexed level by level: level i has 2^i edges
    offsets = np.cumsum([0] + [2 ** i for i in range(1, n)])
    for labels in product((0, 1), repeat=n_edges):
        prob = 1.0
        for bit in labels:
            prob *= p if bit else (1 - p)
        survives = False
        for leaf in range(2 ** n):
            s = 0
            ok = True
            for i in range(1, n + 1):
                edge = offsets[i - 1] + (leaf >> (n - i))
                s += labels[edge]
                if s < math.ceil(c * i - 1e-9):
                    ok = False
                    break
            if ok:
                survives = True
                break
        total += prob * survives
    return total


def test_survival_one_generation(law_p03, profile_p03):
    ll = LatticeLaw.from_law(law_p03)
    # any U-line coefficient in (0, 1] forces the u=1 step at the first level
    for c in (0.1, 0.5, 1.0):
        assert exact_path_survival(ll, 1, u_line=c) == pytest.approx(0.51, abs=1e-15)
    # via the centered coordinate with slope 0
    assert exact_path_survival(ll, 1, v_slope=0.0, profile=profile_p03) == \
        pytest.approx(0.51, abs=1e-15)


def test_survival_two_generations_hand_formula(law_p03):
    ll = LatticeLaw.from_law(law_p03)
    p = 0.3
    expected = 1.0 - ((1 - p) + p * (1 - p) ** 2) ** 2
    assert exact_path_survival(ll, 2, u_line=0.9) == pytest.approx(expected, abs=1e-15)


def test_vacuous_barrier_equals_gw_survival(law_p03, law_mixed_offspring):
    for law in (law_p03, law_mixed_offspring):
        ll = LatticeLaw.from_law(law)
        for n in (3, 7, 11):
            assert exact_path_survival(ll, n, u_line=-1.0) == \
                pytest.approx(gw_survival_to_n(ll, n), rel=1e-13)
    # binary tree never dies
    llb = LatticeLaw.from_law(law_p03)
    assert exact_path_survival(llb, 9, u_line=0.0) == pytest.approx(1.0)


def test_dp_equals_recursion_depth_12(law_p03, profile_p03):
    ll = LatticeLaw.from_law(law_p03)
    for slope in (0.05, 0.1, 0.2, 0.4):
        c = (profile_p03.psi_tstar - slope) / profile_p03.t_star
        dp = exact_path_survival(ll, 12, v_slope=slope, profile=profile_p03)
        rec = _recursive_survival_binary(0.3, c, 12)
        assert dp == pytest.approx(rec, abs=1e-13)


def test_dp_equals_label_enumeration_small(law_p03):
    ll = LatticeLaw.from_law(law_p03)
    for n, c in ((1, 0.6), (2, 0.45), (3, 0.7)):
        dp = exact_path_survival(ll, n, u_line=c)
        lit = _label_enumeration_binary(0.3, c, n)
        # the literal sum accumulates ~1e-14 of its own rounding over 2^14 terms
        assert dp == pytest.approx(lit, abs=1e-12)


def test_dp_explicit_law(law_explicit):
    prof = solve_tstar(law_explicit)
    ll = LatticeLaw.from_law(law_explicit)
    # brood displacements are dependent: outcome-resolved recursion required
    p = exact_path_survival(ll, 1, u_line=0.5)
    # survive iff the brood contains a child with u >= 1: outcomes (0,1), (1,2)
    assert p == pytest.approx(0.5, abs=1e-15)
    p2 = exact_path_survival(ll, 4, v_slope=0.1, profile=prof)
    assert 0.0 < p2 < 1.0


def test_monotonicity_exact(law_p03, profile_p03):
    ll = LatticeLaw.from_law(law_p03)
    vals_n = [exact_path_survival(ll, n, v_slope=0.1, profile=profile_p03)
              for n in (2, 4, 6, 8, 10, 12)]
    assert all(b <= a for a, b in zip(vals_n, vals_n[1:]))
    vals_s = [exact_path_survival(ll, 10, v_slope=s, profile=profile_p03)
              for s in (0.02, 0.05, 0.1, 0.2, 0.4)]
    assert all(b >= a for a, b in zip(vals_s, vals_s[1:]))


def test_non_lattice_rejected(law_gaussian):
    with pytest.raises(LatticeError):
        LatticeLaw.from_law(law_gaussian)
    with pytest.raises(LatticeError):
        LatticeLaw.from_law(ProductLaw(((2, 1.0),),
                                       DiscreteFinite(((0.25, 0.5), (1.0, 0.5)))))


def test_corridor_unconstrained():
    lower = np.full(6, -100)
    upper = np.full(6, 100)
    assert exact_corridor_walk([-1, 1], [0.5, 0.5], lower, upper) == pytest.approx(1.0)


def test_corridor_parity_pin():
    # +-1 walk cannot sit at 0 after one step
    assert exact_corridor_walk([-1, 1], [0.5, 0.5], [0, -1], [0, 1]) == 0.0
    # corridor {-1,0,1} at both steps: S_2 = +-2 exits with probability 1/2
    assert exact_corridor_walk([-1, 1], [0.5, 0.5], [-1, -1], [1, 1]) == pytest.approx(0.5)


def test_corridor_empty_level_is_zero():
    assert exact_corridor_walk([-1, 1], [0.5, 0.5], [2, 0], [1, 3]) == 0.0


def test_corridor_endpoint_window():
    lower = np.full(4, -4)
    upper = np.full(4, 4)
    total = exact_corridor_walk([-1, 1], [0.5, 0.5], lower, upper)
    parts = (exact_corridor_walk([-1, 1], [0.5, 0.5], lower, upper, endpoint=(-4, 0))
             + exact_corridor_walk([-1, 1], [0.5, 0.5], lower, upper, endpoint=(1, 4)))
    assert parts == pytest.approx(total, rel=1e-14)


def test_corridor_against_exhaustive_paths():
    # lazy walk, 3^12 paths enumerated literally
    n = 12
    a = 4
    lower = np.full(n, -a)
    upper = np.full(n, a)
    dp = exact_corridor_walk([-1, 0, 1], [1 / 3, 1 / 3, 1 / 3], lower, upper)
    steps = np.array(list(product((-1, 0, 1), repeat=n)), dtype=np.int64)
    s = np.cumsum(steps, axis=1)
    ok = np.all((s >= -a) & (s <= a), axis=1)
    lit = ok.mean()  # each path has probability 3^-n
    assert dp == pytest.approx(float(lit), rel=1e-13)
    # endpoint window variant
    dp_e = exact_corridor_walk([-1, 0, 1], [1 / 3, 1 / 3, 1 / 3], lower, upper,
                               endpoint=(1, a))
    lit_e = (ok & (s[:, -1] >= 1)).mean()
    assert dp_e == pytest.approx(float(lit_e), rel=1e-13)


def _recursive_survival_generic(pmf, step_atoms, c, n):
    """Memoized oracle for product laws with arbitrary integer steps."""
    bounds = [math.ceil(c * i - 1e-9) for i in range(n + 1)]

    @lru_cache(maxsize=None)
    def die(j, s):
        if j == n:
            return 0.0
        fail = 0.0
        for y, q in step_atoms:
            su = s + y
            fail += q * (1.0 if su < bounds[j + 1] else die(j + 1, su))
        return sum(p * fail ** k for k, p in pmf)

    return 1.0 - die(0, 0)


def test_dp_negative_steps(law_p03):
    # downward moves exercise the lower window branch of the state space
    pmf = ((1, 0.3), (2, 0.4), (3, 0.3))
    steps = ((-1, 0.6), (1, 0.4))
    law = ProductLaw(pmf, DiscreteFinite(tuple((float(v), p) for v, p in steps)))
    prof = solve_tstar(law)
    ll = LatticeLaw.from_law(law)
    for slope in (0.05, 0.2, 0.6):
        c = (prof.psi_tstar - slope) / prof.t_star
        dp = exact_path_survival(ll, 9, v_slope=slope, profile=prof)
        rec = _recursive_survival_generic(pmf, steps, c, 9)
        assert dp == pytest.approx(rec, abs=1e-13)
    # and against the Monte Carlo engine
    import math as _m
    from kbrw.simulate import estimate_rho
    from kbrw.stats import proportion_stderr
    from kbrw.transform import make_vlaw
    vlaw = make_vlaw(law, prof)
    exact = exact_path_survival(ll, 8, v_slope=0.15, profile=prof)
    est = estimate_rho(vlaw, 0.15, 8, 30_000, escape_cap=_m.inf, seed=314)
    assert abs(est.p_hat - exact) <= 3.0 * proportion_stderr(exact, 30_000)


def test_rho_limit_stabilizes(law_p03, profile_p03):
    ll = LatticeLaw.from_law(law_p03)
    rho, n_used = rho_limit(ll, profile_p03, 0.1, rel_tol=0.02, n_start=64)
    assert 0.0 < rho < 1.0
    assert n_used >= 128
    tighter = exact_path_survival(ll, 2 * n_used, v_slope=0.1, profile=profile_p03)
    assert abs(tighter - rho) / rho < 0.05


def test_lemma46_direction_and_floor(law_mixed_offspring):
    # exact scaled sequence increases on the doubling grid for this family
    prof = solve_tstar(law_mixed_offspring)
    ll = LatticeLaw.from_law(law_mixed_offspring)
    vals = []
    for n in (250, 500, 1000, 2000):
        r = exact_path_survival(ll, n, v_slope=n ** (-2 / 3), profile=prof)
        vals.append(math.log(r) / n ** (1 / 3))
    assert all(a < b for a, b in zip(vals, vals[1:]))
    bound = -prof.beta_V
    assert vals[-1] > 1.5 * bound  # not wildly below the limit bound
    assert all(v < 0 for v in vals)
