import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_input, random_input
from xapp_cms.detect import ConflictCase
from xapp_cms.errors import ConfigError, EmptyInput, GridMismatch, PolicyError, WeightError
from xapp_cms.mitigate import (Method, MitigationInput, PolicyConfig, assign_weights, eg, nswf,
                               objective_from_outcomes, optimal_range, qacm_exact, qacm_heuristic,
                               solve)
from xapp_cms.normalize import UtilityCurve


def brute_force(inp):
    """Enumerate every grid point and every satisfaction vector of the program.

    For a fixed point and indicator vector the distances take their smallest
    feasible value; infeasible indicator vectors are skipped.
    """
    w = [inp.weights[x] for x in inp.xapps]
    curves = [inp.curves[x] for x in inp.xapps]
    best = None
    for j in range(len(inp.grid)):
        for s in itertools.product((0, 1), repeat=len(curves)):
            feasible = True
            dist = []
            for c, si in zip(curves, s):
                u, q = float(c.values[j]), c.threshold
                if c.delta == 0:
                    feasible &= u >= q - inp.big_m * (1 - si)
                    dist.append(max(0.0, q - u))
                else:
                    feasible &= u <= q + inp.big_m * (1 - si)
                    dist.append(max(0.0, u - q))
            if not feasible:
                continue
            obj = sum(wi * di * inp.zeta for wi, di in zip(w, dist)) - sum(s) ** 2
            if best is None or obj < best[0]:
                best = (obj, j, s)
    return best


def test_optimal_range_examples():
    assert optimal_range({"x1": (10, 20), "x2": (15, 30)}) == (10, 30)
    assert optimal_range({"x1": (3, 7), "x2": (3, 7)}) == (3, 7)
    assert optimal_range({"x1": (0, 0), "x2": (5, 5)}) == (0, 5)


def test_optimal_range_errors():
    with pytest.raises(EmptyInput):
        optimal_range({"x1": (0, 1)})
    with pytest.raises(ConfigError):
        optimal_range({"x1": (2, 1), "x2": (0, 1)})


def test_nswf_identical_curves():
    g = np.arange(30.0)
    v = np.exp(-((g - 12) ** 2) / 20)
    assert nswf(make_input([v, v], [0.5, 0.5], [0, 0])).p_opt == 12


def test_nswf_ignores_weights():
    rng = np.random.default_rng(1)
    vals = [rng.normal(size=40) for _ in range(3)]
    a = nswf(make_input(vals, [0, 0, 0], [0, 0, 0], [0.2, 0.3, 0.5]))
    b = nswf(make_input(vals, [0, 0, 0], [0, 0, 0]))
    assert a.p_opt == b.p_opt


def test_nswf_shift_flag():
    # without the shift a pair of negative utilities beats a mixed pair
    vals = [np.array([-2.0, 1.0, 3.0]), np.array([-2.0, -1.0, 0.5])]
    inp = make_input(vals, [0, 0], [0, 0])
    assert nswf(inp, shift=False).p_opt == 0
    assert nswf(inp).p_opt == 2


def test_eg_degenerate_weights():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=50), rng.normal(size=50)
    assert eg(make_input([a, b], [0, 0], [0, 0], [1.0, 0.0])).index == int(np.argmax(a))


def test_eg_requires_unit_sum():
    v = np.linspace(0, 1, 5)
    with pytest.raises(WeightError):
        eg(make_input([v, v], [0, 0], [0, 0], [0.5, 0.6]))


def test_all_satisfied_everywhere():
    v = np.linspace(1, 2, 10)
    r = qacm_exact(make_input([v, v, v], [0, 0, 0], [0, 0, 0]))
    assert r.objective == -9 and r.index == 0 and r.satisfied_count == 3
    assert qacm_heuristic(make_input([v, v, v], [0, 0, 0], [0, 0, 0])).index == 0


def test_single_satisfied_point():
    a = np.full(20, -1.0)
    b = np.full(20, -1.0)
    a[13] = b[13] = 1.0
    inp = make_input([a, b], [0.0, 0.0], [0, 0])
    assert qacm_heuristic(inp).index == 13
    assert qacm_exact(inp).index == 13


def test_minimized_curve_direction():
    a = np.array([0.5, -0.2, -1.0])
    r = qacm_exact(make_input([a, -a], [0.0, 0.0], [1, 1], [0.5, 0.5], [0, 1, 2]))
    # x1 wants values <= 0 (index 1, 2), x2 wants -a <= 0 (index 0)
    assert r.outcome("x1").satisfied == (1 if r.index > 0 else 0)


def test_exact_follows_program_on_small_inputs():
    rng = np.random.default_rng(7)
    for _ in range(150):
        inp = random_input(rng, int(rng.integers(2, 5)), int(rng.integers(5, 25)))
        obj, j, s = brute_force(inp)
        r = qacm_exact(inp)
        assert (r.index, r.objective) == (j, obj)
        assert tuple(o.satisfied for o in r.outcomes) == s


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 8), grid=st.integers(2, 120))
def test_heuristic_equals_exact(seed, n, grid):
    inp = random_input(np.random.default_rng(seed), n, grid)
    a, b = qacm_exact(inp), qacm_heuristic(inp)
    assert (a.p_opt, a.index, a.objective) == (b.p_opt, b.index, b.objective)
    assert a.outcomes == b.outcomes


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 6), grid=st.integers(2, 80),
       method=st.sampled_from(list(Method)))
def test_result_invariants(seed, n, grid, method):
    inp = random_input(np.random.default_rng(seed), n, grid)
    r = solve(inp, method)
    lo, hi = r.bounds
    assert lo <= r.p_opt <= hi
    for o in r.outcomes:
        assert o.distance >= 0
        assert (o.distance == 0) == (o.satisfied == 1)
    if method in (Method.QACM, Method.QACM_HEURISTIC):
        w = [inp.weights[x] for x in inp.xapps]
        assert r.objective == objective_from_outcomes(r, w, inp.zeta)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 5), scale=st.floats(1e-3, 1e3))
def test_eg_weight_scale_invariance(seed, n, scale):
    rng = np.random.default_rng(seed)
    inp = random_input(rng, n, 60)
    ratios = rng.uniform(0.1, 5, n)
    case = inp.case

    def weights(r):
        return assign_weights(case, PolicyConfig(dict(zip(case.involved, r))))

    a = eg(MitigationInput(case, inp.curves, weights(ratios)))
    b = eg(MitigationInput(case, inp.curves, weights(ratios * scale)))
    assert a.p_opt == b.p_opt


def _sampled(funcs, thresholds, step):
    grid = np.arange(0.0, 20.0 + step / 2, step)
    case = ConflictCase("direct", "p", tuple(f"x{i}" for i in range(len(funcs))), 0)
    curves = {x: UtilityCurve(x, "p", grid, f(grid), q, 0)
              for x, f, q in zip(case.involved, funcs, thresholds)}
    return MitigationInput(case, curves, {x: 1 / len(funcs) for x in case.involved})


@settings(max_examples=100, deadline=None)
@given(c=st.lists(st.floats(0, 20), min_size=2, max_size=4), q=st.floats(-1, 1),
       step=st.sampled_from([4.0, 2.0, 1.0]))
def test_grid_refinement_never_raises_objective(c, q, step):
    funcs = [lambda g, ci=ci: 2 * np.exp(-((g - ci) ** 2) / 18) - 1 for ci in c]
    coarse = qacm_exact(_sampled(funcs, [q] * len(c), step))
    fine = qacm_exact(_sampled(funcs, [q] * len(c), step / 2))
    assert fine.objective <= coarse.objective


def test_assign_weights_examples():
    two = ConflictCase("direct", "p2", ("x1", "x2"), 0)
    three = ConflictCase("direct", "p1", ("x1", "x2", "x3"), 0)
    assert assign_weights(two, PolicyConfig()) == {"x1": 0.5, "x2": 0.5}
    w = assign_weights(two, PolicyConfig({"x1": 7, "x2": 3}))
    assert w == pytest.approx({"x1": 0.7, "x2": 0.3})
    w = assign_weights(three, PolicyConfig({"x1": 1, "x2": 2, "x3": 7}))
    assert w == pytest.approx({"x1": 0.1, "x2": 0.2, "x3": 0.7})
    assert sum(w.values()) == pytest.approx(1.0, abs=1e-12)


def test_assign_weights_default_and_errors():
    case = ConflictCase("direct", "p1", ("x1", "x2", "x3"), 0)
    w = assign_weights(case, PolicyConfig({"x1": 2}, default=1))
    assert w == pytest.approx({"x1": 0.5, "x2": 0.25, "x3": 0.25})
    with pytest.raises(PolicyError):
        assign_weights(case, PolicyConfig({"x1": 2}))
    with pytest.raises(WeightError):
        assign_weights(case, PolicyConfig({"x1": 0, "x2": 0, "x3": 0}))
    with pytest.raises(PolicyError):
        assign_weights(case, PolicyConfig({"x1": -1}, default=1))


def test_input_validation():
    v = np.linspace(0, 1, 5)
    good = make_input([v, v], [0, 0], [0, 0])
    other = UtilityCurve("x2", "p", np.arange(5.0) + 1, v, 0)
    with pytest.raises(GridMismatch):
        MitigationInput(good.case, {"x1": good.curves["x1"], "x2": other}, good.weights)
    with pytest.raises(ConfigError):
        MitigationInput(good.case, {"x1": good.curves["x1"]}, good.weights)
    with pytest.raises(WeightError):
        qacm_exact(MitigationInput(good.case, good.curves, {"x1": 0.2, "x2": 0.2}))
    with pytest.raises(WeightError):
        qacm_heuristic(MitigationInput(good.case, good.curves, {"x1": 1.0}))


def test_big_m_must_dominate():
    v = np.linspace(-5, 5, 5)
    inp = make_input([v, v], [6.0, 6.0], [0, 0])
    with pytest.raises(ConfigError):
        qacm_exact(inp)
    with pytest.raises(ConfigError):
        qacm_heuristic(inp)
    big = MitigationInput(inp.case, inp.curves, inp.weights, big_m=100.0)
    assert qacm_exact(big).index == qacm_heuristic(big).index == 4


def test_record_fields():
    v = np.linspace(0, 1, 5)
    r = qacm_exact(make_input([v, 1 - v], [0.5, 0.5], [0, 0]))
    rec = r.to_record()
    assert rec["method"] == "qacm" and rec["param"] == "p"
    assert [x["xapp"] for x in rec["xapps"]] == ["x1", "x2"]
    assert rec["satisfied_count"] == r.satisfied_count == 2
    assert rec["p_opt"] == 2.0
