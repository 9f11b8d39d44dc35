"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (printed in the terminal summary under
"acceptance criteria"). Criteria 1-4 compare against reference values only
when published conflict tables are vendored under
``fixtures/published/case_<id>``; otherwise the satisfaction-dominance check
runs on regenerated tables and the numeric comparison is skipped.
"""

import gc
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import make_input, random_input, record_criterion
from xapp_cms.harness import CASE_IDS, builtin_tables, casestudy, fixtures_dir, load_case, run
from xapp_cms.mitigate import qacm_exact, qacm_heuristic
from xapp_cms.model import builtin_example_model
from xapp_cms.normalize import utility_curve
from xapp_cms.predict import evaluate, fit
from xapp_cms.scenario import load_scenario

pytestmark = pytest.mark.acceptance

CASE_CRITERION = {"A": 1, "B": 2, "C": 3, "D": 4}


def _check(number, name, fn):
    try:
        detail = fn() or ""
    except AssertionError as exc:
        record_criterion(number, name, False, str(exc).splitlines()[0] if str(exc) else "")
        raise
    record_criterion(number, name, True, detail)


def _has_published(case):
    return load_case(case)[1] == "published"


def _sat(row):
    return {o.xapp for o in row.result.outcomes if o.satisfied}


# criteria 1-4 ------------------------------------------------------------------
@pytest.mark.parametrize("case", CASE_IDS)
def test_case_study_dominance(case):
    def body():
        start = time.perf_counter()
        r = casestudy(case)
        elapsed = time.perf_counter() - start
        q, qp = r.row("QACM").result, r.row("QACMP").result
        n, e = r.row("NSWF").result, r.row("EG").result
        assert q.satisfied_count >= n.satisfied_count, \
            f"QACM satisfies {q.satisfied_count} < NSWF {n.satisfied_count}"
        assert q.satisfied_count >= e.satisfied_count, \
            f"QACM satisfies {q.satisfied_count} < EG {e.satisfied_count}"
        assert qp.satisfied_count >= e.satisfied_count, \
            f"QACMP satisfies {qp.satisfied_count} < EG {e.satisfied_count}"
        assert elapsed < 1.0, f"runtime {elapsed:.3f}s"
        return (f"{r.source}: sat QACM {q.satisfied_count}, QACMP {qp.satisfied_count}, "
                f"NSWF {n.satisfied_count}, EG {e.satisfied_count}; {elapsed * 1e3:.1f} ms")

    _check(CASE_CRITERION[case], f"case {case} satisfaction dominance", body)


def _near(value, target):
    return abs(value - target) <= 1


def _numeric_a(r):
    q, qp, n, e = (r.row(k) for k in ("QACM", "QACMP", "NSWF", "EG"))
    assert _near(q.result.p_opt, 27) and _sat(q) == {"x1", "x2"}, f"QACM {q.result.p_opt}"
    assert _near(n.result.p_opt, 23) and len(_sat(n)) == 1, f"NSWF {n.result.p_opt}"
    assert _near(qp.result.p_opt, 25) and _sat(qp) == {"x1", "x2"}, f"QACMP {qp.result.p_opt}"
    assert _near(e.result.p_opt, 22) and len(_sat(e)) == 1, f"EG {e.result.p_opt}"


def _numeric_b(r):
    q, qp, n, e = (r.row(k) for k in ("QACM", "QACMP", "NSWF", "EG"))
    assert _near(q.result.p_opt, 23) and {"x1", "x2"} <= _sat(q), f"QACM {q.result.p_opt}"
    assert _near(n.result.p_opt, -45) and _sat(n) == {"x3"}, f"NSWF {n.result.p_opt}"
    assert _near(qp.result.p_opt, 5), f"QACMP {qp.result.p_opt}"
    assert _near(e.result.p_opt, 1), f"EG {e.result.p_opt}"


def _numeric_c(r):
    q, qp, n, e = (r.row(k) for k in ("QACM", "QACMP", "NSWF", "EG"))
    assert _near(q.result.p_opt, 27), f"QACM {q.result.p_opt}"
    assert _near(n.result.p_opt, 11), f"NSWF {n.result.p_opt}"
    assert _near(qp.result.p_opt, 18) and _sat(qp) == {"x1", "x4"}, f"QACMP {qp.result.p_opt}"
    assert _near(e.result.p_opt, 14) and _sat(e) == {"x4"}, f"EG {e.result.p_opt}"


def _numeric_d(r):
    q, qp, n, e = (r.row(k) for k in ("QACM", "QACMP", "NSWF", "EG"))
    assert _near(q.result.p_opt, 22) and _sat(q) == {"x1", "x2", "x5"}, f"QACM {q.result.p_opt}"
    assert _near(n.result.p_opt, -13) and _sat(n) == {"x1", "x3"}, f"NSWF {n.result.p_opt}"
    assert qp.result.p_opt == q.result.p_opt, f"QACMP {qp.result.p_opt}"
    assert _near(e.result.p_opt, 16), f"EG {e.result.p_opt}"


NUMERIC = {"A": _numeric_a, "B": _numeric_b, "C": _numeric_c, "D": _numeric_d}


@pytest.mark.parametrize("case", CASE_IDS)
def test_case_study_reference_values(case):
    number = CASE_CRITERION[case]
    if not _has_published(case):
        reason = (f"published conflict tables for case {case} are not vendored under "
                  f"{fixtures_dir() / 'published'}; regenerated tables use fixture ICP values, "
                  "so reference numbers are not asserted")
        record_criterion(number, f"case {case} reference values", None, "no published data")
        pytest.skip(reason)

    def body():
        start = time.perf_counter()
        r = casestudy(case, source="published")
        NUMERIC[case](r)
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"runtime {elapsed:.3f}s"
        return f"published; {elapsed * 1e3:.1f} ms"

    _check(number, f"case {case} reference values", body)


# criterion 5 ---------------------------------------------------------------------
def test_exact_heuristic_equivalence():
    def body():
        rng = np.random.default_rng(20240501)
        start = time.perf_counter()
        for i in range(1000):
            inp = random_input(rng, int(rng.integers(2, 9)), int(rng.integers(50, 501)))
            a, b = qacm_exact(inp), qacm_heuristic(inp)
            assert a.p_opt == b.p_opt and a.objective == b.objective, f"input {i} differs"
        elapsed = time.perf_counter() - start
        assert elapsed < 30, f"runtime {elapsed:.1f}s"
        return f"1000 inputs identical; {elapsed:.2f} s"

    _check(5, "heuristic == exact on randomized inputs", body)


# criterion 6 ---------------------------------------------------------------------
def _ratio(small, large, repeats=7):
    """Min-of-repeats wall time ratio, interleaved and with GC paused."""
    best = {id(small): float("inf"), id(large): float("inf")}
    gc.collect()
    gc.disable()
    try:
        for _ in range(repeats):
            for inp in (small, large):
                start = time.perf_counter()
                qacm_heuristic(inp)
                best[id(inp)] = min(best[id(inp)], time.perf_counter() - start)
    finally:
        gc.enable()
    return best[id(large)] / best[id(small)]


def _flat_input(n_grid, n_xapps, seed):
    rng = np.random.default_rng(seed)
    values = [rng.uniform(-3, 3, n_grid) for _ in range(n_xapps)]
    return make_input(values, list(rng.uniform(-1, 1, n_xapps)), [i % 2 for i in range(n_xapps)])


@pytest.mark.slow
def test_heuristic_scaling():
    def body():
        n, k = 100_000, 4
        grid_ratio = _ratio(_flat_input(n, k, 1), _flat_input(2 * n, k, 1))
        xapp_ratio = _ratio(_flat_input(n, k, 2), _flat_input(n, 2 * k, 2))
        assert 1.5 <= grid_ratio <= 3.0, f"doubling N: x{grid_ratio:.2f}"
        assert 1.5 <= xapp_ratio <= 3.0, f"doubling |X'|: x{xapp_ratio:.2f}"
        return f"doubling N x{grid_ratio:.2f}, doubling |X'| x{xapp_ratio:.2f}"

    _check(6, "heuristic runtime scales linearly", body)


# criterion 7 ---------------------------------------------------------------------
def test_normalization_suite():
    def body():
        specs = {s.id: s for s in builtin_example_model()[0]}
        checked = 0
        for t in builtin_tables():
            for kpi_id in t.kpis:
                kpi = specs[t.xapp].kpi(kpi_id)
                c = utility_curve(t, kpi)
                assert abs(c.values.mean()) < 1e-9, f"{t.xapp}/{kpi_id} mean"
                assert abs(c.values.std() - 1.0) < 1e-9, f"{t.xapp}/{kpi_id} std"
                raw = t.kpis[kpi_id]
                raw_ok = raw <= kpi.qos_threshold if kpi.delta else raw >= kpi.qos_threshold
                assert np.array_equal(raw_ok, c.satisfied()), f"{t.xapp}/{kpi_id} thresholds"
                checked += 1
        return f"{checked} KPI columns"

    _check(7, "z-score moments and threshold equivalence", body)


# criterion 8 ---------------------------------------------------------------------
def test_prediction_gate():
    def body():
        seen, worst = set(), 1.0
        for t in builtin_tables():
            if t.xapp in seen:
                continue
            seen.add(t.xapp)
            kpi = t.kpi_ids[0]
            m = evaluate(fit(t, kpi, 4), t)
            assert m.r2 >= 0.8, f"{t.xapp}/{kpi} r2 {m.r2:.3f}"
            assert abs(m.evs - m.r2) <= 1e-9, f"{t.xapp}/{kpi} |EVS-R2|"
            worst = min(worst, m.r2)
        assert seen == {"x1", "x2", "x3", "x4", "x5"}
        return f"min r2 {worst:.3f} over 5 xApps"

    _check(8, "degree-4 regression r2 >= 0.8", body)


# criterion 9 ---------------------------------------------------------------------
def test_detection_replay():
    def body():
        fix = fixtures_dir()
        indirect = run(load_scenario(fix / "case_C.json"))
        kinds = [c["case"]["kind"] for c in indirect.cases]
        assert kinds.count("indirect") == 1 and "implicit" not in kinds, kinds
        ind = next(c["case"] for c in indirect.cases if c["case"]["kind"] == "indirect")
        assert ind["param"] == "p2" and ind["involved"][-1] == "x4"

        scn = load_scenario(fix / "case_D.json")
        first = run(scn)
        kinds = [c["case"]["kind"] for c in first.cases]
        assert kinds.count("implicit") == 1 and "indirect" not in kinds, kinds
        assert "p1" in first.stores.pgd["k5"]
        second = run(scn, first.stores)
        kinds = [c["case"]["kind"] for c in second.cases]
        assert "implicit" not in kinds and kinds.count("indirect") == 1, kinds
        return "k41/p2 indirect once; k5/p1 implicit once, indirect on replay"

    _check(9, "indirect/implicit replay with promotion", body)


# criterion 10 --------------------------------------------------------------------
def test_run_determinism(tmp_path):
    def body():
        fix = fixtures_dir()
        for case in CASE_IDS:
            path = fix / f"case_{case}.json"
            assert run(load_scenario(path)).dumps() == run(load_scenario(path)).dumps(), case
        outputs = []
        for i in range(2):
            out = tmp_path / f"run{i}.jsonl"
            subprocess.run([sys.executable, "-m", "xapp_cms", "run", str(fix / "case_D.json"),
                            "-o", str(out)], check=True)
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] and outputs[0]
        return "4 fixtures in-process, case D via CLI"

    _check(10, "byte-identical RunLogs", body)
