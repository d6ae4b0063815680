import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import dependency_horizon, random_formula, random_trace
from stlrnn.stl import (
    Always,
    And,
    Atom,
    CompiledFormula,
    Eventually,
    FormulaSyntaxError,
    Interval,
    Not,
    Or,
    Predicate,
    PredicateTable,
    Trace,
    TraceTooShortError,
    TrueF,
    agm_and,
    agm_or,
    concat_traces,
    eval_boolean,
    eval_robustness_agm,
    eval_robustness_traditional,
    eval_robustness_with_history,
    horizon,
    parse_formula,
    to_text,
)
from stlrnn.pipeline.scenario import load_scenario

S_POS = Predicate.halfplane("s", [1.0], 0.0)  # s >= 0


def table_1d():
    return PredicateTable().add_predicate(S_POS)


def test_interval_validation():
    Interval(3, 3)
    with pytest.raises(ValueError):
        Interval(4, 2)
    with pytest.raises(ValueError):
        Interval(-1, 2)


def test_parse_always_not():
    t = PredicateTable().add_disk("Obs", (0, 0), 1.0)
    f = parse_formula("G[0,20](!Obs)", t)
    assert f == Always(Interval(0, 20), Not(t["Obs"]))


def test_parse_phi1_structure():
    sc = load_scenario("case1")
    f = sc.formula
    assert isinstance(f, And) and len(f.args) == 3
    reach, regc, avoid = f.args
    assert reach == Eventually(Interval(1, 10), Or((sc.table["RegA"], sc.table["RegB"])))
    assert regc == Eventually(Interval(11, 20), sc.table["RegC"])
    assert avoid == Always(Interval(0, 20), Not(sc.table["Obs"]))


def test_precedence():
    t = PredicateTable()
    for name in "abc":
        t.add_predicate(Predicate.halfplane(name, [1.0], 0.0))
    a, b, c = (t[n] for n in "abc")
    assert parse_formula("a | b & c", t) == Or((a, And((b, c))))
    assert parse_formula("!a & b", t) == And((Not(a), b))
    assert parse_formula("F[0,1]a & b", t) == And((Eventually(Interval(0, 1), a), b))
    assert parse_formula("a & b & c", t) == And((a, b, c))
    assert parse_formula("T", t) == TrueF()


@pytest.mark.parametrize("text,pos", [("F[10,1](s)", 0), ("s & @", 4), ("s & ", 4), ("F[1 2](s)", 4), ("(s", 2), ("s s", 2)])
def test_syntax_errors_report_position(text, pos):
    with pytest.raises(FormulaSyntaxError) as e:
        parse_formula(text, table_1d())
    assert e.value.position == pos


def test_malformed_interval_message():
    with pytest.raises(FormulaSyntaxError, match="interval"):
        parse_formula("F[10,1](s)", table_1d())


def test_unknown_predicate():
    with pytest.raises(FormulaSyntaxError, match="Nope"):
        parse_formula("F[0,1](Nope)", table_1d())


def test_roundtrip_phi1():
    sc = load_scenario("case1")
    text = to_text(sc.formula)
    assert parse_formula(text, sc.table) == sc.formula
    assert parse_formula("  " + text.replace(" ", "   ") + " ", sc.table) == sc.formula


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_random(seed):
    rng = np.random.default_rng(seed)
    f = random_formula(rng, 2)
    t = PredicateTable()
    from stlrnn.stl import atoms

    for p in atoms(f):
        t.add_predicate(p)
    assert parse_formula(to_text(f), t) == f


def test_horizon_values():
    assert horizon(load_scenario("case1").formula) == 20
    assert horizon(load_scenario("case2").formula) == 10
    assert horizon(Atom(S_POS)) == 0
    assert horizon(Not(Eventually(Interval(2, 5), Atom(S_POS)))) == 5


def test_horizon_phi2_brute_force():
    sc = load_scenario("case2")
    rng = np.random.default_rng(1)

    def ev(f, states):
        return eval_robustness_agm(f, Trace(states), 0).value

    def sampler(shape):
        return rng.uniform(-1.5, 1.5, shape)

    assert dependency_horizon(sc.formula, ev, 2, rng, trials=30, sampler=sampler) == 10


def test_boolean_examples():
    f = Eventually(Interval(0, 2), Atom(S_POS))
    assert eval_boolean(f, Trace([-1, -1, 1]), 0)
    g = Always(Interval(0, 2), Atom(S_POS))
    assert not eval_boolean(g, Trace([1, -1, 1]), 0)


def test_traditional_examples():
    assert eval_robustness_traditional(Atom(S_POS), Trace([0.7]), 0).value == pytest.approx(0.7)
    g = Always(Interval(0, 2), Atom(S_POS))
    assert eval_robustness_traditional(g, Trace([0.5, 0.2, 0.9]), 0).value == pytest.approx(0.2)
    f = And((Eventually(Interval(0, 1), Atom(S_POS)), Atom(S_POS)))
    assert eval_robustness_traditional(f, Trace([-0.1, 0.4]), 0).value == pytest.approx(-0.1)


def test_true_values():
    tr = Trace([0.0])
    assert eval_boolean(TrueF(), tr)
    assert eval_robustness_agm(TrueF(), tr).value == 1.0
    assert eval_robustness_traditional(TrueF(), tr).value == math.inf


def test_agm_closed_forms():
    # oracle: mpmath, sqrt(1.2 * 1.8) - 1 at 30 digits
    assert agm_and(np.array([0.2, 0.8])) == pytest.approx(0.469693845669906858, abs=1e-12)
    assert agm_and(np.array([0.5, -0.4, -0.2])) == pytest.approx(-0.2, abs=1e-15)
    assert agm_or(np.array([-0.2, -0.8])) == pytest.approx(-0.469693845669906858, abs=1e-12)
    assert agm_or(np.array([-0.5, 0.4, 0.2])) == pytest.approx(0.2, abs=1e-15)


def test_agm_predicate_clamp_and_not():
    p = Predicate.halfplane("s", [1.0], 0.0, scale=2.0)
    assert eval_robustness_agm(Atom(p), Trace([0.6])).value == pytest.approx(0.3)
    assert eval_robustness_agm(Not(Atom(p)), Trace([0.6])).value == pytest.approx(-0.3)
    assert eval_robustness_agm(Atom(p), Trace([50.0])).value == 1.0
    assert eval_robustness_agm(Atom(p), Trace([-50.0])).value == -1.0


@pytest.mark.parametrize("m", [1, 2, 3, 7])
@pytest.mark.parametrize("r", [0.01, 0.3, 1.0])
def test_agm_idempotence(m, r):
    assert agm_and(np.full(m, r)) == pytest.approx(r, rel=1e-12)
    assert agm_or(np.full(m, -r)) == pytest.approx(-r, rel=1e-12)


def test_trace_too_short():
    f = Eventually(Interval(0, 3), Atom(S_POS))
    with pytest.raises(TraceTooShortError, match="through absolute time 3"):
        eval_boolean(f, Trace([1.0, 2.0]), 0)


def _corpus(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        dim = int(rng.integers(1, 4))
        f = random_formula(rng, dim)
        yield f, Trace(random_trace(rng, f, dim, extra=int(rng.integers(0, 3)))), rng


def test_negation_duality_exact():
    for f, tr, _ in _corpus(300, seed=3):
        assert eval_robustness_agm(Not(f), tr).value == -eval_robustness_agm(f, tr).value
        assert eval_robustness_traditional(Not(f), tr).value == -eval_robustness_traditional(f, tr).value


def test_agm_range_and_sign_agreement():
    for f, tr, _ in _corpus(300, seed=4):
        a = eval_robustness_agm(f, tr).value
        t = eval_robustness_traditional(f, tr).value
        assert -1.0 <= a <= 1.0
        if abs(a) > 1e-9 and abs(t) > 1e-9:
            assert (a > 0) == (t > 0)


def test_de_morgan_boolean():
    for (f, tr, rng), (g, _, _) in zip(_corpus(200, seed=5), _corpus(200, seed=6)):
        length = max(horizon(f), horizon(g)) + 1
        states = rng.normal(size=(length, 3))
        tr = Trace(states)
        lhs = eval_boolean(Not(And((f, g))), tr)
        rhs = eval_boolean(Or((Not(f), Not(g))), tr)
        assert lhs == rhs


def test_horizon_consistency():
    for f, tr, rng in _corpus(200, seed=7):
        k = int(rng.integers(0, 3))
        states = rng.normal(size=(k + horizon(f) + 4, tr.dim))
        base = (eval_boolean(f, Trace(states), k), eval_robustness_agm(f, Trace(states), k).value)
        pert = states.copy()
        pert[k + horizon(f) + 1:] = rng.normal(size=pert[k + horizon(f) + 1:].shape) * 5
        assert (eval_boolean(f, Trace(pert), k), eval_robustness_agm(f, Trace(pert), k).value) == base


def test_history_concatenation():
    sc = load_scenario("case1")
    rng = np.random.default_rng(0)
    states = rng.uniform(0, 10, size=(21, 3))
    full = eval_robustness_agm(sc.formula, Trace(states)).value
    assert eval_robustness_with_history(sc.formula, None, Trace(states)).value == full
    hist, tail = Trace(states[:9]), Trace(states[9:], 9)
    assert eval_robustness_with_history(sc.formula, hist, tail).value == full
    with pytest.raises(ValueError):
        concat_traces(hist, Trace(states[10:], 10))


def test_history_satisfying_tail_phi1():
    sc = load_scenario("case1")
    # hand-built trajectory: through RegB at k=5, RegC at k=15, never in Obs
    way = np.array([[1, 1], [4, 5], [4, 5], [8, 8], [8, 8]])
    ts = np.array([0, 5, 8, 15, 20])
    xy = np.stack([np.interp(np.arange(21), ts, way[:, i]) for i in range(2)], axis=1)
    states = np.hstack([xy, np.zeros((21, 1))])
    r = eval_robustness_with_history(sc.formula, Trace(states[:9]), Trace(states[9:], 9)).value
    assert r > 0


def test_compiled_matches_tree_evaluator():
    for backend in ("numba", "numpy"):
        for f, tr, rng in _corpus(150, seed=8):
            cf = CompiledFormula(f, tr.dim)
            k = 0
            assert cf.robustness(tr.states, k, backend=backend) == pytest.approx(
                eval_robustness_agm(f, tr, k).value, abs=1e-12)
            assert cf.robustness(tr.states, k, "traditional", backend) == pytest.approx(
                eval_robustness_traditional(f, tr, k).value, abs=1e-12)


def test_compiled_batch_and_offset():
    sc = load_scenario("case2")
    rng = np.random.default_rng(2)
    batch = rng.uniform(-1.5, 1.5, size=(16, 14, 2))
    for backend in ("numba", "numpy"):
        out = sc.compiled_phi.robustness(batch, 2, backend=backend)
        ref = [eval_robustness_agm(sc.phi, Trace(b), 2).value for b in batch]
        np.testing.assert_allclose(out, ref, atol=1e-12)
