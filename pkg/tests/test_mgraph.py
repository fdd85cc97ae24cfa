import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FS22, ex1_table, ex2_smar_table, ex3_table, random_table
from missmdp.mgraph import (
    MGraph,
    MGraphError,
    consistent_with,
    implied_learner_assumptions,
    parents_of_indicator,
    parse_mgraph,
    render_mgraph,
)
from missmdp.model import FeatureSpace, MissingnessTable

SMAR = "n 2\nalways 2\nedge S2 R1\n"
MCAR = "n 2\n"
MNAR = "n 2\nedge S2 R1\n"  # R2 present, feature 2 itself missable


def test_parse_smar_graph():
    g = parse_mgraph(SMAR)
    assert g.n == 2 and g.always == {1} and g.s_edges == {(1, 0)}
    assert parents_of_indicator(g, 0) == {1}


def test_parse_mcar_graph():
    g = parse_mgraph(MCAR)
    assert parents_of_indicator(g, 0) == set() and parents_of_indicator(g, 1) == set()


def test_mnar_graph_parents():
    g = parse_mgraph(MNAR)
    assert parents_of_indicator(g, 0) == {1}
    assert 1 in g.indicators


def test_self_loop_needs_declaration():
    with pytest.raises(MGraphError, match="selfcensor"):
        parse_mgraph("n 2\nedge S1 R1\n")
    g = parse_mgraph("n 2\nselfcensor 1\nedge S1 R1\n")
    assert implied_learner_assumptions(g).self_censoring == {0}


@pytest.mark.parametrize(
    "text, line",
    [
        ("n 2\nedge S3 R1\n", None),
        ("n 2\nedge R1 R2\nedge R2 R1\n", None),
        ("n 2\nfoo 1\n", 2),
        ("n 2\nalways x\n", 2),
        ("edge S1 R2\n", None),
        ("n 2\nedge S1 S2\n", 2),
    ],
)
def test_parse_errors(text, line):
    with pytest.raises(MGraphError) as exc:
        parse_mgraph(text)
    if line is not None:
        assert exc.value.line == line


def test_cycle_message_names_nodes():
    with pytest.raises(MGraphError, match="cycle"):
        parse_mgraph("n 3\nedge R1 R2\nedge R2 R3\nedge R3 R1\n")


def test_parents_of_always_observed_feature_is_an_error():
    with pytest.raises(MGraphError):
        parents_of_indicator(parse_mgraph(SMAR), 1)


def test_implied_assumptions():
    assert implied_learner_assumptions(parse_mgraph(SMAR)) == (True, frozenset(), True)
    assert implied_learner_assumptions(parse_mgraph(MNAR)) == (True, frozenset(), False)
    unid = parse_mgraph("n 2\nselfcensor 2\nedge S2 R2\nedge S2 R1\n")
    assert 1 in implied_learner_assumptions(unid).self_censoring
    dep = parse_mgraph("n 2\nedge R1 R2\n")
    assert not implied_learner_assumptions(dep).indicators_independent


def test_consistent_with_examples():
    assert consistent_with(ex2_smar_table(), parse_mgraph(SMAR))
    # feature 2 goes missing in Example 3, contradicting "always 2"
    assert not consistent_with(ex3_table(), parse_mgraph(SMAR))
    # even with an R-node for feature 2, its missingness depends on its own value
    assert not consistent_with(ex3_table(), parse_mgraph(MNAR))
    assert consistent_with(ex1_table(), parse_mgraph("n 2\nalways 1\n"))
    assert consistent_with(ex3_table(), MGraph.complete(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_complete_graph_is_always_consistent(seed):
    M = random_table(FeatureSpace((2, 3)), seed)
    assert consistent_with(M, MGraph.complete(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sets(st.tuples(st.integers(0, 1), st.integers(0, 1)), max_size=4))
def test_consistency_monotone_in_edges(seed, extra):
    q = np.random.default_rng(seed).uniform(0.05, 0.95, 2)  # independent MCAR missing rates
    M = MissingnessTable.from_function(
        FS22, lambda s: {(r1, r2): (q[0] if r1 == 0 else 1 - q[0]) * (q[1] if r2 == 0 else 1 - q[1]) for r1 in (0, 1) for r2 in (0, 1)}
    )
    base = MGraph(2)
    assert consistent_with(M, base)
    extra = {(j, i) for j, i in extra}
    bigger = MGraph(2, s_edges=frozenset(extra), self_censor=frozenset(i for j, i in extra if i == j))
    if consistent_with(M, base):
        assert consistent_with(M, bigger)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 4).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.sets(st.integers(0, n - 1)),
            st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))),
            st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))),
        )
    )
)
def test_render_parse_roundtrip(args):
    n, always, s_edges, r_edges = args
    s_edges = {(j, i) for j, i in s_edges if i not in always}
    r_edges = {(j, i) for j, i in r_edges if j < i and i not in always and j not in always}
    g = MGraph(n, frozenset(always), frozenset(s_edges), frozenset(r_edges), frozenset(i for j, i in s_edges if i == j))
    assert parse_mgraph(render_mgraph(g)) == g
