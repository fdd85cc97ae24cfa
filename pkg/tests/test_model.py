import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import A, B, FS22, ex1_table, ex2_mar_table, ex2_smar_table, ex3_table, random_model, random_table
from missmdp.model import (
    FeatureSpace,
    MissingnessTable,
    MissingnessType,
    MissMdp,
    ModelError,
    admits,
    always_observed_indices,
    apply_indicator,
    check_model,
    classify_missingness,
    enumerate_observations,
    indicator_bits,
    indicator_code,
    indicator_from_code,
    indicator_of,
    is_mar,
    is_simple_mar,
    parse_indicator_bits,
    validate_model,
)


# -- admittability and indicators -------------------------------------------


def test_admits_examples():
    assert admits((B, None), (B, A))
    assert admits((B, A), (B, A))
    assert not admits((A, None), (B, A))


def test_admits_dimension_mismatch():
    with pytest.raises(ModelError):
        admits((A,), (A, B))


def test_indicator_of_examples():
    assert indicator_of((B, A)) == (1, 1)
    assert indicator_of((B, None)) == (1, 0)
    assert indicator_of((None, None, None)) == (0, 0, 0)


def test_apply_indicator_examples():
    assert apply_indicator((B, A), (1, 0)) == (B, None)
    assert apply_indicator((B, A), (1, 1)) == (B, A)
    assert apply_indicator((B, A), (0, 0)) == (None, None)


def test_indicator_codes_and_bits():
    assert indicator_code((1, 0)) == 1
    assert indicator_code((0, 1)) == 2
    assert indicator_from_code(2, 2) == (0, 1)
    assert indicator_bits((1, 0)) == "10"
    assert parse_indicator_bits("01") == (0, 1)
    with pytest.raises(ModelError):
        parse_indicator_bits("0x")


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.data())
def test_apply_indicator_inverts_indicator_of(domains, data):
    s = tuple(data.draw(st.integers(0, d - 1)) for d in domains)
    r = tuple(data.draw(st.integers(0, 1)) for _ in domains)
    z = apply_indicator(s, r)
    assert admits(z, s)
    assert indicator_of(z) == r
    assert apply_indicator(s, indicator_of(z)) == z


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_encode_decode_bijection(domains):
    fs = FeatureSpace(tuple(domains))
    ids = [fs.encode(fs.decode(k)) for k in range(fs.num_states)]
    assert ids == list(range(fs.num_states))
    assert np.array_equal(fs.state_matrix, np.array([fs.decode(k) for k in range(fs.num_states)]))


def test_feature_space_rejects_bad_input():
    with pytest.raises(ModelError):
        FeatureSpace(())
    with pytest.raises(ModelError):
        FeatureSpace((2, 0))
    with pytest.raises(ModelError):
        FS22.encode((2, 0))
    with pytest.raises(ModelError):
        FS22.decode(4)


def test_observation_ids_are_dense_and_unique():
    fs = FeatureSpace((2, 3))
    obs = list(enumerate_observations(fs))
    ids = sorted(fs.observation_id(z) for z in obs)
    assert ids == list(range(fs.num_observations)) == list(range(12))
    # every emission id decodes back to the masked state
    for s in range(fs.num_states):
        for code in range(fs.num_indicators):
            z = apply_indicator(fs.decode(s), indicator_from_code(code, fs.n))
            assert fs.emission_ids[s, code] == fs.observation_id(z)


# -- missingness tables ------------------------------------------------------


def test_example1_observation_probabilities():
    M = ex1_table()
    s = FS22.encode((B, A))
    assert M.observation_probability((B, None), s) == 0.5
    assert M.observation_probability((B, A), s) == 0.5
    assert M.observation_probability((A, None), s) == 0.0
    assert M.row(s) == {(B, A): 0.5, (B, None): 0.5}


def test_from_observations_rejects_non_admittable_support():
    with pytest.raises(ModelError, match="not admittable"):
        MissingnessTable.from_observations(FS22, {0: {(B, None): 1.0}})


def test_table_shape_checked():
    with pytest.raises(ModelError):
        MissingnessTable(FS22, np.ones((4, 3)))


def test_always_observed_indices():
    assert always_observed_indices(ex1_table()) == {0}
    never = MissingnessTable.from_function(FS22, lambda s: {(1, 1): 1.0})
    assert always_observed_indices(never) == {0, 1}
    both = MissingnessTable.from_function(FS22, lambda s: {(0, 0): 0.5, (1, 1): 0.5})
    assert always_observed_indices(both) == set()


# -- classification ------------------------------------------------------------


def test_classify_examples():
    assert classify_missingness(ex1_table()).kind == MissingnessType.MCAR
    assert classify_missingness(ex2_smar_table()).kind == MissingnessType.SimpleMAR
    assert classify_missingness(ex2_mar_table()).kind == MissingnessType.MAR
    c3 = classify_missingness(ex3_table())
    assert c3.kind == MissingnessType.MNAR
    assert c3.self_censoring == {1}
    assert str(c3) == "MNAR self_censoring={2}"


def test_example2_smar_has_no_self_censoring():
    assert classify_missingness(ex2_smar_table()).self_censoring == frozenset()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_classification_is_nested(seed):
    M = random_table(FeatureSpace((2, 3)), seed, support=0.5)
    c = classify_missingness(M)
    if c.kind <= MissingnessType.SimpleMAR:
        assert is_simple_mar(M)
    if c.kind <= MissingnessType.MAR:
        assert is_mar(M)
    assert (c.kind == MissingnessType.MNAR) == (not is_mar(M))


def test_random_tables_are_mostly_mnar():
    kinds = {classify_missingness(random_table(FS22, k)).kind for k in range(10)}
    assert MissingnessType.MNAR in kinds


# -- models ----------------------------------------------------------------------


def _example_model():
    return MissMdp.from_rows(
        FS22,
        1,
        {(s, 0): {(s + 1) % 4: 1.0} for s in range(4)},
        {(0, 0): 1.0},
        {0: 1.0},
        0.9,
    )


def test_validate_well_formed_example():
    assert validate_model(_example_model(), ex1_table()) == []
    check_model(_example_model(), ex1_table())


def test_validate_row_sum_violation():
    P = ex1_table().probs.copy()
    P[0] *= 0.9
    kinds = [v.kind for v in validate_model(_example_model(), MissingnessTable(FS22, P))]
    assert kinds == ["row-sum"]


def test_validate_admittability_violation_on_observation_rows():
    rows = {s: {FS22.decode(s): 1.0} for s in range(4)}
    rows[0] = {(B, None): 1.0}  # state (a, a) cannot emit b
    kinds = [v.kind for v in validate_model(_example_model(), rows)]
    assert "admittability" in kinds


def test_validate_dangling_and_negative():
    m = MissMdp.from_rows(FS22, 1, {(0, 0): {1: 1.0}}, {}, {0: 1.0}, 0.9)
    kinds = {v.kind for v in validate_model(m)}
    assert kinds == {"dangling"}
    with pytest.raises(ModelError, match="no transition row"):
        check_model(m)
    neg = MissMdp.from_rows(FS22, 1, {(s, 0): {s: 1.0} for s in range(4)}, {}, {0: 1.2, 1: -0.2}, 0.9)
    assert {v.kind for v in validate_model(neg)} == {"negative"}


def test_unreachable_states_may_lack_rows():
    m = MissMdp.from_rows(FS22, 1, {(0, 0): {0: 1.0}}, {}, {0: 1.0}, 0.9)
    assert validate_model(m) == []
    assert m.reachable.tolist() == [0]


def test_model_constructor_checks():
    with pytest.raises(ModelError):
        MissMdp(FS22, 1, (np.eye(4),), np.zeros((4, 1)), np.full(4, 0.25), 1.0)
    with pytest.raises(ModelError):
        MissMdp(FS22, 2, (np.eye(4),), np.zeros((4, 2)), np.full(4, 0.25), 0.5)
    with pytest.raises(ModelError):
        MissMdp(FS22, 1, (np.eye(3),), np.zeros((4, 1)), np.full(4, 0.25), 0.5)


def test_reachable_bfs_and_terminal_absorption():
    m = MissMdp.from_rows(
        FS22, 1, {(0, 0): {1: 1.0}, (1, 0): {2: 1.0}, (2, 0): {0: 1.0}, (3, 0): {3: 1.0}}, {(2, 0): 5.0}, {0: 1.0}, 0.9,
        terminal=[2],
    )
    assert m.reachable.tolist() == [0, 1, 2]
    assert m.absorbing_transitions[0].toarray()[2].tolist() == [0, 0, 1, 0]
    assert m.absorbing_rewards[2, 0] == 0.0
    assert m.rho_max == 5.0


def test_sample_next_matches_probabilities():
    m = random_model(FS22, 2, 3)
    rng = np.random.default_rng(0)
    n = 40_000
    nxt = m.sample_next(np.zeros(n, dtype=int), np.ones(n, dtype=int), rng.random(n))
    freq = np.bincount(nxt, minlength=4) / n
    p = m.transitions[1].toarray()[0]
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12)
