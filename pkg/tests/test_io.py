import numpy as np
import pytest

from helpers import FS22, ex1_table, ex3_table, random_model, random_table, tiger
from missmdp.bench import build, preset
from missmdp.io import ParseError, format_learned, format_model, parse_missingness, parse_model
from missmdp.learn import learn
from missmdp.simulate import generate_dataset

SMALL = """\
# a two-state toy
features 2
actions 1
gamma 0.5
init 0 1.0
T 0 0 1 1.0
T 1 0 1 1.0
R 0 0 -1.0
terminal 1
M 0 1 0.25
M 0 0 0.75
M 1 1 1.0
"""


def test_parse_small_model():
    m, M = parse_model(SMALL)
    assert m.num_states == 2 and m.num_actions == 1 and m.gamma == 0.5
    assert m.terminal == {1}
    assert M.probs[0].tolist() == [0.75, 0.25]
    assert m.rewards[0, 0] == -1.0


def test_feature_tuples_are_accepted_for_states():
    m, _ = parse_model("features 2 2\nactions 1\ngamma 0.5\ninit 1,0 1.0\nT 1,0 0 1,1 1.0\n")
    assert m.initial[FS22.encode((1, 0))] == 1.0
    assert m.transitions[0].toarray()[2, 3] == 1.0


@pytest.mark.parametrize("factory", [lambda: (random_model(FS22, 2, 0), random_table(FS22, 0)), tiger])
def test_model_roundtrip(factory):
    m, M = factory()
    m2, M2 = parse_model(format_model(m, M))
    assert np.array_equal(m2.rewards, m.rewards) and np.array_equal(m2.initial, m.initial)
    for a in range(m.num_actions):
        assert np.array_equal(m2.transitions[a].toarray(), m.transitions[a].toarray())
    assert np.array_equal(M2.probs, M.probs)
    assert format_model(m2, M2) == format_model(m, M)


def test_benchmark_roundtrip_keeps_terminals():
    b = build(preset("pred-mcar", "desk"))
    m2, M2 = parse_model(format_model(b.model, b.M))
    assert sorted(m2.terminal) == sorted(b.model.terminal)
    assert np.array_equal(M2.probs, b.M.probs)


@pytest.mark.parametrize(
    "text, line",
    [
        ("features 2\nactions 1\ngamma 0.5\nT 0 0 9 1.0\n", 4),
        ("features 2\nactions 1\ngamma 0.5\nbogus 1\n", 4),
        ("actions 1\ngamma 0.5\ninit 0 1.0\n", 3),
        ("features 2\nactions 1\ngamma 0.5\nM 0 101 1.0\n", 4),
        ("features 2\nactions 1\ngamma x\n", 3),
        ("features 2\nactions 1\ngamma 0.5\nR 0\n", 4),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as exc:
        parse_model(text)
    assert exc.value.line == line


def test_missing_declarations():
    with pytest.raises(ParseError, match="gamma"):
        parse_model("features 2\nactions 1\n")
    with pytest.raises(ParseError, match="action 3"):
        parse_model("features 2\nactions 1\ngamma 0.5\nR 0 3 1.0\n")


def test_learned_file_roundtrip():
    D = generate_dataset(random_model(FS22, 2, 1), ex3_table(), 300, 1)
    L = learn(D, "asmar", 0.1)
    M, headers = parse_missingness(format_learned(L))
    assert headers == {"algo": "asmar", "kappa": "0.1", "dataset_size": str(D.size)}
    assert np.array_equal(M.probs, L.table.probs)
    assert np.allclose(M.probs.sum(axis=1), 1.0)


def test_missingness_file_checks_features():
    text = "features 2 2\nM 0 11 1.0\nM 1 11 1.0\nM 2 11 1.0\nM 3 11 1.0\n"
    M, _ = parse_missingness(text, FS22)
    assert np.allclose(M.probs[:, 3], 1.0)
    from missmdp.model import FeatureSpace

    with pytest.raises(ParseError, match="differ"):
        parse_missingness(text, FeatureSpace((3, 2)))
    with pytest.raises(ParseError, match="features"):
        parse_missingness("M 0 11 1.0\n")


def test_model_file_is_a_valid_missingness_source():
    m, M = random_model(FS22, 2, 0), ex1_table()
    M2, _ = parse_missingness(format_model(m, M))
    assert np.array_equal(M2.probs, M.probs)
