import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kicompress import ensemble as en
from kicompress import matcore as mc
from kicompress.errors import BadShape, DimensionTooLarge, InvalidEnsemble

SCHEMA = json.loads((Path(en.__file__).parent / "schemas" / "ensemble.schema.json").read_text())

K0 = np.diag([1.0, 0.0])
K1 = np.diag([0.0, 1.0])
PLUS = np.full((2, 2), 0.5)


def kinds(report):
    return {v.kind for v in report}


# --- validate -------------------------------------------------------------

def test_validate_accepts_pure_letter():
    assert en.validate(en.Ensemble.from_pairs([(1.0, K0)])) == []


def test_validate_reports_probability_sum():
    report = en.validate(en.Ensemble.from_pairs([(0.6, K0), (0.6, K1)]))
    assert kinds(report) == {"prob_sum"}
    assert report[0].magnitude == pytest.approx(0.2, abs=1e-12)


def test_validate_reports_trace():
    report = en.validate(en.Ensemble.from_pairs([(1.0, np.diag([0.6, 0.3]))]))
    assert kinds(report) == {"trace"}
    assert report[0].index == 0
    assert report[0].magnitude == pytest.approx(0.1, abs=1e-12)


def test_validate_collects_several_violations():
    e = en.Ensemble(2, ("x", "x"), np.array([0.0, 1.0]),
                    (np.array([[1, 1], [0, 0]]), np.diag([1.5, -0.5])))
    report = en.validate(e)
    assert {"labels", "prob", "hermitian", "psd"} <= kinds(report)
    assert {v.index for v in report if v.kind in ("hermitian", "psd")} == {0, 1}


def test_validate_shape_and_empty():
    assert "shape" in kinds(en.validate(en.Ensemble(3, ("a",), np.array([1.0]), (K0,))))
    assert "empty" in kinds(en.validate(en.Ensemble(2, (), np.array([]), ())))


def test_require_valid_raises_with_violations():
    with pytest.raises(InvalidEnsemble) as info:
        en.require_valid(en.Ensemble.from_pairs([(0.6, K0), (0.6, K1)]))
    assert info.value.violations[0].kind == "prob_sum"


# --- average state and tensor power ---------------------------------------

def test_average_state_examples():
    assert np.allclose(en.average_state(en.fixture("E2")), np.eye(2) / 2)
    assert np.allclose(en.average_state(en.fixture("E3")), [[0.75, 0.25], [0.25, 0.25]])
    assert np.allclose(en.average_state(en.fixture("E4")), np.diag([0.7, 0.3]))


def test_average_state_rejects_invalid():
    with pytest.raises(InvalidEnsemble):
        en.average_state(en.Ensemble.from_pairs([(0.6, K0), (0.6, K1)]))


def test_tensor_power_examples():
    e = en.Ensemble.from_pairs([(0.3, K0), (0.7, PLUS)], labels=["a", "b"])
    assert en.tensor_power(e, 1) is e
    e2 = en.tensor_power(e, 2)
    assert e2.labels == ("a,a", "a,b", "b,a", "b,b")
    assert np.allclose(e2.probs, [0.09, 0.21, 0.21, 0.49])
    assert np.allclose(e2.states[1], np.kron(K0, PLUS))
    assert np.allclose(en.average_state(e2), np.kron(en.average_state(e), en.average_state(e)))


def test_tensor_power_limits():
    with pytest.raises(DimensionTooLarge):
        en.tensor_power(en.fixture("E3"), 9)
    with pytest.raises(DimensionTooLarge):
        en.tensor_power(en.fixture("E3"), 3, max_dim=4)
    with pytest.raises(ValueError):
        en.tensor_power(en.fixture("E3"), 0)


@pytest.mark.parametrize("name", en.FIXTURE_NAMES)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_tensor_power_stays_valid(name, n):
    e = en.fixture(name)
    if e.dim ** n > en.DEFAULT_MAX_DIM:
        pytest.skip("dimension too large")
    p = en.tensor_power(e, n)
    assert abs(p.probs.sum() - 1) <= 1e-9
    assert len(p) == len(e) ** n
    assert en.validate(p) == []


# --- redundancy -----------------------------------------------------------

def test_attach_redundancy_trivial_factor():
    e = en.fixture("E3")
    r = en.attach_redundancy(e, [[1.0]])
    assert r.dim == 2
    assert all(np.allclose(a, b) for a, b in zip(r.states, e.states))


def test_attach_redundancy_e2():
    r = en.attach_redundancy(en.fixture("E2"), np.diag([0.7, 0.3]))
    assert r.dim == 4
    assert np.allclose(r.states[0], np.diag([0.7, 0.3, 0, 0]))
    assert np.array_equal(r.probs, [0.5, 0.5])


def test_attach_redundancy_rejects_bad_factor():
    with pytest.raises(InvalidEnsemble):
        en.attach_redundancy(en.fixture("E3"), np.diag([0.7, 0.4]))


# --- generators and fixtures ----------------------------------------------

def test_classical_examples():
    e2 = en.classical([[1, 0], [0, 1]])
    assert np.allclose(e2.states[0], K0) and np.allclose(e2.states[1], K1)
    assert np.allclose(e2.probs, [0.5, 0.5])
    e5 = en.classical([[0.5, 0.5, 0], [0, 0.5, 0.5]])
    assert all(np.allclose(a, b) for a, b in zip(e5.states, en.fixture("E5").states))
    assert np.allclose(en.classical([[2, 2]]).states[0], np.eye(2) / 2)


def test_classical_rejects_bad_rows():
    with pytest.raises(BadShape):
        en.classical([[1, 0], [1]])
    with pytest.raises(BadShape):
        en.classical([[1.5, -0.5]])
    with pytest.raises(BadShape):
        en.classical([[0, 0]])


def test_random_pure_deterministic():
    a, b = en.random_pure(2, 2, 7), en.random_pure(2, 2, 7)
    assert np.array_equal(a.probs, b.probs)
    assert all(np.array_equal(x, y) for x, y in zip(a.states, b.states))
    c = en.random_pure(2, 2, 8)
    assert not np.array_equal(a.states[0], c.states[0])


def test_random_mixed_rank():
    e = en.random_mixed(4, 3, 2, seed=1)
    for s in e.states:
        assert np.sum(np.linalg.eigvalsh(s) > 1e-10) == 2


@pytest.mark.parametrize("seed", range(100))
def test_generators_valid(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    count = int(rng.integers(1, 5))
    assert en.validate(en.random_pure(d, count, seed)) == []
    assert en.validate(en.random_mixed(d, count, None, seed)) == []
    assert en.validate(en.random_commuting(d, count, seed)) == []
    assert en.validate(en.random_structured([(2, 1), (1, 2)], count, seed)) == []


def test_seeds_accept_64_bit_values():
    assert en.validate(en.random_pure(3, 2, 2**64 - 1)) == []
    assert en.validate(en.random_pure(3, 2, -5)) == []


def test_fixtures():
    for name in en.FIXTURE_NAMES:
        assert en.validate(en.fixture(name)) == []
    assert en.fixture("E6").dim == 4
    assert np.allclose(en.fixture("E6").states[1], np.kron(PLUS, np.diag([0.7, 0.3])))
    assert np.allclose(en.fixture("E7").states[0], np.diag([0.75, 0.25]))
    with pytest.raises(KeyError):
        en.fixture("E8")


def test_ensembles_are_read_only():
    e = en.fixture("E3")
    with pytest.raises(ValueError):
        e.states[0][0, 0] = 2
    with pytest.raises(ValueError):
        e.probs[0] = 1


def test_permuted_and_conjugated():
    e = en.fixture("E7")
    p = e.permuted([1, 0])
    assert p.labels == ("+", "mixed")
    u = mc.random_unitary(2, np.random.default_rng(0))
    c = e.conjugated(u)
    assert np.allclose(c.states[0], u @ e.states[0] @ u.conj().T)


# --- serialization --------------------------------------------------------

@pytest.mark.parametrize("name", en.FIXTURE_NAMES)
def test_roundtrip_fixtures(name):
    e = en.fixture(name)
    text = en.dumps_ensemble(e)
    jsonschema.validate(json.loads(text), SCHEMA)
    back = en.loads_ensemble(text)
    assert back.labels == e.labels and back.dim == e.dim
    assert np.array_equal(back.probs, e.probs)
    assert all(np.array_equal(a, b) for a, b in zip(back.states, e.states))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 4), st.integers(1, 4))
def test_roundtrip_random(seed, d, count):
    e = en.random_mixed(d, count, None, seed)
    back = en.loads_ensemble(en.dumps_ensemble(e))
    assert np.max(np.abs(back.probs - e.probs)) <= 1e-15
    assert max(np.max(np.abs(a - b)) for a, b in zip(back.states, e.states)) <= 1e-15


def test_write_and_read(tmp_path):
    path = tmp_path / "e5.json"
    en.write_ensemble(en.fixture("E5"), path)
    first = path.read_bytes()
    en.write_ensemble(en.read_ensemble(path), path)
    assert path.read_bytes() == first


def test_writer_uses_17_digits():
    assert en.format_float(0.1) == "0.10000000000000001"
    assert en.format_float(-0.0) == "0"
    assert en.dumps_json({"a": [1, 0.5]}) == '{\n  "a": [1, 0.5]\n}'


def test_reader_rejects_unknown_fields():
    data = en.ensemble_to_dict(en.fixture("E1"))
    data["comment"] = "x"
    with pytest.raises(InvalidEnsemble):
        en.ensemble_from_dict(data)
    assert en.ensemble_from_dict(data, lenient=True).dim == 2
    data = en.ensemble_to_dict(en.fixture("E1"))
    data["letters"][0]["note"] = 1
    with pytest.raises(InvalidEnsemble):
        en.ensemble_from_dict(data)


@pytest.mark.parametrize("text", [
    "{", "[]", '{"dim": 2}', '{"dim": 0, "letters": []}',
    '{"dim": 1, "letters": [{"label": "a", "prob": "1", "state": [[[1, 0]]]}]}',
    '{"dim": 1, "letters": [{"label": "a", "prob": 1, "state": [[1]]}]}',
    '{"dim": 2, "letters": [{"label": "a", "prob": 1, "state": [[[1, 0]]]}]}',
])
def test_reader_rejects_malformed(text):
    with pytest.raises(InvalidEnsemble):
        en.loads_ensemble(text)
