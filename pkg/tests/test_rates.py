import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from helpers import unitary
from kicompress import ensemble as en
from kicompress import kidecomp as kd
from kicompress import rates
from kicompress.errors import InternalConsistencyError

SCHEMA = json.loads((Path(rates.__file__).parent / "schemas" / "rates.schema.json").read_text())


def h2(*p):
    p = np.array([x for x in p if x > 0])
    return float(-np.sum(p * np.log2(p)))


# independent closed forms for the two noncommuting fixtures
E3_INC = h2((2 + np.sqrt(2)) / 4, (2 - np.sqrt(2)) / 4)
_R7 = np.sqrt(1 / 64 + 1 / 16)
E7_INC = h2(0.5 + _R7, 0.5 - _R7)


@pytest.fixture(scope="module")
def reports():
    return {name: rates.full_report(en.fixture(name)) for name in en.FIXTURE_NAMES}


def test_closed_forms_are_the_quoted_values():
    assert E3_INC == pytest.approx(0.6009, abs=1e-4)
    assert E7_INC == pytest.approx(0.7610, abs=1e-4)


def test_i_c_examples(reports):
    assert reports["E1"].i_c == 0.0
    assert reports["E2"].i_c == pytest.approx(1.0, abs=1e-12)
    assert reports["E5"].i_c == pytest.approx(1.5, abs=1e-12)


def test_d_nc_examples(reports):
    for name in ("E1", "E2", "E4", "E5"):
        assert reports[name].d_nc == 0.0
    assert reports["E3"].d_nc == pytest.approx(1.0, abs=1e-12)
    assert reports["E6"].d_nc == pytest.approx(1.0, abs=1e-12)


def test_i_nc_examples(reports):
    assert reports["E2"].i_nc == 0.0
    assert reports["E3"].i_nc == pytest.approx(E3_INC, abs=1e-10)
    assert reports["E7"].i_nc == pytest.approx(E7_INC, abs=1e-10)
    assert reports["E6"].i_nc == pytest.approx(E3_INC, abs=1e-10)


def test_levitin_holevo_examples():
    assert rates.levitin_holevo(en.fixture("E4")) == 0.0
    assert rates.levitin_holevo(en.fixture("E2")) == pytest.approx(1.0, abs=1e-12)
    assert rates.levitin_holevo(en.fixture("E3")) == pytest.approx(E3_INC, abs=1e-10)


def test_reduced_state_examples():
    d3 = kd.ki_decompose(en.fixture("E3"))
    for i in range(2):
        r = rates.reduced_state(d3, i)
        assert np.trace(r @ r).real == pytest.approx(1.0, abs=1e-10)
    d6 = kd.ki_decompose(en.fixture("E6"))
    r = rates.reduced_state(d6, 0)
    assert r.shape == (2, 2)
    assert np.trace(r @ r).real == pytest.approx(1.0, abs=1e-10)
    d5 = kd.ki_decompose(en.fixture("E5"))
    assert np.allclose(np.sort(np.diag(rates.reduced_state(d5, 0)).real), [0, 0.5, 0.5], atol=1e-12)


def test_defect_bound_examples(reports):
    assert reports["E3"].defect_upper == pytest.approx(0.0, abs=1e-9)
    assert reports["E5"].defect_upper == pytest.approx(1.0, abs=1e-12)
    assert reports["E4"].defect_upper == pytest.approx(0.0, abs=1e-9)
    assert reports["E7"].defect_upper == pytest.approx(0.5 * h2(0.75, 0.25), abs=1e-10)


def test_classification(reports):
    assert reports["E2"].classification == "classical-pure"
    assert reports["E5"].classification == "classical-mixed"
    assert reports["E3"].classification == "quantum-pure"
    assert reports["E7"].classification == "quantum-mixed"
    assert reports["E6"].classification == "quantum-pure"
    assert reports["E4"].classification == "classical-pure"
    assert reports["E3"].table1_cell == "R_vlf >= R_flaf = I_eff"


def test_full_report_examples(reports):
    r = reports["E3"]
    assert (r.i_c, r.d_nc) == (pytest.approx(0.0, abs=1e-12), pytest.approx(1.0, abs=1e-12))
    assert r.r_vlf_opt == pytest.approx(1.0, abs=1e-12)
    assert r.r_flaf_opt == pytest.approx(E3_INC, abs=1e-10)
    assert r.gap_f_af == pytest.approx(1 - E3_INC, abs=1e-10)
    r = reports["E2"]
    assert r.r_vlf_opt == pytest.approx(1.0) and r.r_flaf_opt == pytest.approx(1.0)
    assert r.i_lh == pytest.approx(1.0) and r.gap_f_af == 0.0
    r = reports["E4"]
    assert r.r_vlf_opt == 0.0 and r.r_flaf_opt == 0.0 and r.i_lh == 0.0


def test_i_eff_interval(reports):
    for r in reports.values():
        lo, hi = r.i_eff_interval
        assert lo <= hi
        assert hi == r.r_flaf_opt


def test_shadow_ensemble_examples():
    d3 = kd.ki_decompose(en.fixture("E3"))
    s = rates.shadow_ensemble(d3)
    assert np.allclose(s.probs, [0.5, 0.5])
    assert abs(np.trace(s.states[0] @ s.states[1])) <= 1e-12
    assert en.validate(s) == []
    s2 = rates.shadow_ensemble(kd.ki_decompose(en.fixture("E2")))
    assert sorted(np.round(np.diag(m).real, 12).tolist() for m in s2.states) == [[0, 1], [1, 0]]
    s4 = rates.shadow_ensemble(kd.ki_decompose(en.fixture("E4")))
    assert len(s4) == 1 and np.allclose(s4.states[0], np.diag([0.7, 0.3]))


@pytest.mark.parametrize("name", en.FIXTURE_NAMES)
def test_shadow_identities(name, reports):
    d = reports[name].decomposition
    s = rates.shadow_ensemble(d)
    assert abs(h2(*s.probs) - (reports[name].i_c + reports[name].d_nc)) <= 1e-9
    assert np.allclose(en.average_state(s), rates.shadow_average(d), atol=1e-12)


@pytest.mark.parametrize("name", ["E2", "E3", "E4", "E5", "E6", "E7"])
@pytest.mark.parametrize("n", [2, 3])
def test_additivity(name, n, reports):
    e = en.fixture(name)
    if e.dim ** n > 64:
        pytest.skip("kept small for runtime")
    d = kd.ki_decompose(en.tensor_power(e, n))
    assert abs(rates.i_c(d) - n * reports[name].i_c) <= 1e-6
    assert abs(rates.d_nc(d) - n * reports[name].d_nc) <= 1e-6
    assert abs(rates.i_nc(d) - n * reports[name].i_nc) <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_commuting_sources_have_no_gap(seed):
    e = en.random_commuting(5, 3, seed)
    r = rates.full_report(e)
    assert r.gap_f_af <= 1e-9
    assert r.classification.startswith("classical")


@pytest.mark.parametrize("seed", range(5))
def test_redundancy_invariance(seed):
    e = en.random_mixed(2, 3, None, seed)
    rho_k = en.random_mixed(2, 1, None, seed + 1000).states[0]
    a = rates.full_report(e).to_dict()
    b = rates.full_report(en.attach_redundancy(e, rho_k)).to_dict()
    for key in ("i_c", "d_nc", "i_nc", "r_vlf_opt", "r_flaf_opt", "gap_f_af"):
        assert abs(a[key] - b[key]) <= 1e-7


@pytest.mark.parametrize("seed", range(100))
def test_holevo_consistency(seed):
    rng = np.random.default_rng(seed)
    e = en.random_mixed(int(rng.integers(1, 5)), int(rng.integers(1, 5)), None, seed)
    r = rates.full_report(e)
    assert r.r_flaf_opt >= r.i_lh - 1e-7
    assert r.gap_f_af >= -1e-9
    assert r.r_vlf_opt == r.i_c + r.d_nc


def test_pure_ensembles_have_zero_defect():
    for seed in range(10):
        r = rates.full_report(en.random_pure(3, 3, seed))
        assert r.defect_upper <= 1e-7


def test_clamp():
    assert rates.clamp(-1e-12) == 0.0
    assert rates.clamp(0.25) == 0.25
    with pytest.raises(InternalConsistencyError):
        rates.clamp(-1e-6)


def test_report_serialization(reports):
    for r in reports.values():
        data = json.loads(en.dumps_json(r.to_dict(table1=True)))
        jsonschema.validate(data, SCHEMA)
        assert data["table1"] == rates.TABLE1[r.classification]
    text = reports["E3"].to_text(table1=True)
    assert "quantum-pure" in text and "R_vlf >= R_flaf = I_eff" in text


def test_unitary_covariance_of_rates():
    e = en.random_mixed(3, 3, 2, seed=3)
    a = rates.full_report(e)
    b = rates.full_report(e.conjugated(unitary(3, 1)))
    assert abs(a.r_vlf_opt - b.r_vlf_opt) <= 1e-7
    assert abs(a.r_flaf_opt - b.r_flaf_opt) <= 1e-7
    assert abs(a.i_lh - b.i_lh) <= 1e-7
