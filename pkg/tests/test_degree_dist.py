import json
import math

import numpy as np
import pytest

from ripple_lab.degree_dist import (
    DegreeDistribution,
    from_json_obj,
    make_capped_soliton,
    make_ideal_soliton,
    make_single_degree,
    omega_derivative,
    omega_eval,
    parse_distribution,
    sample_degree,
    to_json_obj,
)


def test_capped_soliton_weights(cap):
    assert cap.max_degree == 50
    assert cap.omega1 == pytest.approx(1.0 / 50, abs=1e-15)
    # telescoping tail: sum of 1/(d(d-1)) over 2..50 is 1 - 1/50 exactly
    for d in range(2, 51):
        assert cap.probs[d - 1] == pytest.approx(1.0 / (d * (d - 1)), rel=1e-14)
    assert math.fsum(cap.probs.tolist()) == pytest.approx(1.0, abs=1e-14)


def test_ideal_soliton_mean():
    k = 30
    d = make_ideal_soliton(k)
    assert d.max_degree == k
    assert d.omega1 == pytest.approx(1.0 / k, abs=1e-15)
    harmonic = sum(1.0 / i for i in range(1, k))
    assert d.mean_degree == pytest.approx(1.0 / k + harmonic, rel=1e-13)


def test_single_degree():
    d = make_single_degree(3)
    assert d.max_degree == 3
    assert d.probs[2] == 1.0
    assert d.probs[0] == 0.0 and d.probs[1] == 0.0
    with pytest.raises(ValueError):
        make_single_degree(0)


def test_validation_rejects_bad_vectors():
    with pytest.raises(ValueError):
        DegreeDistribution([0.5, 0.4])  # sum drift
    with pytest.raises(ValueError):
        DegreeDistribution([1.2, -0.2])  # negative mass
    with pytest.raises(ValueError):
        DegreeDistribution([1.0, 0.0])  # trailing zero
    with pytest.raises(ValueError):
        DegreeDistribution([])
    with pytest.raises(ValueError):
        DegreeDistribution([[0.5], [0.5]])
    with pytest.raises(ValueError):
        DegreeDistribution([np.nan, 1.0])


def test_eq_hash_ignore_name():
    a = DegreeDistribution([0.25, 0.75], name="a")
    b = DegreeDistribution([0.25, 0.75], name="b")
    c = DegreeDistribution([0.75, 0.25], name="a")
    assert a == b and hash(a) == hash(b)
    assert a != c
    assert a != "not a distribution"


def test_omega_derivatives_match_hand_polynomial(quad, mix13):
    # quad: Omega(z) = 0.3 z + 0.7 z^2
    for z in (0.0, 0.3, 1.0):
        assert omega_eval(quad, z) == pytest.approx(0.3 * z + 0.7 * z * z, abs=1e-15)
        assert omega_derivative(quad, z, 1) == pytest.approx(0.3 + 1.4 * z, abs=1e-15)
        assert omega_derivative(quad, z, 2) == pytest.approx(1.4, abs=1e-15)
        assert omega_derivative(quad, z, 3) == 0.0
    # mix13: Omega(z) = 0.1 z + 0.9 z^3
    z = 0.7
    assert omega_eval(mix13, z) == pytest.approx(0.1 * z + 0.9 * z**3, rel=1e-14)
    assert omega_derivative(mix13, z, 1) == pytest.approx(0.1 + 2.7 * z * z, rel=1e-14)
    assert omega_derivative(mix13, z, 2) == pytest.approx(5.4 * z, rel=1e-14)
    assert omega_derivative(mix13, z, 3) == pytest.approx(5.4, rel=1e-14)
    assert omega_derivative(mix13, z, 4) == 0.0
    with pytest.raises(ValueError):
        omega_derivative(mix13, z, -1)


def test_sample_degree_cdf_edges(quad):
    # inverse CDF with side="right": u < 0.3 -> degree 1, u >= 0.3 -> degree 2
    assert sample_degree(quad, 0.0) == 1
    assert sample_degree(quad, 0.29999) == 1
    assert sample_degree(quad, 0.3) == 2
    assert sample_degree(quad, np.nextafter(1.0, 0.0)) == 2
    cap = make_capped_soliton()
    assert sample_degree(cap, np.nextafter(1.0, 0.0)) == 50
    assert sample_degree(cap, 0.0) == 1


def test_json_roundtrip(cap):
    obj = to_json_obj(cap)
    back = from_json_obj(obj, name=cap.name)
    assert back == cap
    text = json.dumps(obj)
    again = from_json_obj(json.loads(text))
    assert again == cap


def test_parse_builtins():
    assert parse_distribution("capped-soliton") == make_capped_soliton()
    assert parse_distribution("ideal-soliton:12") == make_ideal_soliton(12)
    assert parse_distribution("degree3") == make_single_degree(3)


def test_parse_inline_json_and_file(tmp_path):
    inline = parse_distribution('{"degrees": [1, 2], "probs": [0.3, 0.7]}')
    assert inline == DegreeDistribution([0.3, 0.7])
    path = tmp_path / "dist.json"
    path.write_text(json.dumps(to_json_obj(make_capped_soliton())))
    assert parse_distribution(str(path)) == make_capped_soliton()


def test_parse_errors(tmp_path):
    with pytest.raises(ValueError):
        parse_distribution("no-such-distribution")
    with pytest.raises(ValueError):
        parse_distribution("ideal-soliton:0")
    with pytest.raises(ValueError):
        parse_distribution('{"degrees": [1, 2], "probs": [0.5, 0.4]}')
    with pytest.raises(ValueError):
        parse_distribution('{"degrees": [1, 1], "probs": [0.5, 0.5]}')
    bad = tmp_path / "bad.json"
    bad.write_text("not json at all")
    with pytest.raises(ValueError):
        parse_distribution(str(bad))
