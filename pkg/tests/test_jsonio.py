"""Canonical JSON, codecs, and the problem-spec schema."""

import json

import numpy as np
import pytest

from polydom.generate import generate
from polydom.jsonio import (
    ProblemSpec,
    canonical_json,
    digest,
    matrix_from_json,
    matrix_to_json,
    poly_from_json,
    poly_to_json,
    problem_from_json,
    problem_to_json,
    sanitize,
    symbol_from_json,
    symbol_to_json,
)
from polydom.words import NCPolynomial, commutator_polynomial, polyball_symbol


def spec_of(inst):
    return ProblemSpec(symbols=inst.symbols, m=inst.m, ops=inst.ops)


# ---------------------------------------------------------------------------
# canonical rendering
# ---------------------------------------------------------------------------

def test_canonical_sorts_keys_and_is_valid_json():
    a = canonical_json({"b": 1, "a": [True, None, "x"]})
    assert a == '{"a":[true,null,"x"],"b":1}'
    assert json.loads(a) == {"a": [True, None, "x"], "b": 1}


def test_canonical_floats_are_lossless(rng):
    for _ in range(200):
        x = float(rng.standard_normal() * 10.0 ** rng.integers(-300, 300))
        assert float(canonical_json(x)) == x


def test_canonical_rejects_nonfinite():
    with pytest.raises(ValueError):
        canonical_json({"x": float("inf")})
    with pytest.raises(ValueError):
        canonical_json(float("nan"))


def test_canonical_rejects_bad_keys_and_types():
    with pytest.raises(TypeError):
        canonical_json({1: "x"})
    with pytest.raises(TypeError):
        canonical_json(object())


def test_digest_is_order_independent_and_content_sensitive():
    d1 = digest({"a": 1, "b": [1.5, 2.5]})
    d2 = digest({"b": [1.5, 2.5], "a": 1})
    d3 = digest({"a": 1, "b": [1.5, 2.5000000001]})
    assert d1 == d2
    assert d1 != d3
    assert len(d1) == 64


# ---------------------------------------------------------------------------
# codecs
# ---------------------------------------------------------------------------

def test_matrix_round_trip(rng):
    M = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    back = matrix_from_json(matrix_to_json(M))
    assert back.shape == (3, 5)
    assert np.array_equal(back, M)


def test_matrix_rejects_bad_payload():
    obj = matrix_to_json(np.eye(2))
    obj["data"] = obj["data"][:-1]
    with pytest.raises(ValueError):
        matrix_from_json(obj)


def test_symbol_round_trip():
    f = polyball_symbol(3)
    back, m = symbol_from_json(symbol_to_json(f, 2))
    assert m == 2
    assert back.arity == 3 and back.max_degree == f.max_degree
    assert back.coeffs == f.coeffs


def test_poly_round_trip():
    q = commutator_polynomial(1, 1, 2)
    assert poly_from_json(poly_to_json(q)).terms == q.terms
    r = NCPolynomial(((1.0 + 2.0j, ((1, 1), (2, 1))), (-0.5j, ())))
    assert poly_from_json(poly_to_json(r)).terms == r.terms


def test_problem_round_trip_is_byte_stable():
    inst = generate("nilpotent", 3, dim=4)
    spec = ProblemSpec(
        symbols=inst.symbols, m=inst.m, ops=inst.ops,
        constraints=(commutator_polynomial(1, 1, 2),),
        task={"D": 6, "tol": 1e-8},
    )
    obj = problem_to_json(spec)
    again = problem_to_json(problem_from_json(obj))
    assert canonical_json(obj) == canonical_json(again)


def test_problem_validation_errors():
    inst = generate("commuting_polynomials", 6)
    obj = problem_to_json(spec_of(inst))

    bad = json.loads(json.dumps(sanitize(obj)))
    bad["k"] = 3
    with pytest.raises(ValueError):
        problem_from_json(bad)

    bad = json.loads(json.dumps(sanitize(obj)))
    bad["arities"] = [1, 1]
    with pytest.raises(ValueError):
        problem_from_json(bad)

    bad = json.loads(json.dumps(sanitize(obj)))
    bad["dim"] = 17
    with pytest.raises(ValueError):
        problem_from_json(bad)

    bad = json.loads(json.dumps(sanitize(obj)))
    bad["symbols"][0]["arity"] = 5
    with pytest.raises(ValueError):
        problem_from_json(bad)


# ---------------------------------------------------------------------------
# sanitize
# ---------------------------------------------------------------------------

def test_sanitize_scalars_and_arrays():
    out = sanitize(
        {
            "i": np.int64(4),
            "x": np.float64(0.5),
            "z": 1.0 + 2.0j,
            "v": np.arange(3.0),
            "M": np.eye(2, dtype=np.complex128),
            "inf": float("inf"),
        }
    )
    assert out["i"] == 4 and isinstance(out["i"], int)
    assert out["x"] == 0.5 and isinstance(out["x"], float)
    assert out["z"] == [1.0, 2.0]
    assert out["v"] == [0.0, 1.0, 2.0]
    assert out["M"]["shape"] == [2, 2]
    assert out["inf"] == "inf"
    canonical_json(out)  # must be renderable


def test_sanitize_dataclasses_and_rejects_unknown():
    from polydom.cone import FactorPurity

    fp = FactorPurity(factor=1, pure=True, decay=[1.0, 0.0], crossed_at=1, fitted_rate=None)
    out = sanitize(fp)
    assert out["factor"] == 1 and out["pure"] is True
    with pytest.raises(TypeError):
        sanitize(object())
