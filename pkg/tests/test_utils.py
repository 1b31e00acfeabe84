from mpcert.Utilities.utils import (get_problem, check_finite, fnv1a_64, derive_seed, rng_from_seed, worker_count,
                                    parallel_map, load_config, CostPolynomial, as_index_tuple, FNV_OFFSET)
import numpy as np
import pytest
#----------------- Problem loader tests ------------------

@pytest.mark.parametrize("which, dims", [
    ("ex1", (2, 3, 2)),
    ("ex2", (2, 2, 2)),
    ("parameter_free", (2, 3, 2)),
])
def test_get_problem(which, dims):
    P = get_problem(which)
    assert (P.n, P.m, P.n_theta) == dims

def test_get_problem_pendulum_horizon():
    assert get_problem("pendulum", horizon=3).n == 3

def test_get_problem_unknown():
    with pytest.raises(NotImplementedError):
        get_problem("unknown_problem")

#----------------- Input checks ------------------

@pytest.mark.parametrize("x", [
    [1, 2, np.nan, 4],
    [1, np.inf, 10],
    [-np.inf],
])
def test_check_finite_rejects(x):
    with pytest.raises(ValueError):
        check_finite(x, "x")

def test_check_finite_dimension():
    assert check_finite([1, 2], "x", ndim=1).dtype == float
    with pytest.raises(ValueError):
        check_finite([[1, 2]], "x", ndim=1)
    with pytest.raises(ValueError):
        check_finite(["a", "b"], "x")

def test_as_index_tuple():
    assert as_index_tuple(np.array([2, 0])) == (2, 0)
    assert all(type(i) is int for i in as_index_tuple(np.array([1, 3])))

#----------------- Hashing and seeds ------------------

def test_fnv1a_vectors():
    assert fnv1a_64(b"") == FNV_OFFSET
    assert fnv1a_64(b"a") == 0xaf63dc4c8601ec8c
    assert fnv1a_64(b"b", fnv1a_64(b"a")) == fnv1a_64(b"ab")

def test_derive_seed():
    assert derive_seed(0, "samples") == derive_seed(0, "samples")
    assert derive_seed(0, "samples") != derive_seed(1, "samples")
    assert derive_seed(0, "samples", 3) != derive_seed(0, "samples", 4)
    assert 0 <= derive_seed(-5, "x") < 2**64

def test_rng_from_seed():
    a = rng_from_seed(7, "baseline").uniform(size=5)
    b = rng_from_seed(7, "baseline").uniform(size=5)
    np.testing.assert_array_equal(a, b)
    assert isinstance(rng_from_seed(7).bit_generator, np.random.PCG64)

#----------------- Workers ------------------

def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("MPCERT_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("MPCERT_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("MPCERT_THREADS", "0")
    assert worker_count() >= 1

def test_worker_count_invalid(monkeypatch):
    monkeypatch.setenv("MPCERT_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()
    with pytest.raises(ValueError):
        worker_count(-1)

@pytest.mark.parametrize("workers", [1, 2])
def test_parallel_map_order(workers):
    items = list(range(-20, 20))
    assert parallel_map(abs, items, workers) == [abs(i) for i in items]

#----------------- Configuration ------------------

def test_load_config_shipped():
    defaults = load_config("defaults")
    assert set(defaults) == {"solver", "certification", "validation", "wcet", "baseline"}
    assert defaults["solver"]["k_max"] == 100
    assert load_config("defaults.yaml") == defaults

def test_load_config_missing():
    with pytest.raises(ValueError):
        load_config("no_such_config")

def test_load_config_not_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        load_config(str(path))

def test_cost_tag():
    profiles = load_config("profiles")
    assert isinstance(profiles["unit"]["default"], CostPolynomial)
    assert profiles["unit"]["default"].evaluate(4, 2, 3) == 1

def test_cost_polynomial():
    p = CostPolynomial(terms=((3, 1, 0, 0), (1, 0, 1, 1)), scale=2)
    assert p.evaluate(2, 3, 4) == (6 + 12) // 2
    assert (p + CostPolynomial.constant(5)).evaluate(2, 3, 4) == 14
    assert p.to_dict() == {"scale": 2, "terms": [[3, 1, 0, 0], [1, 0, 1, 1]]}

@pytest.mark.parametrize("terms, scale", [
    (((1, 0, 0),), 1),
    (((-1, 0, 0, 0),), 1),
    (((1, 0, 0, 0),), 0),
])
def test_cost_polynomial_invalid(terms, scale):
    with pytest.raises(ValueError):
        CostPolynomial(terms=terms, scale=scale)
