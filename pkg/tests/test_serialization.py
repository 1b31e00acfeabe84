from mpcert.Utilities.serialization import (write_json, read_json, write_csv, problem_to_dict, problem_from_dict,
                                            spec_to_dict, spec_from_dict, cert_to_dict, cert_from_dict, read_cert,
                                            report_to_dict, histogram_rows, FORMAT_REGIONS)
from mpcert.Operations.Certification import Certify
from mpcert.Operations.Geometry import Polyhedron, Contains
from mpcert.Operations.Mpqp import MpQP, ToDual, RestrictParameters, RandomMpQP
from mpcert.Operations.Mpc import PendulumExample
from mpcert.Operations.Wcet import Wcet
from mpcert.Utilities.utils import get_problem
import numpy as np
import pytest


@pytest.fixture(scope="module")
def ex1_cert():
    return Certify(ToDual(get_problem("ex1")))

#----------------- Problem files ------------------

@pytest.mark.parametrize("which", ["ex1", "ex2", "parameter_free"])
def test_problem_roundtrip(which):
    P = get_problem(which)
    Q = problem_from_dict(problem_to_dict(P))
    assert Q.digest() == P.digest()
    assert "box" in problem_to_dict(P)["Theta0"]

def test_problem_halfspace_theta0(tmp_path):
    triangle = Polyhedron([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0])
    P = MpQP(H=np.eye(2), f0=np.zeros(2), F=-np.eye(2), A=np.eye(2), b0=np.ones(2), B=np.zeros((2, 2)),
             Theta0=triangle)
    path = tmp_path / "problem.json"
    write_json(problem_to_dict(P), path)
    data = read_json(path)
    assert "halfspaces" in data["Theta0"]
    assert problem_from_dict(data).digest() == P.digest()

def test_problem_missing_field():
    data = problem_to_dict(get_problem("ex1"))
    del data["B"]
    with pytest.raises(ValueError):
        problem_from_dict(data)

def test_problem_bad_theta0():
    data = problem_to_dict(get_problem("ex1"))
    data["Theta0"] = {"ellipse": {}}
    with pytest.raises(ValueError):
        problem_from_dict(data)

def test_spec_roundtrip():
    S = PendulumExample(3)
    T = spec_from_dict(spec_to_dict(S))
    assert T.horizon == 3
    for name in ("Q", "R", "QN", "u_lo", "u_hi", "x_lo", "x_hi", "r_lo", "r_hi"):
        np.testing.assert_array_equal(getattr(T, name), getattr(S, name))
    np.testing.assert_array_equal(T.model.A, S.model.A)

#----------------- Regions files ------------------

def test_cert_file_byte_stable(ex1_cert, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    write_json(cert_to_dict(ex1_cert), first)
    write_json(cert_to_dict(read_cert(first)), second)
    assert first.read_bytes() == second.read_bytes()

def test_cert_file_contents(ex1_cert, tmp_path):
    path = tmp_path / "regions.json"
    write_json(cert_to_dict(ex1_cert), path)
    data = read_json(path)
    assert data["format"] == FORMAT_REGIONS
    assert data["version"] == 1
    assert "seconds" not in data["statistics"]
    assert [r["id"] for r in data["regions"]] == list(range(len(ex1_cert.records)))
    assert data["regions"][0]["branch_path"][0][0] in ("opt", "add", "rem", "keep", "flip", "inf", "srem")

def test_cert_reload_preserves_membership(ex1_cert):
    C = cert_from_dict(cert_to_dict(ex1_cert))
    assert C.problem_digest == ex1_cert.problem_digest
    for old, new in zip(ex1_cert.records, C.records):
        assert new.sequence == old.sequence
        assert new.status == old.status
        assert Contains(new.region, old.archetype) == "inside"

def test_cert_random_problem_roundtrip():
    for seed in range(6):
        C = Certify(ToDual(RandomMpQP(3, 5, 2, seed=seed)))
        data = cert_to_dict(C)
        assert cert_to_dict(cert_from_dict(data)) == data

def test_cert_slice_roundtrip():
    P = RestrictParameters(get_problem("pendulum", horizon=1), (2, 3), {})
    C = Certify(ToDual(P))
    data = cert_to_dict(C)
    assert cert_to_dict(cert_from_dict(data)) == data

@pytest.mark.parametrize("key, value", [("format", "something-else"), ("version", 2)])
def test_cert_bad_header(ex1_cert, key, value):
    data = cert_to_dict(ex1_cert)
    data[key] = value
    with pytest.raises(ValueError):
        cert_from_dict(data)

def test_read_json_invalid(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"format\": ")
    with pytest.raises(ValueError):
        read_json(path)

#----------------- Reports and CSV ------------------

def test_report_roundtrip(ex1_cert, tmp_path):
    report = Wcet(get_problem("ex1"), certificate=ex1_cert)
    data = report_to_dict(report)
    path = tmp_path / "report.json"
    write_json(data, path)
    assert read_json(path) == data
    assert data["worst_cost"] == report.worst_cost
    assert [r["region_id"] for r in data["region_costs"]] == sorted(report.region_costs)

def test_write_csv(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv(path, ["region_id", "theta_k", "cost"], [(0, 0.1, 6), (1, np.float64(2.5), 12)])
    assert path.read_text() == "region_id,theta_k,cost\n0,0.1,6\n1,2.5,12\n"

def test_histogram_rows():
    assert histogram_rows({12: 3, 6: 10}) == [(6, 10), (12, 3)]
