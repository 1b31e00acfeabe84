from mpcert.cli import main, EXIT_OK, EXIT_INVALID, EXIT_UNRESOLVED, EXIT_MISMATCH
from mpcert.Utilities.serialization import write_json, read_json, problem_to_dict
from mpcert.Utilities.utils import get_problem
import pytest


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    problem = root / "ex1.json"
    write_json(problem_to_dict(get_problem("ex1")), problem)
    regions = root / "regions.json"
    assert main(["certify", str(problem), "--out", str(regions)]) == EXIT_OK
    return root, problem, regions


def _swap_first_regions(src, dst):
    data = read_json(src)
    by_seq = {tuple(map(tuple, r["sequence"])): r for r in data["regions"]}
    a, b = by_seq[((),)], by_seq[((), (0,))]
    a["sequence"], b["sequence"] = b["sequence"], a["sequence"]
    a["iterations"], b["iterations"] = b["iterations"], a["iterations"]
    write_json(data, dst)


def _small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text("baseline:\n  samples: 200\nvalidation:\n  samples: 200\n")
    return path

#----------------- Problem construction ------------------

@pytest.mark.parametrize("horizon, line", [
    ("10", "n=10 m=20 n_theta=8"),
    ("1", "n=1 m=2 n_theta=8"),
])
def test_mpc_pendulum(tmp_path, capsys, horizon, line):
    out = tmp_path / "pendulum.json"
    assert main(["mpc", "pendulum", "--horizon", horizon, "--out", str(out)]) == EXIT_OK
    assert line in capsys.readouterr().out
    assert read_json(out)["n_theta"] == 8

def test_mpc_pendulum_slice(tmp_path, capsys):
    out = tmp_path / "slice.json"
    args = ["mpc", "pendulum", "--horizon", "2", "--slice-dims", "2,3", "--fix", "0=0.1", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert "n=2 m=4 n_theta=2" in capsys.readouterr().out

def test_mpc_simulate(tmp_path):
    out = tmp_path / "trajectory.csv"
    args = ["mpc", "simulate", "--horizon", "2", "--steps", "5", "--x0", "0,0,0.01,0", "--out", str(out)]
    assert main(args) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "step,x_0,x_1,x_2,x_3,u_0,iterations,cost"
    assert len(lines) == 6

def test_mpc_invalid_horizon(tmp_path, capsys):
    assert main(["mpc", "pendulum", "--horizon", "0", "--out", str(tmp_path / "p.json")]) == EXIT_INVALID
    assert "horizon" in capsys.readouterr().err

#----------------- Solve ------------------

def test_solve(workspace, capsys):
    _, problem, _ = workspace
    assert main(["solve", str(problem), "--theta", "0,0"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "n=2 m=3 n_theta=2"
    assert "status: optimal" in out
    assert "W*: []" in out
    assert "iterations: 1" in out
    assert "cost: 6" in out

def test_solve_flop_profile(workspace, capsys):
    _, problem, _ = workspace
    assert main(["solve", str(problem), "--theta", "0,0", "--profile", "flop"]) == EXIT_OK
    assert "cost: 28" in capsys.readouterr().out.splitlines()

def test_solve_wrong_theta(workspace, capsys):
    _, problem, _ = workspace
    assert main(["solve", str(problem), "--theta", "0,0,0"]) == EXIT_INVALID
    assert "--theta" in capsys.readouterr().err

def test_solve_missing_file(tmp_path):
    assert main(["solve", str(tmp_path / "missing.json"), "--theta", "0,0"]) == EXIT_INVALID

#----------------- Certify, WCET, validate ------------------

def test_certify_echo(workspace, tmp_path, capsys):
    _, problem, _ = workspace
    assert main(["certify", str(problem), "--out", str(tmp_path / "r.json"), "--seed", "3"]) == EXIT_OK
    assert "seed=3" in capsys.readouterr().out
    assert read_json(tmp_path / "r.json")["seed"] == 3

def test_wcet_prune_invariant(workspace, tmp_path):
    _, problem, regions = workspace
    pruned, full = tmp_path / "pruned.json", tmp_path / "full.json"
    assert main(["wcet", str(problem), "--regions", str(regions), "--out", str(pruned)]) == EXIT_OK
    assert main(["wcet", str(problem), "--regions", str(regions), "--no-prune", "--out", str(full)]) == EXIT_OK
    a, b = read_json(pruned), read_json(full)
    assert a["worst_cost"] == b["worst_cost"]
    assert a["status"] == "exact"
    assert not b["pruned"]

def test_wcet_with_baseline(workspace, tmp_path):
    _, problem, regions = workspace
    out = tmp_path / "report.json"
    args = ["wcet", str(problem), "--regions", str(regions), "--baseline", "--out", str(out),
            "--config", str(_small_config(tmp_path))]
    assert main(args) == EXIT_OK
    report = read_json(out)
    assert report["baseline"]["max_cost"] <= report["worst_cost"]

def test_wcet_unresolved_exit(workspace, tmp_path, capsys):
    _, problem, regions = workspace
    data = read_json(regions)
    data["regions"][0]["status"] = "unresolved"
    broken = tmp_path / "unresolved.json"
    write_json(data, broken)
    assert main(["wcet", str(problem), "--regions", str(broken), "--out", str(tmp_path / "w.json")]) == EXIT_UNRESOLVED
    assert "lower bound" in capsys.readouterr().err
    assert read_json(tmp_path / "w.json")["status"] == "lower_bound"

def test_wcet_wrong_problem(workspace, tmp_path):
    _, _, regions = workspace
    other = tmp_path / "free.json"
    write_json(problem_to_dict(get_problem("parameter_free")), other)
    assert main(["wcet", str(other), "--regions", str(regions), "--out", str(tmp_path / "w.json")]) == EXIT_INVALID

def test_validate_ok(workspace, tmp_path, capsys):
    _, problem, regions = workspace
    out = tmp_path / "validation.json"
    args = ["validate", str(problem), "--regions", str(regions), "--samples", "300", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert "samples=300" in capsys.readouterr().out
    assert read_json(out)["counterexamples"] == []

def test_validate_corrupted(workspace, tmp_path, capsys):
    _, problem, regions = workspace
    corrupted = tmp_path / "corrupted.json"
    _swap_first_regions(regions, corrupted)
    args = ["validate", str(problem), "--regions", str(corrupted), "--samples", "400", "--show", "2"]
    assert main(args) == EXIT_MISMATCH
    assert "counterexample" in capsys.readouterr().err

def test_validate_bad_samples(workspace):
    _, problem, regions = workspace
    assert main(["validate", str(problem), "--regions", str(regions), "--samples", "0"]) == EXIT_INVALID

def test_regions_solver_mismatch(workspace, tmp_path, capsys):
    _, problem, regions = workspace
    bland = tmp_path / "bland.json"
    assert main(["certify", str(problem), "--add-rule", "bland", "--out", str(bland)]) == EXIT_OK
    capsys.readouterr()
    out = str(tmp_path / "w.json")
    assert main(["wcet", str(problem), "--regions", str(bland), "--out", out]) == EXIT_INVALID
    assert "certified with solver" in capsys.readouterr().err
    assert main(["wcet", str(problem), "--regions", str(bland), "--add-rule", "bland", "--out", out]) == EXIT_OK
    assert main(["validate", str(problem), "--regions", str(regions), "--kmax", "5", "--samples", "50"]) == EXIT_INVALID
    for command in ("archetypes", "wallclock"):
        args = [command, str(problem), "--regions", str(bland), "--out", str(tmp_path / f"{command}.csv")]
        assert main(args) == EXIT_INVALID

#----------------- Tables and maps ------------------

def test_baseline_histogram(workspace, tmp_path):
    _, problem, _ = workspace
    out = tmp_path / "hist.csv"
    assert main(["baseline", str(problem), "--samples", "100", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "cost,count"
    assert sum(int(line.split(",")[1]) for line in lines[1:]) == 100

def test_slice_grid(workspace, tmp_path):
    _, problem, regions = workspace
    out = tmp_path / "slice.csv"
    args = ["slice", str(problem), "--regions", str(regions), "--dims", "0,1", "--grid", "5", "--out", str(out)]
    assert main(args) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "theta_0,theta_1,region_id,cycles"
    assert len(lines) == 26

def test_slice_bad_dims(workspace, tmp_path):
    _, problem, regions = workspace
    args = ["slice", str(problem), "--regions", str(regions), "--dims", "0,0", "--out", str(tmp_path / "s.csv")]
    assert main(args) == EXIT_INVALID

def test_archetypes(workspace, tmp_path):
    _, problem, regions = workspace
    out = tmp_path / "archetypes.csv"
    assert main(["archetypes", str(problem), "--regions", str(regions), "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "region_id,theta_0,theta_1,cost"
    assert len(lines) > 1

def test_wallclock(workspace, tmp_path):
    _, problem, regions = workspace
    out = tmp_path / "ns.csv"
    assert main(["wallclock", str(problem), "--regions", str(regions), "--repeats", "1", "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[0] == "region_id,ns"

#----------------- Argument errors ------------------

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["solve"],
    ["solve", "p.json", "--theta", "0,0", "--add-rule", "steepest"],
])
def test_bad_arguments(argv):
    assert main(argv) == EXIT_INVALID

def test_help():
    assert main(["--help"]) == EXIT_OK
