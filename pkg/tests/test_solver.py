from mpcert.Operations.Solver import (Solve, SolverConfig, ArgminOrderIndependent, ArgminOrderDependent,
                                      RatioTestRemove, KKTOracle, TraceHash, ExecutionTrace, TraceEvent, Block,
                                      block_counts)
from mpcert.Operations.Mpqp import ToDual, RandomMpQP
from mpcert.Utilities.utils import get_problem, FNV_OFFSET
import numpy as np
import pytest


@pytest.fixture(scope="module")
def ex1():
    return ToDual(get_problem("ex1"))


@pytest.fixture(scope="module")
def ex2():
    return ToDual(get_problem("ex2"))

#----------------- Configuration tests ------------------

@pytest.mark.parametrize("kwargs", [
    {"add_rule": "steepest"},
    {"remove_rule": "largest"},
    {"k_max": 0},
])
def test_config_invalid(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)

def test_config_to_dict():
    d = SolverConfig(W0=[1, 0]).to_dict()
    assert d == {"add_rule": "dantzig", "remove_rule": "classic_blocking", "k_max": 100, "W0": [1, 0], "lam0": None}

#----------------- Solve tests ------------------

def test_solve_unconstrained(ex1):
    res = Solve(ex1, [0.0, 0.0])
    assert res.status == "optimal"
    assert res.W == ()
    assert res.sequence == ((),)
    assert res.iterations == 1
    np.testing.assert_allclose(res.lam, 0.0)
    np.testing.assert_allclose(res.x, [0.0, 0.0])

def test_solve_one_active(ex1):
    res = Solve(ex1, [2.0, 0.0])
    assert res.status == "optimal"
    assert res.W == (0,)
    assert res.sequence == ((), (0,))
    np.testing.assert_allclose(res.lam, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(res.x, [1.0, 0.0])

def test_solve_two_active(ex1):
    res = Solve(ex1, [2.0, 2.0])
    assert res.status == "optimal"
    assert res.sequence == ((), (0,), (0, 1))
    np.testing.assert_allclose(res.x, [1.0, 1.0])

def test_solve_bland_rule(ex1):
    res = Solve(ex1, [0.0, 2.0], SolverConfig(add_rule="bland"))
    assert res.status == "optimal"
    assert res.W == (1,)

@pytest.mark.parametrize("theta, sequence", [
    ([0.2, 0.0], ((), (1,), (1, 0))),
    ([-1.0, 1.0], ((), (1,), (1, 0))),
    ([2.0, 0.0], ((), (0,), (0, 1))),
    ([0.5, -2.0], ((), (0,), (0, 1))),
])
def test_solve_infeasible(ex2, theta, sequence):
    res = Solve(ex2, theta)
    assert res.status == "infeasible"
    assert res.x is None
    assert res.sequence == sequence
    assert res.trace.events[-1].block == Block.TERMINATE_INF

def test_solve_iteration_cap(ex1):
    res = Solve(ex1, [2.0, 2.0], SolverConfig(k_max=2))
    assert res.status == "iter_cap"
    assert res.iterations == 2
    assert len(res.sequence) == 3
    assert res.sequence[-1] == (0, 1)

def test_solve_warm_start(ex1):
    res = Solve(ex1, [2.0, 0.0], SolverConfig(W0=(0,), lam0=(0.0, 0.0, 0.0)))
    assert res.status == "optimal"
    assert res.sequence == ((0,),)

def test_solve_invalid_theta(ex1):
    with pytest.raises(ValueError):
        Solve(ex1, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        Solve(ex1, [np.nan, 0.0])

def test_solve_trace_blocks(ex1):
    blocks = [e.block for e in Solve(ex1, [0.0, 0.0]).trace]
    assert blocks == [Block.SING_CHECK, Block.LINSYS, Block.LAM_CHECK, Block.MU_COMP, Block.MU_CHECK,
                      Block.TERMINATE_OPT]

def test_block_counts():
    assert block_counts(Block.MU_COMP, 0, 2, 3) == (12, 9)
    assert block_counts(Block.TERMINATE_OPT, 4, 2, 3) == (0, 1)
    assert block_counts(Block.ADD, 1, 2, 3) == (7, 5)

#----------------- Oracle equivalence ------------------

@pytest.mark.parametrize("theta, x, W", [
    ([2.0, 2.0], [1.0, 1.0], (0, 1)),
    ([0.0, 0.0], [0.0, 0.0], ()),
])
def test_kkt_oracle_ex1(theta, x, W):
    res = KKTOracle(get_problem("ex1"), theta)
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, x, atol=1e-12)
    assert res.W == W

def test_kkt_oracle_infeasible():
    assert KKTOracle(get_problem("ex2"), [0.3, -2.0]).status == "infeasible"

def test_kkt_oracle_size_limit():
    with pytest.raises(ValueError):
        KKTOracle(RandomMpQP(2, 21, 1, seed=0), [0.0])

def test_solver_matches_oracle():
    # random problems, some of them infeasible on parts of Theta0
    rng = np.random.default_rng(2024)
    for trial in range(150):
        n, m, nTheta = int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(1, 4))
        P = RandomMpQP(n, m, nTheta, seed=trial, feasible=bool(trial % 3))
        theta = rng.uniform(-1, 1, nTheta)
        res = Solve(ToDual(P), theta)
        ref = KKTOracle(P, theta)
        assert res.status == ref.status, f"trial {trial}"
        if ref.status == "optimal":
            np.testing.assert_allclose(res.x, ref.x, atol=1e-6)

#----------------- Argmin kernel tests ------------------

@pytest.mark.parametrize("kernel", [ArgminOrderIndependent, ArgminOrderDependent])
@pytest.mark.parametrize("v, expected", [
    ([3.0, -1.0, -1.0], (-1.0, 1)),
    ([5.0], (5.0, 0)),
    ([2.0, 2.0, 2.0], (2.0, 0)),
    ([0.0, 0.0, 0.0], (0.0, 0)),
])
def test_argmin_examples(kernel, v, expected):
    assert kernel(v) == expected

@pytest.mark.parametrize("kernel", [ArgminOrderIndependent, ArgminOrderDependent])
def test_argmin_empty(kernel):
    with pytest.raises(ValueError):
        kernel([])

def test_argmin_kernels_agree():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        v = rng.integers(-3, 4, size=int(rng.integers(1, 12))).astype(float)
        a = ArgminOrderIndependent(v)
        b = ArgminOrderDependent(v)
        assert a == b
        assert (a[1], a[0]) == (int(np.argmin(v)), float(v.min()))

def test_argmin_ops_data_independent():
    rng = np.random.default_rng(1)
    for size in (1, 2, 7, 20):
        ops = {ArgminOrderIndependent(rng.standard_normal(size), returnOps=True)[2] for _ in range(50)}
        assert len(ops) == 1
    # the branching kernel's count follows the data
    assert ArgminOrderDependent([3.0, 2.0, 1.0], returnOps=True)[2] != ArgminOrderDependent([1.0, 2.0, 3.0], returnOps=True)[2]

#----------------- Ratio test tests ------------------

@pytest.mark.parametrize("lam, lamStar, expected", [
    ([1.0, 3.0], [-1.0, 1.0], (0, 0.5)),
    ([0.0, 2.0], [-1.0, -1.0], (0, 0.0)),
    ([1.0], [-1.0], (0, 0.5)),
])
def test_ratio_test_classic(lam, lamStar, expected):
    pos, alpha = RatioTestRemove(lam, lamStar)
    assert pos == expected[0]
    assert alpha == pytest.approx(expected[1])

def test_ratio_test_paper_literal_single():
    assert RatioTestRemove([1.0], [-1.0], rule="paper_literal") == (0, 0.5)

@pytest.mark.parametrize("lam, lamStar", [
    ([1.0, 1.0], [0.0, 1.0]),
    ([-1.0, 1.0], [-1.0, 1.0]),
    ([1.0], [-1.0, 1.0]),
])
def test_ratio_test_invalid(lam, lamStar):
    with pytest.raises(ValueError):
        RatioTestRemove(lam, lamStar)

#----------------- Trace hash tests ------------------

def test_trace_hash_empty():
    assert TraceHash(ExecutionTrace()) == FNV_OFFSET == 0xcbf29ce484222325

def test_trace_hash_equal_and_distinct(ex1):
    a = Solve(ex1, [0.1, 0.2]).trace
    b = Solve(ex1, [-0.3, 0.4]).trace
    assert TraceHash(a) == TraceHash(b)
    events = list(a.events)
    events[-1] = TraceEvent(events[-1].k, Block.TERMINATE_INF, events[-1].size, events[-1].flops, events[-1].mem)
    assert TraceHash(ExecutionTrace(tuple(events), a.n, a.m)) != TraceHash(a)
