from mpcert.Operations.Mpc import (LtiModel, MpcSpec, prediction_matrices, Condense, PendulumExample,
                                   ClosedLoopSim)
from mpcert.Operations.Mpqp import ToDual
from mpcert.Operations.Solver import Solve
from mpcert.Operations.Wcet import Wcet, CostModel
from mpcert.Operations.Geometry import Contains
import numpy as np
import pytest


def _double_integrator(N=3, Q=None, QN=None):
    model = LtiModel(np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[0.5], [1.0]]))
    Q = np.eye(2) if Q is None else Q
    return MpcSpec(model=model, horizon=N, Q=Q, R=np.eye(1), QN=Q if QN is None else QN,
                   u_lo=-np.ones(1), u_hi=np.ones(1), x_lo=-np.ones(2), x_hi=np.ones(2),
                   r_lo=-np.ones(2), r_hi=np.ones(2))

#----------------- Model validation ------------------

def test_lti_model_invalid():
    with pytest.raises(ValueError):
        LtiModel(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        LtiModel(np.eye(2), np.ones((3, 1)))
    with pytest.raises(ValueError):
        LtiModel(np.eye(2), np.ones((2, 1)), Ts=0.0)

@pytest.mark.parametrize("field, value", [
    ("horizon", 0),
    ("R", np.zeros((1, 1))),
    ("Q", np.eye(3)),
    ("u_lo", np.ones(1)),
    ("r_hi", -2.0 * np.ones(2)),
])
def test_mpc_spec_invalid(field, value):
    S = _double_integrator()
    data = {name: getattr(S, name) for name in ("model", "horizon", "Q", "R", "QN", "u_lo", "u_hi",
                                                "x_lo", "x_hi", "r_lo", "r_hi")}
    data[field] = value
    with pytest.raises(ValueError):
        MpcSpec(**data)

#----------------- Condensing ------------------

def test_prediction_matrices():
    S = _double_integrator(N=2)
    Phi, Gamma = prediction_matrices(S.model, 2)
    A, B = S.model.A, S.model.B
    np.testing.assert_allclose(Phi, np.vstack([A, A @ A]))
    np.testing.assert_allclose(Gamma[:2, :1], B)
    np.testing.assert_allclose(Gamma[:2, 1:], 0.0)
    np.testing.assert_allclose(Gamma[2:, :1], A @ B)
    np.testing.assert_allclose(Gamma[2:, 1:], B)

def test_condense_matches_rollout():
    S = _double_integrator(N=3)
    P = Condense(S)
    rng = np.random.default_rng(0)
    x0, r = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    theta = np.concatenate([x0, r])

    def rollout(U):
        x, J = x0.copy(), 0.0
        for k, u in enumerate(U):
            x = S.model.A @ x + S.model.B @ [u]
            W = S.QN if k == len(U) - 1 else S.Q
            J += 0.5 * (x - r) @ W @ (x - r) + 0.5 * u * u
        return J

    def condensed(U):
        return 0.5 * U @ P.H @ U + P.f(theta) @ U

    U1, U2 = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    assert rollout(U1) - rollout(U2) == pytest.approx(condensed(U1) - condensed(U2))

@pytest.mark.parametrize("horizon, dims", [
    (10, (10, 20, 8)),
    (2, (2, 4, 8)),
    (1, (1, 2, 8)),
])
def test_pendulum_dimensions(horizon, dims):
    P = Condense(PendulumExample(horizon))
    assert (P.n, P.m, P.n_theta) == dims

def test_pendulum_invalid_horizon():
    with pytest.raises(ValueError):
        PendulumExample(0)

def test_pendulum_constraints_are_input_bounds():
    P = Condense(PendulumExample(2))
    np.testing.assert_allclose(P.A, np.vstack([np.eye(2), -np.eye(2)]))
    np.testing.assert_allclose(P.b0, 5.0)
    assert not np.any(P.B)

def test_pendulum_config_override(tmp_path):
    path = tmp_path / "light.yaml"
    path.write_text("plant: {m: 0.5, M: 5.0, L: 2.0, g: -10.0, d: 1.0, b: 1, Ts: 0.1}\n"
                    "mpc: {Q: [1.0, 1.0, 10.0, 1.0], R: [2.0], terminal: [1.0, 1.0, 1.0, 1.0], u_max: 3.0}\n"
                    "Theta0: {x_max: [0.1, 0.1, 0.1, 0.1], r_max: [0.0, 0.0, 0.0, 0.0]}\n")
    S = PendulumExample(3, configPath=str(path))
    np.testing.assert_allclose(S.QN, np.eye(4))
    np.testing.assert_allclose(S.u_hi, [3.0])
    np.testing.assert_allclose(S.r_hi, 0.0)

def test_zero_weights_leave_constraints_inactive():
    S = _double_integrator(Q=np.zeros((2, 2)))
    res = Solve(ToDual(Condense(S)), [0.7, -0.4, 0.2, 0.9])
    assert res.status == "optimal"
    assert res.W == ()
    np.testing.assert_allclose(res.x, 0.0, atol=1e-12)

#----------------- Closed loop ------------------

def test_closed_loop_equilibrium():
    S = PendulumExample(2)
    traj = ClosedLoopSim(S, np.zeros(4), 5)
    np.testing.assert_allclose(traj.states, 0.0, atol=1e-14)
    assert traj.iterations == (1,) * 5
    assert not traj.flagged

def test_closed_loop_stabilises():
    S = PendulumExample(2)
    x0 = np.array([0.0, 0.0, 0.02, 0.0])
    traj = ClosedLoopSim(S, x0, 300)
    assert traj.states.shape == (301, 4)
    assert traj.inputs.shape == (300, 1)
    assert np.all(np.abs(traj.inputs) <= 5.0 + 1e-9)
    assert np.linalg.norm(traj.states[-1]) < 0.1 * np.linalg.norm(x0)
    assert not traj.flagged

def test_closed_loop_costs_within_wcet():
    S = PendulumExample(1)
    P = Condense(S)
    cm = CostModel.load("unit")
    report = Wcet(P, cm=cm)
    traj = ClosedLoopSim(S, [0.05, 0.0, 0.02, 0.0], 40, cm=cm)
    for theta, cost in zip(traj.thetas, traj.costs):
        if Contains(P.Theta0, theta) != "outside":
            assert cost <= report.worst_cost

def test_closed_loop_invalid():
    S = PendulumExample(1)
    with pytest.raises(ValueError):
        ClosedLoopSim(S, np.zeros(4), 0)
    with pytest.raises(ValueError):
        ClosedLoopSim(S, np.zeros(3), 5)
