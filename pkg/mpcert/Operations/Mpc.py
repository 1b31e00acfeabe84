import numpy as np
from dataclasses import dataclass
from numpy.typing import ArrayLike
from typing import Optional
from scipy.linalg import block_diag, solve_discrete_are
from scipy.signal import cont2discrete
from loguru import logger
from .Geometry import Polyhedron
from .Mpqp import MpQP, ToDual, pivot_cholesky, PD_TOL
from .Solver import SolverConfig, Solve
from .Wcet import CostModel, TraceCost
from ..Utilities.utils import check_finite, load_config


@dataclass(frozen=True, eq=False)
class LtiModel:
    A: np.ndarray
    B: np.ndarray
    Ts: float = 1.0

    def __post_init__(self):
        A = check_finite(self.A, "A", ndim=2)
        B = check_finite(self.B, "B", ndim=2)
        if A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError(f"A must be square and nonempty, got shape {A.shape}")
        if B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise ValueError(f"B must have {A.shape[0]} rows and at least one column, got shape {B.shape}")
        if not self.Ts > 0:
            raise ValueError(f"Sample time must be positive, got {self.Ts}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_s(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class MpcSpec:
    """
    Tracking MPC over horizon N with parameter theta = [x0; r] (reference of state dimension).
    """
    model: LtiModel
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    QN: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    r_lo: np.ndarray
    r_hi: np.ndarray

    def __post_init__(self):
        ns, nu = self.model.n_s, self.model.n_u
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")
        shapes = {"Q": (ns, ns), "R": (nu, nu), "QN": (ns, ns), "u_lo": (nu,), "u_hi": (nu,),
                  "x_lo": (ns,), "x_hi": (ns,), "r_lo": (ns,), "r_hi": (ns,)}
        for name, shape in shapes.items():
            value = check_finite(getattr(self, name), name)
            if value.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {value.shape}")
            object.__setattr__(self, name, value)
        for name in ("Q", "QN"):
            W = getattr(self, name)
            if np.max(np.abs(W - W.T)) > 1e-12 * max(1.0, np.max(np.abs(W))) or np.min(np.linalg.eigvalsh(W)) < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if pivot_cholesky(0.5 * (self.R + self.R.T), PD_TOL)[1] is not None:
            raise ValueError("R must be positive definite")
        if np.any(self.u_lo >= self.u_hi):
            raise ValueError("Input bounds must satisfy u_lo < u_hi")
        if np.any(self.x_lo > self.x_hi) or np.any(self.r_lo > self.r_hi):
            raise ValueError("Parameter box lower bounds exceed upper bounds")

    @property
    def n_theta(self) -> int:
        return 2 * self.model.n_s


def prediction_matrices(model: LtiModel, N: int) -> tuple:
    """
    Phi = [A; A^2; ...; A^N] and block lower-triangular Gamma with block (i, j) = A^(i-j) B,
    so that [x_1; ...; x_N] = Phi x0 + Gamma [u_0; ...; u_{N-1}].
    """
    ns, nu = model.n_s, model.n_u
    powers = [np.eye(ns)]
    for _ in range(N):
        powers.append(model.A @ powers[-1])
    Phi = np.vstack(powers[1:])
    Gamma = np.zeros((N * ns, N * nu))
    for i in range(N):
        for j in range(i + 1):
            Gamma[i * ns:(i + 1) * ns, j * nu:(j + 1) * nu] = powers[i - j] @ model.B
    return Phi, Gamma


def Condense(S: MpcSpec) -> MpQP:
    """
    Condensed QP in the input sequence U:

        min 0.5 U'HU + f(theta)'U  s.t.  u_lo <= u_k <= u_hi,

    with H = Gamma' Qbar Gamma + Rbar and f(theta) = Gamma' Qbar (Phi x0 - T r), where
    Qbar = blockdiag(Q, ..., Q, QN), Rbar = blockdiag(R, ..., R) and T stacks N identities.
    Constraints are ordered as all upper bounds, then all lower bounds.
    """
    N, ns, nu = S.horizon, S.model.n_s, S.model.n_u
    Phi, Gamma = prediction_matrices(S.model, N)
    Qbar = block_diag(*([S.Q] * (N - 1) + [S.QN]))
    Rbar = block_diag(*([S.R] * N))
    T = np.kron(np.ones((N, 1)), np.eye(ns))
    GQ = Gamma.T @ Qbar
    H = GQ @ Gamma + Rbar
    H = 0.5 * (H + H.T)
    F = np.hstack([GQ @ Phi, -GQ @ T])
    n = N * nu
    A = np.vstack([np.eye(n), -np.eye(n)])
    b0 = np.concatenate([np.tile(S.u_hi, N), -np.tile(S.u_lo, N)])
    Theta0 = Polyhedron.from_box(np.concatenate([S.x_lo, S.r_lo]), np.concatenate([S.x_hi, S.r_hi]))
    return MpQP(H=H, f0=np.zeros(n), F=F, A=A, b0=b0, B=np.zeros((2 * n, S.n_theta)), Theta0=Theta0)


def cartpole(m: float, M: float, L: float, g: float, d: float, b: int = 1) -> tuple:
    """Continuous-time cart-pole linearisation (x, dx, angle, dangle), force input."""
    A = np.array([[0.0, 1.0, 0.0, 0.0],
                  [0.0, -d / M, b * m * g / M, 0.0],
                  [0.0, 0.0, 0.0, 1.0],
                  [0.0, -b * d / (M * L), -b * (m + M) * g / (M * L), 0.0]])
    B = np.array([[0.0], [1.0 / M], [0.0], [b / (M * L)]])
    return A, B


def PendulumExample(horizon: int = 10, configPath: Optional[str] = None) -> MpcSpec:
    """
    Inverted pendulum on a cart, zero-order-hold discretised, with the MPC tuning and
    parameter boxes of the pendulum configuration (or the file at configPath).
    """
    if int(horizon) != horizon or horizon < 1:
        raise ValueError(f"horizon must be a positive integer, got {horizon}")
    config = load_config(configPath or "pendulum")
    plant, mpc, box = config["plant"], config["mpc"], config["Theta0"]
    Ac, Bc = cartpole(plant["m"], plant["M"], plant["L"], plant["g"], plant["d"], plant.get("b", 1))
    Ad, Bd, _, _, _ = cont2discrete((Ac, Bc, np.eye(4), np.zeros((4, 1))), plant["Ts"], method="zoh")
    model = LtiModel(Ad, Bd, plant["Ts"])
    Q = np.diag(mpc["Q"])
    R = np.diag(mpc["R"])
    if mpc.get("terminal", "dare") == "dare":
        QN = solve_discrete_are(Ad, Bd, Q, R)
        QN = 0.5 * (QN + QN.T)
    else:
        QN = np.diag(mpc["terminal"])
    uMax = np.atleast_1d(np.asarray(mpc["u_max"], dtype=float))
    xMax = np.asarray(box["x_max"], dtype=float)
    rMax = np.asarray(box["r_max"], dtype=float)
    return MpcSpec(model=model, horizon=int(horizon), Q=Q, R=R, QN=QN, u_lo=-uMax, u_hi=uMax,
                   x_lo=-xMax, x_hi=xMax, r_lo=-rMax, r_hi=rMax)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    thetas: np.ndarray
    iterations: tuple
    costs: tuple
    statuses: tuple

    @property
    def flagged(self) -> list:
        """Steps whose solve did not return an optimal point."""
        return [k for k, s in enumerate(self.statuses) if s != "optimal"]


def ClosedLoopSim(S: MpcSpec, x0: ArrayLike, steps: int, cfg: SolverConfig = SolverConfig(),
                  r: Optional[ArrayLike] = None, cm: Optional[CostModel] = None) -> Trajectory:
    """
    Receding-horizon simulation on the linear model with cold-started solves.

    Each step solves the condensed QP at theta = [x; r], applies the first input and
    propagates the model. Steps without an optimal solve apply zero input and are flagged.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    ns, nu = S.model.n_s, S.model.n_u
    x = check_finite(x0, "x0", ndim=1).copy()
    r = np.zeros(ns) if r is None else check_finite(r, "r", ndim=1)
    if x.size != ns or r.size != ns:
        raise ValueError(f"x0 and r must have {ns} entries")
    cm = cm or CostModel.load("unit")
    Dd = ToDual(Condense(S))
    states, inputs, thetas = [x.copy()], [], []
    iterations, costs, statuses = [], [], []
    for k in range(steps):
        theta = np.concatenate([x, r])
        res = Solve(Dd, theta, cfg)
        u = res.x[:nu] if res.status == "optimal" else np.zeros(nu)
        if res.status != "optimal":
            logger.warning(f"Step {k}: solver returned {res.status}")
        x = S.model.A @ x + S.model.B @ u
        thetas.append(theta)
        inputs.append(u)
        states.append(x.copy())
        iterations.append(res.iterations)
        costs.append(TraceCost(res.trace, cm))
        statuses.append(res.status)
    return Trajectory(states=np.array(states), inputs=np.array(inputs), thetas=np.array(thetas),
                      iterations=tuple(iterations), costs=tuple(costs), statuses=tuple(statuses))
