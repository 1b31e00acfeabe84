import struct
import numpy as np
from enum import IntEnum
from dataclasses import dataclass
from itertools import combinations
from numpy.typing import ArrayLike
from typing import NamedTuple, Optional
from numba import njit
from loguru import logger
from .Geometry import Polyhedron, SolveLP
from .Mpqp import (DualData, MpQP, Gram, AffineLambdaMap, AffineMuMap, NullDirection,
                   RecoverPrimal)
from ..Utilities.utils import check_finite, fnv1a_64, load_config, as_index_tuple, FNV_OFFSET

ADD_RULES = ("dantzig", "bland")
REMOVE_RULES = ("classic_blocking", "paper_literal")


class Block(IntEnum):
    SING_CHECK = 1
    LINSYS = 2
    LAM_CHECK = 3
    MU_COMP = 4
    MU_CHECK = 5
    ADD = 6
    REMOVE_RATIO = 7
    SING_DIR = 8
    P_CHECK = 9
    SING_REMOVE = 10
    TERMINATE_OPT = 11
    TERMINATE_INF = 12


def load_block_table(which: str = "blocks") -> dict:
    """Per-block (flops, mem) cost polynomials keyed by Block."""
    config = load_config(which)
    table = {}
    for block in Block:
        if block.name not in config:
            raise ValueError(f"Block table {which} has no entry for {block.name}")
        entry = config[block.name]
        table[block] = (entry["flops"], entry["mem"])
    return table

BLOCK_TABLE = load_block_table()


def block_counts(block: Block, s: int, n: int, m: int) -> tuple:
    flops, mem = BLOCK_TABLE[block]
    return flops.evaluate(s, n, m), mem.evaluate(s, n, m)


class TraceEvent(NamedTuple):
    k: int
    block: Block
    size: int
    flops: int
    mem: int


@dataclass(frozen=True)
class ExecutionTrace:
    events: tuple = ()
    n: int = 0
    m: int = 0

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


@dataclass(frozen=True)
class SolverConfig:
    add_rule: str = "dantzig"
    remove_rule: str = "classic_blocking"
    k_max: int = 100
    W0: tuple = ()
    lam0: Optional[tuple] = None

    def __post_init__(self):
        if self.add_rule not in ADD_RULES:
            raise ValueError(f"Unknown add rule: {self.add_rule}. Should be one of {ADD_RULES}.")
        if self.remove_rule not in REMOVE_RULES:
            raise ValueError(f"Unknown remove rule: {self.remove_rule}. Should be one of {REMOVE_RULES}.")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max}")
        object.__setattr__(self, "W0", as_index_tuple(self.W0))
        if self.lam0 is not None:
            object.__setattr__(self, "lam0", tuple(float(x) for x in self.lam0))

    def to_dict(self) -> dict:
        return {"add_rule": self.add_rule, "remove_rule": self.remove_rule, "k_max": int(self.k_max),
                "W0": list(self.W0), "lam0": None if self.lam0 is None else list(self.lam0)}


@dataclass(frozen=True, eq=False)
class SolveResult:
    status: str
    lam: np.ndarray
    W: tuple
    sequence: tuple
    x: Optional[np.ndarray]
    trace: ExecutionTrace
    iterations: int

#----------------- Argmin kernels ------------------

@njit(cache=True)
def _argmin_branch_free(v):
    # the comparison result selects the index arithmetically; every element costs the same
    idx = 0
    ops = 1
    for j in range(1, v.size):
        c = np.int64(v[j] < v[idx])
        idx = c * j + (1 - c) * idx
        ops += 4
    return v[idx], idx, ops


@njit(cache=True)
def _argmin_branching(v):
    best = v[0]
    idx = 0
    ops = 1
    for j in range(1, v.size):
        ops += 1
        if v[j] < best:
            best = v[j]
            idx = j
            ops += 2
    return best, idx, ops


def _check_vector(v: ArrayLike) -> np.ndarray:
    v = check_finite(v, "v", ndim=1)
    if v.size == 0:
        raise ValueError("argmin of an empty vector")
    return v


def ArgminOrderIndependent(v: ArrayLike, returnOps: bool = False) -> tuple:
    """
    Minimum and first minimising index, found with a branch-free select.

    Parameters
    ----------
    v : array-like
        Nonempty finite vector.
    returnOps : bool, optional
        Also return the kernel's operation count, which depends on len(v) only.

    Returns
    -------
    tuple
        (value, index) or (value, index, ops).
    """
    value, idx, ops = _argmin_branch_free(_check_vector(v))
    return (float(value), int(idx), int(ops)) if returnOps else (float(value), int(idx))


def ArgminOrderDependent(v: ArrayLike, returnOps: bool = False) -> tuple:
    """
    Minimum and first minimising index with a strict-less branch; the operation
    count depends on the data. Used only as a reference for the branch-free kernel.
    """
    value, idx, ops = _argmin_branching(_check_vector(v))
    return (float(value), int(idx), int(ops)) if returnOps else (float(value), int(idx))


def _masked_argmin(values: np.ndarray, mask: np.ndarray) -> tuple:
    value, idx, _ = _argmin_branch_free(np.where(mask, values, np.inf))
    return float(value), int(idx)

#----------------- Ratio tests ------------------

def _ratio_test(lamW: np.ndarray, lamStarW: np.ndarray, rule: str) -> tuple:
    neg = lamStarW < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        classic = lamW / (lamW - lamStarW)
        if rule == "classic_blocking":
            _, pos = _masked_argmin(classic, neg)
        else:
            _, pos = _masked_argmin(lamStarW / (lamStarW - lamW), neg)
    return pos, float(classic[pos])


def RatioTestRemove(lamW: ArrayLike, lamStarW: ArrayLike, rule: str = "classic_blocking") -> tuple:
    """
    Blocking constraint of the step lam + alpha (lam* - lam).

    Parameters
    ----------
    lamW : array-like
        Current multipliers on the working set (nonnegative).
    lamStarW : array-like
        Equality-constrained multipliers on the working set, with at least one negative entry.
    rule : {'classic_blocking', 'paper_literal'}, optional
        'classic_blocking' minimises lam_j / (lam_j - lam*_j) over lam*_j < 0, which keeps
        the iterate nonnegative; 'paper_literal' minimises lam*_j / (lam*_j - lam_j) instead
        and takes alpha from the classic formula at that position.

    Returns
    -------
    tuple
        (position, alpha); ties go to the lowest position.
    """
    lamW = check_finite(lamW, "lamW", ndim=1)
    lamStarW = check_finite(lamStarW, "lamStarW", ndim=1)
    if lamW.shape != lamStarW.shape:
        raise ValueError(f"lamW and lamStarW differ in shape: {lamW.shape} vs {lamStarW.shape}")
    if rule not in REMOVE_RULES:
        raise ValueError(f"Unknown remove rule: {rule}. Should be one of {REMOVE_RULES}.")
    if np.any(lamW < 0):
        raise ValueError("Ratio test requires nonnegative multipliers.")
    if not np.any(lamStarW < 0):
        raise ValueError("Ratio test requires at least one negative component of lam*.")
    return _ratio_test(lamW, lamStarW, rule)

#----------------- Solver ------------------

class _Recorder:
    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m
        self.events = []

    def __call__(self, k: int, block: Block, s: int) -> None:
        flops, mem = block_counts(block, s, self.n, self.m)
        self.events.append(TraceEvent(k, block, s, flops, mem))

    def trace(self) -> ExecutionTrace:
        return ExecutionTrace(tuple(self.events), self.n, self.m)


def _select_add(mu: np.ndarray, index: tuple, rule: str) -> int:
    if rule == "dantzig":
        _, pos = _masked_argmin(mu, np.ones(mu.size, dtype=bool))
    else:
        _, pos = _masked_argmin(np.arange(mu.size, dtype=float), mu < 0)
    return index[pos]


def Solve(Dd: DualData, theta: ArrayLike, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """
    Dual active-set method on min_{lam >= 0} 0.5 lam'(MM')lam + d(theta)'lam with a block-level
    execution trace.

    Each iteration checks the Gram matrix of W for singularity. On a nonsingular W the
    equality-constrained multipliers lam* are tested for nonnegativity; if they pass,
    the complement slacks mu decide between termination and adding a constraint (by
    the configured rule), otherwise a ratio test removes a blocking constraint. On a
    singular W a null direction p of the Gram matrix, oriented so that d_W'p <= 0,
    either certifies infeasibility (p >= 0) or gives a step removing a constraint.
    All sign tests use zero tolerance.

    Parameters
    ----------
    Dd : DualData
        Dual of the problem.
    theta : array-like
        Parameter vector.
    cfg : SolverConfig, optional
        Selection rules, iteration cap and initial working set.

    Returns
    -------
    SolveResult
        The working-set sequence holds one entry per executed iteration; on an
        iteration cap it also ends with the working set left by the last iteration.
    """
    theta = check_finite(theta, "theta", ndim=1)
    if theta.size != Dd.n_theta:
        raise ValueError(f"theta has dimension {theta.size}, expected {Dd.n_theta}")
    m = Dd.m
    W = list(cfg.W0)
    lam = np.zeros(m) if cfg.lam0 is None else check_finite(cfg.lam0, "lam0", ndim=1).copy()
    if lam.size != m:
        raise ValueError(f"lam0 has {lam.size} entries, expected {m}")
    d = Dd.d(theta)
    emit = _Recorder(Dd.n, m)
    sequence = []
    status = "iter_cap"
    for k in range(cfg.k_max):
        sequence.append(tuple(W))
        s = len(W)
        gf = Gram(Dd, W)
        emit(k, Block.SING_CHECK, s)
        if not gf.singular:
            lamMap = AffineLambdaMap(Dd, W)
            lamStar = lamMap.evaluate(theta)
            emit(k, Block.LINSYS, s)
            emit(k, Block.LAM_CHECK, s)
            if s == 0 or _argmin_branch_free(lamStar)[0] >= 0:
                lam[:] = 0.0
                lam[W] = lamStar
                muMap = AffineMuMap(Dd, W, lamMap)
                mu = muMap.evaluate(theta)
                emit(k, Block.MU_COMP, s)
                emit(k, Block.MU_CHECK, s)
                if mu.size == 0 or _argmin_branch_free(mu)[0] >= 0:
                    emit(k, Block.TERMINATE_OPT, s)
                    status = "optimal"
                    break
                i = _select_add(mu, muMap.index, cfg.add_rule)
                emit(k, Block.ADD, s)
                W.append(i)
                lam[i] = 0.0
            else:
                lamW = lam[W]
                pos, alpha = _ratio_test(lamW, lamStar, cfg.remove_rule)
                emit(k, Block.REMOVE_RATIO, s)
                lam[W] = lamW + alpha * (lamStar - lamW)
                lam[W[pos]] = 0.0
                W.pop(pos)
        else:
            p = NullDirection(Dd, W)
            if d[W] @ p > 0:
                p = -p
            emit(k, Block.SING_DIR, s)
            emit(k, Block.P_CHECK, s)
            if _argmin_branch_free(p)[0] >= 0:
                emit(k, Block.TERMINATE_INF, s)
                status = "infeasible"
                break
            lamW = lam[W]
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha, pos = _masked_argmin(lamW / -p, p < 0)
            emit(k, Block.SING_REMOVE, s)
            lam[W] = lamW + alpha * p
            lam[W[pos]] = 0.0
            W.pop(pos)
    else:
        sequence.append(tuple(W))
        logger.warning(f"Iteration cap {cfg.k_max} reached at theta={theta.tolist()}")
    x = RecoverPrimal(Dd, lam, theta) if status == "optimal" else None
    iterations = sum(1 for event in emit.events if event.block == Block.SING_CHECK)
    return SolveResult(status=status, lam=lam, W=tuple(W), sequence=tuple(sequence), x=x,
                       trace=emit.trace(), iterations=iterations)


def TraceHash(t: ExecutionTrace) -> int:
    """
    FNV-1a-64 over the little-endian int64 encoding of every (k, block, size, flops, mem) event.
    """
    h = FNV_OFFSET
    for event in t:
        h = fnv1a_64(struct.pack("<qqqqq", event.k, int(event.block), event.size, event.flops, event.mem), h)
    return h

#----------------- KKT oracle ------------------

@dataclass(frozen=True, eq=False)
class OracleResult:
    status: str
    x: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    W: tuple = ()


def KKTOracle(P: MpQP, theta: ArrayLike, tol: float = 1e-9) -> OracleResult:
    """
    Brute-force solution of the QP at theta by enumerating candidate active sets.

    Infeasibility is decided first with an LP on {x : A x <= b(theta)}. Otherwise every
    subset S (smallest first) with linearly independent rows is tried: the KKT system
    [[H, A_S'], [A_S, 0]] [x; lam] = [-f; b_S] is solved and accepted when A x <= b + tol
    and lam >= -tol.
    """
    if P.m > 20:
        raise ValueError(f"KKT enumeration limited to m <= 20, got m={P.m}")
    theta = check_finite(theta, "theta", ndim=1)
    f, b = P.f(theta), P.b(theta)
    if P.m and SolveLP(np.zeros(P.n), Polyhedron(P.A, b)).status == "infeasible":
        return OracleResult("infeasible")
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    for size in range(0, min(P.m, P.n) + 1):
        for S in combinations(range(P.m), size):
            rows = list(S)
            As = P.A[rows]
            if size and np.linalg.matrix_rank(As) < size:
                continue
            K = np.block([[P.H, As.T], [As, np.zeros((size, size))]])
            sol = np.linalg.solve(K, np.concatenate([-f, b[rows]]))
            x, lamS = sol[:P.n], sol[P.n:]
            if np.all(P.A @ x <= b + tol * scale) and np.all(lamS >= -tol):
                lam = np.zeros(P.m)
                lam[rows] = np.maximum(lamS, 0.0)
                return OracleResult("optimal", x, lam, S)
    raise RuntimeError("No KKT point found for a feasible strictly convex QP.")
