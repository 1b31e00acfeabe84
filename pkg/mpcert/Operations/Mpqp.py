import hashlib
import numpy as np
from dataclasses import dataclass, field
from numpy.typing import ArrayLike
from typing import Optional, Sequence, Union
from scipy.linalg import cho_solve, solve_triangular
from loguru import logger
from .Geometry import Polyhedron, ClassifyPolyhedron
from ..Utilities.utils import check_finite, rng_from_seed, as_index_tuple

PD_TOL = 1e-12
SING_TOL = 1e-11
SYM_TOL = 1e-12


def pivot_cholesky(G: np.ndarray, relTol: float) -> tuple:
    """
    Lower Cholesky factor of a symmetric matrix, stopping at the first pivot that
    does not exceed relTol * max(diag(G)).

    Returns
    -------
    tuple
        (L, bad) where bad is the index of the failing pivot or None. On failure
        L holds the valid leading block only.
    """
    k = G.shape[0]
    L = np.zeros((k, k))
    if k == 0:
        return L, None
    thresh = relTol * max(float(np.max(np.diag(G))), 0.0)
    for j in range(k):
        pivot = G[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= thresh:
            return L, j
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (G[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, None


@dataclass(frozen=True, eq=False)
class MpQP:
    """
    Parametric QP

        min_x 0.5 x'Hx + (f0 + F theta)'x   s.t.  A x <= b0 + B theta,   theta in Theta0.
    """
    H: np.ndarray
    f0: np.ndarray
    F: np.ndarray
    A: np.ndarray
    b0: np.ndarray
    B: np.ndarray
    Theta0: Polyhedron

    def __post_init__(self):
        H = check_finite(self.H, "H", ndim=2)
        f0 = check_finite(self.f0, "f0", ndim=1)
        F = check_finite(self.F, "F", ndim=2)
        A = check_finite(self.A, "A", ndim=2)
        b0 = check_finite(self.b0, "b0", ndim=1)
        B = check_finite(self.B, "B", ndim=2)
        n, m = H.shape[0], A.shape[0]
        nTheta = self.Theta0.dim
        if H.shape != (n, n):
            raise ValueError(f"H must be square, got shape {H.shape}")
        if f0.shape != (n,) or F.shape != (n, nTheta):
            raise ValueError(f"f0/F shapes {f0.shape}/{F.shape} inconsistent with n={n}, n_theta={nTheta}")
        if A.shape[1] != n or b0.shape != (m,) or B.shape != (m, nTheta):
            raise ValueError(f"A/b0/B shapes {A.shape}/{b0.shape}/{B.shape} inconsistent with n={n}, m={m}, n_theta={nTheta}")
        scale = max(float(np.max(np.abs(H))), 1.0)
        if np.max(np.abs(H - H.T)) > SYM_TOL * scale:
            raise ValueError("H is not symmetric.")
        L, bad = pivot_cholesky(H, PD_TOL)
        if bad is not None:
            raise ValueError(f"H is not positive definite: Cholesky pivot {bad} below tolerance.")
        if ClassifyPolyhedron(self.Theta0) == "empty":
            raise ValueError("Theta0 is empty.")
        for name, value in zip(("H", "f0", "F", "A", "b0", "B"), (H, f0, F, A, b0, B)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "_chol", L)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n_theta(self) -> int:
        return self.Theta0.dim

    @property
    def cholesky(self) -> np.ndarray:
        return self._chol

    def f(self, theta: ArrayLike) -> np.ndarray:
        return self.f0 + self.F @ np.asarray(theta, dtype=float)

    def b(self, theta: ArrayLike) -> np.ndarray:
        return self.b0 + self.B @ np.asarray(theta, dtype=float)

    def digest(self) -> str:
        """SHA-256 of the canonical little-endian encoding of every field."""
        h = hashlib.sha256()
        h.update(np.array([self.n, self.m, self.n_theta, len(self.Theta0)], dtype="<i8").tobytes())
        for arr in (self.H, self.f0, self.F, self.A, self.b0, self.B, self.Theta0.normals, self.Theta0.offsets):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class GramFactor:
    W: tuple
    G: np.ndarray
    L: np.ndarray
    singular: bool
    pivot: Optional[int] = None


@dataclass(frozen=True, eq=False)
class AffineMap:
    """theta -> E theta + e; row r belongs to constraint index[r]."""
    E: np.ndarray
    e: np.ndarray
    index: tuple = ()

    def __post_init__(self):
        if self.E.shape[0] != self.e.shape[0] or len(self.index) != self.e.shape[0]:
            raise ValueError(f"Affine map shapes inconsistent: E {self.E.shape}, e {self.e.shape}, {len(self.index)} indices")

    def __len__(self) -> int:
        return self.e.shape[0]

    def evaluate(self, theta: ArrayLike) -> np.ndarray:
        return self.E @ np.asarray(theta, dtype=float) + self.e


@dataclass(frozen=True, eq=False)
class DualData:
    """
    Dual of an MpQP: min_{lam >= 0} 0.5 lam'(M M')lam + (d0 + D theta)'lam with M = A L^-T.
    Gram factors are memoised per working set; everything else is read-only.
    """
    M: np.ndarray
    d0: np.ndarray
    D: np.ndarray
    L: np.ndarray
    problem: MpQP
    _grams: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def n(self) -> int:
        return self.M.shape[1]

    @property
    def n_theta(self) -> int:
        return self.D.shape[1]

    def d(self, theta: ArrayLike) -> np.ndarray:
        return self.d0 + self.D @ np.asarray(theta, dtype=float)


def ToDual(P: MpQP) -> DualData:
    """
    Dual data of a parametric QP.

    Parameters
    ----------
    P : MpQP
        Validated parametric QP.

    Returns
    -------
    DualData
        M = A L^-T, d0 = b0 + A H^-1 f0 and D = B + A H^-1 F, together with the
        Cholesky factor L of H.
    """
    L = P.cholesky
    M = solve_triangular(L, P.A.T, lower=True).T if P.m else np.zeros((0, P.n))
    Hinv_f0 = cho_solve((L, True), P.f0)
    Hinv_F = cho_solve((L, True), P.F) if P.n_theta else np.zeros((P.n, 0))
    d0 = P.b0 + P.A @ Hinv_f0
    D = P.B + P.A @ Hinv_F
    for arr in (M, d0, D):
        arr.setflags(write=False)
    return DualData(M=M, d0=d0, D=D, L=L, problem=P)


def _check_working_set(Dd: DualData, W: Sequence[int]) -> tuple:
    W = as_index_tuple(W)
    if len(set(W)) != len(W):
        raise ValueError(f"Working set contains duplicate indices: {W}")
    for i in W:
        if not 0 <= i < Dd.m:
            raise ValueError(f"Working set index {i} out of range for m={Dd.m}")
    return W


def Gram(Dd: DualData, W: Sequence[int]) -> GramFactor:
    """
    Gram matrix [M]_W [M]_W' of the working-set rows, in insertion order, with its
    pivot-checked Cholesky factor. The result depends on W only and is memoised.
    """
    W = _check_working_set(Dd, W)
    cached = Dd._grams.get(W)
    if cached is not None:
        return cached
    Mw = Dd.M[list(W)] if W else np.zeros((0, Dd.n))
    G = Mw @ Mw.T
    L, bad = pivot_cholesky(G, SING_TOL)
    for arr in (G, L):
        arr.setflags(write=False)
    gf = GramFactor(W=W, G=G, L=L, singular=bad is not None, pivot=bad)
    Dd._grams[W] = gf
    return gf


def AffineLambdaMap(Dd: DualData, W: Sequence[int]) -> AffineMap:
    """
    lam*(theta) = E theta + e solving G lam* = -[d0 + D theta]_W for a nonsingular W.
    """
    gf = Gram(Dd, W)
    if gf.singular:
        raise ValueError(f"Working set {gf.W} is singular; the null-direction branch applies.")
    if not gf.W:
        return AffineMap(np.zeros((0, Dd.n_theta)), np.zeros(0), ())
    rows = list(gf.W)
    E = -cho_solve((gf.L, True), Dd.D[rows])
    e = -cho_solve((gf.L, True), Dd.d0[rows])
    return AffineMap(E.reshape(len(rows), Dd.n_theta), e, gf.W)


def complement(m: int, W: Sequence[int]) -> tuple:
    active = set(W)
    return tuple(i for i in range(m) if i not in active)


def AffineMuMap(Dd: DualData, W: Sequence[int], lamMap: AffineMap) -> AffineMap:
    """
    mu(theta) = [M]_Wbar [M]_W' lam*(theta) + [d0 + D theta]_Wbar over the complement
    of W in ascending index order.
    """
    W = _check_working_set(Dd, W)
    if lamMap.index != W:
        raise ValueError(f"lambda map belongs to {lamMap.index}, not to {W}")
    comp = complement(Dd.m, W)
    rows = list(comp)
    E = Dd.D[rows].copy()
    e = Dd.d0[rows].copy()
    if W:
        cross = Dd.M[rows] @ Dd.M[list(W)].T
        E += cross @ lamMap.E
        e += cross @ lamMap.e
    return AffineMap(E.reshape(len(rows), Dd.n_theta), e, comp)


def NullDirection(Dd: DualData, W: Sequence[int], snapTol: float = 1e-12) -> np.ndarray:
    """
    Unit null vector of the Gram matrix of a singular working set.

    The leading block before the failing pivot j is nonsingular, so
    p = [-G11^-1 g; 1; 0...] with g = G[:j, j] satisfies G p = 0 up to the
    pivot tolerance. Entries below snapTol are set to zero before normalising.
    """
    gf = Gram(Dd, W)
    if not gf.singular:
        raise ValueError(f"Working set {gf.W} is nonsingular; no null direction exists.")
    j = gf.pivot
    p = np.zeros(len(gf.W))
    p[j] = 1.0
    if j > 0:
        p[:j] = -cho_solve((gf.L[:j, :j], True), gf.G[:j, j])
    p[np.abs(p) < snapTol] = 0.0
    return p / np.linalg.norm(p)


def RecoverPrimal(Dd: DualData, lam: ArrayLike, theta: ArrayLike) -> np.ndarray:
    """x* = -H^-1 (f(theta) + A' lam)"""
    P = Dd.problem
    lam = np.asarray(lam, dtype=float)
    return -cho_solve((Dd.L, True), P.f(theta) + P.A.T @ lam)


def RestrictParameters(P: MpQP, dims: Sequence[int], fixed: Union[ArrayLike, dict]) -> MpQP:
    """
    Restrict an MpQP to the slice theta = T theta' + t that frees the coordinates
    `dims` and fixes the others.

    Parameters
    ----------
    P : MpQP
        Problem to restrict.
    dims : sequence of int
        Free parameter coordinates, in the order they appear in theta'.
    fixed : array-like or dict
        Either a full-length theta whose non-free entries are used, or a mapping
        {coordinate: value}; missing coordinates are fixed at 0.
    """
    dims = as_index_tuple(dims)
    if len(set(dims)) != len(dims) or any(not 0 <= k < P.n_theta for k in dims):
        raise ValueError(f"Invalid slice coordinates {dims} for n_theta={P.n_theta}")
    if isinstance(fixed, dict):
        t = np.zeros(P.n_theta)
        for k, v in fixed.items():
            t[int(k)] = float(v)
    else:
        t = check_finite(fixed, "fixed", ndim=1).copy()
        if t.size != P.n_theta:
            raise ValueError(f"fixed has {t.size} entries, expected {P.n_theta}")
    t[list(dims)] = 0.0
    T = np.zeros((P.n_theta, len(dims)))
    T[list(dims), range(len(dims))] = 1.0
    Theta0 = Polyhedron(P.Theta0.normals @ T, P.Theta0.offsets - P.Theta0.normals @ t)
    logger.debug(f"Restricting parameters to coordinates {dims}")
    return MpQP(H=P.H, f0=P.f0 + P.F @ t, F=P.F @ T, A=P.A,
                b0=P.b0 + P.B @ t, B=P.B @ T, Theta0=Theta0)


def RandomMpQP(n: int, m: int, nTheta: int, seed: int = 0, feasible: bool = True) -> MpQP:
    """
    Random strictly convex MpQP over Theta0 = [-1, 1]^nTheta.

    With feasible=True the right-hand side is b(theta) = b0 + A T theta with b0 >= 0,
    so x = T theta is feasible for every theta. Otherwise B is unstructured and
    parts of Theta0 may be infeasible.
    """
    if min(n, m, nTheta) < 1:
        raise ValueError(f"Dimensions must be positive, got n={n}, m={m}, n_theta={nTheta}")
    rng = rng_from_seed(seed, "random-mpqp", n, m, nTheta)
    R = rng.standard_normal((n, n))
    H = R @ R.T + n * np.eye(n)
    A = rng.standard_normal((m, n))
    F = rng.standard_normal((n, nTheta))
    f0 = rng.standard_normal(n)
    if feasible:
        b0 = rng.uniform(0.0, 1.0, m)
        B = A @ rng.standard_normal((n, nTheta))
    else:
        b0 = rng.standard_normal(m)
        B = rng.standard_normal((m, nTheta))
    Theta0 = Polyhedron.from_box(-np.ones(nTheta), np.ones(nTheta))
    return MpQP(H=H, f0=f0, F=F, A=A, b0=b0, B=B, Theta0=Theta0)
