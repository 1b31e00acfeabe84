import numpy as np
from dataclasses import dataclass
from typing import Optional, Union
from numpy.typing import ArrayLike
from scipy.optimize import linprog, minimize
from loguru import logger
from ..Utilities.utils import check_finite, rng_from_seed

FEAS_TOL = 1e-9
THIN_TOL = 1e-9
PIVOT_TOL = 1e-10
VERIFY_TOL = 1e-7
BOUNDING_BOX = 1e6
COEF_ROUND = 1e-14

#----------------- Polyhedra ------------------

@dataclass(frozen=True, eq=False)
class Polyhedron:
    """
    Halfspace description {theta : normals @ theta <= offsets}.

    Zero rows are allowed; a zero row with a negative offset makes the polyhedron
    trivially empty, which is flagged by `trivially_empty`.
    """
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        normals = check_finite(self.normals, "normals")
        offsets = check_finite(self.offsets, "offsets")
        if offsets.ndim == 0:
            offsets = offsets.reshape(1)
        if normals.ndim == 1:
            normals = normals.reshape(1, -1) if offsets.size == 1 else normals.reshape(-1, 1)
        if normals.ndim != 2 or offsets.ndim != 1:
            raise ValueError(f"normals must be 2-D and offsets 1-D, got {normals.shape} and {offsets.shape}")
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError(f"normals have {normals.shape[0]} rows but offsets have {offsets.shape[0]}")
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def from_box(cls, lo: ArrayLike, hi: ArrayLike) -> "Polyhedron":
        lo = check_finite(lo, "lo", ndim=1)
        hi = check_finite(hi, "hi", ndim=1)
        if lo.shape != hi.shape:
            raise ValueError(f"Box bounds differ in shape: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("Box lower bound exceeds upper bound.")
        d = lo.size
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]))

    @classmethod
    def whole_space(cls, dim: int) -> "Polyhedron":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def __len__(self) -> int:
        return self.normals.shape[0]

    @property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.normals, axis=1)

    @property
    def trivially_empty(self) -> bool:
        zero = self.row_norms == 0
        return bool(np.any(self.offsets[zero] < 0))

    def intersect(self, normals: ArrayLike, offsets: ArrayLike) -> "Polyhedron":
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if normals.shape[1] != self.dim:
            raise ValueError(f"Cannot intersect a {self.dim}-D polyhedron with {normals.shape[1]}-D halfspaces")
        return Polyhedron(np.vstack([self.normals, normals]), np.concatenate([self.offsets, offsets]))


@dataclass(frozen=True)
class LPResult:
    status: str  # 'optimal', 'unbounded' or 'infeasible'
    x: Optional[np.ndarray] = None
    value: Optional[float] = None

#----------------- Dense simplex with Bland's rule ------------------

def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _bland_loop(T: np.ndarray, basis: np.ndarray, ncols: int, tol: float, maxIter: int) -> tuple:
    """
    Run pivots on tableau T (last row holds reduced costs, last column the rhs)
    until optimal or unbounded. Entering: lowest column index with negative reduced
    cost. Leaving: minimum ratio, ties broken by lowest basic variable index.

    Returns (status, col); col is the entering column when status is 'unbounded'.
    """
    m = T.shape[0] - 1
    for _ in range(maxIter):
        negative = np.flatnonzero(T[m, :ncols] < -tol)
        if negative.size == 0:
            return "optimal", None
        col = negative[0]
        column = T[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return "unbounded", col
        ratios = T[rows, -1] / column[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + tol * (1.0 + abs(rmin))]
        row = ties[np.argmin(basis[ties])]
        _pivot(T, basis, row, col)
    return "stalled", None


def _simplex_inequality(c: np.ndarray, N: np.ndarray, beta: np.ndarray, tol: float = PIVOT_TOL) -> tuple:
    """
    Two-phase tableau simplex for min c'x s.t. N x <= beta with x free.

    x is split into nonnegative parts and every row gets a slack. Rows with a
    nonnegative offset start with their slack basic; the remaining rows are negated
    and get an artificial variable, so phase 1 only carries the violated rows.

    Returns (status, x, extra). extra is a Farkas vector v >= 0 with v'N = 0 and
    v'beta < 0 when status is 'infeasible', and a recession direction when status is
    'unbounded'. status 'failed' means the pivoting broke down numerically.
    """
    k, d = N.shape
    nz = 2 * d + k
    neg = np.flatnonzero(beta < 0)
    q = neg.size
    sign = np.ones(k)
    sign[neg] = -1.0
    maxIter = 50 * (k + nz) + 100

    T = np.zeros((k + 1, nz + q + 1))
    T[:k, :d] = N
    T[:k, d:2 * d] = -N
    T[:k, 2 * d:nz] = np.eye(k)
    T[:k, -1] = beta
    T[:k] *= sign[:, None]
    T[neg, nz + np.arange(q)] = 1.0
    basis = np.arange(2 * d, nz)
    basis[neg] = nz + np.arange(q)

    if q:
        # phase 1: minimise the sum of the artificials
        T[k, :nz] = -T[neg, :nz].sum(axis=0)
        T[k, -1] = -T[neg, -1].sum()
        status, _ = _bland_loop(T, basis, nz, tol, maxIter)
        if status != "optimal":
            # the phase-1 objective is bounded below, so anything else is numerical
            logger.debug(f"Simplex phase 1 ended with status {status}")
            return "failed", None, None
        scale = max(1.0, float(np.abs(beta[neg]).max()))
        if -T[k, -1] > FEAS_TOL * scale:
            y = -T[k, 2 * d:nz].copy()
            y[neg] = 1.0 - T[k, nz:nz + q]
            return "infeasible", None, -sign * y

        # drive artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(k):
            if basis[i] >= nz:
                col = int(np.argmax(np.abs(T[i, :nz])))
                if abs(T[i, col]) <= tol:
                    continue
                _pivot(T, basis, i, col)
            keep.append(i)
        rows = np.array(keep, dtype=int)
    else:
        rows = np.arange(k)

    # phase 2
    cFull = np.concatenate([c, -c, np.zeros(k)])
    T2 = np.zeros((rows.size + 1, nz + 1))
    T2[:-1, :nz] = T[rows, :nz]
    T2[:-1, -1] = T[rows, -1]
    basis = basis[rows].copy()
    T2[-1, :nz] = cFull - cFull[basis] @ T2[:-1, :nz]
    T2[-1, -1] = -cFull[basis] @ T2[:-1, -1]
    status, col = _bland_loop(T2, basis, nz, tol, maxIter)
    if status == "stalled":
        return "failed", None, None
    if status == "unbounded":
        z = np.zeros(nz)
        z[col] = 1.0
        z[basis] = -T2[:-1, col]
        return "unbounded", None, z[:d] - z[d:2 * d]
    z = np.zeros(nz)
    z[basis] = T2[:-1, -1]
    return "optimal", z[:d] - z[d:2 * d], None


def _verified(status: str, x, extra, cost: np.ndarray, N: np.ndarray, beta: np.ndarray) -> bool:
    """Check a simplex answer against the row-normalised data it was computed from."""
    if status == "optimal":
        return bool(np.all(N @ x <= beta + FEAS_TOL * (1.0 + np.abs(beta))))
    if status == "infeasible":
        v = np.asarray(extra)
        if np.any(v < -VERIFY_TOL) or v.sum() <= 0:
            return False
        v = np.clip(v, 0.0, None) / v.sum()
        residual = np.abs(v @ N).max(initial=0.0)
        return bool(residual <= VERIFY_TOL and v @ beta < -FEAS_TOL)
    if status == "unbounded":
        ray = np.asarray(extra)
        size = np.abs(ray).max(initial=0.0)
        if size == 0:
            return False
        ray = ray / size
        return bool(cost @ ray < -VERIFY_TOL and np.all(N @ ray <= VERIFY_TOL))
    return False


def SolveLP(cost: ArrayLike, P: Polyhedron, method: str = "simplex") -> LPResult:
    """
    Minimise cost' theta over the polyhedron P (theta free).

    Parameters
    ----------
    cost : array-like
        Objective vector, same dimension as P.
    P : Polyhedron
        Feasible set.
    method : {'simplex', 'highs'}, optional
        'simplex' runs the dense two-phase simplex with Bland's anti-cycling rule
        (deterministic pivoting) on unit-norm rows. Every simplex answer is checked:
        optimal points against the rows, infeasibility against its Farkas vector and
        unboundedness against its recession direction. An answer that fails the check
        is logged and re-solved with HiGHS. 'highs' delegates to scipy.optimize.linprog.
        Default is 'simplex'.

    Returns
    -------
    LPResult
        status 'optimal' (with x and value), 'unbounded' or 'infeasible'.
    """
    cost = check_finite(cost, "cost", ndim=1)
    if cost.size != P.dim:
        raise ValueError(f"cost has dimension {cost.size} but the polyhedron has dimension {P.dim}")
    N, beta = P.normals, P.offsets
    if method == "simplex":
        if P.trivially_empty:
            return LPResult("infeasible")
        norms = P.row_norms
        live = norms > 0
        N = N[live] / norms[live, None]
        beta = beta[live] / norms[live]
        status, x, extra = _simplex_inequality(cost, N, beta)
        if not _verified(status, x, extra, cost, N, beta):
            logger.warning(f"Simplex answer '{status}' failed verification on a {N.shape[0]}x{N.shape[1]} LP; "
                           "re-solving with HiGHS")
            return SolveLP(cost, P, method="highs")
        if status != "optimal":
            return LPResult(status)
    elif method == "highs":
        res = linprog(cost, A_ub=N if len(P) else None, b_ub=beta if len(P) else None,
                      bounds=[(None, None)] * P.dim, method="highs")
        if res.status == 2:
            return LPResult("infeasible")
        if res.status == 3:
            return LPResult("unbounded")
        if res.status != 0:
            raise RuntimeError(f"LP solver failed: {res.message}")
        x = np.asarray(res.x, dtype=float)
    else:
        raise ValueError(f"Unknown LP method: {method}. Should be 'simplex' or 'highs'.")
    return LPResult("optimal", x, float(cost @ x))


def ChebyshevCenter(P: Polyhedron, bound: float = BOUNDING_BOX, method: str = "simplex") -> tuple:
    """
    Centre and radius of the largest ball inscribed in P.

    Solves max r s.t. a_i' c + r ||a_i|| <= beta_i, with r free so that a negative
    radius measures how far P is from being nonempty. P is intersected with the box
    [-bound, bound]^d first so that the LP is bounded.

    Returns
    -------
    tuple
        (center, radius); radius is -inf when P contains a zero row with a negative offset.
    """
    d = P.dim
    if P.trivially_empty:
        return np.zeros(d), -np.inf
    norms = P.row_norms
    rows = np.hstack([P.normals, norms[:, None]])
    box = np.hstack([np.vstack([np.eye(d), -np.eye(d)]), np.ones((2 * d, 1))])
    lifted = Polyhedron(np.vstack([rows, box]), np.concatenate([P.offsets, np.full(2 * d, bound)]))
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    res = SolveLP(cost, lifted, method=method)
    if res.status != "optimal":
        logger.debug(f"Chebyshev LP returned status {res.status}")
        return np.zeros(d), -np.inf
    return res.x[:d], float(res.x[d])


def ClassifyPolyhedron(P: Polyhedron, tol: float = THIN_TOL, method: str = "simplex") -> str:
    """
    'full' if the Chebyshev radius exceeds tol, 'thin' if it lies in [-tol, tol],
    'empty' otherwise.
    """
    if tol < 0:
        raise ValueError(f"tol must be nonnegative, got {tol}")
    _, r = ChebyshevCenter(P, method=method)
    if r > tol:
        return "full"
    if r >= -tol:
        return "thin"
    return "empty"


def IsEmpty(P: Polyhedron, tol: float = THIN_TOL, method: str = "simplex") -> bool:
    """
    True when P has no interior ball of radius above tol. Thin (boundary-measure)
    polyhedra count as empty and are logged.
    """
    status = ClassifyPolyhedron(P, tol, method)
    if status == "thin":
        logger.debug("Thin polyhedron treated as empty")
    return status != "full"


def BoundingBox(P: Polyhedron, bound: float = BOUNDING_BOX, method: str = "simplex") -> tuple:
    """
    Axis-aligned bounding box of P, clipped to [-bound, bound] along unbounded directions.
    """
    d = P.dim
    lo = np.empty(d)
    hi = np.empty(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        res = SolveLP(e, P, method)
        if res.status == "infeasible":
            raise ValueError("Cannot bound an empty polyhedron.")
        lo[k] = -bound if res.status == "unbounded" else max(res.value, -bound)
        res = SolveLP(-e, P, method)
        hi[k] = bound if res.status == "unbounded" else min(-res.value, bound)
    return lo, hi


def ReduceRedundancy(P: Polyhedron, tol: float = FEAS_TOL, method: str = "simplex") -> Polyhedron:
    """
    Drop halfspaces implied by the others (one LP per row).
    """
    keep = list(range(len(P)))
    for i in range(len(P)):
        others = [j for j in keep if j != i]
        a, beta = P.normals[i], P.offsets[i]
        if not np.any(a):
            if beta >= 0:
                keep.remove(i)
            continue
        relaxed = Polyhedron(np.vstack([P.normals[others], a]), np.append(P.offsets[others], beta + 1.0))
        res = SolveLP(-a, relaxed, method)
        if res.status == "optimal" and -res.value <= beta + tol:
            keep.remove(i)
    return Polyhedron(P.normals[keep], P.offsets[keep])

#----------------- Polynomials and regions ------------------

class Polynomial:
    """
    Multivariate polynomial in theta, stored expanded as {exponent tuple: coefficient}.
    """
    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: Optional[dict] = None):
        self.dim = int(dim)
        self.terms = {}
        for exps, c in (terms or {}).items():
            if c != 0.0:
                self.terms[tuple(int(e) for e in exps)] = float(c)

    @classmethod
    def constant(cls, dim: int, value: float) -> "Polynomial":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def affine(cls, normal: ArrayLike, offset: float) -> "Polynomial":
        """normal' theta + offset"""
        normal = np.asarray(normal, dtype=float)
        dim = normal.size
        terms = {(0,) * dim: float(offset)}
        for k in range(dim):
            e = [0] * dim
            e[k] = 1
            terms[tuple(e)] = float(normal[k])
        return cls(dim, terms)

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def _check(self, other: "Polynomial") -> None:
        if other.dim != self.dim:
            raise ValueError(f"Polynomial dimensions differ: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.dim, other)
        self._check(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.dim, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial(self.dim, {e: c * float(other) for e, c in self.terms.items()})
        self._check(other)
        terms = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(self.dim, terms)

    __rmul__ = __mul__

    def pruned(self, rel: float = COEF_ROUND, abs_tol: float = 0.0) -> "Polynomial":
        """Drop coefficients below rel * max|c| or below abs_tol."""
        cut = max(rel * self.max_abs(), abs_tol)
        return Polynomial(self.dim, {e: c for e, c in self.terms.items() if abs(c) > cut})

    def sorted_terms(self) -> list:
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), tuple(-x for x in t[0])))

    def exponent_matrix(self) -> tuple:
        items = self.sorted_terms()
        if not items:
            return np.zeros((0, self.dim), dtype=int), np.zeros(0)
        E = np.array([e for e, _ in items], dtype=int).reshape(len(items), self.dim)
        c = np.array([c for _, c in items])
        return E, c

    def evaluate(self, theta: ArrayLike) -> Union[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        E, c = self.exponent_matrix()
        if theta.ndim == 1:
            return float(np.prod(theta[None, :] ** E, axis=1) @ c) if c.size else 0.0
        if not c.size:
            return np.zeros(theta.shape[0])
        return np.prod(theta[:, None, :] ** E[None, :, :], axis=2) @ c

    def gradient(self, theta: ArrayLike) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        g = np.zeros(self.dim)
        for e, c in self.terms.items():
            for k in range(self.dim):
                if e[k] == 0:
                    continue
                reduced = list(e)
                reduced[k] -= 1
                g[k] += c * e[k] * np.prod(theta ** np.array(reduced))
        return g

    def linear_part(self) -> tuple:
        """(normal, constant) of a polynomial of degree <= 1."""
        if self.degree > 1:
            raise ValueError(f"Polynomial of degree {self.degree} has no affine form.")
        normal = np.zeros(self.dim)
        const = 0.0
        for e, c in self.terms.items():
            if sum(e) == 0:
                const = c
            else:
                normal[e.index(1)] = c
        return normal, const

    def to_dict(self) -> dict:
        E, c = self.exponent_matrix()
        return {"degree": self.degree, "exponents": E.tolist(), "coefficients": [float(x) for x in c]}

    @classmethod
    def from_dict(cls, dim: int, data: dict) -> "Polynomial":
        return cls(dim, {tuple(e): c for e, c in zip(data["exponents"], data["coefficients"])})

    def __repr__(self) -> str:
        return f"Polynomial(dim={self.dim}, degree={self.degree}, terms={len(self.terms)})"


@dataclass(frozen=True, eq=False)
class PolyConstraint:
    """p(theta) <= 0 with deg p >= 2."""
    poly: Polynomial

    def __post_init__(self):
        if self.poly.degree < 2:
            raise ValueError("Constraints of degree <= 1 belong to the polyhedral part.")

    @property
    def degree(self) -> int:
        return self.poly.degree


@dataclass(frozen=True, eq=False)
class RegionDescription:
    linear: Polyhedron
    nonlinear: tuple = ()

    def __post_init__(self):
        for con in self.nonlinear:
            if con.poly.dim != self.linear.dim:
                raise ValueError("Polynomial constraint dimension does not match the polyhedron.")
        object.__setattr__(self, "nonlinear", tuple(self.nonlinear))

    @property
    def dim(self) -> int:
        return self.linear.dim

    @property
    def is_polyhedral(self) -> bool:
        return len(self.nonlinear) == 0

    def with_constraint(self, poly: Polynomial) -> "RegionDescription":
        """Intersect with {p(theta) <= 0}, routing affine constraints to the polyhedron."""
        if poly.degree <= 1:
            normal, const = poly.linear_part()
            return RegionDescription(self.linear.intersect(normal, -const), self.nonlinear)
        return RegionDescription(self.linear, self.nonlinear + (PolyConstraint(poly),))


def _slacks(R: RegionDescription, theta: np.ndarray) -> np.ndarray:
    """Constraint slacks; linear rows are normalised to signed distances."""
    norms = R.linear.row_norms
    raw = R.linear.offsets - R.linear.normals @ theta
    lin = np.where(norms > 0, raw / np.where(norms > 0, norms, 1.0), raw)
    poly = np.array([-con.poly.evaluate(theta) for con in R.nonlinear])
    return np.concatenate([lin, poly])


def MinSlack(R: RegionDescription, thetas: ArrayLike) -> np.ndarray:
    """
    Minimum constraint slack of each row of thetas (k x d); positive inside.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    norms = R.linear.row_norms
    safe = np.where(norms > 0, norms, 1.0)
    out = np.full(thetas.shape[0], np.inf)
    if len(R.linear):
        lin = (R.linear.offsets[None, :] - thetas @ R.linear.normals.T) / safe[None, :]
        out = np.minimum(out, lin.min(axis=1))
    for con in R.nonlinear:
        out = np.minimum(out, -con.poly.evaluate(thetas))
    return out


def Contains(R: Union[RegionDescription, Polyhedron], theta: ArrayLike, tol: float = FEAS_TOL) -> str:
    """
    Membership of a point in a region.

    Returns
    -------
    str
        'inside' if every slack exceeds tol, 'boundary' if every slack is >= -tol
        and at least one is within tol, 'outside' otherwise.
    """
    if isinstance(R, Polyhedron):
        R = RegionDescription(R)
    theta = check_finite(theta, "theta", ndim=1)
    if theta.size != R.dim:
        raise ValueError(f"theta has dimension {theta.size} but the region has dimension {R.dim}")
    slack = _slacks(R, theta)
    smin = slack.min() if slack.size else np.inf
    if smin > tol:
        return "inside"
    if smin >= -tol:
        return "boundary"
    return "outside"

#----------------- Interior points ------------------

def _chord(N: np.ndarray, beta: np.ndarray, x: np.ndarray, u: np.ndarray) -> tuple:
    """Parameter interval {t : N (x + t u) <= beta}."""
    Nu = N @ u
    slack = beta - N @ x
    pos = Nu > 0
    neg = Nu < 0
    tmax = np.min(slack[pos] / Nu[pos]) if pos.any() else np.inf
    tmin = np.max(slack[neg] / Nu[neg]) if neg.any() else -np.inf
    return tmin, tmax


def HitAndRun(P: Polyhedron, start: ArrayLike, numSamples: int, seed: int = 0,
              bound: float = BOUNDING_BOX) -> np.ndarray:
    """
    Hit-and-run walk inside P from an interior start point.

    Directions are uniform on the sphere (normalised Gaussian draws from numpy's
    PCG64 generator seeded with `seed`: a 128-bit LCG with multiplier
    0x2360ed051fc65da44385df649fccf645 and an XSL-RR 64-bit output permutation);
    the chord through the current point is obtained by exact clipping against every
    halfspace of P and the box [-bound, bound]^d, and the next point is uniform on
    that chord.

    Returns
    -------
    np.ndarray
        numSamples x d array of visited points.
    """
    d = P.dim
    box = Polyhedron.from_box(np.full(d, -bound), np.full(d, bound))
    N = np.vstack([P.normals, box.normals])
    beta = np.concatenate([P.offsets, box.offsets])
    rng = rng_from_seed(seed)
    x = np.array(start, dtype=float)
    out = np.empty((numSamples, d))
    for k in range(numSamples):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        tmin, tmax = _chord(N, beta, x, u)
        if tmax > tmin:
            x = x + rng.uniform(tmin, tmax) * u
        out[k] = x
    return out


def _refine_interior(R: RegionDescription, start: np.ndarray, tol: float, bound: float) -> Optional[np.ndarray]:
    """Maximise the smallest slack with SLSQP, starting from `start`."""
    d = R.dim
    norms = R.linear.row_norms
    N, beta = R.linear.normals, R.linear.offsets

    def lin_fun(z):
        return beta - N @ z[:d] - z[d] * norms

    def lin_jac(z):
        return np.hstack([-N, -norms[:, None]])

    constraints = [{"type": "ineq", "fun": lin_fun, "jac": lin_jac}] if len(R.linear) else []
    for con in R.nonlinear:
        p = con.poly
        constraints.append({
            "type": "ineq",
            "fun": lambda z, p=p: -p.evaluate(z[:d]) - z[d],
            "jac": lambda z, p=p: np.append(-p.gradient(z[:d]), -1.0),
        })
    z0 = np.append(start, 0.0)
    bounds = [(-bound, bound)] * d + [(None, 1.0)]
    try:
        res = minimize(lambda z: -z[d], z0, jac=lambda z: np.append(np.zeros(d), -1.0),
                       bounds=bounds, constraints=constraints, method="SLSQP",
                       options={"maxiter": 200, "ftol": 1e-12})
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.debug(f"Interior refinement failed: {e}")
        return None
    theta = np.asarray(res.x[:d], dtype=float)
    if np.all(np.isfinite(theta)) and Contains(R, theta, tol) == "inside":
        return theta
    return None


def InteriorPoint(R: Union[RegionDescription, Polyhedron], budget: int = 10_000, seed: int = 0,
                  tol: float = FEAS_TOL, refine: bool = True, bound: float = BOUNDING_BOX,
                  method: str = "simplex") -> Optional[np.ndarray]:
    """
    A point strictly inside a region.

    Polyhedral regions return their Chebyshev centre. Otherwise the centre of the
    linear part is tried first, then up to `budget` hit-and-run samples inside the
    linear part, then (if refine) an SLSQP maximisation of the smallest slack.

    Returns
    -------
    np.ndarray or None
        None when the linear part has no interior or every attempt fails
        (the caller flags such a region as unresolved).
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if isinstance(R, Polyhedron):
        R = RegionDescription(R)
    center, r = ChebyshevCenter(R.linear, bound=bound, method=method)
    if r <= tol:
        return None
    if R.is_polyhedral:
        return center
    if Contains(R, center, tol) == "inside":
        return center
    walk = HitAndRun(R.linear, center, budget, seed=seed, bound=bound)
    inside = MinSlack(R, walk) > tol
    if inside.any():
        return walk[np.argmax(inside)]
    if refine:
        theta = _refine_interior(R, center, tol, bound)
        if theta is not None:
            return theta
    logger.debug(f"No interior point found after {budget} samples")
    return None
