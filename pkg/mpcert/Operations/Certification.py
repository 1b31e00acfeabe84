import time
import numpy as np
from dataclasses import dataclass, replace
from typing import Optional
from loguru import logger
from .Geometry import (Polyhedron, Polynomial, RegionDescription, SolveLP, ClassifyPolyhedron,
                       InteriorPoint, MinSlack, BoundingBox, ReduceRedundancy, FEAS_TOL, THIN_TOL,
                       BOUNDING_BOX)
from .Mpqp import DualData, Gram, AffineLambdaMap, AffineMuMap, NullDirection
from .Solver import SolverConfig, Solve, TraceHash
from ..Utilities.utils import derive_seed, rng_from_seed, parallel_map, worker_count

# branch labels, in canonical child order
OPT, ADD, REM, KEEP, FLIP, INF, SREM = range(7)
LABELS = ("opt", "add", "rem", "keep", "flip", "inf", "srem")
STATUSES = ("optimal", "infeasible", "iter_cap", "unresolved")


@dataclass(frozen=True)
class CertOptions:
    degree_cap: int = 4
    interior_budget: int = 10_000
    feas_tol: float = FEAS_TOL
    thin_tol: float = THIN_TOL
    zero_tol: float = 1e-12
    bound: float = BOUNDING_BOX
    lp_method: str = "simplex"
    reduce_redundancy: bool = False
    seed: int = 0
    workers: Optional[int] = None

    def __post_init__(self):
        if self.degree_cap < 1:
            raise ValueError(f"degree_cap must be >= 1, got {self.degree_cap}")
        if self.interior_budget < 1:
            raise ValueError(f"interior_budget must be >= 1, got {self.interior_budget}")
        for name in ("feas_tol", "thin_tol", "zero_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {"degree_cap": int(self.degree_cap), "interior_budget": int(self.interior_budget),
                "feas_tol": float(self.feas_tol), "thin_tol": float(self.thin_tol),
                "zero_tol": float(self.zero_tol), "bound": float(self.bound),
                "lp_method": self.lp_method, "reduce_redundancy": bool(self.reduce_redundancy)}


@dataclass(frozen=True, eq=False)
class RationalState:
    """
    Dual iterate on the working set as lam_l(theta) = numerators[l](theta) / denominator(theta),
    with the denominator positive on the region that produced it.
    """
    numerators: dict
    denominator: Polynomial

    @classmethod
    def affine(cls, numerators: dict, dim: int) -> "RationalState":
        return cls(dict(numerators), Polynomial.constant(dim, 1.0))

    @property
    def degree(self) -> int:
        return max([self.denominator.degree] + [p.degree for p in self.numerators.values()])

    @property
    def is_affine(self) -> bool:
        return self.denominator.degree == 0 and all(p.degree <= 1 for p in self.numerators.values())


@dataclass(frozen=True, eq=False)
class RegionRecord:
    id: int
    region: RegionDescription
    sequence: tuple
    iterations: int
    status: str
    archetype: Optional[np.ndarray]
    branch_path: tuple = ()

    @property
    def final_W(self) -> tuple:
        return self.sequence[-1]


@dataclass(frozen=True, eq=False)
class CertOutput:
    records: tuple
    statistics: dict
    problem_digest: str
    solver: SolverConfig
    options: CertOptions
    Theta0: Polyhedron

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self, rid: int) -> RegionRecord:
        return self.records[rid]

    @property
    def unresolved(self) -> list:
        return [r.id for r in self.records if r.status == "unresolved"]

    def check_solver(self, cfg: SolverConfig) -> None:
        """Raise when cfg is not the solver configuration the regions were certified under."""
        if self.solver.to_dict() != cfg.to_dict():
            raise ValueError(f"Regions were certified with solver {self.solver.to_dict()}, "
                             f"not {cfg.to_dict()}")


@dataclass(frozen=True, eq=False)
class _Node:
    region: RegionDescription
    W: tuple
    sequence: tuple
    state: RationalState
    path: tuple
    witness: Optional[np.ndarray]


@dataclass
class _Leaf:
    path: tuple
    region: RegionDescription
    sequence: tuple
    iterations: int
    status: str
    archetype: Optional[np.ndarray]

#----------------- Region refinement ------------------

class _Explorer:
    """Depth-first expansion of exploration nodes for one problem and configuration."""

    def __init__(self, Dd: DualData, cfg: SolverConfig, options: CertOptions):
        self.Dd = Dd
        self.cfg = cfg
        self.options = options
        self.dim = Dd.n_theta
        scale = max(1.0, float(np.max(np.abs(Dd.d0), initial=0.0)), float(np.max(np.abs(Dd.D), initial=0.0)))
        self.zero = options.zero_tol * scale
        self.leaves = []
        self.stats = {"nodes": 0, "max_depth": 0, "thin_pruned": 0, "empty_pruned": 0,
                      "unresolved": 0, "iter_cap": 0}

    def _affine(self, E: np.ndarray, e: np.ndarray, r: int) -> Polynomial:
        return Polynomial.affine(E[r], e[r])

    def _clean(self, poly: Polynomial) -> Polynomial:
        return poly.pruned(abs_tol=self.zero)

    def refine(self, region: RegionDescription, poly: Polynomial, strict: bool = False) -> Optional[RegionDescription]:
        """
        Intersect with {poly <= 0} (or < 0). Constant constraints are decided on the spot and
        identically-zero ones hold only in the non-strict sense. Returns None when decided false.
        """
        poly = self._clean(poly)
        if poly.degree == 0:
            c = poly.terms.get((0,) * self.dim, 0.0)
            holds = c < 0 if strict else c <= 0
            return region if holds else None
        return region.with_constraint(poly * (1.0 / poly.max_abs()))

    def refine_all(self, region: RegionDescription, constraints: list) -> Optional[RegionDescription]:
        for poly, strict in constraints:
            region = self.refine(region, poly, strict)
            if region is None:
                return None
        return region

    def check(self, region: RegionDescription, path: tuple):
        """
        Classify a candidate child region as (verdict, region, witness) with verdict "keep",
        "prune", or "unresolved" for mixed regions whose linear part is nonempty but yield no sample.
        """
        opts = self.options
        if opts.reduce_redundancy and region.is_polyhedral:
            region = RegionDescription(ReduceRedundancy(region.linear, opts.feas_tol, opts.lp_method))
        status = ClassifyPolyhedron(region.linear, opts.thin_tol, opts.lp_method)
        if status != "full":
            self.stats["thin_pruned" if status == "thin" else "empty_pruned"] += 1
            logger.debug(f"Pruned {status} region at {path}")
            return "prune", region, None
        point = InteriorPoint(region, budget=opts.interior_budget, seed=derive_seed(opts.seed, path),
                              tol=opts.feas_tol, bound=opts.bound, method=opts.lp_method)
        if point is None:
            return "unresolved", region, None
        return "keep", region, point

    def emit(self, path: tuple, region: RegionDescription, sequence: tuple, status: str,
             archetype: Optional[np.ndarray], iterations: Optional[int] = None) -> None:
        if status == "unresolved":
            self.stats["unresolved"] += 1
            logger.warning(f"Unresolved region at branch {_format_path(path)} after {len(sequence)} iterations")
        elif status == "iter_cap":
            self.stats["iter_cap"] += 1
            logger.warning(f"Iteration cap reached in region at branch {_format_path(path)}")
        if iterations is None:
            iterations = len(sequence)
        self.leaves.append(_Leaf(path, region, sequence, iterations, status, archetype))

    def child(self, parent: _Node, label: tuple, constraints: list, W: tuple, state: RationalState,
              terminal: Optional[str] = None):
        """Refine, test and either emit (terminal) or return the child node."""
        path = parent.path + (label,)
        region = self.refine_all(parent.region, constraints)
        if region is None:
            self.stats["empty_pruned"] += 1
            return None
        verdict, region, point = self.check(region, path)
        if verdict == "prune":
            return None
        if verdict == "unresolved":
            self.emit(path, region, parent.sequence, "unresolved", None)
            return None
        if terminal is not None:
            self.emit(path, region, parent.sequence, terminal, point)
            return None
        return _Node(region, W, parent.sequence + (W,), state, path, point)

    #----------------- Node expansion ------------------

    def expand(self, node: _Node) -> list:
        """Children of a node in canonical order; terminal children are emitted directly."""
        self.stats["nodes"] += 1
        self.stats["max_depth"] = max(self.stats["max_depth"], len(node.path))
        if len(node.sequence) > self.cfg.k_max:
            self.emit(node.path, node.region, node.sequence, "iter_cap", node.witness, self.cfg.k_max)
            return []
        gf = Gram(self.Dd, node.W)
        if gf.singular:
            return self._expand_singular(node)
        return self._expand_nonsingular(node)

    def _expand_nonsingular(self, node: _Node) -> list:
        Dd, W = self.Dd, node.W
        lamMap = AffineLambdaMap(Dd, W)
        lamStar = [self._affine(lamMap.E, lamMap.e, r) for r in range(len(W))]
        muMap = AffineMuMap(Dd, W, lamMap)
        mu = [self._affine(muMap.E, muMap.e, r) for r in range(len(muMap))]
        comp = muMap.index
        children = []

        # lam* >= 0 side
        dualFeasible = self.refine_all(node.region, [(-l, False) for l in lamStar])
        if dualFeasible is not None:
            base = replace(node, region=dualFeasible)
            self.child(base, (OPT, -1), [(-u, False) for u in mu], W, node.state, terminal="optimal")
            lamAffine = {W[r]: lamStar[r] for r in range(len(W))}
            for c, i in enumerate(comp):
                cons = [(mu[c], True)]
                if self.cfg.add_rule == "dantzig":
                    cons += [(mu[c] - mu[j], j < c) for j in range(len(comp)) if j != c]
                else:
                    cons += [(-mu[j], False) for j in range(c)]
                state = RationalState.affine({**lamAffine, i: Polynomial.constant(self.dim, 0.0)}, self.dim)
                nxt = self.child(base, (ADD, i), cons, W + (i,), state)
                if nxt is not None:
                    children.append(nxt)

        # some lam*_r < 0: blocking removal
        for r in range(len(W)):
            nxt = self._removal_child(node, r, lamStar)
            if nxt is not None:
                children.append(nxt)
        return children

    def _removal_child(self, node: _Node, r: int, lamStar: list):
        W, state = node.W, node.state
        N = [self._clean(state.numerators[i]) for i in W]
        q = state.denominator
        cons = [(lamStar[r], True)]
        overCap = False
        for l in range(len(W)):
            if l == r:
                continue
            if N[l].is_zero():
                # alpha_l = 0 whenever lam*_l < 0
                if not N[r].is_zero() or l < r:
                    cons.append((-lamStar[l], False))
                continue
            if N[r].is_zero():
                continue
            comparison = N[l] * lamStar[r] - N[r] * lamStar[l]
            if comparison.degree > self.options.degree_cap:
                overCap = True
                continue
            cons.append((comparison, l < r))
        label = (REM, W[r])
        if overCap:
            path = node.path + (label,)
            region = self.refine_all(node.region, cons)
            if region is not None:
                verdict, region, point = self.check(region, path)
                if verdict != "prune":
                    self.emit(path, region, node.sequence, "unresolved", point)
            return None
        if N[r].is_zero():
            numerators = {W[l]: N[l] for l in range(len(W)) if l != r}
            newState = RationalState(numerators, q)
        else:
            denom = N[r] - q * lamStar[r]
            numerators = {W[l]: N[r] * lamStar[l] - N[l] * lamStar[r] for l in range(len(W)) if l != r}
            s = self._clean(denom).max_abs() or 1.0
            newState = RationalState({i: self._clean(p * (1.0 / s)) for i, p in numerators.items()},
                                     self._clean(denom * (1.0 / s)))
        return self.child(node, label, cons, W[:r] + W[r + 1:], newState)

    def _expand_singular(self, node: _Node) -> list:
        Dd, W, state = self.Dd, node.W, node.state
        p0 = NullDirection(Dd, W)
        rows = list(W)
        orientation = Polynomial.affine(Dd.D[rows].T @ p0, float(Dd.d0[rows] @ p0))
        children = []
        for label, sign, strict in ((KEEP, 1.0, False), (FLIP, -1.0, True)):
            region = self.refine(node.region, orientation * sign, strict)
            if region is None:
                continue
            p = sign * p0
            oriented = replace(node, region=region, path=node.path + ((label, -1),))
            if np.min(p) >= 0:
                self.child(oriented, (INF, -1), [], W, state, terminal="infeasible")
                continue
            N = [self._clean(state.numerators[i]) for i in W]
            negative = [j for j in range(len(W)) if p[j] < 0]
            for j in negative:
                cons = []
                for l in negative:
                    if l == j:
                        continue
                    comparison = self._clean(N[j] * (-p[l]) + N[l] * p[j])
                    cons.append((comparison, l < j))
                numerators = {W[l]: N[l] - N[j] * (p[l] / p[j]) for l in range(len(W)) if l != j}
                newState = RationalState({i: self._clean(v) for i, v in numerators.items()}, state.denominator)
                nxt = self.child(oriented, (SREM, W[j]), cons, W[:j] + W[j + 1:], newState)
                if nxt is not None:
                    children.append(nxt)
        return children

    def run(self, root: _Node) -> None:
        stack = [root]
        while stack:
            node = stack.pop()
            stack.extend(reversed(self.expand(node)))


def _format_path(path: tuple) -> str:
    return "/".join(LABELS[code] + ("" if idx < 0 else str(idx)) for code, idx in path)


def _explore_subtree(job: tuple) -> tuple:
    Dd, cfg, options, node = job
    explorer = _Explorer(Dd, cfg, options)
    explorer.run(node)
    return explorer.leaves, explorer.stats


def _merge_stats(total: dict, part: dict) -> None:
    for key, value in part.items():
        total[key] = max(total[key], value) if key == "max_depth" else total[key] + value


def _check_bounded(Theta0: Polyhedron, method: str) -> None:
    for k in range(Theta0.dim):
        for sign in (1.0, -1.0):
            e = np.zeros(Theta0.dim)
            e[k] = sign
            if SolveLP(e, Theta0, method).status == "unbounded":
                raise ValueError(f"Theta0 is unbounded along coordinate {k}.")


def Certify(Dd: DualData, Theta0: Optional[Polyhedron] = None, cfg: SolverConfig = SolverConfig(),
            options: CertOptions = CertOptions()) -> CertOutput:
    """
    Partition Theta0 into regions on which the solver executes one fixed working-set sequence.

    The exploration mirrors every branch of `Solve` symbolically. On a nonsingular
    working set the affine lam*(theta) splits the region into the dual-feasible side,
    which further splits into the optimal terminal region and one region per add
    candidate, and one region per removal candidate selected by the cross-multiplied
    ratio test. Consecutive removals make the iterate rational in theta, so the ratio
    comparisons become polynomial; comparisons above `degree_cap` freeze the region as
    unresolved. On a singular working set the region splits on the orientation of the
    null direction; the oriented region is either infeasible as a whole or splits on
    the singular ratio test.

    Parameters
    ----------
    Dd : DualData
        Dual of the problem.
    Theta0 : Polyhedron, optional
        Bounded parameter set; defaults to the problem's own Theta0.
    cfg : SolverConfig, optional
        Configuration of the solver being certified; it must be the one used online.
    options : CertOptions, optional
        Exploration options.

    Returns
    -------
    CertOutput
        Region records ordered by branch path (ids follow that order) plus statistics.
    """
    if cfg.remove_rule != "classic_blocking":
        raise ValueError(f"Certification supports the classic_blocking remove rule only, got {cfg.remove_rule}")
    if Theta0 is None:
        Theta0 = Dd.problem.Theta0
    if Theta0.dim != Dd.n_theta:
        raise ValueError(f"Theta0 has dimension {Theta0.dim}, expected {Dd.n_theta}")
    _check_bounded(Theta0, options.lp_method)
    start = time.perf_counter()
    explorer = _Explorer(Dd, cfg, options)
    dim = Dd.n_theta
    lam0 = np.zeros(Dd.m) if cfg.lam0 is None else np.asarray(cfg.lam0, dtype=float)
    state = RationalState.affine({i: Polynomial.constant(dim, lam0[i]) for i in cfg.W0}, dim)
    rootRegion = RegionDescription(Theta0)
    verdict, rootRegion, witness = explorer.check(rootRegion, ())
    if verdict != "keep":
        raise ValueError("Theta0 has no interior.")
    root = _Node(rootRegion, cfg.W0, (cfg.W0,), state, (), witness)

    workers = worker_count(options.workers)
    if workers <= 1:
        explorer.run(root)
        leaves, stats = explorer.leaves, explorer.stats
    else:
        # breadth-first split into independent subtrees
        frontier = [root]
        while frontier and len(frontier) < 4 * workers:
            node = frontier.pop(0)
            frontier.extend(explorer.expand(node))
        leaves, stats = list(explorer.leaves), dict(explorer.stats)
        results = parallel_map(_explore_subtree, [(Dd, cfg, options, node) for node in frontier], workers)
        for partLeaves, partStats in results:
            leaves.extend(partLeaves)
            _merge_stats(stats, partStats)
    leaves.sort(key=lambda leaf: leaf.path)
    records = tuple(RegionRecord(id=k, region=leaf.region, sequence=leaf.sequence, iterations=leaf.iterations,
                                 status=leaf.status, archetype=leaf.archetype, branch_path=leaf.path)
                    for k, leaf in enumerate(leaves))
    stats["regions"] = len(records)
    stats["seconds"] = time.perf_counter() - start
    logger.info(f"Certified {len(records)} regions from {stats['nodes']} nodes in {stats['seconds']:.2f}s")
    return CertOutput(records=records, statistics=stats, problem_digest=Dd.problem.digest(),
                      solver=cfg, options=options, Theta0=Theta0)

#----------------- Cover validation ------------------

@dataclass(frozen=True, eq=False)
class ValidationReport:
    samples: int
    checked: int
    matches: int
    boundary_skipped: int
    unresolved_hits: int
    counterexamples: tuple = ()

    @property
    def match_rate(self) -> float:
        return self.matches / self.checked if self.checked else 1.0

    @property
    def ok(self) -> bool:
        return len(self.counterexamples) == 0

    def to_dict(self) -> dict:
        return {"samples": self.samples, "checked": self.checked, "matches": self.matches,
                "match_rate": self.match_rate, "boundary_skipped": self.boundary_skipped,
                "unresolved_hits": self.unresolved_hits, "counterexamples": list(self.counterexamples)}


def sample_parameters(Theta0: Polyhedron, n: int, seed: int, label: str = "samples") -> np.ndarray:
    """
    n points uniform on Theta0: uniform on its bounding box, rejected into Theta0.
    """
    if n < 1:
        raise ValueError(f"Number of samples must be >= 1, got {n}")
    lo, hi = BoundingBox(Theta0)
    rng = rng_from_seed(seed, label)
    accepted = []
    total = 0
    for _ in range(1000):
        batch = rng.uniform(lo, hi, size=(max(n, 64), Theta0.dim))
        inside = MinSlack(RegionDescription(Theta0), batch) >= 0
        accepted.append(batch[inside])
        total += int(inside.sum())
        if total >= n:
            break
    else:
        raise ValueError("Rejection sampling into Theta0 failed; the set is too thin relative to its bounding box.")
    return np.vstack(accepted)[:n]


def ValidateCover(C: CertOutput, Dd: DualData, cfg: SolverConfig = SolverConfig(), numSamples: int = 1000,
                  eps: float = 1e-6, seed: int = 0) -> ValidationReport:
    """
    Check a certified cover against the solver on random parameters.

    Samples within eps of any region boundary are skipped. For every other sample the
    check requires exactly one resolved region to contain it, the solver's working-set
    sequence to equal that region's, and the trace hash to equal that of the region's
    archetype run. Samples covered only by unresolved regions are counted separately.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    C.check_solver(cfg)
    thetas = sample_parameters(C.Theta0, numSamples, seed, "validate")
    slacks = np.array([MinSlack(rec.region, thetas) for rec in C.records]).reshape(len(C.records), len(thetas))
    resolved = np.array([rec.status != "unresolved" for rec in C.records], dtype=bool)
    archetypeHash = {}
    counterexamples = []
    checked = matches = skipped = unresolvedHits = 0
    for k, theta in enumerate(thetas):
        column = slacks[:, k]
        if np.any(np.abs(column) <= eps):
            skipped += 1
            continue
        inside = np.flatnonzero((column > eps) & resolved)
        if inside.size == 0 and np.any((column > eps) & ~resolved):
            unresolvedHits += 1
            continue
        checked += 1
        result = Solve(Dd, theta, cfg)
        base = {"theta": [float(t) for t in theta], "regions": [int(i) for i in inside],
                "solver_sequence": [list(W) for W in result.sequence]}
        if inside.size != 1:
            counterexamples.append({"kind": "uncovered" if inside.size == 0 else "overlap", **base})
            continue
        rec = C.records[inside[0]]
        if result.sequence != rec.sequence:
            counterexamples.append({"kind": "sequence", "region_sequence": [list(W) for W in rec.sequence], **base})
            continue
        if rec.archetype is not None:
            if rec.id not in archetypeHash:
                archetypeHash[rec.id] = TraceHash(Solve(Dd, rec.archetype, cfg).trace)
            if TraceHash(result.trace) != archetypeHash[rec.id]:
                counterexamples.append({"kind": "trace", **base})
                continue
        matches += 1
    report = ValidationReport(samples=len(thetas), checked=checked, matches=matches, boundary_skipped=skipped,
                              unresolved_hits=unresolvedHits, counterexamples=tuple(counterexamples))
    if counterexamples:
        logger.warning(f"Cover validation found {len(counterexamples)} mismatches in {checked} checked samples")
    return report
