import os
import time
import numpy as np
from dataclasses import dataclass
from numpy.typing import ArrayLike
from typing import Optional, Union
from loguru import logger
from .Geometry import Polyhedron, ChebyshevCenter, Contains, InteriorPoint
from .Mpqp import MpQP, DualData, ToDual
from .Solver import Block, BLOCK_TABLE, ExecutionTrace, SolverConfig, Solve
from .Certification import CertOptions, CertOutput, Certify, sample_parameters
from ..Utilities.utils import (CostPolynomial, load_config, derive_seed, parallel_map, check_finite,
                               INT64_MAX)

TERMINAL_STATUSES = ("optimal", "infeasible")

#----------------- Cost models ------------------

def _scale_poly(poly: CostPolynomial, k: int) -> CostPolynomial:
    return CostPolynomial(terms=tuple((c * k, a, b, e) for c, a, b, e in poly.terms), scale=poly.scale)


def _as_poly(value) -> CostPolynomial:
    if isinstance(value, CostPolynomial):
        return value
    if isinstance(value, int) and value >= 0:
        return CostPolynomial.constant(value)
    raise ValueError(f"Block weights must be !cost polynomials or nonnegative integers, got {value!r}")


@dataclass(frozen=True)
class CostModel:
    """
    Deterministic cycle model: every trace event costs weights[block](|W|, n, m),
    plus a fixed overhead per solver call.
    """
    name: str
    weights: dict
    overhead: int = 0

    def __post_init__(self):
        missing = [b.name for b in Block if b not in self.weights]
        if missing:
            raise ValueError(f"Cost profile {self.name} has no weight for blocks {missing}")
        if int(self.overhead) != self.overhead or self.overhead < 0:
            raise ValueError(f"Overhead must be a nonnegative integer, got {self.overhead}")

    @classmethod
    def from_config(cls, name: str, spec: dict) -> "CostModel":
        unknown = set(spec) - {"overhead", "default", "blocks", "counts", "name"}
        if unknown:
            raise ValueError(f"Unknown keys in cost profile {name}: {sorted(unknown)}")
        default = _as_poly(spec.get("default", CostPolynomial()))
        blocks = spec.get("blocks", {}) or {}
        for key in blocks:
            if key not in Block.__members__:
                raise ValueError(f"Unknown block in cost profile {name}: {key}")
        counts = spec.get("counts", {}) or {}
        wFlops, wMem = int(counts.get("flops", 0)), int(counts.get("mem", 0))
        if wFlops < 0 or wMem < 0:
            raise ValueError(f"Count weights must be nonnegative in cost profile {name}")
        weights = {}
        for block in Block:
            flops, mem = BLOCK_TABLE[block]
            weights[block] = _as_poly(blocks.get(block.name, default)) + _scale_poly(flops, wFlops) + _scale_poly(mem, wMem)
        return cls(name=spec.get("name", name), weights=weights, overhead=int(spec.get("overhead", 0)))

    @classmethod
    def load(cls, which: str = "unit") -> "CostModel":
        """A shipped profile by name ('unit', 'flop') or a YAML profile file."""
        shipped = load_config("profiles")
        if which in shipped:
            return cls.from_config(which, shipped[which])
        if not os.path.isfile(which):
            raise ValueError(f"Unknown cost profile: {which}. Should be one of {sorted(shipped)} or a file.")
        spec = load_config(which)
        name = os.path.splitext(os.path.basename(which))[0]
        return cls.from_config(name, spec)

    def block_cost(self, block: Block, s: int, n: int, m: int) -> int:
        return self.weights[block].evaluate(s, n, m)

    def scaled(self, k: int) -> "CostModel":
        if k < 1:
            raise ValueError(f"Scale must be a positive integer, got {k}")
        return CostModel(f"{self.name}x{k}", {b: _scale_poly(p, k) for b, p in self.weights.items()},
                         self.overhead * k)

    def _path_cost(self, blocks: tuple, s: int, n: int, m: int) -> int:
        return sum(self.block_cost(b, s, n, m) for b in blocks)

    def supports_prefix_pruning(self, n: int, m: int, witnessStatuses: tuple = TERMINAL_STATUSES) -> bool:
        """
        Sufficient condition for dropping regions whose working-set sequence is a strict
        prefix of another's: the terminal tail of the shorter run never costs more than
        the longer run's action at the same working set plus its cheapest terminal iteration.
        """
        B = Block
        optIter = (B.SING_CHECK, B.LINSYS, B.LAM_CHECK, B.MU_COMP, B.MU_CHECK, B.TERMINATE_OPT)
        infIter = (B.SING_CHECK, B.SING_DIR, B.P_CHECK, B.TERMINATE_INF)
        rest = []
        if "optimal" in witnessStatuses:
            rest.append(min(self._path_cost(optIter, s, n, m) for s in range(m + 1)))
        if "infeasible" in witnessStatuses and m >= 1:
            rest.append(min(self._path_cost(infIter, s, n, m) for s in range(1, m + 1)))
        if not rest:
            return True
        restMin = min(rest)
        for s in range(m + 1):
            optTail = self._path_cost((B.MU_COMP, B.MU_CHECK, B.TERMINATE_OPT), s, n, m)
            if s < m and optTail > self._path_cost((B.MU_COMP, B.MU_CHECK, B.ADD), s, n, m) + restMin:
                return False
            if s >= 1:
                if optTail > self.block_cost(B.REMOVE_RATIO, s, n, m) + restMin:
                    return False
                if self.block_cost(B.TERMINATE_INF, s, n, m) > self.block_cost(B.SING_REMOVE, s, n, m) + restMin:
                    return False
        return True


def TraceCost(t: ExecutionTrace, cm: CostModel) -> int:
    """
    Cycle count of a trace: overhead plus the sum of per-event block costs, in exact
    integer arithmetic bounded by 2^63 - 1.
    """
    total = int(cm.overhead)
    for event in t:
        if event.block not in cm.weights:
            raise ValueError(f"Cost profile {cm.name} has no weight for block {event.block!r}")
        total += cm.block_cost(event.block, event.size, t.n, t.m)
        if total > INT64_MAX:
            raise OverflowError(f"Trace cost exceeds 2^63 - 1 under profile {cm.name}")
    return total

#----------------- Prefix pruning and archetypes ------------------

def PrunePrefixes(C: CertOutput) -> frozenset:
    """
    Ids of the regions that survive prefix pruning.

    A terminal (optimal or infeasible) region is dropped when its working-set sequence
    is a strict prefix of another terminal region's sequence, or equals the sequence of
    a region with a lower id. Unresolved and iteration-capped regions are never dropped
    and never act as witnesses.
    """
    trie = {}
    ends = []
    for rec in C.records:
        if rec.status not in TERMINAL_STATUSES:
            continue
        node = trie
        for W in rec.sequence:
            node = node.setdefault(W, {})
        ends.append((rec.id, node))
    seen = set()
    pruned = set()
    for rid, node in ends:
        if id(node) in seen or node:
            pruned.add(rid)
        seen.add(id(node))
    survivors = frozenset(rec.id for rec in C.records if rec.id not in pruned)
    logger.info(f"Prefix pruning kept {len(survivors)} of {len(C.records)} regions")
    return survivors


def ExtractArchetypes(C: CertOutput, survivors: Optional[frozenset] = None, budget: int = 10_000,
                      seed: int = 0) -> list:
    """
    One parameter per surviving region: Chebyshev centre for polyhedral regions,
    sampled point for mixed ones, None when sampling fails.

    Returns
    -------
    list
        (region id, theta or None) in id order.
    """
    out = []
    for rec in C.records:
        if survivors is not None and rec.id not in survivors:
            continue
        theta = InteriorPoint(rec.region, budget=budget, seed=derive_seed(seed, rec.id))
        if theta is None:
            logger.warning(f"Region {rec.id} has no archetype and is unresolved")
        out.append((rec.id, theta))
    return out

#----------------- WCET ------------------

@dataclass(frozen=True)
class WcetOptions:
    prune: bool = True
    interior_budget: int = 10_000
    seed: int = 0
    workers: Optional[int] = None


@dataclass(frozen=True, eq=False)
class WcetReport:
    worst_cost: Optional[int]
    witness_region: Optional[int]
    witness_theta: Optional[np.ndarray]
    status: str
    caveat: Optional[str]
    profile: str
    pruning: bool
    survivors: tuple
    pruned: tuple
    archetypes: tuple
    region_costs: dict
    advisory_costs: dict
    baseline: Optional[dict] = None


def _solve_cost(job: tuple) -> int:
    Dd, cfg, cm, theta = job
    return TraceCost(Solve(Dd, theta, cfg).trace, cm)


def Wcet(P: MpQP, Theta0: Optional[Polyhedron] = None, cfg: SolverConfig = SolverConfig(),
         cm: Optional[CostModel] = None, options: WcetOptions = WcetOptions(),
         certOptions: CertOptions = CertOptions(), certificate: Optional[CertOutput] = None) -> WcetReport:
    """
    Worst-case cost of the solver over Theta0.

    The pipeline dualises the problem, certifies Theta0 (unless a certificate is
    supplied), drops prefix regions, picks one archetype per surviving region, solves
    it and costs its trace; the maximum over archetypes is the worst case. Costs of all
    regions are kept as the lookup map. Unresolved regions turn the result into a
    certified lower bound with advisory costs sampled at their best-effort points.

    Parameters
    ----------
    P : MpQP
        Problem to analyse.
    Theta0 : Polyhedron, optional
        Parameter set, defaults to P.Theta0.
    cfg : SolverConfig, optional
        Solver configuration.
    cm : CostModel, optional
        Cost profile, 'unit' when omitted.
    options : WcetOptions, optional
        Pruning flag, archetype search budget, seed and worker count.
    certOptions : CertOptions, optional
        Options forwarded to Certify.
    certificate : CertOutput, optional
        Precomputed certification of the same problem and configuration.

    Returns
    -------
    WcetReport
    """
    cm = cm or CostModel.load("unit")
    Dd = ToDual(P)
    start = time.perf_counter()
    if certificate is None:
        certificate = Certify(Dd, Theta0, cfg, certOptions)
    elif certificate.problem_digest != P.digest():
        raise ValueError("Certificate was computed for a different problem.")
    else:
        certificate.check_solver(cfg)
    C = certificate

    prune = options.prune
    if prune:
        statuses = tuple({rec.status for rec in C.records if rec.status in TERMINAL_STATUSES})
        if not cm.supports_prefix_pruning(P.n, P.m, statuses):
            logger.warning(f"Profile {cm.name} does not guarantee cost monotonicity along prefixes; pruning disabled")
            prune = False
    survivors = PrunePrefixes(C) if prune else frozenset(rec.id for rec in C.records)
    archetypes = ExtractArchetypes(C, survivors, options.interior_budget, options.seed)
    archetypeOf = dict(archetypes)

    # cost map: surviving archetypes, then the certificate's own points for the rest
    points = {}
    unresolved = []
    for rec in C.records:
        theta = archetypeOf.get(rec.id)
        if theta is None:
            theta = rec.archetype
        if theta is None or rec.status == "unresolved":
            unresolved.append(rec.id)
        if theta is None:
            theta = ChebyshevCenter(rec.region.linear)[0]
        points[rec.id] = theta
    ids = sorted(points)
    costs = parallel_map(_solve_cost, [(Dd, cfg, cm, points[i]) for i in ids], options.workers)
    costMap = dict(zip(ids, costs))

    regionCosts = {i: c for i, c in costMap.items() if i not in unresolved}
    advisory = {i: costMap[i] for i in unresolved if i in costMap}
    candidates = [(regionCosts[i], -i) for i in survivors if i in regionCosts]
    if candidates:
        worst, negId = max(candidates)
        witness = -negId
    else:
        worst, witness = None, None
    status = "lower_bound" if unresolved else "exact"
    caveat = None
    if unresolved:
        caveat = (f"{len(unresolved)} unresolved regions: the worst cost is a certified lower bound; "
                  f"advisory costs of the unresolved regions are listed separately.")
        logger.warning(caveat)
    logger.info(f"WCET {worst} at region {witness} ({status}) in {time.perf_counter() - start:.2f}s")
    return WcetReport(worst_cost=worst, witness_region=witness,
                      witness_theta=None if witness is None else points[witness],
                      status=status, caveat=caveat, profile=cm.name, pruning=prune,
                      survivors=tuple(sorted(survivors)),
                      pruned=tuple(sorted(set(rec.id for rec in C.records) - survivors)),
                      archetypes=tuple(archetypes), region_costs=regionCosts, advisory_costs=advisory)

#----------------- Lookup, baseline and wall clock ------------------

@dataclass(frozen=True)
class LookupResult:
    region_id: Optional[int]
    cost: Optional[int]
    boundary: bool = False
    advisory: bool = False


def LookupCost(C: CertOutput, costMap: dict, theta: ArrayLike, tol: float = 1e-9) -> LookupResult:
    """
    Certified cost at theta: the region containing it (lowest id among interior hits,
    otherwise lowest id among boundary hits, which sets the boundary flag).
    """
    theta = check_finite(theta, "theta", ndim=1)
    if Contains(C.Theta0, theta, tol) == "outside":
        raise ValueError(f"theta={theta.tolist()} lies outside Theta0")
    inside, boundary, advisory = [], [], []
    for rec in C.records:
        where = Contains(rec.region, theta, tol)
        if where == "outside":
            continue
        if rec.status == "unresolved":
            advisory.append(rec.id)
        elif where == "inside":
            inside.append(rec.id)
        else:
            boundary.append(rec.id)
    if inside:
        return LookupResult(inside[0], costMap.get(inside[0]))
    if boundary:
        return LookupResult(boundary[0], costMap.get(boundary[0]), boundary=True)
    if advisory:
        return LookupResult(advisory[0], costMap.get(advisory[0]), advisory=True)
    raise ValueError(f"No region contains theta={theta.tolist()}")


@dataclass(frozen=True, eq=False)
class BaselineResult:
    max_cost: int
    histogram: dict
    samples: np.ndarray
    costs: tuple


def MonteCarloBaseline(P: MpQP, Theta0: Optional[Polyhedron] = None, cfg: SolverConfig = SolverConfig(),
                       cm: Optional[CostModel] = None, n: int = 1000, seed: int = 0,
                       workers: Optional[int] = None) -> BaselineResult:
    """
    Measurement-style estimate: the largest cost over n uniform parameters, plus the
    cost histogram (sorted by cost).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cm = cm or CostModel.load("unit")
    Dd = ToDual(P)
    thetas = sample_parameters(Theta0 if Theta0 is not None else P.Theta0, n, seed, "baseline")
    costs = parallel_map(_solve_cost, [(Dd, cfg, cm, t) for t in thetas], workers)
    values, counts = np.unique(np.array(costs, dtype=np.int64), return_counts=True)
    histogram = {int(v): int(c) for v, c in zip(values, counts)}
    return BaselineResult(max_cost=int(max(costs)), histogram=histogram, samples=thetas, costs=tuple(costs))


@dataclass(frozen=True)
class WallclockResult:
    ns: int
    repeats: int
    certified: bool = False


def MeasureWallclock(P: Union[MpQP, DualData], theta: ArrayLike, repeats: int = 3,
                     cfg: SolverConfig = SolverConfig()) -> WallclockResult:
    """
    Minimum host wall-clock time of a solve over `repeats` runs, in nanoseconds.
    Host timings are not certified: they depend on the OS, caches and frequency scaling.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    Dd = P if isinstance(P, DualData) else ToDual(P)
    best = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        Solve(Dd, theta, cfg)
        elapsed = time.perf_counter_ns() - t0
        best = elapsed if best is None else min(best, elapsed)
    logger.debug(f"Wall-clock {best} ns over {repeats} repeats (not certified)")
    return WallclockResult(ns=int(best), repeats=repeats)
