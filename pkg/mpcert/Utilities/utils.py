import os
import yaml
import numpy as np
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor
from numpy.typing import ArrayLike
from typing import Callable, Iterable, Optional, Union
from loguru import logger

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "Configurations")

FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3
MASK64 = 0xFFFFFFFFFFFFFFFF
INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class CostPolynomial:
    """
    Integer polynomial in the working-set size s, the decision dimension n and the
    constraint count m, evaluated as (sum_k c_k * s^a_k * n^b_k * m^e_k) // scale.
    """
    terms: tuple = ()
    scale: int = 1

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"Cost polynomial scale must be >= 1, got {self.scale}.")
        for term in self.terms:
            if len(term) != 4 or any(int(t) != t for t in term):
                raise ValueError(f"Cost polynomial terms are [coef, s_exp, n_exp, m_exp] integers, got {term}.")
            if term[0] < 0 or min(term[1:]) < 0:
                raise ValueError(f"Cost polynomial terms must be nonnegative, got {term}.")

    @classmethod
    def constant(cls, value: int) -> "CostPolynomial":
        return cls(terms=((int(value), 0, 0, 0),), scale=1)

    def evaluate(self, s: int, n: int, m: int) -> int:
        total = 0
        for c, a, b, e in self.terms:
            total += int(c) * int(s)**int(a) * int(n)**int(b) * int(m)**int(e)
        return total // self.scale

    def __add__(self, other: "CostPolynomial") -> "CostPolynomial":
        # common denominator, terms kept unmerged
        scale = self.scale * other.scale
        terms = tuple((c * other.scale, a, b, e) for c, a, b, e in self.terms)
        terms += tuple((c * self.scale, a, b, e) for c, a, b, e in other.terms)
        return CostPolynomial(terms=terms, scale=scale)

    def to_dict(self) -> dict:
        return {"scale": int(self.scale), "terms": [[int(t) for t in term] for term in self.terms]}


def cost_constructor(loader, node):
    """Construct a cost polynomial from a YAML config"""
    spec = loader.construct_mapping(node, deep=True)
    terms = tuple(tuple(int(t) for t in term) for term in spec.get("terms", []))
    return CostPolynomial(terms=terms, scale=int(spec.get("scale", 1)))
yaml.SafeLoader.add_constructor("!cost", cost_constructor)


def load_config(which: str) -> dict:
    """
    Load a YAML configuration, either by file path or by name of one of the
    files shipped in mpcert/Configurations (with or without the .yaml suffix).
    """
    if os.path.isfile(which):
        path = which
    else:
        name = which if which.endswith(".yaml") else f"{which}.yaml"
        path = os.path.join(CONFIG_DIR, name)
        if not os.path.isfile(path):
            raise ValueError(f"Configuration not found: {which}")
    with open(path) as f:
        config = yaml.safe_load(f)
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise ValueError(f"Configuration {path} must be a mapping at top level.")
    return config


def check_finite(x: ArrayLike, name: str, ndim: Optional[int] = None) -> np.ndarray:
    """
    Convert to a float array and reject NaN/inf entries.
    """
    try:
        x = np.array(x, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{name} cannot be converted to numeric array: {e}")
    if ndim is not None and x.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {x.shape}.")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values (NaN/inf) at idxs: {np.argwhere(~np.isfinite(x)).tolist()}")
    return x


def fnv1a_64(data: bytes, h: int = FNV_OFFSET) -> int:
    """
    FNV-1a 64-bit digest of a byte string, optionally continuing from a previous state.
    """
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, *labels) -> int:
    """
    Stable child seed from a base seed and a sequence of labels, so that random
    streams do not depend on the order in which work items are processed.
    """
    h = fnv1a_64(int(seed).to_bytes(8, "little", signed=True))
    for label in labels:
        h = fnv1a_64(repr(label).encode("utf8"), h)
    return h


def rng_from_seed(seed: int, *labels) -> np.random.Generator:
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.default_rng(seed)


def worker_count(workers: Optional[int] = None) -> int:
    """
    Number of worker processes: an explicit value wins, then MPCERT_THREADS
    (0 = all cores), then 1.
    """
    if workers is None:
        env = os.environ.get("MPCERT_THREADS", "")
        if env == "":
            return 1
        try:
            workers = int(env)
        except ValueError:
            raise ValueError(f"MPCERT_THREADS must be an integer, got '{env}'")
    if workers < 0:
        raise ValueError(f"Worker count must be >= 0, got {workers}")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def parallel_map(func: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """
    Map func over items, in a process pool when more than one worker is requested.
    The output order is the input order regardless of the worker count.
    """
    items = list(items)
    workers = worker_count(workers)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Mapping {len(items)} items over {workers} processes")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def get_problem(which: str = "ex1", horizon: int = 2):
    """
    Built-in problems for testing and validation.
    Options are 'ex1', 'ex2', 'parameter_free' or 'pendulum' (with the given horizon).

    ex1: H = I, f(theta) = -theta, x1 <= 1, x2 <= 1, -x1 - x2 <= 1, Theta0 = [-3, 3]^2.
    ex2: H = I, f(theta) = -theta, x1 <= 0, -x1 <= -1 (infeasible), Theta0 = [-3, 3]^2.
    parameter_free: ex1 with F = 0 and B = 0.
    """
    from ..Operations.Geometry import Polyhedron
    from ..Operations.Mpqp import MpQP

    box = Polyhedron.from_box([-3.0, -3.0], [3.0, 3.0])
    if which == "ex1":
        A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        return MpQP(H=np.eye(2), f0=np.zeros(2), F=-np.eye(2), A=A,
                    b0=np.ones(3), B=np.zeros((3, 2)), Theta0=box)
    elif which == "ex2":
        A = np.array([[1.0, 0.0], [-1.0, 0.0]])
        return MpQP(H=np.eye(2), f0=np.zeros(2), F=-np.eye(2), A=A,
                    b0=np.array([0.0, -1.0]), B=np.zeros((2, 2)), Theta0=box)
    elif which == "parameter_free":
        A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        return MpQP(H=np.eye(2), f0=np.array([-2.0, -0.5]), F=np.zeros((2, 2)), A=A,
                    b0=np.ones(3), B=np.zeros((3, 2)), Theta0=box)
    elif which == "pendulum":
        from ..Operations.Mpc import Condense, PendulumExample
        return Condense(PendulumExample(horizon))
    else:
        raise NotImplementedError("Problem not found.")


def as_index_tuple(W: Union[list, tuple, np.ndarray]) -> tuple:
    return tuple(int(i) for i in W)
