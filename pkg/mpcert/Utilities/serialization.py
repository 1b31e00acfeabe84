import csv
import json
import numpy as np
from typing import Iterable, Optional

FORMAT_REGIONS = "mpcert-regions"
FORMAT_REPORT = "mpcert-report"
VERSION = 1


def _floats(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def write_json(obj: dict, path: str) -> None:
    """Deterministic JSON: insertion-ordered keys, shortest round-trip floats, no timestamps."""
    with open(path, "w", newline="\n") as f:
        json.dump(obj, f, indent=1, allow_nan=False)
        f.write("\n")


def read_json(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not valid JSON: {e}")


def write_csv(path: str, header: list, rows: Iterable) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])

#----------------- Problems ------------------

def polyhedron_to_dict(P) -> dict:
    return {"normals": _floats(P.normals), "offsets": _floats(P.offsets)}


def polyhedron_from_dict(data: dict, dim: int):
    from ..Operations.Geometry import Polyhedron
    normals = np.array(data["normals"], dtype=float).reshape(-1, dim)
    return Polyhedron(normals, np.array(data["offsets"], dtype=float))


def _box_of(P) -> Optional[tuple]:
    d = P.dim
    if len(P) == 2 * d and np.array_equal(P.normals, np.vstack([np.eye(d), -np.eye(d)])):
        return -P.offsets[d:], P.offsets[:d]
    return None


def problem_to_dict(P) -> dict:
    box = _box_of(P.Theta0)
    if box is not None:
        theta0 = {"box": {"lo": _floats(box[0]), "hi": _floats(box[1])}}
    else:
        theta0 = {"halfspaces": polyhedron_to_dict(P.Theta0)}
    return {"n": P.n, "m": P.m, "n_theta": P.n_theta, "H": _floats(P.H), "f0": _floats(P.f0),
            "F": _floats(P.F), "A": _floats(P.A), "b0": _floats(P.b0), "B": _floats(P.B), "Theta0": theta0}


def problem_from_dict(data: dict):
    from ..Operations.Geometry import Polyhedron
    from ..Operations.Mpqp import MpQP
    try:
        n, m, nTheta = int(data["n"]), int(data["m"]), int(data["n_theta"])
        theta0 = data["Theta0"]
        if "box" in theta0:
            Theta0 = Polyhedron.from_box(theta0["box"]["lo"], theta0["box"]["hi"])
        elif "halfspaces" in theta0:
            Theta0 = polyhedron_from_dict(theta0["halfspaces"], nTheta)
        else:
            raise ValueError("Theta0 must hold either 'box' or 'halfspaces'")

        def matrix(key, rows, cols):
            return np.array(data[key], dtype=float).reshape(rows, cols)

        return MpQP(H=matrix("H", n, n), f0=np.array(data["f0"], dtype=float), F=matrix("F", n, nTheta),
                    A=matrix("A", m, n), b0=np.array(data["b0"], dtype=float), B=matrix("B", m, nTheta),
                    Theta0=Theta0)
    except KeyError as e:
        raise ValueError(f"Problem file is missing field {e}")


def spec_to_dict(S) -> dict:
    return {"model": {"A": _floats(S.model.A), "B": _floats(S.model.B), "Ts": float(S.model.Ts)},
            "horizon": int(S.horizon), "Q": _floats(S.Q), "R": _floats(S.R), "QN": _floats(S.QN),
            "u_lo": _floats(S.u_lo), "u_hi": _floats(S.u_hi), "x_lo": _floats(S.x_lo),
            "x_hi": _floats(S.x_hi), "r_lo": _floats(S.r_lo), "r_hi": _floats(S.r_hi)}


def spec_from_dict(data: dict):
    from ..Operations.Mpc import LtiModel, MpcSpec
    model = LtiModel(np.array(data["model"]["A"], dtype=float), np.array(data["model"]["B"], dtype=float),
                     float(data["model"]["Ts"]))
    fields = {k: np.array(data[k], dtype=float) for k in ("Q", "R", "QN", "u_lo", "u_hi", "x_lo", "x_hi", "r_lo", "r_hi")}
    return MpcSpec(model=model, horizon=int(data["horizon"]), **fields)

#----------------- Certificates ------------------

def _path_to_list(path: tuple) -> list:
    from ..Operations.Certification import LABELS
    return [[LABELS[code], int(idx)] for code, idx in path]


def _path_from_list(items: list) -> tuple:
    from ..Operations.Certification import LABELS
    return tuple((LABELS.index(label), int(idx)) for label, idx in items)


def cert_to_dict(C) -> dict:
    statistics = {k: v for k, v in C.statistics.items() if k != "seconds"}
    regions = []
    for rec in C.records:
        regions.append({
            "id": rec.id,
            "branch_path": _path_to_list(rec.branch_path),
            "status": rec.status,
            "iterations": rec.iterations,
            "sequence": [list(W) for W in rec.sequence],
            "linear": polyhedron_to_dict(rec.region.linear),
            "nonlinear": [con.poly.to_dict() for con in rec.region.nonlinear],
            "archetype": None if rec.archetype is None else _floats(rec.archetype),
        })
    return {"format": FORMAT_REGIONS, "version": VERSION, "seed": int(C.options.seed),
            "problem_digest": C.problem_digest, "solver": C.solver.to_dict(), "options": C.options.to_dict(),
            "Theta0": polyhedron_to_dict(C.Theta0), "statistics": statistics, "regions": regions}


def cert_from_dict(data: dict):
    from ..Operations.Geometry import Polynomial, RegionDescription
    from ..Operations.Certification import CertOptions, CertOutput, RegionRecord
    from ..Operations.Solver import SolverConfig
    if data.get("format") != FORMAT_REGIONS or data.get("version") != VERSION:
        raise ValueError(f"Unsupported regions file: format {data.get('format')} version {data.get('version')}")
    dim = len(data["Theta0"]["normals"][0]) if data["Theta0"]["normals"] else 0
    Theta0 = polyhedron_from_dict(data["Theta0"], dim)
    solver = SolverConfig(**data["solver"])
    options = CertOptions(seed=int(data["seed"]), **data["options"])
    records = []
    for item in data["regions"]:
        linear = polyhedron_from_dict(item["linear"], dim)
        nonlinear = [Polynomial.from_dict(dim, p) for p in item["nonlinear"]]
        region = RegionDescription(linear)
        for poly in nonlinear:
            region = region.with_constraint(poly)
        archetype = None if item["archetype"] is None else np.array(item["archetype"], dtype=float)
        records.append(RegionRecord(id=int(item["id"]), region=region,
                                    sequence=tuple(tuple(int(i) for i in W) for W in item["sequence"]),
                                    iterations=int(item["iterations"]), status=item["status"],
                                    archetype=archetype, branch_path=_path_from_list(item["branch_path"])))
    return CertOutput(records=tuple(records), statistics=dict(data["statistics"]),
                      problem_digest=data["problem_digest"], solver=solver, options=options, Theta0=Theta0)


def read_cert(path: str):
    return cert_from_dict(read_json(path))

#----------------- Reports ------------------

def report_to_dict(R) -> dict:
    return {
        "format": FORMAT_REPORT,
        "version": VERSION,
        "worst_cost": R.worst_cost,
        "witness_region": R.witness_region,
        "witness_theta": None if R.witness_theta is None else _floats(R.witness_theta),
        "status": R.status,
        "caveat": R.caveat,
        "profile": R.profile,
        "pruning": R.pruning,
        "survivors": list(R.survivors),
        "pruned": list(R.pruned),
        "archetypes": [{"region_id": int(i), "theta": None if t is None else _floats(t)} for i, t in R.archetypes],
        "region_costs": [{"region_id": int(i), "cost": int(c)} for i, c in sorted(R.region_costs.items())],
        "advisory_costs": [{"region_id": int(i), "cost": int(c)} for i, c in sorted(R.advisory_costs.items())],
        "baseline": R.baseline,
    }


def histogram_rows(histogram: dict) -> list:
    return [(int(cost), int(count)) for cost, count in sorted(histogram.items())]
