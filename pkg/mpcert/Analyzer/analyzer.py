import copy
import importlib
import time
from dataclasses import replace
from functools import partial
from typing import Callable, Iterable, Optional
from loguru import logger
from ..Operations.Certification import CertOptions, CertOutput
from ..Operations.Mpqp import MpQP, ToDual
from ..Operations.Solver import SolverConfig
from ..Operations.Wcet import CostModel, WcetOptions
from ..Utilities.utils import get_problem, load_config

# stage name -> (Operations module, function)
STAGES = {
    "certify": ("Certification", "Certify"),
    "validate": ("Certification", "ValidateCover"),
    "wcet": ("Wcet", "Wcet"),
    "baseline": ("Wcet", "MonteCarloBaseline"),
}


def _merge(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)
    for section, values in (overrides or {}).items():
        if section not in out:
            raise ValueError(f"Unknown configuration section: {section}")
        for key, value in values.items():
            if key not in out[section]:
                raise ValueError(f"Unknown option {section}.{key}")
            if value is not None:
                out[section][key] = value
    return out


class WcetAnalyzer:
    """
    Pipeline driver configured from a YAML file (mpcert/Configurations/defaults.yaml
    when no path is given). Each stage is a partially applied Operations function.

    Parameters
    ----------
    configPath : str, optional
        Path of a configuration file with the sections of defaults.yaml.
    overrides : dict, optional
        {section: {option: value}} applied on top of the file; None values are ignored.
    """
    def __init__(self, configPath: Optional[str] = None, overrides: Optional[dict] = None):
        defaults = load_config("defaults")
        config = load_config(configPath) if configPath else {}
        for section, values in config.items():
            if section not in defaults:
                raise ValueError(f"Unknown configuration section: {section}")
        self.config = _merge(defaults, config)
        self.config = _merge(self.config, overrides)
        self.operations_package = "mpcert.Operations"
        self.solver_config = SolverConfig(**self.config["solver"])
        self.cert_options = CertOptions(**self.config["certification"])
        wcet = self.config["wcet"]
        self.cost_model = CostModel.load(wcet["profile"])
        self.wcet_options = WcetOptions(prune=bool(wcet["prune"]), interior_budget=int(wcet["interior_budget"]),
                                        seed=int(wcet["seed"]), workers=self.cert_options.workers)
        self.stages = self._build_stages()

    def _build_stages(self) -> dict:
        bound = {
            "certify": {"cfg": self.solver_config, "options": self.cert_options},
            "validate": {"cfg": self.solver_config, "numSamples": int(self.config["validation"]["samples"]),
                         "eps": float(self.config["validation"]["eps"]), "seed": int(self.config["validation"]["seed"])},
            "wcet": {"cfg": self.solver_config, "cm": self.cost_model, "options": self.wcet_options,
                     "certOptions": self.cert_options},
            "baseline": {"cfg": self.solver_config, "cm": self.cost_model,
                         "n": int(self.config["baseline"]["samples"]), "seed": int(self.config["baseline"]["seed"]),
                         "workers": self.cert_options.workers},
        }
        stages = {}
        for name, (moduleName, funcName) in STAGES.items():
            module = importlib.import_module(f"{self.operations_package}.{moduleName}")
            stages[name] = partial(getattr(module, funcName), **bound[name])
        return stages

    def certify(self, P: MpQP) -> CertOutput:
        return self.stages["certify"](ToDual(P))

    def validate(self, P: MpQP, C: CertOutput):
        return self.stages["validate"](C, ToDual(P))

    def wcet(self, P: MpQP, certificate: Optional[CertOutput] = None, baseline: bool = False):
        """WCET report; with baseline=True the Monte-Carlo maximum and histogram are attached."""
        report = self.stages["wcet"](P, certificate=certificate)
        if baseline:
            result = self.baseline(P)
            report = replace(report, baseline={"samples": len(result.costs), "max_cost": result.max_cost,
                                               "histogram": [[c, k] for c, k in sorted(result.histogram.items())]})
        return report

    def baseline(self, P: MpQP):
        return self.stages["baseline"](P)

    def run(self, P: MpQP, validate: bool = True) -> dict:
        """Certify once, then validate the cover and compute the WCET from the same certificate."""
        C = self.certify(P)
        out = {"certificate": C, "validation": None}
        if validate:
            out["validation"] = self.validate(P, C)
        out["report"] = self.wcet(P, certificate=C)
        return out

    def scalability(self, horizons: Iterable[int], problem: Callable[[int], MpQP] = None) -> list:
        """
        Certification and WCET over a range of horizons.

        Returns
        -------
        list of dict
            One row per horizon: horizon, nominal regions, survivors after pruning,
            certification seconds and worst cost.
        """
        problem = problem or (lambda N: get_problem("pendulum", N))
        rows = []
        for N in horizons:
            P = problem(N)
            start = time.perf_counter()
            C = self.certify(P)
            certSeconds = time.perf_counter() - start
            report = self.wcet(P, certificate=C)
            rows.append({"horizon": int(N), "regions": len(C.records), "survivors": len(report.survivors),
                         "cert_seconds": certSeconds, "worst_cost": report.worst_cost})
            logger.info(f"N={N}: {len(C.records)} regions, {len(report.survivors)} after pruning, "
                        f"worst cost {report.worst_cost}")
        return rows
