"""Experiment configuration for the benchmark harness."""

from dataclasses import asdict, dataclass, field, fields

from .._validation import check_unit_open
from ..synthgen import SETUP_SCENARIOS

METHODS = (
    "standard_cp",
    "wcp_local",
    "wcp_global_oracle",
    "wcp_global_propensity",
    "wcp_local_oracle",
    "wcp_local_propensity",
)

# (n_seeds, n_samples): the desk profile keeps a sweep to minutes, the full
# profile is the published protocol scale.
PROFILES = {"desk": (10, 1000), "full": (50, 5000)}


def expand_methods(methods, propensity="both"):
    """Resolve a methods argument ("all" or iterable) against the roster.

    ``propensity`` filters the "all" expansion: "oracle" keeps oracle-density
    variants, "estimated" keeps estimated-density variants, "both" keeps all
    six. Explicit method lists are taken literally.
    """
    if methods == "all":
        keep = {
            "oracle": lambda m: not m.endswith("_propensity"),
            "estimated": lambda m: not m.endswith("_oracle"),
            "both": lambda m: True,
        }[propensity]
        return tuple(m for m in METHODS if keep(m))
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    return methods


@dataclass
class ExperimentConfig:
    """One benchmark sweep: scenario, scale, methods, and evaluation protocol.

    ``evaluation="grid"`` scores counterfactual draws on the dose grid;
    ``evaluation="observed"`` scores the observed test outcomes at their
    observed doses (no shift).
    """

    setup: int
    scenario: int = 1
    n_seeds: int = 50
    n_samples: int = 5000
    alphas: tuple = (0.1, 0.05)
    grid_k: int = 40
    methods: tuple = METHODS
    master_seed: int = 0
    fractions: tuple = (0.5, 0.25, 0.25)
    evaluation: str = "grid"
    workers: int = 1
    output: str = ""
    extras: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.setup not in SETUP_SCENARIOS or self.scenario not in SETUP_SCENARIOS[self.setup]:
            raise ValueError(f"unknown benchmark (setup={self.setup}, scenario={self.scenario})")
        self.methods = expand_methods(self.methods if self.methods else ())
        if not self.methods:
            raise ValueError("methods must be non-empty")
        self.alphas = tuple(check_unit_open(a, "alpha") for a in self.alphas)
        if not self.alphas:
            raise ValueError("alphas must be non-empty")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if self.grid_k < 2:
            raise ValueError("grid_k must be at least 2")
        if self.evaluation not in ("grid", "observed"):
            raise ValueError(f"evaluation must be 'grid' or 'observed', got {self.evaluation!r}")

    @property
    def needs_oracle(self):
        return any(m.endswith("_oracle") for m in self.methods)

    @property
    def needs_estimated(self):
        return any(m.endswith("_propensity") for m in self.methods)

    def to_dict(self):
        d = asdict(self)
        d.pop("extras")
        for key in ("alphas", "fractions", "methods"):
            d[key] = list(d[key])  # JSON-canonical form
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in d.items() if k in known}
        for key in ("alphas", "fractions", "methods"):
            if key in kwargs and not isinstance(kwargs[key], str):
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)
