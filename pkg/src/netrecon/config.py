"""Run configuration shared by the sampler and the command line."""

from dataclasses import asdict, dataclass, field, fields

from .measurement import ErrorHyperParams

MODELS = ("uniform", "hetero", "extrinsic", "none")
PRIORS = ("er", "cm", "dcsbm", "hdcsbm")


@dataclass
class RunConfig:
    """Model choice, chain settings and I/O paths.

    ``prior`` is one of ``er`` (uniform over edge counts), ``cm`` (one-group
    degree-corrected model), ``dcsbm`` (flat) or ``hdcsbm`` (nested).
    ``burn_in`` is a sweep count or ``"auto"`` for the stationarity rule.
    """

    model: str = "uniform"
    prior: str = "hdcsbm"
    alpha: float = 1.0
    beta: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    chains: int = 1
    sweeps: int = 1000
    burn_in: object = "auto"
    burn_window: int = 50
    burn_max: int = 5000
    thin: int = 1
    seed: int = 0
    d: float = 0.01
    eps: float = 1.0
    entry_ratio: float = 1.0
    max_groups: int | None = None
    multiplicity_cap: int | None = None
    fixed_edges: int | None = None
    depth: int | None = None
    hyper_step: float = 0.2
    init: str = "data"
    init_partition: str = "single"
    observables: bool = True
    data: str | None = None
    output: str = "."
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.prior not in PRIORS:
            raise ValueError(f"prior must be one of {PRIORS}")
        for name in ("alpha", "beta", "mu", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.sweeps < 0 or self.thin < 1:
            raise ValueError("sweeps must be nonnegative and thin positive")
        if self.burn_in != "auto" and int(self.burn_in) < 0:
            raise ValueError("burn_in must be 'auto' or a nonnegative integer")
        if not 0 < self.d < 1 or not self.eps > 0:
            raise ValueError("need 0 < d < 1 and eps > 0")
        if self.init not in ("data", "majority", "mixture", "empty"):
            raise ValueError("init must be 'data', 'majority', 'mixture' or 'empty'")
        if self.init_partition not in ("single", "spectral"):
            raise ValueError("init_partition must be 'single' or 'spectral'")

    @property
    def hyper(self):
        return ErrorHyperParams(self.alpha, self.beta, self.mu, self.nu)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_file(cls, path, **overrides):
        """Read ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                k, v = (s.strip() for s in line.split("=", 1))
                if k not in cls.field_names():
                    raise ValueError(f"{path}:{lineno}: unknown key '{k}'")
                values[k] = v
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**coerce(values))


def coerce(values):
    """Convert string values to the types of the matching fields."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for k, v in values.items():
        if not isinstance(v, str):
            out[k] = v
            continue
        t = types[k]
        if k == "burn_in":
            out[k] = v if v == "auto" else int(v)
        elif v.lower() in ("none", ""):
            out[k] = None
        elif t is int or t == (int | None):
            out[k] = int(v)
        elif t is float:
            out[k] = float(v)
        elif t is bool:
            out[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            out[k] = v
    return out
