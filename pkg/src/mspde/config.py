"""Experiment configuration: one JSON document, overridable by CLI flags."""

import json
import os
from dataclasses import dataclass, field, fields, asdict

from .errors import ConfigError

RTE_BOUNDARY_IDS = ("paper", "constant")
ELLIPTIC_BOUNDARY_IDS = ("sine", "constant")
MEDIA_KINDS = ("oscillatory", "high-contrast", "constant")
COLLISION_KINDS = ("henyey-greenstein", "homogeneous")


def _tuple(value, cast):
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    eps: tuple = (2.0 ** -6,)
    m: int = 10
    resolution: float = 0.01
    n_v: int = 120
    k_m: tuple = ()
    seeds: tuple = (0,)
    buffer_factor: float = 2.0
    media: str = "oscillatory"
    a0: float = 1.0
    element: str = "p1"
    collision: str = "henyey-greenstein"
    g: float = 0.5
    sigma: float = 1.0
    boundary_data: str = ""
    patch: tuple = ()
    mode: str = "full"
    reference: str = "full"
    orthonormalize: bool = True
    boundary_weight: float = 1.0
    boundary_full: bool = False
    modes_dump: int = 0
    out: str = ""
    workers: int = 1
    cache_dir: str = ""

    def __post_init__(self):
        object.__setattr__(self, "eps", _tuple(self.eps, float))
        object.__setattr__(self, "k_m", _tuple(self.k_m, int))
        object.__setattr__(self, "seeds", _tuple(self.seeds, int))
        object.__setattr__(self, "patch", _tuple(self.patch, int))
        if not self.boundary_data:
            object.__setattr__(self, "boundary_data",
                               "paper" if self.model == "rte" else "sine")
        self.validate()

    def validate(self):
        if self.model not in ("rte", "elliptic"):
            raise ConfigError("model", f"must be 'rte' or 'elliptic', got {self.model!r}")
        if not self.eps or any(e <= 0 for e in self.eps):
            raise ConfigError("eps", f"must be positive, got {self.eps}")
        if self.m < 2:
            raise ConfigError("m", f"must be >= 2, got {self.m}")
        if self.resolution <= 0:
            raise ConfigError("resolution", f"must be positive, got {self.resolution}")
        width = 1.0 / self.m
        ratio = width / self.resolution
        if abs(ratio - round(ratio)) > 1e-8 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError("resolution",
                              f"{self.resolution} does not divide patch width {width}")
        if self.model == "rte" and (self.n_v < 2 or self.n_v % 2 != 0):
            raise ConfigError("n_v", f"must be even and positive, got {self.n_v}")
        if any(k < 1 for k in self.k_m):
            raise ConfigError("k_m", f"entries must be >= 1, got {self.k_m}")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if self.buffer_factor < 1.0:
            raise ConfigError("buffer_factor",
                              f"must be >= 1, got {self.buffer_factor}")
        if self.model == "elliptic" and self.media not in MEDIA_KINDS:
            raise ConfigError("media", f"must be one of {MEDIA_KINDS}, got {self.media!r}")
        if self.a0 <= 0:
            raise ConfigError("a0", f"must be positive, got {self.a0}")
        if self.element not in ("p1", "q1"):
            raise ConfigError("element", f"must be 'p1' or 'q1', got {self.element!r}")
        if self.model == "rte" and self.collision not in COLLISION_KINDS:
            raise ConfigError("collision",
                              f"must be one of {COLLISION_KINDS}, got {self.collision!r}")
        if not abs(self.g) < 1.0:
            raise ConfigError("g", f"must satisfy |g| < 1, got {self.g}")
        if self.sigma <= 0:
            raise ConfigError("sigma", f"must be positive, got {self.sigma}")
        allowed = RTE_BOUNDARY_IDS if self.model == "rte" else ELLIPTIC_BOUNDARY_IDS
        if self.boundary_data not in allowed:
            raise ConfigError("boundary_data",
                              f"must be one of {allowed}, got {self.boundary_data!r}")
        if self.patch:
            want = 1 if self.model == "rte" else 2
            if len(self.patch) != want:
                raise ConfigError("patch",
                                  f"{self.model} patch id needs {want} index(es), "
                                  f"got {self.patch}")
            if any(not 1 <= p <= self.m for p in self.patch):
                raise ConfigError("patch", f"{self.patch} outside 1..{self.m}")
        if self.mode not in ("full", "reduced"):
            raise ConfigError("mode", f"must be 'full' or 'reduced', got {self.mode!r}")
        if self.reference not in ("full", "monolithic"):
            raise ConfigError("reference",
                              f"must be 'full' or 'monolithic', got {self.reference!r}")
        if self.boundary_weight <= 0:
            raise ConfigError("boundary_weight",
                              f"must be positive, got {self.boundary_weight}")
        if self.modes_dump < 0:
            raise ConfigError("modes_dump", f"must be >= 0, got {self.modes_dump}")
        if self.workers < 1:
            raise ConfigError("workers", f"must be >= 1, got {self.workers}")

    def to_mapping(self):
        d = asdict(self)
        for key in ("eps", "k_m", "seeds", "patch"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        return cls(**mapping)

    def replace(self, **kw):
        d = self.to_mapping()
        d.update(kw)
        return self.from_mapping(d)

    def default_patch(self):
        if self.patch:
            return self.patch
        return (2,) if self.model == "rte" else (2, 2)


def default_config(model):
    if model == "rte":
        return ExperimentConfig(model="rte", eps=(2.0 ** -6,), m=10,
                                resolution=0.01, n_v=120,
                                boundary_data="paper")
    return ExperimentConfig(model="elliptic", eps=(2.0 ** -4,), m=5,
                            resolution=0.01, boundary_data="sine")


def load_config(model, json_path=None, overrides=None):
    """Defaults, then the JSON document, then CLI flag overrides."""
    mapping = default_config(model).to_mapping()
    if json_path:
        try:
            with open(json_path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {json_path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config", "top-level JSON must be an object")
        mapping.update(doc)
    mapping["model"] = model
    env_seed = os.environ.get("MSPDE_SEED")
    if env_seed is not None and "seeds" not in (overrides or {}):
        try:
            mapping["seeds"] = [int(env_seed)]
        except ValueError as exc:
            raise ConfigError("seeds", f"MSPDE_SEED={env_seed!r} is not an int") from exc
    env_workers = os.environ.get("MSPDE_WORKERS")
    if env_workers is not None and "workers" not in (overrides or {}):
        try:
            mapping["workers"] = int(env_workers)
        except ValueError as exc:
            raise ConfigError("workers",
                              f"MSPDE_WORKERS={env_workers!r} is not an int") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            mapping[key] = value
    return ExperimentConfig.from_mapping(mapping)
