"""Run configuration: validated dataclass, TOML loading and flag overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .assembly import STAB_MODES
from .meshgen import FAMILIES, LShape, Rectangle

DOMAINS = ("rect", "lshape")
METHODS = ("auto", "dense", "sparse")


@dataclass(frozen=True)
class RunConfig:
    domain: str = "rect"
    a: float = 1.0
    b: float = 1.1
    family: str = "square"
    levels: tuple[int, ...] = (1, 2, 3, 4)
    order: int = 0
    sigma_e: float = 0.1
    stabilized: bool = False
    stab_mode: str = "projected"
    n_eigs: int = 7
    zero_tol: float = 1e-8
    seed: int = 0
    outdir: str | None = None
    method: str = "auto"
    tag: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        self.validate()

    def validate(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.domain == "lshape" and self.family not in ("triangular", "square"):
            raise ValueError("only triangular and square families exist on the L-shape")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("rectangle sides must be positive")
        if not self.levels or min(self.levels) < 0:
            raise ValueError("levels must be a nonempty list of nonnegative integers")
        if list(self.levels) != sorted(set(self.levels)):
            raise ValueError("levels must be strictly increasing")
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.sigma_e < 0:
            raise ValueError("sigma_e must be >= 0")
        if self.stab_mode not in STAB_MODES:
            raise ValueError(f"stab_mode must be one of {STAB_MODES}")
        if self.n_eigs < 1:
            raise ValueError("n_eigs must be >= 1")
        if not 0 < self.zero_tol < 1:
            raise ValueError("zero_tol must lie in (0, 1)")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def make_domain(self):
        return LShape() if self.domain == "lshape" else Rectangle(self.a, self.b)

    @property
    def sigma(self) -> float:
        return self.sigma_e if self.stabilized else 0.0

    def with_overrides(self, **kw: Any) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _known_keys() -> set[str]:
    return {f.name for f in fields(RunConfig)}


def config_from_mapping(data: dict[str, Any], base: RunConfig | None = None) -> RunConfig:
    unknown = set(data) - _known_keys()
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base = RunConfig() if base is None else base
    return replace(base, **data)


def load_config(path: str | Path) -> RunConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_mapping(data)
