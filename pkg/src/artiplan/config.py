"""Run configuration and seed derivation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .ik import IkParams
from .planners import PlannerParams
from .scene import GeneratorConfig
from .seqik import FeasibilityParams


def derive_seed(root: int, *labels) -> int:
    """64-bit seed for one randomized purpose: sha256 over the root seed and purpose labels.

    Labels are joined with '/' so ("bench", "s1-0003-o0", 2) is distinct from
    ("bench/s1-0003-o0", 2) only by content, never by accident of concatenation.
    """
    text = "artiplan/" + str(int(root)) + "/" + "/".join(str(x).replace("/", "//") for x in labels)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


@dataclass
class Paths:
    scene_dir: str = "scenes"
    label_dir: str = "labels"
    out_dir: str = "out"


@dataclass
class RunConfig:
    seed: int = 0
    paths: Paths = field(default_factory=Paths)
    feasibility: FeasibilityParams = field(default_factory=FeasibilityParams)
    ik: IkParams = field(default_factory=IkParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    pool_size: int = 20
    n_arms: int = 10

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["planner"]["projection_tol"] = list(self.planner.projection_tol)
        d["generator"]["handle_height"] = list(self.generator.handle_height)
        d["generator"]["split_fractions"] = list(self.generator.split_fractions)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = cls()
        parts = {"paths": Paths, "feasibility": FeasibilityParams, "ik": IkParams,
                 "planner": PlannerParams, "generator": GeneratorConfig}
        kw = {}
        for k, v in d.items():
            if k in parts:
                kw[k] = _sub(parts[k], getattr(cfg, k), v, k)
            else:
                kw[k] = v
        out = dataclasses.replace(cfg, **kw)
        out.generator.validate()
        return out


def _sub(typ, current, d, name):
    if not isinstance(d, dict):
        raise ValueError(f"config section {name!r} must be an object")
    names = {f.name for f in dataclasses.fields(typ)}
    extra = set(d) - names
    if extra:
        raise ValueError(f"unknown keys in {name!r}: {sorted(extra)}")
    vals = dict(d)
    for k in ("projection_tol", "handle_height", "split_fractions"):
        if k in vals:
            vals[k] = tuple(vals[k])
    try:
        return dataclasses.replace(current, **vals)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid {name!r} section: {exc}") from exc


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(d)
