"""Run configuration: JSON in, validated dataclass out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from .circle_map import NotExpandingError, map_from_dict
from .dc_class import make_sequence

N_TRACES_MAX = 14


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass(frozen=True)
class Options:
    n_random_z: int = 20
    seed: int = 0
    weight_x_min: float = 1e-6
    weight_points: int = 61
    growth_z: tuple = (1.0, 2.0, 5.0, 10.0)
    genus_z: tuple = (10.0, 100.0)
    counting_r: tuple = (10.0, 100.0, 1000.0)
    gammas: tuple = (1.1, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class RunConfig:
    map: dict
    class_spec: dict
    theta: float = 1.5
    K_list: tuple = (96, 128)
    n_traces: int = 10
    R: float | None = None
    order_m: int | None = None
    out: str = "out"
    options: Options = field(default_factory=Options)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class"] = d.pop("class_spec")
        d["K_list"] = list(self.K_list)
        d["options"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["options"].items()}
        return d

    def digest(self) -> str:
        """Hash of the configuration (``out`` excluded: it does not affect results)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return validate(replace(self, **kw)) if kw else self


_TOP_KEYS = {"map", "class", "theta", "K_list", "n_traces", "R", "order_m", "out", "options"}


def from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    for key in ("map", "class"):
        if key not in d:
            raise ConfigError(key, "required field missing")
    opts = d.get("options", {})
    try:
        opts = Options(**{k: tuple(v) if isinstance(v, list) else v for k, v in opts.items()})
    except TypeError as exc:
        raise ConfigError("options", str(exc)) from None
    cfg = RunConfig(
        map=dict(d["map"]),
        class_spec=dict(d["class"]),
        theta=d.get("theta", 1.5),
        K_list=tuple(d.get("K_list", (96, 128))),
        n_traces=d.get("n_traces", 10),
        R=d.get("R"),
        order_m=d.get("order_m"),
        out=d.get("out", "out"),
        options=opts,
    )
    return validate(cfg)


def validate(cfg: RunConfig) -> RunConfig:
    try:
        T, _ = map_from_dict(cfg.map)
    except NotExpandingError as exc:
        raise ConfigError("map", str(exc)) from None
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("map", str(exc)) from None
    try:
        make_sequence(cfg.class_spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("class", str(exc)) from None
    if not isinstance(cfg.theta, (int, float)) or not 1 < cfg.theta < T.lam:
        raise ConfigError("theta", f"must lie in (1, {T.lam:.6g}) for this map")
    K = cfg.K_list
    if len(K) < 2 or any(not isinstance(k, int) or k < 1 for k in K) or list(K) != sorted(set(K)):
        raise ConfigError("K_list", "need at least two strictly ascending positive integers")
    if not isinstance(cfg.n_traces, int) or not 1 <= cfg.n_traces <= N_TRACES_MAX:
        raise ConfigError("n_traces", f"must be an integer in [1, {N_TRACES_MAX}]")
    if cfg.R is not None and not (isinstance(cfg.R, (int, float)) and cfg.R > 0):
        raise ConfigError("R", "must be positive")
    if cfg.order_m is not None and not (isinstance(cfg.order_m, int) and cfg.order_m >= 1):
        raise ConfigError("order_m", "must be an integer >= 1")
    return cfg


def load(path) -> RunConfig:
    """Read a JSON config; ``json.JSONDecodeError`` carries the parse location."""
    with open(path) as fh:
        d = json.load(fh)
    return from_dict(d)
