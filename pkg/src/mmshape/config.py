"""Run configuration read from JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .deform import N_EXT_VARIANTS, STRATEGIES
from .flow import PROFILES
from .mesh import DEFAULT_TAG_IDS, TAGS
from .quadrature import DEFAULT_DEGREE


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def default_mesh_path() -> Path:
    return Path(str(resources.files("mmshape") / "data" / "channel_coarse.msh"))


@dataclass(frozen=True)
class RunConfig:
    mesh: str | None = None
    tag_map: dict = field(default_factory=lambda: {str(k): v for k, v in DEFAULT_TAG_IDS.items()})
    strategy: str = "S3"
    n_ext: str = "scaled"
    inflow_profile: str = "compatible"
    inflow_delta: float = 6.0
    alpha_init: float = 1e-2
    alpha_dec: float = 1 / 64
    alpha_target: float = 1e-10
    gamma: float = 1e3
    eta: float = 8e-2
    eps_ssn: float = 1e-9
    n_ssn: int = 40
    max_backtracks: int = 20
    quadrature_degree: int = DEFAULT_DEGREE
    output_dir: str = "output"

    def __post_init__(self):
        validate(self)

    @property
    def mesh_path(self) -> Path:
        return Path(self.mesh) if self.mesh else default_mesh_path()

    def tag_ids(self) -> dict[int, str]:
        return {int(k): v for k, v in self.tag_map.items()}

    def to_dict(self) -> dict:
        return asdict(self)


def validate(cfg: RunConfig) -> None:
    def bad(name, bound):
        raise ConfigError(f"{name} must {bound}, got {getattr(cfg, name)!r}")

    if cfg.strategy not in STRATEGIES:
        bad("strategy", f"be one of {list(STRATEGIES)}")
    if cfg.n_ext not in N_EXT_VARIANTS:
        bad("n_ext", f"be one of {list(N_EXT_VARIANTS)}")
    if cfg.inflow_profile not in PROFILES:
        bad("inflow_profile", f"be one of {list(PROFILES)}")
    if not cfg.inflow_delta > 0:
        bad("inflow_delta", "be positive")
    if not 0 < cfg.alpha_init:
        bad("alpha_init", "be positive")
    if not 0 < cfg.alpha_target <= cfg.alpha_init:
        bad("alpha_target", f"lie in (0, alpha_init={cfg.alpha_init}]")
    if not 0 < cfg.alpha_dec < 1:
        bad("alpha_dec", "lie in (0,1)")
    if not cfg.gamma >= 0:
        bad("gamma", "be >= 0")
    if not 0 < cfg.eta < 1:
        bad("eta", "lie in (0,1)")
    if not 0 < cfg.eps_ssn < 1:
        bad("eps_ssn", "lie in (0,1)")
    for name in ("n_ssn", "max_backtracks", "quadrature_degree"):
        val = getattr(cfg, name)
        if isinstance(val, bool) or not isinstance(val, int) or val < 1:
            bad(name, "be a positive integer")
    if not isinstance(cfg.tag_map, dict) or not cfg.tag_map:
        bad("tag_map", "map physical group ids to boundary tags")
    for k, v in cfg.tag_map.items():
        try:
            int(k)
        except (TypeError, ValueError):
            raise ConfigError(f"tag_map key {k!r} is not an integer physical id") from None
        if v not in TAGS:
            raise ConfigError(f"tag_map value {v!r} must be one of {list(TAGS)}")


_FLOATS = {"inflow_delta", "alpha_init", "alpha_dec", "alpha_target", "gamma", "eta", "eps_ssn"}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {unknown}")
    kwargs = dict(data)
    for name in _FLOATS & set(kwargs):
        val = kwargs[name]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{name} must be a number, got {val!r}")
        kwargs[name] = float(val)
    if "tag_map" in kwargs and isinstance(kwargs["tag_map"], dict):
        kwargs["tag_map"] = {str(k): v for k, v in kwargs["tag_map"].items()}
    return RunConfig(**kwargs)


def parse_config(path) -> RunConfig:
    """Read and validate a JSON configuration; missing keys take defaults."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: {err}") from None
    cfg = config_from_dict(data)
    if cfg.mesh and not Path(cfg.mesh).is_absolute():
        # relative mesh paths are taken relative to the config file
        cfg = config_from_dict({**cfg.to_dict(), "mesh": str(Path(path).parent / cfg.mesh)})
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
