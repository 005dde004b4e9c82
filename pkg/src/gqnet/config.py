"""
Key-value run configuration.

One ``key = value`` pair per line; ``#`` starts a comment. Keys are flat and
grouped by prefix-free names (see ``FIELDS``). Unknown keys and malformed
values are rejected with the offending line and column.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

from .keyrate import ProtocolParams, RateError, SecurityEpsilons
from .network import ChainConfig, ChainError

SEED_ENV = "GQNET_SEED"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, source="<config>"):
        self.line, self.column, self.source = line, column, source
        where = f"{source}:{line}:{column}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _opt_float(text: str):
    return None if text.lower() in ("none", "") else float(text)


# key -> (section, parser)
FIELDS = {
    "depth_m": ("chain", int),
    "mu": ("chain", float),
    "gain_g": ("chain", float),
    "eta_B": ("chain", float),
    "xi": ("chain", float),
    "distance_km": ("chain", float),
    "loss_db_per_km": ("chain", float),
    "link_eta": ("chain", _opt_float),
    "xi_reference": ("chain", str),
    "bell_noise": ("chain", str),
    "nla_placement": ("chain", str),
    "N": ("protocol", float),
    "pe_fraction": ("protocol", float),
    "d": ("protocol", int),
    "p_s": ("protocol", float),
    "beta": ("protocol", float),
    "eps": ("eps", float),
    "eps_s": ("eps", float),
    "eps_h": ("eps", float),
    "eps_pe": ("eps", float),
    "fer": ("eps", float),
    "seed": ("run", int),
    "w": ("run", float),
}


@dataclass(frozen=True)
class ProtocolSettings:
    """Protocol knobs as written in a config; ``m_pe = pe_fraction * N``."""

    N: float = 1e10
    pe_fraction: float = 0.1
    d: int = 32
    p_s: float = 1.0
    beta: float = 1.0

    def params(self, N: float | None = None) -> ProtocolParams:
        n = self.N if N is None else N
        return ProtocolParams(N=n, m_pe=self.pe_fraction * n, d=self.d, p_s=self.p_s, beta=self.beta)


@dataclass(frozen=True)
class EpsilonSettings:
    """Security budget; ``eps_cor`` is whatever ``eps`` leaves after the other terms."""

    eps: float = 4.5e-10
    eps_s: float = 1e-10
    eps_h: float = 1e-10
    eps_pe: float = 1e-10
    fer: float = 0.1

    def epsilons(self) -> SecurityEpsilons:
        return SecurityEpsilons.from_total(self.eps, self.eps_s, self.eps_h, self.eps_pe, 1 - self.fer)


@dataclass(frozen=True)
class RunConfig:
    chain: ChainConfig = field(default_factory=ChainConfig)
    protocol: ProtocolSettings = field(default_factory=ProtocolSettings)
    epsilons: EpsilonSettings = field(default_factory=EpsilonSettings)
    seed: int = 1
    # recorded from the source parameter list; not used by any computation
    w: float | None = None
    output_dir: str = "."

    def validate(self) -> "RunConfig":
        try:
            self.protocol.params()
            self.epsilons.epsilons()
        except RateError as err:
            raise ConfigError(str(err)) from None
        return self

    def protocol_params(self, N: float | None = None) -> ProtocolParams:
        return self.protocol.params(N)

    def security(self) -> SecurityEpsilons:
        return self.epsilons.epsilons()

    def to_dict(self) -> dict:
        out = {}
        for section in (self.chain, self.protocol, self.epsilons):
            out.update(asdict(section))
        out["seed"] = self.seed
        if self.w is not None:
            out["w"] = self.w
        return out

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **values) -> "RunConfig":
        """Apply flat overrides (same keys as the file format); ``None`` values are skipped."""
        values = {k: v for k, v in values.items() if v is not None}
        return _build(self, values, source="<flags>")


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build(base: RunConfig, values: dict, source: str, positions: dict | None = None) -> RunConfig:
    positions = positions or {}
    groups = {"chain": {}, "protocol": {}, "eps": {}, "run": {}}
    for key, value in values.items():
        if key not in FIELDS:
            raise ConfigError(f"unknown key {key!r}", *positions.get(key, (None, None)), source)
        groups[FIELDS[key][0]][key] = value
    try:
        chain = replace(base.chain, **groups["chain"])
    except ChainError as err:
        line, col = _first_position(groups["chain"], positions)
        raise ConfigError(str(err), line, col, source) from None
    protocol = replace(base.protocol, **groups["protocol"])
    epsilons = replace(base.epsilons, **groups["eps"])
    run = groups["run"]
    cfg = replace(
        base,
        chain=chain,
        protocol=protocol,
        epsilons=epsilons,
        seed=run.get("seed", base.seed),
        w=run.get("w", base.w),
    )
    try:
        return cfg.validate()
    except ConfigError as err:
        line, col = _first_position({**groups["protocol"], **groups["eps"]}, positions)
        raise ConfigError(str(err).split(": ", 1)[-1], line, col, source) from None


def _first_position(keys, positions):
    found = [positions[k] for k in keys if k in positions]
    return min(found) if found else (None, None)


def parse_config(text: str, source: str = "<config>", base: RunConfig | None = None) -> RunConfig:
    values, positions = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col, source)
        key_part, value_part = body.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        value_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        value_text = value_part.strip()
        if key not in FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col, source)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, key_col, source)
        try:
            values[key] = FIELDS[key][1](value_text)
        except ValueError:
            raise ConfigError(f"bad value {value_text!r} for {key}", lineno, value_col, source) from None
        positions[key] = (lineno, value_col)
    return _build(base or RunConfig(), values, source, positions)


def preset_names() -> list[str]:
    root = resources.files("gqnet") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_config(path_or_preset: str | os.PathLike, env: dict | None = None) -> RunConfig:
    """Read a config file (or a shipped preset by name) and apply the ``GQNET_SEED`` override."""
    env = os.environ if env is None else env
    path = Path(path_or_preset)
    if path.exists():
        text, source = path.read_text(), str(path)
    elif str(path_or_preset) in preset_names():
        res = resources.files("gqnet") / "configs" / f"{path_or_preset}.cfg"
        text, source = res.read_text(), f"preset:{path_or_preset}"
    else:
        raise FileNotFoundError(f"no config file or preset named {str(path_or_preset)!r}")
    cfg = parse_config(text, source)
    if env.get(SEED_ENV):
        try:
            cfg = replace(cfg, seed=int(env[SEED_ENV]))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    return cfg


def config_from_dict(values: dict, source: str = "<manifest>") -> RunConfig:
    return _build(RunConfig(), dict(values), source)
