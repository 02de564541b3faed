"""Experiment configuration: a flat key=value text format, defaults,
validation, canonical rendering, and a content hash for output provenance.

The format is one ``key = value`` assignment per line; ``#`` starts a
comment and blank lines are ignored.  List-valued keys take comma-separated
entries.  Unknown keys and malformed values are rejected with the offending
line number, so a stale config fails loudly instead of silently running
with defaults.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .compressible import CompConfig
from .incompressible import IncompConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MODES",
    "default_config",
    "parse_config_text",
    "load_config",
    "render_config",
    "config_hash",
    "comp_config",
    "incomp_config",
]

MODES = ("compressible", "incompressible", "convergence_study",
         "asymptotic_study")


class ConfigError(ValueError):
    """Raised for unparseable files and violated config invariants."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sweep needs; scheme-level knobs are passed through to
    the per-run configs untouched."""

    mode: str = "compressible"
    grids: tuple[int, ...] = (32, 64, 128)
    eps: tuple[float, ...] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
    gamma: float = 2.0
    t_final: float = 0.02
    ref_grid: int = 512
    output_count: int = 10
    outdir: str = "out"
    seed: int = 0
    workers: int = 1
    # compressible scheme knobs
    eta_margin: float = 1.01
    cfl_fraction: float = 0.9
    dt_max: float | None = None
    picard_tol: float = 1e-11
    picard_max_iter: int = 50
    transport_tol: float = 1e-12
    transport_max_iter: int = 400
    # limit scheme knobs
    eta: float = 1.515
    pressure_tol: float = 1e-10
    pressure_max_iter: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(
                f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        if not self.grids:
            raise ConfigError("grids must be nonempty")
        g0 = self.grids[0]
        for g in self.grids:
            if g < 2:
                raise ConfigError(f"grid sizes must be at least 2, got {g}")
            ratio, rem = divmod(g, g0)
            if rem or ratio & (ratio - 1):
                raise ConfigError(
                    f"grid {g} is not a power-of-two multiple of {g0}")
        if list(self.grids) != sorted(set(self.grids)):
            raise ConfigError("grids must be strictly increasing")
        ratio, rem = divmod(self.ref_grid, g0)
        if self.ref_grid < self.grids[-1] or rem or ratio & (ratio - 1):
            raise ConfigError(
                f"ref_grid {self.ref_grid} must be a power-of-two multiple "
                f"of {g0}, at least {self.grids[-1]}")
        if not self.eps or any(e <= 0.0 for e in self.eps):
            raise ConfigError("eps list must be nonempty and positive")
        if self.mode == "asymptotic_study" and \
                list(self.eps) != sorted(set(self.eps), reverse=True):
            raise ConfigError(
                "eps must be strictly decreasing for an asymptotic study")
        if not self.gamma > 1.0:
            raise ConfigError(f"gamma must exceed 1, got {self.gamma}")
        if not self.t_final > 0.0:
            raise ConfigError(f"t_final must be positive, got {self.t_final}")
        if self.output_count < 2:
            raise ConfigError("output_count must be at least 2")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(","))


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


def _optional(parser):
    def parse(text: str):
        return None if text.lower() == "none" else parser(text)
    return parse


_PARSERS = {
    "mode": _parse_str,
    "grids": _parse_int_list,
    "eps": _parse_float_list,
    "gamma": _parse_float,
    "t_final": _parse_float,
    "ref_grid": _parse_int,
    "output_count": _parse_int,
    "outdir": _parse_str,
    "seed": _parse_int,
    "workers": _parse_int,
    "eta_margin": _parse_float,
    "cfl_fraction": _parse_float,
    "dt_max": _optional(_parse_float),
    "picard_tol": _parse_float,
    "picard_max_iter": _parse_int,
    "transport_tol": _parse_float,
    "transport_max_iter": _parse_int,
    "eta": _parse_float,
    "pressure_tol": _parse_float,
    "pressure_max_iter": _optional(_parse_int),
}


def parse_config_text(text: str, base: ExperimentConfig | None = None,
                      source: str = "<config>") -> ExperimentConfig:
    """Parse assignments on top of ``base`` (package defaults when omitted)."""
    updates: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        parser = _PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            updates[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(
                f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    cfg = base if base is not None else default_config()
    try:
        return replace(cfg, **updates)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config_text(text, source=str(path))


def _render_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_render_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical textual form: every field, declaration order, one per line.
    Parsing the rendering reproduces the config exactly."""
    lines = [f"{f.name} = {_render_value(getattr(cfg, f.name))}"
             for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """Hex digest identifying the full parameter set; stamped into outputs."""
    return hashlib.sha256(render_config(cfg).encode("utf-8")).hexdigest()[:16]


def comp_config(cfg: ExperimentConfig, eps: float) -> CompConfig:
    return CompConfig(
        gamma=cfg.gamma, eps=eps, eta_margin=cfg.eta_margin,
        cfl_fraction=cfg.cfl_fraction, t_final=cfg.t_final,
        dt_max=cfg.dt_max, picard_tol=cfg.picard_tol,
        picard_max_iter=cfg.picard_max_iter,
        transport_tol=cfg.transport_tol,
        transport_max_iter=cfg.transport_max_iter)


def incomp_config(cfg: ExperimentConfig) -> IncompConfig:
    return IncompConfig(
        eta=cfg.eta, cfl_fraction=cfg.cfl_fraction, t_final=cfg.t_final,
        dt_max=cfg.dt_max, pressure_tol=cfg.pressure_tol,
        pressure_max_iter=cfg.pressure_max_iter)
