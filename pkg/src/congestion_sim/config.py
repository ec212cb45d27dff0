"""Flat key-value run configuration.

Grammar: one ``section.key = value`` per line, UTF-8, ``#`` starts a
comment.  Unknown keys are an error, never silently ignored.  Exactly one
of ``model.gamma`` and ``sweep.gammas`` must be present.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .initial_data import INIT_KINDS, InitRecipe
from .model import FORMULATIONS
from .solver import SchemeConfig


def _parse_bool_free_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from exc


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from exc


def _parse_float_list(text: str, key: str) -> tuple[float, ...]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers")
    return tuple(_parse_bool_free_float(item, key) for item in items)


# key -> (parser, default-or-None, help text); None default means optional
# presence handled downstream, REQUIRED means the key must appear.
REQUIRED = object()

CONFIG_KEYS = {
    "scheme.formulation": (str, "w_form",
                           f"state formulation, one of {FORMULATIONS}"),
    "scheme.cfl": (float, 0.45, "advective CFL number in (0, 1]"),
    "scheme.dt_max": (float, 1e-2, "upper bound on the time step"),
    "scheme.dt_init": (float, 1e-3, "time step cap for the very first step"),
    "scheme.newton_tol": (float, 1e-10, "residual tolerance of the implicit solve"),
    "scheme.max_halvings": (int, 20, "dt halvings tried before a vacuum error"),
    "grid.n_cells": (int, REQUIRED, "number of cells of the periodic mesh (>= 4)"),
    "model.gamma": (float, None, "offset exponent for a single run"),
    "sweep.gammas": ("float_list", None,
                     "comma-separated increasing exponents for a sweep"),
    "sweep.parallel_runs": (int, 1,
                            "max concurrent sweep runs (env CONGESTION_SIM_THREADS overrides)"),
    "init.kind": (str, "cosine", f"initial-data family, one of {INIT_KINDS}"),
    "init.rho_mean": (float, 0.8, "mean initial density (must exceed rho_amp)"),
    "init.rho_amp": (float, 0.1, "density perturbation amplitude (>= 0)"),
    "init.w_amp": (float, 0.2, "desired-velocity amplitude"),
    "init.w_mean": (float, 0.0, "mean desired velocity"),
    "init.phase": (float, 0.0, "phase shift of the density perturbation"),
    "init.csv_path": (str, None, "profile file for init.kind = custom_csv"),
    "time.t_end": (float, REQUIRED, "final time of the run"),
    "output.dir": (str, "out", "output directory"),
    "output.format": (str, "csv", "snapshot serialization: csv or jsonl"),
    "diagnostics.every": (float, 0.05, "snapshot/diagnostics cadence in time"),
}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        kind = CONFIG_KEYS[key][0]
        if kind is float:
            values[key] = _parse_bool_free_float(val, key)
        elif kind is int:
            values[key] = _parse_int(val, key)
        elif kind == "float_list":
            values[key] = _parse_float_list(val, key)
        else:
            values[key] = val
    return values


def parse_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, origin=path)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration."""

    scheme: SchemeConfig
    n_cells: int
    gamma: float | None
    gammas: tuple[float, ...] | None
    parallel_runs: int
    recipe: InitRecipe
    t_end: float
    out_dir: str
    out_format: str


def resolve_run_config(values: dict) -> RunConfig:
    """Fill defaults, enforce requiredness and cross-key rules."""
    resolved = {}
    for key, (_, default, _help) in CONFIG_KEYS.items():
        if key in values:
            resolved[key] = values[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
        else:
            resolved[key] = default

    has_gamma = resolved["model.gamma"] is not None
    has_gammas = resolved["sweep.gammas"] is not None
    if has_gamma == has_gammas:
        raise ConfigError(
            "exactly one of model.gamma and sweep.gammas must be present"
        )
    if resolved["output.format"] not in ("csv", "jsonl"):
        raise ConfigError("output.format must be csv or jsonl")

    try:
        scheme = SchemeConfig(
            formulation=resolved["scheme.formulation"],
            cfl=resolved["scheme.cfl"],
            dt_max=resolved["scheme.dt_max"],
            dt_init=resolved["scheme.dt_init"],
            newton_tol=resolved["scheme.newton_tol"],
            max_halvings=resolved["scheme.max_halvings"],
            snapshot_every=resolved["diagnostics.every"],
        )
        recipe = InitRecipe(
            kind=resolved["init.kind"],
            rho_mean=resolved["init.rho_mean"],
            rho_amp=resolved["init.rho_amp"],
            w_amp=resolved["init.w_amp"],
            w_mean=resolved["init.w_mean"],
            phase=resolved["init.phase"],
            csv_path=resolved["init.csv_path"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if resolved["grid.n_cells"] < 4:
        raise ConfigError("grid.n_cells must be at least 4")
    if resolved["time.t_end"] <= 0.0:
        raise ConfigError("time.t_end must be positive")
    if resolved["sweep.parallel_runs"] < 1:
        raise ConfigError("sweep.parallel_runs must be at least 1")

    return RunConfig(
        scheme=scheme,
        n_cells=resolved["grid.n_cells"],
        gamma=resolved["model.gamma"],
        gammas=resolved["sweep.gammas"],
        parallel_runs=resolved["sweep.parallel_runs"],
        recipe=recipe,
        t_end=resolved["time.t_end"],
        out_dir=resolved["output.dir"],
        out_format=resolved["output.format"],
    )


def load_run_config(path: str) -> RunConfig:
    return resolve_run_config(parse_config_file(path))


def config_key_help() -> str:
    lines = ["configuration keys (section.key = value, '#' comments):"]
    for key, (_, default, help_text) in CONFIG_KEYS.items():
        tag = "required" if default is REQUIRED else f"default {default!r}"
        lines.append(f"  {key:<22} {help_text} [{tag}]")
    return "\n".join(lines)
