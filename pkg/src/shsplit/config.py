"""Flat key=value run configuration.

Files hold one `section.key = value` pair per line, `#` comments, blank
lines ignored.  Every key is declared below with its type and default;
unknown keys and malformed values raise ConfigError.  Command-line
overrides use the same `key=value` syntax.  The digest is a sha256 over
the canonically sorted pairs, so two files with the same settings in a
different order hash identically.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from . import lattice
from .energy import PhysParams
from .lattice import Field, GridSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class _Spec:
    type: type
    default: object
    choices: tuple | None = None
    minimum: float | None = None


_SCHEMA: dict[str, _Spec] = {
    "grid.nx": _Spec(int, 16, minimum=2),
    "grid.ny": _Spec(int, 16, minimum=2),
    "grid.nz": _Spec(int, 16, minimum=2),
    "grid.dx": _Spec(float, 1.0, minimum=0.0),
    "grid.dy": _Spec(float, 1.0, minimum=0.0),
    "grid.dz": _Spec(float, 1.0, minimum=0.0),
    "phys.epsilon": _Spec(float, 1.0, minimum=0.0),
    "phys.eta": _Spec(float, 0.5),
    "init.kind": _Spec(str, "noise", choices=("noise", "cosine", "zero", "constant")),
    "init.amplitude": _Spec(float, 0.4, minimum=0.0),
    "init.seed": _Spec(int, 0),
    "init.modes": _Spec(str, "1,0,0"),
    "init.mode_amplitudes": _Spec(str, "0.2"),
    "run.mode": _Spec(str, "fixed", choices=("fixed", "adaptive")),
    "run.dt": _Spec(float, 1e-3, minimum=0.0),
    "run.steps": _Spec(int, 100, minimum=1),
    "run.monitors": _Spec(bool, True),
    "run.log_every": _Spec(int, 1, minimum=1),
    "adaptive.dt_lo": _Spec(float, 1e-4, minimum=0.0),
    # 0 = auto (0.9 * dt_limit); same sentinel convention below
    "adaptive.dt_hi": _Spec(float, 0.0),
    "adaptive.max_steps": _Spec(int, 100000, minimum=1),
    "adaptive.residual_tol": _Spec(float, 1e-8, minimum=0.0),
    "adaptive.target_decrement": _Spec(float, 0.0),
    "adaptive.growth_cap": _Spec(float, 1.5),
    "bound.zeta_auto": _Spec(bool, True),
    "bound.zeta": _Spec(float, 0.0),
    "bound.sobolev_mode": _Spec(str, "auto", choices=("auto", "dense", "probe")),
    "bound.dense_limit": _Spec(int, 4096, minimum=1),
    # 0 = estimate from the grid; >0 trusts the caller's Sobolev constant
    "bound.c_grid": _Spec(float, 0.0),
    "cg.rel_tol": _Spec(float, 1e-10, minimum=0.0),
    "cg.abs_tol": _Spec(float, 1e-14),
    "cg.max_iter": _Spec(int, 0, minimum=0),
    "output.csv": _Spec(bool, True),
    "output.snapshot": _Spec(bool, True),
    "output.vtk": _Spec(bool, False),
    # 0 = final state only
    "output.snapshot_every": _Spec(int, 0, minimum=0),
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def parse_value(key: str, text: str) -> object:
    spec = _SCHEMA.get(key)
    if spec is None:
        raise ConfigError(f"unknown key {key!r}")
    text = text.strip()
    try:
        if spec.type is bool:
            if text.lower() not in _BOOL_WORDS:
                raise ValueError
            value = _BOOL_WORDS[text.lower()]
        elif spec.type is int:
            value = int(text)
        elif spec.type is float:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
        else:
            value = text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {spec.type.__name__}") from None
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(f"{key}: {value!r} not one of {spec.choices}")
    if spec.minimum is not None:
        # ints are bounded inclusively, floats strictly (minimum 0.0 = "positive")
        if spec.type is int and value < spec.minimum:
            raise ConfigError(f"{key}: {value!r} below minimum {spec.minimum}")
        if spec.type is float and not value > spec.minimum:
            raise ConfigError(f"{key}: {value!r} must exceed {spec.minimum}")
    return value


def _parse_line(line: str, where: str) -> tuple[str, object] | None:
    bare = line.split("#", 1)[0].strip()
    if not bare:
        return None
    if "=" not in bare:
        raise ConfigError(f"{where}: expected key = value, got {line.rstrip()!r}")
    key, text = bare.split("=", 1)
    key = key.strip()
    return key, parse_value(key, text)


def defaults() -> dict[str, object]:
    return {k: s.default for k, s in _SCHEMA.items()}


def load_config(path: str | None = None, overrides: tuple[str, ...] = ()) -> dict[str, object]:
    cfg = defaults()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            parsed = _parse_line(line, f"{path}:{lineno}")
            if parsed:
                cfg[parsed[0]] = parsed[1]
    for text in overrides:
        parsed = _parse_line(text, f"override {text!r}")
        if parsed is None:
            raise ConfigError(f"empty override {text!r}")
        cfg[parsed[0]] = parsed[1]
    return cfg


def canonical_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def digest(cfg: dict[str, object]) -> str:
    blob = "\n".join(f"{k}={canonical_value(cfg[k])}" for k in sorted(cfg))
    return hashlib.sha256(blob.encode()).hexdigest()


def dump(cfg: dict[str, object]) -> str:
    return "\n".join(f"{k} = {canonical_value(cfg[k])}" for k in sorted(cfg)) + "\n"


# -- builders ----------------------------------------------------------------


def grid_from(cfg: dict[str, object]) -> GridSpec:
    try:
        return GridSpec(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.nz"],
                        cfg["grid.dx"], cfg["grid.dy"], cfg["grid.dz"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def params_from(cfg: dict[str, object]) -> PhysParams:
    try:
        return PhysParams(epsilon=cfg["phys.epsilon"], eta=cfg["phys.eta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_modes(text: str) -> list[tuple[int, int, int]]:
    modes = []
    for part in text.split(";"):
        comps = part.split(",")
        if len(comps) != 3:
            raise ConfigError(f"mode {part!r}: need three comma-separated integers")
        try:
            modes.append(tuple(int(c) for c in comps))
        except ValueError:
            raise ConfigError(f"mode {part!r}: need integers") from None
    return modes


def initial_field(cfg: dict[str, object], grid: GridSpec) -> Field:
    kind = cfg["init.kind"]
    if kind == "zero":
        import numpy as np

        return Field(grid, np.zeros(grid.shape))
    if kind == "noise":
        return lattice.filtered_noise(grid, cfg["init.amplitude"], cfg["init.seed"])
    if kind == "constant":
        import numpy as np

        return Field(grid, np.full(grid.shape, float(cfg["init.amplitude"])))
    modes = parse_modes(cfg["init.modes"])
    try:
        amps = [float(a) for a in str(cfg["init.mode_amplitudes"]).split(";")]
    except ValueError:
        raise ConfigError("init.mode_amplitudes: need ;-separated floats") from None
    if len(amps) != len(modes):
        raise ConfigError("init.modes and init.mode_amplitudes disagree in length")
    return lattice.cosine_field(grid, modes, amps)


def zeta_from(cfg: dict[str, object]) -> float | None:
    return None if cfg["bound.zeta_auto"] else cfg["bound.zeta"]


def c_grid_from(cfg: dict[str, object]) -> float | None:
    c = cfg["bound.c_grid"]
    if c < 0:
        raise ConfigError("bound.c_grid must be nonnegative")
    return c or None


def cg_config_from(cfg: dict[str, object]):
    from .linsolve import CGConfig

    max_iter = cfg["cg.max_iter"] or None
    return CGConfig(rel_tol=cfg["cg.rel_tol"], abs_tol=cfg["cg.abs_tol"], max_iter=max_iter)
