"""Run configuration: flat key = value files with INI-style sections.

Every experiment reads the same schema; unknown keys are rejected so
typos fail loudly.  All defaults are recorded into every report header,
which keeps emitted CSV files self-describing.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .mesh import PotentialSplit


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # [problem]
    problem: str = "benchmark"
    domain: tuple = (-20.0, 20.0)
    beta: float = -2.0
    v1: str = "0"
    v2: str = "0"
    # [space]
    coarse_exponents: tuple = (7,)
    refinement: Optional[int] = None
    fine_exponent: Optional[int] = None
    ell: str = "auto"
    omega_tol: float = 1e-12
    # [time]
    tau: Optional[float] = None
    steps: Optional[int] = None
    final_time: Optional[float] = None
    # [solver]
    tol: float = 1e-10
    max_iter: int = 200
    scheme: str = "modified"
    # [sweep]
    tau_values: tuple = (1e-3, 5e-4, 2.5e-4)
    tau_ref: float = 6.25e-5
    tau_exponent: int = 8
    tau_fine: int = 13
    cpu_ell: int = 7
    cpu_exponents: tuple = (6, 7, 8)
    # [output]
    out_dir: str = "out"
    seed: int = 20260823

    # --- derived helpers ---------------------------------------------------

    def resolve_time(self):
        """Return consistent (tau, steps, final_time); T = steps * tau."""
        tau, steps, T = self.tau, self.steps, self.final_time
        have = sum(v is not None for v in (tau, steps, T))
        if have < 2:
            raise ConfigError("need at least two of tau, steps, final_time")
        if tau is not None and tau <= 0:
            raise ConfigError("tau must be positive")
        if steps is not None and steps < 0:
            raise ConfigError("steps must be nonnegative")
        if tau is None:
            tau = T / steps
        elif steps is None:
            steps = int(round(T / tau))
        if T is None:
            T = steps * tau
        if abs(steps * tau - T) > 1e-9 * max(abs(T), 1.0):
            raise ConfigError(
                f"final_time {T} is not steps * tau = {steps * tau}")
        return tau, steps, T

    def refinement_for(self, coarse_exponent):
        """Dyadic refinement r of the level with 2**coarse_exponent cells."""
        if self.refinement is not None and self.fine_exponent is not None:
            raise ConfigError("give refinement or fine_exponent, not both")
        if self.refinement is not None:
            return self.refinement
        if self.fine_exponent is None:
            raise ConfigError("need refinement or fine_exponent")
        r = self.fine_exponent - coarse_exponent
        if r < 0:
            raise ConfigError(
                f"fine_exponent {self.fine_exponent} below coarse exponent "
                f"{coarse_exponent}")
        return r

    def ells(self):
        """Explicit layer counts, or None for the automatic default."""
        if self.ell.strip() == "auto":
            return None
        return _ints(self.ell)

    def make_potential(self):
        return PotentialSplit(v1=parse_weight(self.v1),
                              v2=parse_weight(self.v2), beta=self.beta)


# --- weight expression parsing ---------------------------------------------

_EXPR_NAMES = {
    "np": np, "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "sqrt": np.sqrt, "tanh": np.tanh, "cosh": np.cosh, "sinh": np.sinh,
    "abs": np.abs, "pi": np.pi, "log": np.log,
}


def parse_weight(expr):
    """Constant or expression in x (numpy semantics) for a potential part."""
    expr = str(expr).strip()
    if not expr:
        return None
    try:
        value = float(expr)
        return None if value == 0.0 else value
    except ValueError:
        pass
    try:
        code = compile(expr, "<potential>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse potential expression {expr!r}") from exc

    def weight(x):
        return eval(code, {"__builtins__": {}}, dict(_EXPR_NAMES, x=x))

    try:
        np.asarray(weight(np.array([0.0, 0.5])), dtype=float)
    except Exception as exc:
        raise ConfigError(f"potential expression {expr!r} failed") from exc
    return weight


# --- file parsing ----------------------------------------------------------

def _floats(text):
    return tuple(float(tok) for tok in str(text).replace(",", " ").split())


def _ints(text):
    return tuple(int(tok) for tok in str(text).replace(",", " ").split())


def _opt_int(text):
    text = str(text).strip()
    return None if text in ("", "none") else int(text)


def _opt_float(text):
    text = str(text).strip()
    return None if text in ("", "none") else float(text)


_SCHEMA = {
    ("problem", "kind"): ("problem", str),
    ("problem", "domain"): ("domain", _floats),
    ("problem", "beta"): ("beta", float),
    ("problem", "v1"): ("v1", str),
    ("problem", "v2"): ("v2", str),
    ("space", "coarse_exponents"): ("coarse_exponents", _ints),
    ("space", "refinement"): ("refinement", _opt_int),
    ("space", "fine_exponent"): ("fine_exponent", _opt_int),
    ("space", "ell"): ("ell", str),
    ("space", "omega_tol"): ("omega_tol", float),
    ("time", "tau"): ("tau", _opt_float),
    ("time", "steps"): ("steps", _opt_int),
    ("time", "final_time"): ("final_time", _opt_float),
    ("solver", "tol"): ("tol", float),
    ("solver", "max_iter"): ("max_iter", int),
    ("solver", "scheme"): ("scheme", str),
    ("sweep", "tau_values"): ("tau_values", _floats),
    ("sweep", "tau_ref"): ("tau_ref", float),
    ("sweep", "tau_exponent"): ("tau_exponent", int),
    ("sweep", "tau_fine"): ("tau_fine", int),
    ("sweep", "cpu_ell"): ("cpu_ell", int),
    ("sweep", "cpu_exponents"): ("cpu_exponents", _ints),
    ("output", "directory"): ("out_dir", str),
    ("output", "seed"): ("seed", int),
}

_FIELD_TO_KEY = {fname: key for key, (fname, _) in _SCHEMA.items()}


def load_config(path, base=None):
    """Read a config file on top of defaults (or a given base config)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    updates = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            entry = _SCHEMA.get((section, key))
            if entry is None:
                raise ConfigError(f"unknown config key [{section}] {key}")
            name, cast = entry
            try:
                updates[name] = cast(raw)
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(
                    f"bad value for [{section}] {key}: {raw!r}") from exc
    cfg = base if base is not None else ExperimentConfig()
    cfg = replace(cfg, **updates)
    if len(cfg.domain) != 2 or cfg.domain[1] <= cfg.domain[0]:
        raise ConfigError("domain must be two increasing numbers")
    return cfg


def header_items(cfg):
    """All settings as (section.key, value) pairs for report provenance."""
    items = []
    for f in fields(cfg):
        section, key = _FIELD_TO_KEY[f.name]
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = " ".join(repr(v) if isinstance(v, float) else str(v)
                             for v in value)
        items.append((f"{section}.{key}", value))
    return items
