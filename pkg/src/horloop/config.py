"""Run configuration: flat ``key = value`` files with dotted sections.

The format is deliberately primitive (one assignment per line, ``#``
comments, no nesting) so configs stay diff-friendly and trivially
parseable. Unknown keys are rejected.

Seeded randomness everywhere in the toolkit goes through a named 64-bit
counter-based generator (Philox 4x64), so a seed reproduces the same
stream on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .solvers import SolverConfig

KNOWN_KEYS = {
    "model.name", "model.params",
    "run.N", "run.S", "run.rng_seed",
    "output.dir",
    "solver.tol_loop", "solver.tol_grad", "solver.tol_geo", "solver.tol_shoot",
    "solver.tol_speed", "solver.max_iter", "solver.max_outer", "solver.P",
    "solver.band_frac", "solver.delta_sweep", "solver.step0",
    "solve.klass", "solve.seed_scale",
    "minmax.sweep", "minmax.basepoint", "minmax.rho_min", "minmax.rho_max",
    "shoot.x0", "shoot.lam", "shoot.T", "shoot.steps",
    "verify.loop_file",
    "contract.energy", "contract.P", "contract.slices", "contract.wrap_klass",
    "gradients.samples",
}

_POSITIVE_FLOATS = ("solver.tol_loop", "solver.tol_grad", "solver.tol_geo",
                    "solver.tol_shoot", "solver.tol_speed")
_POSITIVE_INTS = ("run.N", "run.S", "solver.P", "solver.max_iter",
                  "solver.max_outer", "shoot.steps", "contract.P",
                  "contract.slices", "gradients.samples")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox 4x64) keyed by the run seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class RunConfig:
    """Validated flat configuration for one CLI run."""

    entries: Dict[str, str] = field(default_factory=dict)

    # -- typed accessors -----------------------------------------------------
    def has(self, key: str) -> bool:
        return key in self.entries

    def get_str(self, key: str, default: Optional[str] = None) -> str:
        if key in self.entries:
            return self.entries[key]
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return default

    def get_int(self, key: str, default: Optional[int] = None) -> int:
        try:
            return int(self.entries[key]) if key in self.entries else self._req(key, default)
        except ValueError as e:
            raise ConfigError(f"key '{key}' is not an integer") from e

    def get_float(self, key: str, default: Optional[float] = None) -> float:
        try:
            return float(self.entries[key]) if key in self.entries else self._req(key, default)
        except ValueError as e:
            raise ConfigError(f"key '{key}' is not a number") from e

    def get_floats(self, key: str, default: Optional[Tuple[float, ...]] = None):
        if key not in self.entries:
            return np.asarray(self._req(key, default), dtype=float)
        try:
            return np.array([float(tok) for tok in _tokens(self.entries[key])])
        except ValueError as e:
            raise ConfigError(f"key '{key}' is not a number list") from e

    def get_ints(self, key: str, default=None):
        if key not in self.entries:
            return np.asarray(self._req(key, default), dtype=int)
        try:
            return np.array([int(tok) for tok in _tokens(self.entries[key])])
        except ValueError as e:
            raise ConfigError(f"key '{key}' is not an integer list") from e

    @staticmethod
    def _req(key, default):
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return default

    # -- common blocks -------------------------------------------------------
    @property
    def model_name(self) -> str:
        return self.get_str("model.name")

    @property
    def model_params(self) -> tuple:
        if "model.params" not in self.entries:
            return ()
        return tuple(float(t) if "." in t or "e" in t.lower() else int(t)
                     for t in _tokens(self.entries["model.params"]))

    @property
    def n(self) -> int:
        return self.get_int("run.N", 64)

    @property
    def substeps(self) -> int:
        return self.get_int("run.S", 4)

    @property
    def rng_seed(self) -> int:
        return self.get_int("run.rng_seed", 0)

    @property
    def output_dir(self) -> str:
        return self.get_str("output.dir", "out")

    def solver_config(self) -> SolverConfig:
        cfg = SolverConfig(substeps=self.substeps)
        mapping = {
            "solver.tol_loop": "tol_loop", "solver.tol_grad": "tol_grad",
            "solver.tol_geo": "tol_geo", "solver.tol_speed": "tol_speed",
            "solver.max_iter": "max_iter", "solver.max_outer": "max_outer",
            "solver.band_frac": "band_frac", "solver.delta_sweep": "delta_sweep",
            "solver.step0": "step0",
        }
        for key, attr in mapping.items():
            if key in self.entries:
                value = self.get_int(key) if attr in ("max_iter", "max_outer") \
                    else self.get_float(key)
                setattr(cfg, attr, value)
        return cfg


def _tokens(text: str):
    return [t for t in text.replace(",", " ").split() if t]


def parse_config(text: str) -> RunConfig:
    """Parse and validate a flat config file."""
    entries: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        entries[key] = value
    cfg = RunConfig(entries=entries)
    for key in _POSITIVE_FLOATS:
        if key in entries and cfg.get_float(key) <= 0:
            raise ConfigError(f"key '{key}' must be positive")
    for key in _POSITIVE_INTS:
        if key in entries and cfg.get_int(key) <= 0:
            raise ConfigError(f"key '{key}' must be a positive integer")
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config '{path}': {e}") from e
