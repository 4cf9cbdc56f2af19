"""Run configuration (INI-style key/value sections) and the named experiment presets."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "preset_config", "PRESETS", "CONFIG_VERSION"]

# bumped whenever a default that changes results is altered
CONFIG_VERSION = 1

INITIAL_PRESETS = ("zero", "single-mode", "eigenmode", "random", "file")


@dataclass
class RunConfig:
    """Every knob of a run.  Thread count is not here: it never changes results."""

    # grid
    N1: int = 32
    N2: int = 32
    N3: int = 16
    L1: float = 1.0
    L2: float = 1.0
    # physics
    sigma: float = 0.1
    Bbar: tuple = (0.0, 0.0, 0.5)
    nonlinear: bool = True
    # time
    dt: float = 1e-2
    t_final: float = 1.0
    integrator: str = "bdf2"
    # initial condition
    preset: str = "eigenmode"
    amplitude: float = 1e-3
    mode: tuple = (1, 0)
    path: str = ""
    seed: int = 0
    # diagnostics
    cadence: int = 10
    N: int = 3
    fit_window: tuple = None
    # output
    directory: str = "."
    csv: str = "series.csv"
    summary: str = "summary.json"
    snapshot: str = "final.npz"
    snapshot_step: int = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(section, key, msg):
            raise ConfigError(f"[{section}] {key}: {msg}")

        for key in ("N1", "N2", "N3"):
            if getattr(self, key) < 4:
                bad("grid", key, "must be >= 4")
        for key in ("N1", "N2"):
            if getattr(self, key) % 2:
                bad("grid", key, "must be even")
        for key in ("L1", "L2"):
            if not getattr(self, key) > 0:
                bad("domain", key, "must be positive")
        if not self.sigma >= 0:
            bad("physics", "sigma", "must be >= 0")
        if len(self.Bbar) != 3:
            bad("physics", "Bbar", "needs three components")
        if not self.dt > 0:
            bad("time", "dt", "must be positive")
        if not self.t_final > 0:
            bad("time", "t_final", "must be positive")
        if self.integrator not in ("be", "bdf2"):
            bad("time", "integrator", "must be 'be' or 'bdf2'")
        if self.preset not in INITIAL_PRESETS:
            bad("initial", "preset", f"must be one of {', '.join(INITIAL_PRESETS)}")
        if self.preset == "file" and not self.path:
            bad("initial", "path", "required for the 'file' preset")
        if len(self.mode) != 2 or tuple(self.mode) == (0, 0):
            bad("initial", "mode", "must be a nonzero pair n1, n2")
        if not self.amplitude >= 0:
            bad("initial", "amplitude", "must be >= 0")
        if self.cadence < 1:
            bad("diagnostics", "cadence", "must be >= 1")
        if self.N < 3:
            bad("diagnostics", "N", "must be >= 3")
        if self.fit_window is not None and not (len(self.fit_window) == 2
                                                and self.fit_window[1] > self.fit_window[0]):
            bad("diagnostics", "fit_window", "must be 't0, t1' with t1 > t0")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def accuracy(self):
        return 1 if self.integrator == "be" else 2

    def output_path(self, name):
        return Path(self.directory) / getattr(self, name)

    def to_dict(self):
        d = asdict(self)
        d["config_version"] = CONFIG_VERSION
        return d


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if not text.strip() else int(text)


def _opt_floats(text):
    return None if not text.strip() else _floats(text)


_SCHEMA = {
    "grid": {"N1": int, "N2": int, "N3": int},
    "domain": {"L1": float, "L2": float},
    "physics": {"sigma": float, "Bbar": _floats, "nonlinear": _bool},
    "time": {"dt": float, "t_final": float, "integrator": str},
    "initial": {"preset": str, "amplitude": float, "mode": _ints, "path": str, "seed": int},
    "diagnostics": {"cadence": int, "N": int, "fit_window": _opt_floats},
    "output": {"directory": str, "csv": str, "summary": str, "snapshot": str,
               "snapshot_step": _opt_int},
}


def _parse(parser: configparser.ConfigParser, origin=""):
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{origin}unknown section [{section}]")
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            match = {k.lower(): k for k in schema}.get(key.lower())
            if match is None:
                raise ConfigError(f"{origin}[{section}] {key}: unknown key")
            try:
                values[match] = schema[match](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"{origin}[{section}] {match}: {exc}") from None
    return RunConfig(**values)


def load_config(path):
    """Read a config file; unknown sections/keys and bad values raise :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return _parse(parser, origin=f"{path}: ")


def _theorem_preset(sigma):
    return RunConfig(N1=32, N2=32, N3=16, sigma=sigma, Bbar=(0.0, 0.0, 0.5), dt=1e-2,
                     t_final=20.0, integrator="bdf2", preset="eigenmode", amplitude=1e-3,
                     mode=(1, 0), cadence=10, N=3, fit_window=(2.0, 20.0))


PRESETS = {
    "thm-2.1": lambda: _theorem_preset(0.1),
    "thm-2.2": lambda: _theorem_preset(0.0),
}


def preset_config(name, **overrides):
    """A named experiment configuration, optionally with field overrides."""
    try:
        cfg = PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}") from None
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
