"""INI run configuration.

Grammar: standard INI sections with ``key = value`` scalars. Keys are case
sensitive (``N`` and ``n`` differ). Unknown sections or keys are errors.

    [grid]      N (int, required), R (float, required), n (int, required)
    [physics]   M (float, required), delta (float, default 0)
    [stepper]   cfl_safety (0.4), dt_init (1e-6), dt_min (1e-10), dt_max (1e-2)
    [initial]   kind = constant | gaussian_bump | table   (default gaussian_bump)
                amplitude (10), width (0.1), center_radius (0), file (table only)
    [schedule]  t_end (float, required), cadence (t_end/100), snapshot_every (10)
    [blowup]    consecutive (10), growth (1000), window (5)
    [threshold] cs (optional user Sobolev constant), trials (4), iterations (300)
    [output]    directory (default $KSCRIT_OUTPUT_ROOT/<config stem>, else ./runs/<stem>)
    [run]       seed (0)
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..analysis import BlowupConfig
from ..core import RadialGrid, make_uniform_grid
from ..dynamics import StepperConfig

OUTPUT_ROOT_ENV = "KSCRIT_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "gaussian_bump"
    amplitude: float = 10.0
    width: float = 0.1
    center_radius: float = 0.0
    file: str = ""

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian_bump", "table"):
            raise ConfigError(f"unknown initial kind {self.kind!r}")
        if self.kind == "gaussian_bump":
            if not self.amplitude >= 0:
                raise ConfigError(f"bump amplitude must be >= 0, got {self.amplitude!r}")
            if not self.width > 0:
                raise ConfigError(f"bump width must be > 0, got {self.width!r}")
            if not self.center_radius >= 0:
                raise ConfigError("center_radius must be >= 0")
        if self.kind == "table" and not self.file:
            raise ConfigError("table initial condition needs a file")


@dataclass(frozen=True)
class RunConfig:
    N: int
    R: float
    n: int
    M: float
    t_end: float
    delta: float = 0.0
    stepper: StepperConfig = StepperConfig()
    initial: InitialCondition = InitialCondition()
    cadence: float = 0.0
    snapshot_every: int = 10
    blowup_consecutive: int = 10
    blowup_growth: float = 1e3
    blowup_window: int = 5
    cs: float | None = None
    sobolev_trials: int = 4
    sobolev_iterations: int = 300
    output_dir: str = ""
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ConfigError(f"N must be an integer >= 3 (the model assumes N >= 3), got {self.N!r}")
        if not self.R > 0:
            raise ConfigError("R must be positive")
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError("n must be an integer >= 3")
        if not self.M > 0:
            raise ConfigError("M must be positive")
        if not 0 <= self.delta < 1:
            raise ConfigError("delta must lie in [0, 1)")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be finite and >= 0")
        if self.cadence < 0:
            raise ConfigError("cadence must be >= 0")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")
        if self.cs is not None and not self.cs > 0:
            raise ConfigError("cs must be positive")
        if self.sobolev_trials < 1 or self.sobolev_iterations < 1:
            raise ConfigError("Sobolev estimation needs trials, iterations >= 1")
        if self.blowup_consecutive < 1 or self.blowup_window < 2 or not self.blowup_growth > 1:
            raise ConfigError("invalid blow-up settings")

    def grid(self) -> RadialGrid:
        return make_uniform_grid(self.N, self.R, self.n)

    def blowup(self) -> BlowupConfig:
        return BlowupConfig(self.stepper.dt_min, self.blowup_consecutive,
                            self.blowup_growth, self.blowup_window)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


# (section, key) -> (attribute path, type, required)
_SCHEMA = {
    ("grid", "N"): ("N", int, True),
    ("grid", "R"): ("R", float, True),
    ("grid", "n"): ("n", int, True),
    ("physics", "M"): ("M", float, True),
    ("physics", "delta"): ("delta", float, False),
    ("stepper", "cfl_safety"): ("stepper.cfl_safety", float, False),
    ("stepper", "dt_init"): ("stepper.dt_init", float, False),
    ("stepper", "dt_min"): ("stepper.dt_min", float, False),
    ("stepper", "dt_max"): ("stepper.dt_max", float, False),
    ("initial", "kind"): ("initial.kind", str, False),
    ("initial", "amplitude"): ("initial.amplitude", float, False),
    ("initial", "width"): ("initial.width", float, False),
    ("initial", "center_radius"): ("initial.center_radius", float, False),
    ("initial", "file"): ("initial.file", str, False),
    ("schedule", "t_end"): ("t_end", float, True),
    ("schedule", "cadence"): ("cadence", float, False),
    ("schedule", "snapshot_every"): ("snapshot_every", int, False),
    ("blowup", "consecutive"): ("blowup_consecutive", int, False),
    ("blowup", "growth"): ("blowup_growth", float, False),
    ("blowup", "window"): ("blowup_window", int, False),
    ("threshold", "cs"): ("cs", float, False),
    ("threshold", "trials"): ("sobolev_trials", int, False),
    ("threshold", "iterations"): ("sobolev_iterations", int, False),
    ("output", "directory"): ("output_dir", str, False),
    ("run", "seed"): ("seed", int, False),
}


def _parse(raw: str, typ, where: str):
    try:
        if typ is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if typ is float:
            v = float(raw)
            if math.isnan(v):
                raise ValueError
            return v
        return raw.strip()
    except (ValueError, OverflowError):
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def default_output_dir(stem: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    return str(Path(root) / stem)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = _parser()
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_parser(cp, base=path.parent, stem=path.stem)


def config_from_parser(cp: configparser.ConfigParser, base: Path | None = None,
                       stem: str = "run") -> RunConfig:
    top: dict = {}
    sub: dict = {"stepper": {}, "initial": {}}
    known_sections = {s for s, _ in _SCHEMA}
    for sec in cp.sections():
        if sec not in known_sections:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if (sec, key) not in _SCHEMA:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            attr, typ, _ = _SCHEMA[(sec, key)]
            val = _parse(raw, typ, f"[{sec}] {key}")
            if "." in attr:
                a, b = attr.split(".")
                sub[a][b] = val
            else:
                top[attr] = val
    missing = [f"[{s}] {k}" for (s, k), (attr, _, req) in _SCHEMA.items()
               if req and attr not in top]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    if sub["initial"].get("file") and base is not None:
        f = Path(sub["initial"]["file"])
        sub["initial"]["file"] = str(f if f.is_absolute() else (base / f).resolve())
    st = sub["stepper"]
    if "dt_init" not in st:
        lo = st.get("dt_min", StepperConfig.dt_min)
        hi = st.get("dt_max", StepperConfig.dt_max)
        st["dt_init"] = min(max(StepperConfig.dt_init, lo), hi)
    try:
        stepper = StepperConfig(**st)
    except ValueError as exc:
        raise ConfigError(f"[stepper] {exc}") from None
    initial = InitialCondition(**sub["initial"])
    if "cadence" not in top and "t_end" in top:
        top["cadence"] = top["t_end"] / 100.0
    if not top.get("output_dir"):
        top["output_dir"] = default_output_dir(stem)
    try:
        return RunConfig(stepper=stepper, initial=initial, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def config_to_ini(cfg: RunConfig) -> str:
    """Every key with its effective value; reloads to an equal RunConfig."""
    cp = _parser()
    for (sec, key), (attr, typ, _) in _SCHEMA.items():
        obj = cfg
        for part in attr.split("."):
            obj = getattr(obj, part)
        if obj is None:
            continue
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, repr(obj) if typ is float else str(obj))
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_from_string(text: str, stem: str = "run") -> RunConfig:
    cp = _parser()
    cp.read_string(text)
    return config_from_parser(cp, stem=stem)


# ---------------------------------------------------------------------------
# initial data


def initial_density(cfg: RunConfig, grid: RadialGrid | None = None) -> np.ndarray:
    """Shape from the descriptor, rescaled so its volume mean is exactly M."""
    grid = grid or cfg.grid()
    ic = cfg.initial
    r = grid.centers
    if ic.kind == "constant":
        shape = np.ones_like(r)
    elif ic.kind == "gaussian_bump":
        shape = 1.0 + ic.amplitude * np.exp(-((r - ic.center_radius) ** 2) / (2.0 * ic.width**2))
    else:
        shape = _read_table(ic.file, r)
    if np.any(shape < 0) or not np.all(np.isfinite(shape)):
        raise ConfigError("initial shape must be finite and nonnegative")
    mean = float(grid.cell_volumes @ shape) / grid.discrete_volume
    if not mean > 0:
        raise ConfigError("initial shape has zero mass")
    u = shape * (cfg.M / mean)
    # one correction pass absorbs the rounding of the rescale
    u *= cfg.M / (float(grid.cell_volumes @ u) / grid.discrete_volume)
    return u


def _read_table(path: str, r: np.ndarray) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"initial table not found: {path}")
    try:
        data = np.loadtxt(p, delimiter=",", comments="#", ndmin=2)
    except ValueError:
        data = np.loadtxt(p, delimiter=",", comments="#", ndmin=2, skiprows=1)
    if data.shape[1] < 2:
        raise ConfigError("initial table needs two columns: r, u")
    rr, uu = data[:, 0], data[:, 1]
    if np.any(np.diff(rr) <= 0):
        raise ConfigError("initial table radii must increase")
    return np.interp(r, rr, uu)
