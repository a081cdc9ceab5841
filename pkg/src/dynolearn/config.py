"""Experiment configs: flat, typed key/value sections, diffable on disk.

The on-disk format is INI-like::

    [system]
    kind = lds
    a = 0.9
    ...

Every field has a declared type; unknown sections or keys are rejected.
`canonical_text` emits a fully resolved, sorted form whose parse is the
identity, so resolved configs double as re-run manifests.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ._canon import content_digest
from .errors import ConfigError, ContractViolation
from .learnability import resolve_oracle
from .numerics import SeededRng
from .oracles import KalmanPredictor, KernelOracle
from .predictors import BaselinePredictor, SpectralPredictor
from .spectral import build_filter_bank
from .systems import InitPolicy, LdsSpec, LorenzSpec, NoiseSpec, random_symmetric_psd, random_unit_row


@dataclass
class SystemConfig:
    kind: str = "lds"  # lds | closed_loop | lorenz
    # linear systems: scalar / diagonal / seeded-random transition
    a: float | None = None
    a_diag: tuple[float, ...] | None = None
    a_random_psd: bool = False
    a_eig_low: float = 0.0
    a_eig_high: float = 0.95
    a_seed: int = 0
    d: int | None = None
    c: float | None = None
    c_row: tuple[float, ...] | None = None
    c_random: bool = False
    b: tuple[float, ...] | None = None  # d*k entries, row major
    k: tuple[float, ...] | None = None  # k*d entries, row major
    k_dim: int = 1
    noise: str = "gaussian"
    process_stdev: float = 0.0
    obs_stdev: float = 0.0
    symmetric: bool = True
    x0_kind: str = "ball_grid"  # fixed | ball_grid | stationary
    x0: tuple[float, ...] | None = None
    x0_radius: float = 1.0
    x0_points: int = 8
    # Lorenz
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    dt: float = 0.01
    obs_coords: tuple[str, ...] = ("x",)


@dataclass
class PredictorConfig:
    kind: str = "spectral"  # spectral | ar | last_value | zero | kalman | kernel
    window: int = 100
    m: int = 15
    reg: float = 2.0
    refit_period: int = 16
    sign_augmented: bool = False
    ar_order: int = 1


@dataclass
class HarnessConfig:
    horizon: int = 1000
    t_grid: tuple[int, ...] = (25, 50, 100, 150, 200, 300, 400, 600, 800, 1000)
    window: int = 16
    n_traj: int = 200
    epsilons: tuple[float, ...] = (0.05,)
    oracle: str = "auto"  # auto | kalman | kernel | truth | zero
    baselines: tuple[str, ...] = ("zero", "last_value", "ar1", "ar5")
    m_range: tuple[int, ...] = tuple(range(1, 21))
    t_eval: int = 1000
    epsilon: float = 0.05
    ref_multiplier: int = 10
    record_states: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    threads: int = 0  # 0 -> available parallelism


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def digest(self) -> str:
        return content_digest(canonical_text(self))


_SECTIONS = {
    "system": SystemConfig,
    "predictor": PredictorConfig,
    "harness": HarnessConfig,
    "run": RunConfig,
}

# type tags per field, used for both parsing and serialization
_FIELD_TYPES: dict[tuple[str, str], str] = {}
for _sec, _cls in _SECTIONS.items():
    for _f in fields(_cls):
        t = _f.type
        if t in ("str", str):
            tag = "str"
        elif t in ("int", int):
            tag = "int"
        elif t in ("float", float):
            tag = "float"
        elif t in ("bool", bool):
            tag = "bool"
        elif "tuple[int" in str(t):
            tag = "ints"
        elif "tuple[float" in str(t):
            tag = "floats"
        elif "tuple[str" in str(t):
            tag = "strs"
        elif "float | None" in str(t):
            tag = "float?"
        elif "int | None" in str(t):
            tag = "int?"
        else:
            raise TypeError(f"unhandled config field type {t!r} for {_sec}.{_f.name}")
        _FIELD_TYPES[(_sec, _f.name)] = tag

def _parse_value(tag: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if tag == "str":
            return raw
        if tag in ("int", "int?"):
            return int(raw)
        if tag in ("float", "float?"):
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tag == "ints":
            if raw.startswith("geom(") and raw.endswith(")"):
                a, b, n = (int(x) for x in raw[5:-1].split(","))
                return geometric_grid(a, b, n)
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if tag == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if tag == "strs":
            return tuple(x.strip() for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {exc}") from exc
    raise ConfigError(f"unhandled type tag {tag} for {where}")


def _format_value(tag: str, value) -> str:
    if tag == "str":
        return str(value)
    if tag in ("int", "int?"):
        return str(int(value))
    if tag in ("float", "float?"):
        return repr(float(value))
    if tag == "bool":
        return "true" if value else "false"
    if tag == "ints":
        return ",".join(str(int(v)) for v in value)
    if tag == "floats":
        return ",".join(repr(float(v)) for v in value)
    if tag == "strs":
        return ",".join(str(v) for v in value)
    raise ConfigError(f"unhandled type tag {tag}")


def geometric_grid(start: int, stop: int, count: int) -> tuple[int, ...]:
    """Roughly geometric integer grid from start to stop inclusive."""
    if not (1 <= start < stop and count >= 2):
        raise ConfigError(f"bad geometric grid spec ({start}, {stop}, {count})")
    pts = np.unique(np.round(np.geomspace(start, stop, count)).astype(int))
    return tuple(int(t) for t in pts)


def parse_config(text: str, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse config text, then apply "section.key=value" overrides in order."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    raw: dict[tuple[str, str], str] = {}
    for sec in parser.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, value in parser.items(sec):
            if (sec, key) not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {sec}.{key}")
            raw[(sec, key)] = value
    for ov in overrides or []:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        dotted, value = ov.split("=", 1)
        sec, key = dotted.split(".", 1)
        if (sec, key) not in _FIELD_TYPES:
            raise ConfigError(f"unknown override target {sec}.{key}")
        raw[(sec, key)] = value
    cfg = ExperimentConfig()
    for (sec, key), value in raw.items():
        tag = _FIELD_TYPES[(sec, key)]
        setattr(getattr(cfg, sec), key, _parse_value(tag, value, f"{sec}.{key}"))
    return cfg


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)


def canonical_text(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; parsing it reproduces cfg exactly."""
    out = io.StringIO()
    for sec in sorted(_SECTIONS):
        out.write(f"[{sec}]\n")
        obj = getattr(cfg, sec)
        for f in sorted(fields(obj), key=lambda f: f.name):
            value = getattr(obj, f.name)
            if value is None:
                continue
            tag = _FIELD_TYPES[(sec, f.name)]
            out.write(f"{f.name} = {_format_value(tag, value)}\n")
        out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# builders


def _build_init(sc: SystemConfig) -> InitPolicy:
    if sc.x0_kind == "fixed":
        if sc.x0 is None:
            raise ConfigError("system.x0 is required when x0_kind = fixed")
        return InitPolicy(kind="fixed", x0=sc.x0)
    if sc.x0_kind == "ball_grid":
        return InitPolicy(kind="ball_grid", radius=sc.x0_radius, points=sc.x0_points)
    if sc.x0_kind == "stationary":
        return InitPolicy(kind="stationary", points=sc.x0_points)
    raise ConfigError(f"unknown x0_kind {sc.x0_kind!r}")


def _build_transition(sc: SystemConfig) -> np.ndarray:
    choices = [sc.a is not None, sc.a_diag is not None, sc.a_random_psd]
    if sum(choices) != 1:
        raise ConfigError("specify exactly one of system.a, system.a_diag, system.a_random_psd")
    if sc.a is not None:
        return np.array([[sc.a]])
    if sc.a_diag is not None:
        return np.diag(np.asarray(sc.a_diag, dtype=float))
    if sc.d is None:
        raise ConfigError("system.d is required with a_random_psd")
    return random_symmetric_psd(sc.d, sc.a_eig_low, sc.a_eig_high, SeededRng(sc.a_seed))


def _build_observation(sc: SystemConfig, d: int) -> np.ndarray:
    choices = [sc.c is not None, sc.c_row is not None, sc.c_random]
    if sum(choices) != 1:
        raise ConfigError("specify exactly one of system.c, system.c_row, system.c_random")
    if sc.c is not None:
        if d != 1:
            raise ConfigError("scalar system.c only valid for d = 1")
        return np.array([[sc.c]])
    if sc.c_row is not None:
        row = np.asarray(sc.c_row, dtype=float)
        if row.size != d:
            raise ConfigError(f"system.c_row has {row.size} entries, expected {d}")
        return row[None, :]
    return random_unit_row(d, SeededRng(sc.a_seed + 1))


def build_system(cfg: ExperimentConfig):
    sc = cfg.system
    try:
        if sc.kind == "lorenz":
            init = _build_init(sc)
            return LorenzSpec(
                sigma=sc.sigma,
                rho=sc.rho,
                beta=sc.beta,
                dt=sc.dt,
                obs_coords=sc.obs_coords,
                obs_noise=sc.obs_stdev,
                init=init,
            )
        if sc.kind not in ("lds", "closed_loop"):
            raise ConfigError(f"unknown system kind {sc.kind!r}")
        A = _build_transition(sc)
        d = A.shape[0]
        C = _build_observation(sc, d)
        B = K = None
        if sc.kind == "closed_loop":
            if sc.b is None or sc.k is None:
                raise ConfigError("closed_loop systems require system.b and system.k")
            B = np.asarray(sc.b, dtype=float).reshape(d, sc.k_dim)
            K = np.asarray(sc.k, dtype=float).reshape(sc.k_dim, d)
        noise = NoiseSpec(kind=sc.noise, stdev_process=sc.process_stdev, stdev_obs=sc.obs_stdev)
        return LdsSpec(
            A=A,
            C=C,
            noise=noise,
            init=_build_init(sc),
            B=B,
            K=K,
            symmetric_flag=sc.symmetric,
        )
    except ContractViolation:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad system config: {exc}") from exc


def build_predictor(cfg: ExperimentConfig, system):
    pc = cfg.predictor
    p = system.p
    if pc.kind == "spectral":
        bank = build_filter_bank(pc.window, pc.m, sign_augmented=pc.sign_augmented)
        return SpectralPredictor(bank, obs_dim=p, reg=pc.reg, refit_period=pc.refit_period)
    if pc.kind == "ar":
        return BaselinePredictor("ar", order=pc.ar_order, obs_dim=p, reg=pc.reg, refit_period=pc.refit_period)
    if pc.kind in ("last_value", "zero"):
        return BaselinePredictor(pc.kind, obs_dim=p)
    if pc.kind == "kalman":
        return KalmanPredictor(system)
    if pc.kind == "kernel":
        return KernelOracle(system)
    raise ConfigError(f"unknown predictor kind {pc.kind!r}")


def build_oracle(cfg: ExperimentConfig, system):
    return resolve_oracle(system, cfg.harness.oracle, p=system.p)


def build_baselines(cfg: ExperimentConfig, system):
    pc = cfg.predictor
    out = []
    for token in cfg.harness.baselines:
        if token == "zero":
            out.append(BaselinePredictor("zero", obs_dim=system.p))
        elif token == "last_value":
            out.append(BaselinePredictor("last_value", obs_dim=system.p))
        elif token.startswith("ar"):
            try:
                order = int(token[2:])
            except ValueError as exc:
                raise ConfigError(f"bad baseline token {token!r}") from exc
            out.append(
                BaselinePredictor(
                    "ar", order=order, obs_dim=system.p, reg=pc.reg, refit_period=pc.refit_period
                )
            )
        else:
            raise ConfigError(f"unknown baseline token {token!r}")
    if not out:
        raise ConfigError("harness.baselines must be nonempty")
    return out


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-field checks shared by all subcommands."""
    h = cfg.harness
    if h.horizon < 1:
        raise ConfigError(f"harness.horizon must be >= 1, got {h.horizon}")
    if any(e <= 0 or not math.isfinite(e) for e in h.epsilons):
        raise ConfigError("harness.epsilons must be positive and finite")
    if h.n_traj < 2:
        raise ConfigError(f"harness.n_traj must be >= 2, got {h.n_traj}")
    if cfg.run.threads < 0:
        raise ConfigError(f"run.threads must be >= 0, got {cfg.run.threads}")
