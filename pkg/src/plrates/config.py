"""Experiment configuration: INI-style sections mapped onto dataclasses.

Sections are ``[objective]``, ``[noise]``, ``[run]``, ``[estimator]`` and
``[output]``. Vectors and grids are comma-separated numbers. The starting
point is ``run.theta0``: either explicit numbers or one of ``offset``,
``eigvec``, ``gaussian``, ``zeros`` with ``theta0_*`` parameters.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import RunConfig
from .estimator import FitWindow
from .noise import NoiseModel, minibatch_noise, sharp_quadratic_noise, zero_noise
from .objectives import InterpolatingLeastSquares, Objective, QuadraticObjective, RingValleyObjective
from .rates import branch_value

OUTPUT_ENV = "PLRATES_OUTPUT_DIR"

OBJECTIVE_KINDS = ("quadratic", "ring_valley", "least_squares")
NOISE_KINDS = ("zero", "sharp", "minibatch")
THETA0_KINDS = ("explicit", "offset", "eigvec", "gaussian", "zeros")


class ConfigError(ValueError):
    pass


@dataclass
class ObjectiveSpec:
    kind: str = "ring_valley"
    eigenvalues: tuple[float, ...] | None = None
    seed: int = 0
    rotate: bool = True
    alpha: float = 1.0
    beta: float = 4.0
    n: int = 20
    d: int = 50
    rank: int | None = None


@dataclass
class NoiseSpec:
    kind: str = "zero"
    sigma: float = 0.0
    batch: int = 1
    replacement: bool = True


@dataclass
class RunSpec:
    base_seed: int
    gamma: float | None = None
    gamma_grid: tuple[float, ...] | None = None
    steps: int = 1000
    replicas: int = 1
    record_every: int = 1
    workers: int = 1
    theta0: str = "zeros"
    theta0_values: tuple[float, ...] | None = None
    theta0_angle: float = 0.0
    theta0_offset: tuple[float, ...] = (0.1, 0.1)
    theta0_index: str = "branch_max"
    theta0_scale: float = 1.0
    theta0_seed: int = 0


@dataclass
class EstimatorSpec:
    mode: str = "median"
    headroom: float = 1e4
    floor: float = 1e-200
    burn_in: float = 0.2
    k_start: int | None = None
    k_end: int | None = None
    eps_tol: float = 0.02
    eps_band: float = 0.1
    snap_limit: bool = False
    grad_tol: float = 1e-10
    sigma_draws: int = 2000
    sigma_probes: int = 8
    tube_radius: float = 0.1
    pl_samples: int = 2000
    contraction_eps: float = 0.05
    tail_fraction: float = 0.8

    def window(self) -> FitWindow:
        return FitWindow(self.k_start, self.k_end, self.floor, self.headroom, self.burn_in)


@dataclass
class OutputSpec:
    dir: str = "out"
    combined: bool = False


@dataclass
class ExperimentConfig:
    objective: ObjectiveSpec
    noise: NoiseSpec
    run: RunSpec
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def validate(self) -> "ExperimentConfig":
        o, nz, r, e = self.objective, self.noise, self.run, self.estimator
        if o.kind not in OBJECTIVE_KINDS:
            raise ConfigError(f"unknown objective kind {o.kind!r}; expected one of {OBJECTIVE_KINDS}")
        if o.kind == "quadratic" and not o.eigenvalues:
            raise ConfigError("quadratic objective needs 'eigenvalues'")
        if nz.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {nz.kind!r}; expected one of {NOISE_KINDS}")
        if nz.kind == "sharp" and o.kind != "quadratic":
            raise ConfigError("sharp noise requires a quadratic objective")
        if nz.kind == "minibatch" and o.kind != "least_squares":
            raise ConfigError("minibatch noise requires a least_squares objective")
        if nz.sigma < 0:
            raise ConfigError("noise sigma must be nonnegative")
        if r.gamma is None and not r.gamma_grid:
            raise ConfigError("run needs 'gamma' or 'gamma_grid'")
        grid = ([r.gamma] if r.gamma is not None else []) + list(r.gamma_grid or [])
        if any(not g > 0 for g in grid):
            raise ConfigError("step-sizes must be positive")
        if r.steps < 1 or r.replicas < 1 or r.record_every < 1 or r.workers < 1:
            raise ConfigError("steps, replicas, record_every and workers must be >= 1")
        if r.theta0 not in THETA0_KINDS:
            raise ConfigError(f"unknown theta0 kind {r.theta0!r}; expected explicit numbers or one of {THETA0_KINDS[1:]}")
        if e.mode not in ("median", "mean"):
            raise ConfigError("estimator mode must be 'median' or 'mean'")
        return self

    def gammas(self) -> list[float]:
        if self.run.gamma_grid:
            return list(self.run.gamma_grid)
        return [self.run.gamma]

    def output_dir(self) -> Path:
        return Path(self.output.dir)


SECTIONS = {
    "objective": ObjectiveSpec,
    "noise": NoiseSpec,
    "run": RunSpec,
    "estimator": EstimatorSpec,
    "output": OutputSpec,
}


def _parse_value(raw: str, tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        if raw.strip().lower() in ("", "none"):
            return None
        tp = args[0]
    if typing.get_origin(tp) is tuple:
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if tp is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if tp is float:
        return float(raw)
    return raw.strip()


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _build_section(cls, items: dict[str, str]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(items) - names
    if unknown:
        raise ConfigError(f"unknown keys for [{cls.__name__}]: {sorted(unknown)}")
    kwargs = {}
    for key, raw in items.items():
        try:
            kwargs[key] = _parse_value(raw, hints[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[{cls.__name__}] {exc}") from None


def _normalize_theta0(items: dict[str, str]) -> dict[str, str]:
    # bare numbers in 'theta0' mean an explicit vector
    v = items.get("theta0")
    if v is not None and v.strip() and v.strip().lower() not in THETA0_KINDS:
        try:
            [float(x) for x in v.replace(",", " ").split()]
        except ValueError:
            return items
        items = dict(items)
        items["theta0"] = "explicit"
        items["theta0_values"] = v
    return items


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    raw = {name: dict(cp[name]) if cp.has_section(name) else {} for name in SECTIONS}
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigError(f"override must look like section.key=value, got {dotted!r}")
        raw[section][key] = value
    if "base_seed" not in raw["run"]:
        raise ConfigError("run.base_seed is mandatory")
    raw["run"] = _normalize_theta0(raw["run"])
    parts = {name: _build_section(cls, raw[name]) for name, cls in SECTIONS.items()}
    return ExperimentConfig(**parts).validate()


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text, overrides)
    env = os.environ.get(OUTPUT_ENV)
    if env and not (overrides and "output.dir" in overrides):
        cfg.output.dir = env
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    for name in SECTIONS:
        spec = getattr(cfg, name)
        cp[name] = {f.name: _format_value(getattr(spec, f.name))
                    for f in dataclasses.fields(spec) if getattr(spec, f.name) is not None}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def build_objective(spec: ObjectiveSpec) -> Objective:
    if spec.kind == "quadratic":
        return QuadraticObjective.from_spectrum(spec.eigenvalues, seed=spec.seed if spec.rotate else None)
    if spec.kind == "ring_valley":
        return RingValleyObjective(spec.alpha, spec.beta)
    if spec.kind == "least_squares":
        return InterpolatingLeastSquares.from_seed(spec.n, spec.d, spec.seed, spec.rank)
    raise ConfigError(f"unknown objective kind {spec.kind!r}")


def build_noise(spec: NoiseSpec, obj: Objective) -> NoiseModel:
    if spec.kind == "zero":
        return zero_noise()
    if spec.kind == "sharp":
        return sharp_quadratic_noise(obj.A, spec.sigma)
    if spec.kind == "minibatch":
        try:
            return minibatch_noise(obj, spec.batch, spec.replacement)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown noise kind {spec.kind!r}")


def branch_max_eigvec(obj: QuadraticObjective, sigma: float, gamma: float) -> np.ndarray:
    """Eigenvector of the extreme nonzero eigenvalue that maximizes the rate expression at ``gamma``."""
    mu, L = obj.spectrum_hint
    lam = mu if branch_value(mu, sigma, gamma) >= branch_value(L, sigma, gamma) else L
    i = int(np.argmin(np.abs(obj.eigvals - lam)))
    return obj.eigvector(i)


def resolve_theta0(cfg: ExperimentConfig, obj: Objective, gamma: float) -> np.ndarray:
    r = cfg.run
    if r.theta0 == "explicit":
        theta0 = np.asarray(r.theta0_values, dtype=float)
    elif r.theta0 == "zeros":
        theta0 = np.zeros(obj.dim)
    elif r.theta0 == "gaussian":
        theta0 = r.theta0_scale * np.random.default_rng(r.theta0_seed).standard_normal(obj.dim)
    elif r.theta0 == "offset":
        if not isinstance(obj, RingValleyObjective):
            raise ConfigError("theta0 = offset is only defined for ring_valley")
        theta0 = obj.offset_point(r.theta0_angle, r.theta0_offset)
    elif r.theta0 == "eigvec":
        if not isinstance(obj, QuadraticObjective):
            raise ConfigError("theta0 = eigvec is only defined for quadratic objectives")
        if r.theta0_index == "branch_max":
            sigma = cfg.noise.sigma if cfg.noise.kind == "sharp" else 0.0
            v = branch_max_eigvec(obj, sigma, gamma)
        else:
            v = obj.eigvector(int(r.theta0_index))
        theta0 = r.theta0_scale * v
    else:
        raise ConfigError(f"unknown theta0 kind {r.theta0!r}")
    if theta0.shape != (obj.dim,):
        raise ConfigError(f"theta0 has shape {theta0.shape}, objective dimension is {obj.dim}")
    return theta0


def run_config(cfg: ExperimentConfig, obj: Objective, gamma: float) -> RunConfig:
    r = cfg.run
    return RunConfig(
        gamma=gamma,
        steps=r.steps,
        theta0=resolve_theta0(cfg, obj, gamma),
        replicas=r.replicas,
        base_seed=r.base_seed,
        record_every=r.record_every,
    )
