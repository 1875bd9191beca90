"""
Experiment configuration: TOML (or JSON) files mapped onto dataclasses.

Every section and key is checked before any computation starts; unknown
keys are an error so a typo can never silently fall back to a default.
"""

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODELS = ("ising", "bingham")
METHODS = ("roulette_geometric", "poisson_geometric", "exponential_series",
           "exchange_exact", "exchange_approx", "exact_reference")


@dataclass
class RunSection:
    model: str = "ising"
    method: str = "roulette_geometric"
    n_iters: int = 20000
    burn_in: int = None
    seed: int = 0
    output_dir: str = "run"
    workers: int = 1


@dataclass
class IsingSection:
    n: int = 10
    alpha: float = 0.0
    beta_true: float = 0.2
    data: str = None
    prior: list = field(default_factory=lambda: [0.0, 1.0])
    init: float = None


@dataclass
class BinghamSection:
    lambda3_true: float = -2.0
    n_points: int = 20
    data: str = None
    prior: list = field(default_factory=lambda: [-5.0, 0.0])
    init: float = None
    thin: int = 100


@dataclass
class EstimatorSection:
    n_samples: int = 100
    n_temps: int = 1000
    sweeps_per_temp: int = 1
    resample_threshold: float = 0.0
    pilot_draws: int = 20
    pilot_step: float = 0.01
    kappa_target: float = 0.9
    relaxed_kappa: float = 0.99
    positivity_sd: float = 8.0
    q_min: float = 0.05
    q_max: float = 0.95
    q: float = None
    poisson_lambda: float = 1.0
    is_samples: int = 1000
    safety_cap: int = 10000


@dataclass
class ProposalSection:
    scale: float = 0.1
    adapt: bool = True
    target_accept: float = 0.4


@dataclass
class ExchangeSection:
    gibbs_steps: int = 50000
    max_sweeps: int = 2**20


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    ising: IsingSection = field(default_factory=IsingSection)
    bingham: BinghamSection = field(default_factory=BinghamSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    proposal: ProposalSection = field(default_factory=ProposalSection)
    exchange: ExchangeSection = field(default_factory=ExchangeSection)

    @property
    def burn_in(self):
        return self.run.n_iters // 2 if self.run.burn_in is None else self.run.burn_in

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        """SHA-256 of the settings that influence results (not paths or pool size)."""
        d = self.to_dict()
        d["run"].pop("output_dir")
        d["run"].pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_FLOAT_OPTIONAL = {"init", "q"}
_INT_OPTIONAL = {"burn_in"}
_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)}


def _check_type(section, key, value, default):
    if value is None:
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int) and not isinstance(default, bool):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or (default is None and key in _FLOAT_OPTIONAL):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str) or default is None:
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = (isinstance(value, list) and len(value) == 2
              and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value))
        value = [float(v) for v in value] if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"[{section}] {key}: bad value {value!r}")
    return value


def config_from_dict(raw):
    """Validate a nested mapping and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table of sections")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    built = {}
    for name, factory in _SECTIONS.items():
        sec = factory()
        given = raw.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section [{name}] must be a table")
        names = {f.name for f in dataclasses.fields(sec)}
        bad = set(given) - names
        if bad:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
        for key, value in given.items():
            default = getattr(sec, key)
            if key in _INT_OPTIONAL:
                if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
                    raise ConfigError(f"[{name}] {key}: bad value {value!r}")
            else:
                value = _check_type(name, key, value, default)
            setattr(sec, key, value)
        built[name] = sec
    cfg = ExperimentConfig(**built)
    validate(cfg)
    return cfg


def validate(cfg):
    r, e = cfg.run, cfg.estimator
    if r.model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    if r.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if r.n_iters < 0:
        raise ConfigError("n_iters must be non-negative")
    if r.n_iters > 0 and not 0 <= cfg.burn_in < r.n_iters:
        raise ConfigError("need 0 <= burn_in < n_iters")
    if r.seed < 0:
        raise ConfigError("seed must be non-negative")
    if r.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.ising.n < 1:
        raise ConfigError("ising.n must be positive")
    for name, prior in (("ising", cfg.ising.prior), ("bingham", cfg.bingham.prior)):
        if not prior[0] < prior[1]:
            raise ConfigError(f"{name}.prior must be [low, high] with low < high")
    if cfg.bingham.prior[1] > 0:
        raise ConfigError("bingham.prior must lie in (-inf, 0] (normal form)")
    if cfg.bingham.n_points < 1 or cfg.bingham.thin < 100:
        raise ConfigError("bingham needs n_points >= 1 and thin >= 100")
    if min(e.n_samples, e.n_temps, e.pilot_draws - 1, e.is_samples, e.safety_cap) < 1:
        raise ConfigError("estimator sizes must be positive (pilot_draws >= 2)")
    if e.sweeps_per_temp < 0 or e.resample_threshold < 0 or e.resample_threshold > 1:
        raise ConfigError("bad sweeps_per_temp or resample_threshold")
    if not 0 < e.kappa_target < 1 or not 0 < e.relaxed_kappa < 1:
        raise ConfigError("kappa targets must lie in (0, 1)")
    if not 0 < e.q_min <= e.q_max <= 1:
        raise ConfigError("need 0 < q_min <= q_max <= 1")
    if e.q is not None and not 0 < e.q <= 1:
        raise ConfigError("q must lie in (0, 1]")
    if not e.pilot_step > 0 or not e.poisson_lambda > 0:
        raise ConfigError("pilot_step and poisson_lambda must be positive")
    if e.positivity_sd is not None and e.positivity_sd < 0:
        raise ConfigError("positivity_sd must be non-negative")
    if not cfg.proposal.scale > 0 or not 0 < cfg.proposal.target_accept < 1:
        raise ConfigError("bad proposal settings")
    if cfg.exchange.gibbs_steps < 0 or cfg.exchange.max_sweeps < 1:
        raise ConfigError("bad exchange settings")


def load_config(path):
    """Read a ``.toml`` or ``.json`` configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    return config_from_dict(raw)
