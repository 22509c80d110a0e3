"""Experiment configuration in flat ``key = value`` text.

Keys carry dotted section prefixes, for example::

    seed = 7
    scenario.cnr_db = 25
    scenario.interference.count = 2
    experiment.m_list = [4]
    learner.outer_iterations = 50

Values are Python literals (numbers, booleans, quoted strings, lists); a
bare word is read as a string. ``#`` starts a comment.
"""

import ast
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

from ..exceptions import ParseError, ValidationError
from ..geometry import MEASURES, GeometricMeasure
from ..means import MeanConfig
from ..projection import LearnerConfig
from ..scenario import ClutterScenario, Interference


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ClutterScenario = field(default_factory=ClutterScenario)
    measures: Tuple[GeometricMeasure, ...] = MEASURES
    m_list: Tuple[int, ...] = (8, 6, 4, 2)
    k_multipliers: Tuple[float, ...] = (1.0,)
    scr_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    pfa: float = 1e-2
    trials_threshold: int = 10_000
    trials_pfa_check: int = 10_000
    trials_pd: int = 500
    training_j: int = 2000
    training_k: int = 2000
    training_scr_db: float = 25.0
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    mean: MeanConfig = field(default_factory=MeanConfig)
    bench_n_list: Tuple[int, ...] = (8, 16, 32)
    bench_k: int = 16
    bench_m: int = 4
    bench_repeats: int = 20
    seed: int = 0
    output_dir: str = "results"
    n_jobs: int = 0

    def __post_init__(self):
        n = self.scenario.n
        if not self.measures:
            raise ValidationError("experiment.measures is empty")
        if not self.m_list or any(not 1 <= m <= n for m in self.m_list):
            raise ValidationError(
                f"experiment.m_list entries must lie in [1, {n}]")
        if not self.k_multipliers or any(k <= 0 for k in self.k_multipliers):
            raise ValidationError("experiment.k_multipliers must be positive")
        if not self.scr_db:
            raise ValidationError("experiment.scr_db is empty")
        if not 0 < self.pfa < 1:
            raise ValidationError(f"pfa must lie in (0, 1), got {self.pfa}")
        counts = {
            "experiment.trials_threshold": self.trials_threshold,
            "experiment.trials_pfa_check": self.trials_pfa_check,
            "experiment.trials_pd": self.trials_pd,
            "training.j": self.training_j,
            "training.k": self.training_k,
            "bench.k": self.bench_k,
            "bench.m": self.bench_m,
            "bench.repeats": self.bench_repeats,
        }
        for key, value in counts.items():
            if value < 1:
                raise ValidationError(f"{key} must be positive, got {value}")
        if self.trials_threshold < 10 / self.pfa:
            raise ValidationError(
                f"experiment.trials_threshold={self.trials_threshold} too few "
                f"for pfa={self.pfa} (need >= {10 / self.pfa:g})")
        if any(b < max(2, self.bench_m) for b in self.bench_n_list):
            raise ValidationError("bench.n_list entries must be >= bench.m")
        if self.n_jobs < 0:
            raise ValidationError("n_jobs must be >= 0 (0 = auto)")

    def k_values(self, m):
        """Secondary-cell counts ``ceil(multiplier * M)`` for target dim M."""
        return sorted({math.ceil(k * m - 1e-9) for k in self.k_multipliers})

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        """Flat ``key -> value`` echo using the same keys as the text form."""
        out = {}
        for key, (path, _) in _KEYS.items():
            value = self
            for attr in path:
                value = getattr(value, attr)
            if isinstance(value, tuple):
                value = [str(v) if isinstance(v, GeometricMeasure) else v
                         for v in value]
            out[key] = value
        return out


def _measures(value):
    if isinstance(value, str):
        value = [value]
    return tuple(GeometricMeasure.parse(v) for v in value)


def _int_list(value):
    value = value if isinstance(value, (list, tuple)) else [value]
    return tuple(_int(v) for v in value)


def _float_list(value):
    value = value if isinstance(value, (list, tuple)) else [value]
    return tuple(float(v) for v in value)


def _int(value):
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _bool(value):
    if not isinstance(value, bool):
        raise ValueError(f"expected true or false, got {value!r}")
    return value


def _opt_float(value):
    return None if value is None else float(value)


def _opt_int(value):
    return None if value is None else _int(value)


# key -> (attribute path, converter)
_KEYS = {
    "seed": (("seed",), _int),
    "output_dir": (("output_dir",), str),
    "n_jobs": (("n_jobs",), _int),
    "scenario.n": (("scenario", "n"), _int),
    "scenario.cnr_db": (("scenario", "cnr_db"), float),
    "scenario.rho": (("scenario", "rho"), float),
    "scenario.fc": (("scenario", "fc"), float),
    "scenario.sigma_n2": (("scenario", "sigma_n2"), float),
    "scenario.fs": (("scenario", "fs"), float),
    "scenario.interference.count":
        (("scenario", "interference", "count"), _int),
    "scenario.interference.doppler":
        (("scenario", "interference", "doppler"), float),
    "scenario.interference.inr_db":
        (("scenario", "interference", "inr_db"), float),
    "scenario.interference.in_null":
        (("scenario", "interference", "in_null"), _bool),
    "experiment.measures": (("measures",), _measures),
    "experiment.m_list": (("m_list",), _int_list),
    "experiment.k_multipliers": (("k_multipliers",), _float_list),
    "experiment.scr_db": (("scr_db",), _float_list),
    "experiment.pfa": (("pfa",), float),
    "experiment.trials_threshold": (("trials_threshold",), _int),
    "experiment.trials_pfa_check": (("trials_pfa_check",), _int),
    "experiment.trials_pd": (("trials_pd",), _int),
    "training.j": (("training_j",), _int),
    "training.k": (("training_k",), _int),
    "training.scr_db": (("training_scr_db",), float),
    "learner.outer_iterations": (("learner", "outer_iterations"), _int),
    "learner.rgd_iterations": (("learner", "rgd_iterations"), _int),
    "learner.step_size": (("learner", "step_size"), float),
    "learner.armijo_shrink": (("learner", "armijo_shrink"), float),
    "learner.armijo_slope": (("learner", "armijo_slope"), float),
    "learner.tol": (("learner", "tol"), float),
    "learner.seed": (("learner", "seed"), _opt_int),
    "mean.max_iterations": (("mean", "max_iterations"), _int),
    "mean.residual_tolerance": (("mean", "residual_tolerance"), float),
    "mean.airm_relaxation": (("mean", "airm_relaxation"), _opt_float),
    "mean.airm_method": (("mean", "airm_method"), str),
    "bench.n_list": (("bench_n_list",), _int_list),
    "bench.k": (("bench_k",), _int),
    "bench.m": (("bench_m",), _int),
    "bench.repeats": (("bench_repeats",), _int),
}

CONFIG_KEYS = tuple(_KEYS)


def _literal(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_literal(item.strip()) for item in inner.split(",")] if inner else []
    return text


def parse_assignments(text):
    """Parse ``key = value`` lines into ``{key: (value, line_number)}``."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}",
                             line=lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        if not value:
            raise ParseError(f"missing value for {key!r}", line=lineno)
        values[key] = (_literal(value), lineno)
    return values


def _set_path(obj, path, value):
    if len(path) == 1:
        return replace(obj, **{path[0]: value})
    child = getattr(obj, path[0])
    return replace(obj, **{path[0]: _set_path(child, path[1:], value)})


def _build(assignments, base):
    """Apply converted assignments to ``base``, nested objects first so their
    own validation runs once on the final values."""
    groups = {}
    top = {}
    for key, (value, lineno) in assignments.items():
        path, conv = _KEYS[key]
        try:
            value = conv(value)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{key}: {exc}", line=lineno) from None
        if len(path) == 1:
            top[path[0]] = value
        else:
            groups.setdefault(path[0], []).append((path[1:], value, lineno))

    changes = dict(top)
    for name, items in groups.items():
        obj = getattr(base, name)
        kwargs = {}
        nested = {}
        for sub, value, _ in items:
            if len(sub) == 1:
                kwargs[sub[0]] = value
            else:
                nested.setdefault(sub[0], {})[sub[1]] = value
        lineno = min(item[2] for item in items)
        try:
            for attr, sub_kwargs in nested.items():
                kwargs[attr] = replace(getattr(obj, attr), **sub_kwargs)
            changes[name] = replace(obj, **kwargs)
        except ValidationError as exc:
            raise ParseError(f"{name}: {exc}", line=lineno) from None
    return replace(base, **changes)


def parse_config(text, base=None):
    """Build an :class:`ExperimentConfig` from config text.

    Raises
    ------
    ParseError
        Malformed line, unknown key or invalid value (with line number).
    ValidationError
        Values that are individually valid but inconsistent together.
    """
    base = ExperimentConfig() if base is None else base
    return _build(parse_assignments(text), base)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def format_config(cfg):
    """Render ``cfg`` as config text that :func:`parse_config` reads back."""
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, str):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ExperimentConfig",
    "CONFIG_KEYS",
    "parse_config",
    "load_config",
    "format_config",
    "parse_assignments",
]
