"""Experiment configuration: sectioned ``key = value`` text files.

Example::

    [experiment]
    kind = synthetic
    n = 8
    d = 16
    b = 2
    seeds = 0, 1, 2
    output_dir = out

    [optimizer]
    variant = all_ncb_gd
    eta = 0.5
    steps = 500

    [subset]
    spec = explicit
    batches = 1 2; 3 4; 5 6; 7 8

Batch lists are written with 1-based indices, like every other
human-facing file.
"""

from __future__ import annotations

import configparser
import enum
import hashlib
from dataclasses import dataclass, fields, replace

from .embedding import BatchCollection, CollectionKind
from .optim import OptimizerConfig, Variant, enumerate_batches


class ConfigError(ValueError):
    pass


class Experiment(enum.Enum):
    SYNTHETIC = "synthetic"
    TOY = "toy"
    SELECT_BATCHES = "select-batches"
    HISTOGRAM = "histogram"
    VERIFY = "verify"


class SubsetSpec(enum.Enum):
    ALL_NCB = "all_ncb"
    FULL_BATCH = "full_batch"
    PARTITION = "partition"
    EXPLICIT = "explicit"


class Selector(enum.Enum):
    RANDOM = "random"
    SC = "sc"
    CHUNKED_SC = "chunked_sc"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.SYNTHETIC
    n: int = 8
    d: int = 16
    b: int = 2
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "out"
    # optimizer
    variant: Variant = Variant.ALL_NCB_GD
    eta: float = 0.5
    steps: int = 500
    k: int = 1
    q: int = 1
    # subset used by subset_gd
    subset_spec: SubsetSpec = SubsetSpec.PARTITION
    batches: tuple[tuple[int, ...], ...] = ()  # 0-based internally
    # batch selection / histograms
    selector: Selector = Selector.SC
    chunk_k: int = 2
    bins: int = 10
    # toy study
    epsilon: float = 0.05
    toy_eta: float = 0.05
    rho: float = 0.05
    max_steps: int = 5000

    def __post_init__(self):
        for name in ("n", "d", "b", "steps", "k", "q", "chunk_k", "bins", "max_steps"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("eta", "epsilon", "toy_eta", "rho"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(s < 0 or s >= 2**63 for s in self.seeds):
            raise ConfigError("seeds must be non-negative 63-bit integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        if self.b > self.n:
            raise ConfigError(f"b={self.b} exceeds n={self.n}")
        if self.batches:
            try:
                BatchCollection.of(self.batches).check_against(self.n)
            except ValueError as e:
                raise ConfigError(f"explicit batch list: {e}") from None
            if any(len(bt) != self.b for bt in self.batches):
                raise ConfigError(f"explicit batches must all have size b={self.b}")
        elif self.subset_spec is SubsetSpec.EXPLICIT:
            raise ConfigError("subset spec 'explicit' needs a batch list")
        if self.subset_spec is SubsetSpec.PARTITION and self.n % self.b:
            raise ConfigError(f"n={self.n} is not divisible by b={self.b}")

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(self.variant, self.eta, self.steps, seed, self.b, self.k, self.q)

    def subset_collection(self) -> BatchCollection:
        spec = self.subset_spec
        if spec is SubsetSpec.ALL_NCB:
            return enumerate_batches(self.n, self.b)
        if spec is SubsetSpec.FULL_BATCH:
            return BatchCollection.of([range(self.n)])
        if spec is SubsetSpec.PARTITION:
            groups = [range(i, i + self.b) for i in range(0, self.n, self.b)]
            return BatchCollection.of(groups, partition=True)
        return BatchCollection(BatchCollection.of(self.batches).batches, CollectionKind.GENERAL)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seeds=(seed,))

    def to_text(self) -> str:
        return dump_config(self)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


# section -> (key, field name)
_LAYOUT = {
    "experiment": [("kind", "experiment"), ("n", "n"), ("d", "d"), ("b", "b"), ("seeds", "seeds"),
                   ("output_dir", "output_dir")],
    "optimizer": [("variant", "variant"), ("eta", "eta"), ("steps", "steps"), ("k", "k"), ("q", "q")],
    "subset": [("spec", "subset_spec"), ("batches", "batches")],
    "selector": [("kind", "selector"), ("chunk_k", "chunk_k"), ("bins", "bins")],
    "toy": [("epsilon", "epsilon"), ("eta", "toy_eta"), ("rho", "rho"), ("max_steps", "max_steps")],
}
_ENUMS = {"experiment": Experiment, "variant": Variant, "subset_spec": SubsetSpec, "selector": Selector}
_FLOATS = {"eta", "epsilon", "toy_eta", "rho"}


def _format(name: str, value) -> str:
    if name in _ENUMS:
        return value.value
    if name == "seeds":
        return ", ".join(str(s) for s in value)
    if name == "batches":
        return "; ".join(" ".join(str(i + 1) for i in bt) for bt in value)
    if name in _FLOATS:
        return repr(float(value))
    return str(value)


def _parse(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in _ENUMS:
            return _ENUMS[name](raw)
        if name == "seeds":
            return tuple(int(s) for s in raw.replace(",", " ").split())
        if name == "batches":
            out = []
            for chunk in raw.split(";"):
                if chunk.strip():
                    idx = [int(t) for t in chunk.replace(",", " ").split()]
                    if min(idx) < 1:
                        raise ConfigError(f"batch indices are 1-based, got {chunk.strip()!r}")
                    out.append(tuple(i - 1 for i in idx))
            return tuple(out)
        if name in _FLOATS:
            return float(raw)
        if name == "output_dir":
            return raw
        return int(raw)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, keys in _LAYOUT.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, name in keys:
            value = getattr(cfg, name)
            if name == "batches" and not value:
                continue
            lines.append(f"{key} = {_format(name, value)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse config text; unknown sections or keys are rejected, missing keys take defaults."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}".splitlines()[0]) from None
    values = {}
    for section in cp.sections():
        if section not in _LAYOUT:
            raise ConfigError(f"unknown section [{section}]")
        known = dict(_LAYOUT[section])
        for key, raw in cp.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[known[key]] = _parse(known[key], raw)
    values.update(overrides)
    valid = {f.name for f in fields(ExperimentConfig)}
    unknown = set(values) - valid
    if unknown:
        raise ConfigError(f"unknown fields {sorted(unknown)}")
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)
