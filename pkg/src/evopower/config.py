"""Flat run configuration files: dotted keys, one ``key = value`` per line.

The file mirrors the full run setup across five namespaces
(``evolution.*`` including ``evolution.rates.*``, ``fitness.*``,
``meter.*``, ``data.*``, ``genome.*``).  Unknown keys are rejected;
missing keys fall back to the library defaults.  ``#`` starts a comment
line.  The format round-trips, so a written snapshot replays a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import Dataset, SplitSpec, desk_subset, load_idx, split, synthetic_dataset
from .errors import ConfigError
from .evolution import EvolutionConfig, TaskData
from .grammar import Grammar, load_packaged_grammar, parse_grammar

PACKAGED_GRAMMARS = ("default", "dense_only")

_INT, _FLOAT, _STR = "int", "float", "str"

KEY_TYPES = {
    "evolution.runs": _INT,
    "evolution.generations": _INT,
    "evolution.population_size": _INT,
    "evolution.default_train_budget": _FLOAT,
    "evolution.train_longer_increment": _FLOAT,
    "evolution.max_train_budget": _FLOAT,
    "evolution.n_measures": _INT,
    "evolution.archive_capacity": _INT,
    "evolution.workers": _INT,
    "evolution.seed": _INT,
    "evolution.rates.add_layer": _FLOAT,
    "evolution.rates.reuse_layer": _FLOAT,
    "evolution.rates.remove_layer": _FLOAT,
    "evolution.rates.reuse_module": _FLOAT,
    "evolution.rates.remove_module": _FLOAT,
    "evolution.rates.dsge_level": _FLOAT,
    "evolution.rates.macro_layer": _FLOAT,
    "evolution.rates.train_longer": _FLOAT,
    "fitness.kind": _STR,
    "fitness.threshold_left": _FLOAT,
    "fitness.threshold_right": _FLOAT,
    "fitness.power_weight": _FLOAT,
    "meter.p_min": _FLOAT,
    "meter.p_max": _FLOAT,
    "meter.k": _FLOAT,
    "meter.noise_sigma": _FLOAT,
    "meter.seed": _INT,
    "genome.grammar": _STR,
    "genome.modules": _INT,
    "genome.min_layers": _INT,
    "genome.max_layers": _INT,
    "genome.init_layers_min": _INT,
    "genome.init_layers_max": _INT,
    "data.kind": _STR,
    "data.train_images": _STR,
    "data.train_labels": _STR,
    "data.classes": _INT,
    "data.samples_per_class": _INT,
    "data.dimensions": _INT,
    "data.separation": _FLOAT,
    "data.clusters_per_class": _INT,
    "data.seed": _INT,
    "data.fraction_train": _FLOAT,
    "data.fraction_validation": _FLOAT,
    "data.fraction_test": _FLOAT,
    "data.split_seed": _INT,
    "data.subset_train": _INT,
    "data.subset_validation": _INT,
    "data.subset_test": _INT,
}

DATA_KINDS = ("synthetic", "idx")

# idx inputs are 28x28 grey images over ten classes
IDX_IO_SHAPE = (784, 10)


def _convert(key: str, raw: str):
    kind = KEY_TYPES[key]
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {kind}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        raise ConfigError(f"unexpected boolean config value {value!r}")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def parse_config(text: str) -> dict[str, str]:
    """Raw key/value pairs; duplicates and shapeless lines are errors."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


@dataclass
class DataConfig:
    """Dataset selection: a synthetic task or local IDX files."""

    kind: str = "synthetic"
    train_images: str = ""
    train_labels: str = ""
    classes: int = 3
    samples_per_class: int = 200
    dimensions: int = 16
    separation: float = 3.0
    clusters_per_class: int = 1
    seed: int = 0
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    subset: tuple[int, int, int] = (2000, 500, 500)

    def validate(self) -> None:
        if self.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}, got {self.kind!r}")
        if self.kind == "idx":
            if not self.train_images:
                raise ConfigError("data.kind = idx requires data.train_images")
            if not self.train_labels:
                raise ConfigError("data.kind = idx requires data.train_labels")

    def io_shape(self) -> tuple[int, int]:
        if self.kind == "synthetic":
            return (self.dimensions, self.classes)
        return IDX_IO_SHAPE

    def load_raw(self) -> Dataset:
        self.validate()
        if self.kind == "synthetic":
            return synthetic_dataset(
                self.classes,
                self.samples_per_class,
                self.dimensions,
                self.separation,
                seed=self.seed,
                clusters_per_class=self.clusters_per_class,
            )
        return load_idx(self.train_images, self.train_labels)

    def load(self) -> TaskData:
        ds = self.load_raw()
        if self.kind == "synthetic":
            train, validation, test = split(ds, SplitSpec(self.fractions, self.split_seed))
        else:
            train, validation, test = desk_subset(ds, self.subset, seed=self.split_seed)
        return TaskData(train, validation, test)


@dataclass
class AppConfig:
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    data: DataConfig = field(default_factory=DataConfig)
    grammar: str = "default"

    @staticmethod
    def from_flat(flat: dict[str, str]) -> "AppConfig":
        unknown = sorted(set(flat) - set(KEY_TYPES))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values = {key: _convert(key, raw) for key, raw in flat.items()}

        evolution: dict = {}
        rates: dict = {}
        fitness: dict = {}
        meter: dict = {}
        genome: dict = {}
        data: dict = {}
        grammar = "default"
        for key, value in values.items():
            if key.startswith("evolution.rates."):
                rates[key.split(".", 2)[2]] = value
            elif key.startswith("evolution."):
                evolution[key.split(".", 1)[1]] = value
            elif key.startswith("fitness."):
                fitness[key.split(".", 1)[1]] = value
            elif key.startswith("meter."):
                meter[key.split(".", 1)[1]] = value
            elif key == "genome.grammar":
                grammar = value
            elif key.startswith("genome."):
                genome[key.split(".", 1)[1]] = value
            else:
                data[key.split(".", 1)[1]] = value

        if rates:
            evolution["rates"] = rates
        if fitness:
            evolution["fitness"] = fitness
        if meter:
            evolution["meter"] = meter
        if genome:
            count = genome.pop("modules", 1)
            if count < 1:
                raise ConfigError(f"genome.modules must be >= 1, got {count}")
            spec = {
                "start_symbol": "layer",
                "min_layers": genome.pop("min_layers", 2),
                "max_layers": genome.pop("max_layers", 6),
                "init_layers": [
                    genome.pop("init_layers_min", 2),
                    genome.pop("init_layers_max", 3),
                ],
            }
            evolution["genome"] = {"modules": [dict(spec) for _ in range(count)]}
        evolution_cfg = EvolutionConfig.from_dict(evolution)

        data_cfg = DataConfig()
        fractions = list(data_cfg.fractions)
        subset = list(data_cfg.subset)
        for name, value in data.items():
            if name == "fraction_train":
                fractions[0] = value
            elif name == "fraction_validation":
                fractions[1] = value
            elif name == "fraction_test":
                fractions[2] = value
            elif name == "subset_train":
                subset[0] = value
            elif name == "subset_validation":
                subset[1] = value
            elif name == "subset_test":
                subset[2] = value
            else:
                setattr(data_cfg, name, value)
        data_cfg.fractions = tuple(fractions)
        data_cfg.subset = tuple(subset)
        if data_cfg.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}, got {data_cfg.kind!r}")

        return AppConfig(evolution_cfg, data_cfg, grammar)

    def to_flat(self) -> dict[str, str]:
        out: dict[str, str] = {}
        nested = self.evolution.to_dict()
        rates = nested.pop("rates")
        fitness = nested.pop("fitness")
        meter = nested.pop("meter")
        genome = nested.pop("genome")
        for name, value in nested.items():
            out[f"evolution.{name}"] = _fmt(value)
        for name, value in rates.items():
            out[f"evolution.rates.{name}"] = _fmt(value)
        for name, value in fitness.items():
            out[f"fitness.{name}"] = _fmt(value)
        for name, value in meter.items():
            out[f"meter.{name}"] = _fmt(value)

        specs = genome["modules"]
        if any(spec != specs[0] for spec in specs):
            raise ConfigError("flat config cannot express differing module bounds")
        if specs[0]["start_symbol"] != "layer":
            raise ConfigError("flat config cannot express a custom module start symbol")
        if (tuple(genome["macro_symbols"]) != ("learning",)
                or genome["middle_point_symbol"] != "middle_point"):
            raise ConfigError("flat config cannot express custom macro symbols")
        out["genome.grammar"] = self.grammar
        out["genome.modules"] = _fmt(len(specs))
        out["genome.min_layers"] = _fmt(specs[0]["min_layers"])
        out["genome.max_layers"] = _fmt(specs[0]["max_layers"])
        out["genome.init_layers_min"] = _fmt(specs[0]["init_layers"][0])
        out["genome.init_layers_max"] = _fmt(specs[0]["init_layers"][1])

        d = self.data
        out["data.kind"] = d.kind
        out["data.train_images"] = d.train_images
        out["data.train_labels"] = d.train_labels
        out["data.classes"] = _fmt(d.classes)
        out["data.samples_per_class"] = _fmt(d.samples_per_class)
        out["data.dimensions"] = _fmt(d.dimensions)
        out["data.separation"] = _fmt(d.separation)
        out["data.clusters_per_class"] = _fmt(d.clusters_per_class)
        out["data.seed"] = _fmt(d.seed)
        out["data.fraction_train"] = _fmt(d.fractions[0])
        out["data.fraction_validation"] = _fmt(d.fractions[1])
        out["data.fraction_test"] = _fmt(d.fractions[2])
        out["data.split_seed"] = _fmt(d.split_seed)
        out["data.subset_train"] = _fmt(d.subset[0])
        out["data.subset_validation"] = _fmt(d.subset[1])
        out["data.subset_test"] = _fmt(d.subset[2])
        return out


def format_config(app: AppConfig) -> str:
    flat = app.to_flat()
    return "\n".join(f"{key} = {flat[key]}" for key in sorted(flat)) + "\n"


def load_config(path) -> AppConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    return AppConfig.from_flat(parse_config(text))


def save_config(app: AppConfig, path) -> None:
    Path(path).write_text(format_config(app))


def load_grammar_spec(name_or_path: str) -> Grammar:
    """A packaged grammar name, or a path to a grammar file."""
    if name_or_path in PACKAGED_GRAMMARS:
        return load_packaged_grammar(name_or_path)
    path = Path(name_or_path)
    if path.is_file():
        return parse_grammar(path.read_text())
    raise ConfigError(
        f"genome.grammar: {name_or_path!r} is neither a packaged grammar "
        f"{PACKAGED_GRAMMARS} nor a readable file"
    )
