"""Individuals: modules of layer genes, macro genes, and the split point.

An individual owns one or more modules, each an ordered list of layer
derivations from a grammar start symbol, plus macro-level genes for the
training hyperparameters and ``middle_point``, the index of the hidden
layer where the auxiliary output attaches.  Decoding relies on a small
attribute convention the grammar must follow:

* every ``<layer>`` alternative tags itself with a ``layer:<kind>``
  literal (``dense`` or ``dropout``);
* dense layers provide ``units`` and ``act`` attributes, dropout layers
  provide ``rate``;
* the macro symbol (``learning``) provides ``lr`` and ``batch``.

Hidden layers are counted over dense layers only; dropout attaches to its
preceding dense layer and never hosts the auxiliary output.  Every
individual keeps at least two dense layers so a split point exists, and
``middle_point`` stays within ``[0, hidden - 2]``: attaching after the
last hidden layer would just duplicate the full model.

Individuals are treated as immutable after construction.  Mutation and
clamping return new objects; ``copy`` helpers perform deep copies of the
gene lists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, InvalidGenotypeError
from .grammar import GeneList, Grammar, bind_dynamic_bound, decode, random_derivation

if TYPE_CHECKING:
    from .evolution import EvaluationRecord

MIN_HIDDEN_LAYERS = 2
_INIT_TRIES = 200


@dataclass
class ModuleSpec:
    """Search-space bounds for one module slot."""

    start_symbol: str = "layer"
    min_layers: int = 2
    max_layers: int = 6
    init_layers: tuple[int, int] = (2, 3)

    def validate(self) -> None:
        if self.min_layers < 1:
            raise ConfigError(f"min_layers must be >= 1, got {self.min_layers}")
        if self.min_layers > self.max_layers:
            raise ConfigError(
                f"min_layers {self.min_layers} exceeds max_layers {self.max_layers}"
            )
        lo, hi = self.init_layers
        if lo > hi or lo < self.min_layers or hi > self.max_layers:
            raise ConfigError(
                f"init_layers {self.init_layers} outside [{self.min_layers}, {self.max_layers}]"
            )


@dataclass
class GenomeConfig:
    modules: list[ModuleSpec] = field(default_factory=lambda: [ModuleSpec()])
    macro_symbols: tuple[str, ...] = ("learning",)
    middle_point_symbol: str = "middle_point"

    def validate(self) -> None:
        if not self.modules:
            raise ConfigError("genome config needs at least one module")
        for spec in self.modules:
            spec.validate()


@dataclass
class ModuleGene:
    """One module: an ordered list of layer derivations."""

    start_symbol: str
    layer_genes: list[GeneList]
    min_layers: int
    max_layers: int

    def copy(self) -> "ModuleGene":
        return ModuleGene(
            self.start_symbol,
            [g.copy() for g in self.layer_genes],
            self.min_layers,
            self.max_layers,
        )

    def genotype_key(self) -> tuple:
        """Hashable identity of the module's genotype (bounds excluded)."""
        return (self.start_symbol, tuple(g.canonical() for g in self.layer_genes))

    def to_dict(self) -> dict:
        return {
            "start_symbol": self.start_symbol,
            "layer_genes": [g.to_dict() for g in self.layer_genes],
            "min_layers": self.min_layers,
            "max_layers": self.max_layers,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModuleGene":
        return ModuleGene(
            d["start_symbol"],
            [GeneList.from_dict(g) for g in d["layer_genes"]],
            int(d["min_layers"]),
            int(d["max_layers"]),
        )


@dataclass
class MacroGenes:
    """Macro-level genes: hyperparameter derivations plus the split point."""

    genes: dict[str, GeneList]
    middle_point: int

    def copy(self) -> "MacroGenes":
        return MacroGenes({k: g.copy() for k, g in self.genes.items()}, self.middle_point)

    def to_dict(self) -> dict:
        return {
            "genes": {k: g.to_dict() for k, g in self.genes.items()},
            "middle_point": self.middle_point,
        }

    @staticmethod
    def from_dict(d: dict) -> "MacroGenes":
        return MacroGenes(
            {k: GeneList.from_dict(g) for k, g in d["genes"].items()},
            int(d["middle_point"]),
        )


@dataclass
class Individual:
    modules: list[ModuleGene]
    macro: MacroGenes
    id: int
    train_budget: float
    evaluation: "EvaluationRecord | None" = None

    def copy(self, new_id: int | None = None) -> "Individual":
        """Deep copy of the genotype; the evaluation is dropped."""
        return Individual(
            [m.copy() for m in self.modules],
            self.macro.copy(),
            self.id if new_id is None else new_id,
            self.train_budget,
            None,
        )

    def genotype_key(self) -> tuple:
        macro = tuple(sorted((k, g.canonical()) for k, g in self.macro.genes.items()))
        return (
            tuple(m.genotype_key() for m in self.modules),
            macro,
            self.macro.middle_point,
        )

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "id": self.id,
            "train_budget": self.train_budget,
            "modules": [m.to_dict() for m in self.modules],
            "macro": self.macro.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Individual":
        if d.get("version") != 1:
            raise InvalidGenotypeError(f"unsupported individual record version {d.get('version')!r}")
        return Individual(
            [ModuleGene.from_dict(m) for m in d["modules"]],
            MacroGenes.from_dict(d["macro"]),
            int(d["id"]),
            float(d["train_budget"]),
            None,
        )


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" | "dropout"
    units: int | None = None
    activation: str | None = None
    rate: float | None = None


@dataclass(frozen=True)
class PhenotypeSpec:
    layers: tuple[LayerSpec, ...]
    aux_index: int
    learning_rate: float
    batch_size: int


def _decode_layer(grammar: Grammar, start_symbol: str, genes: GeneList) -> LayerSpec:
    d = decode(grammar, start_symbol, genes)
    kind = d.attrs.get("layer", [None])[0]
    if kind == "dense":
        return LayerSpec("dense", units=int(d.attrs["units"][0]), activation=d.attrs["act"][0])
    if kind == "dropout":
        return LayerSpec("dropout", rate=float(d.attrs["rate"][0]))
    raise InvalidGenotypeError(
        f"<{start_symbol}> derivation must tag a known layer:<kind>, got {kind!r}"
    )


def module_layer_specs(module: ModuleGene, grammar: Grammar) -> list[LayerSpec]:
    """Decode one module's layer genes into concrete layer specs."""
    return [_decode_layer(grammar, module.start_symbol, g) for g in module.layer_genes]


def count_hidden_layers(ind: Individual, grammar: Grammar) -> int:
    """Number of trainable (dense) hidden layers across all modules."""
    return sum(
        1
        for module in ind.modules
        for genes in module.layer_genes
        if _decode_layer(grammar, module.start_symbol, genes).kind == "dense"
    )


def clamp_middle_point(ind: Individual, grammar: Grammar) -> Individual:
    """Force ``middle_point`` into ``[0, hidden - 2]``; no-op when in range."""
    hidden = count_hidden_layers(ind, grammar)
    hi = hidden - MIN_HIDDEN_LAYERS
    if hi < 0:
        raise InvalidGenotypeError(
            f"cannot place a split point with {hidden} hidden layers (need >= {MIN_HIDDEN_LAYERS})"
        )
    clamped = min(max(0, ind.macro.middle_point), hi)
    if clamped == ind.macro.middle_point:
        return ind
    out = ind.copy()
    out.macro.middle_point = clamped
    out.evaluation = ind.evaluation
    return out


def init_individual(
    grammar: Grammar,
    config: GenomeConfig,
    rng: np.random.Generator,
    id: int = 0,
    train_budget: float = 1.0,
) -> Individual:
    """Draw a fresh individual with a valid split point.

    Layer counts come from each module's ``init_layers`` range; the draw
    repeats until the individual carries at least two dense layers, which
    a dropout-heavy grammar may miss on a single attempt.
    """
    config.validate()
    for _ in range(_INIT_TRIES):
        modules = []
        for spec in config.modules:
            lo, hi = spec.init_layers
            n_layers = int(rng.integers(lo, hi + 1))
            genes = [random_derivation(grammar, spec.start_symbol, rng) for _ in range(n_layers)]
            modules.append(ModuleGene(spec.start_symbol, genes, spec.min_layers, spec.max_layers))
        ind = Individual(modules, MacroGenes({}, 0), id, float(train_budget))
        hidden = count_hidden_layers(ind, grammar)
        if hidden < MIN_HIDDEN_LAYERS:
            continue
        bound = bind_dynamic_bound(grammar, hidden - MIN_HIDDEN_LAYERS)
        macro = {s: random_derivation(bound, s, rng) for s in config.macro_symbols}
        mp_genes = random_derivation(bound, config.middle_point_symbol, rng)
        mp = decode(bound, config.middle_point_symbol, mp_genes).attrs[config.middle_point_symbol][0]
        ind.macro = MacroGenes(macro, int(mp))
        return ind
    raise ConfigError(
        f"could not draw {MIN_HIDDEN_LAYERS} dense layers in {_INIT_TRIES} attempts; "
        "check that the grammar can produce dense layers"
    )


def to_phenotype(ind: Individual, grammar: Grammar) -> PhenotypeSpec:
    """Unravel the genotype into a concrete layer stack plus hyperparameters.

    Pure function; raises :class:`InvalidGenotypeError` when the individual
    violates its invariants instead of silently repairing it.
    """
    layers: list[LayerSpec] = []
    dense = 0
    for module in ind.modules:
        if not module.min_layers <= len(module.layer_genes) <= module.max_layers:
            raise InvalidGenotypeError(
                f"module <{module.start_symbol}> has {len(module.layer_genes)} layers, "
                f"outside [{module.min_layers}, {module.max_layers}]"
            )
        for genes in module.layer_genes:
            layer = _decode_layer(grammar, module.start_symbol, genes)
            layers.append(layer)
            dense += layer.kind == "dense"
    if dense < MIN_HIDDEN_LAYERS:
        raise InvalidGenotypeError(f"phenotype has {dense} dense layers, need >= {MIN_HIDDEN_LAYERS}")
    aux = ind.macro.middle_point
    if not 0 <= aux <= dense - MIN_HIDDEN_LAYERS:
        raise InvalidGenotypeError(
            f"middle_point {aux} outside [0, {dense - MIN_HIDDEN_LAYERS}] for {dense} dense layers"
        )

    macro_attrs: dict[str, list] = {}
    for symbol, genes in ind.macro.genes.items():
        macro_attrs.update(decode(grammar, symbol, genes).attrs)
    try:
        lr = float(macro_attrs["lr"][0])
        batch = int(macro_attrs["batch"][0])
    except KeyError as missing:
        raise InvalidGenotypeError(f"macro genes missing attribute {missing}") from None
    return PhenotypeSpec(tuple(layers), aux, lr, batch)


def validate_individual(ind: Individual, grammar: Grammar) -> None:
    """Raise :class:`InvalidGenotypeError` unless every invariant holds."""
    if not ind.modules:
        raise InvalidGenotypeError("individual has no modules")
    if ind.train_budget < 0:
        raise InvalidGenotypeError(f"negative train budget {ind.train_budget}")
    to_phenotype(ind, grammar)
