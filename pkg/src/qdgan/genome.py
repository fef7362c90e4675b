"""Genotype representation, mutation, genome distance and phenotype mapping.

A genome is an ordered tuple of layer genes. Generators may hold ``Linear``
and ``Deconv2d`` genes, discriminators ``Linear`` and ``Conv2d`` genes. The
phenotype appends a fixed output head that is not part of the genome: a
Dense projection to the sample size with Tanh for generators, and a Dense
layer to one unit with Sigmoid for discriminators.

Text form (one genome per line)::

    <role>;<kind>:<activation>:<width>;<kind>:<activation>:<width>...

where ``role`` is ``generator`` or ``discriminator``, e.g.
``discriminator;Conv2d:LeakyReLU:32;Linear:ReLU:64``.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigurationError, InfeasiblePhenotypeError, UsageError
from .nn import ACTIVATIONS, Layer, Network, init_params

GENERATOR = "generator"
DISCRIMINATOR = "discriminator"
ROLES = (GENERATOR, DISCRIMINATOR)

GENE_KINDS = ("Linear", "Conv2d", "Deconv2d")
LEGAL_KINDS = {GENERATOR: ("Linear", "Deconv2d"), DISCRIMINATOR: ("Linear", "Conv2d")}

HEAD_TAG = "head"


@dataclass(frozen=True)
class Gene:
    uid: int
    kind: str
    activation: str
    width: int

    def signature(self):
        return (self.kind, self.activation, self.width)


@dataclass(frozen=True)
class Genome:
    role: str
    genes: tuple = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown role {self.role!r}")
        object.__setattr__(self, "genes", tuple(self.genes))
        for gene in self.genes:
            if gene.kind not in LEGAL_KINDS[self.role]:
                raise ConfigurationError(f"{gene.kind} gene is not legal in a {self.role}")
            if gene.activation not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {gene.activation!r}")

    def __len__(self):
        return len(self.genes)

    def signature(self):
        return tuple(g.signature() for g in self.genes)

    def same_architecture(self, other):
        return self.role == other.role and self.signature() == other.signature()

    def to_text(self):
        return ";".join([self.role] + [f"{g.kind}:{g.activation}:{g.width}" for g in self.genes])

    @classmethod
    def from_text(cls, text, next_uid=None):
        next_uid = next_uid if next_uid is not None else itertools.count()
        role, *parts = text.strip().split(";")
        genes = []
        for part in filter(None, parts):
            try:
                kind, activation, width = part.split(":")
                genes.append(Gene(next(next_uid), kind, activation, int(width)))
            except ValueError as exc:
                raise ConfigurationError(f"malformed gene {part!r}") from exc
        return cls(role, genes)

    def __str__(self):
        return self.to_text()


@dataclass(frozen=True)
class MutationRates:
    add: float = 0.3
    remove: float = 0.1
    change: float = 0.1


@dataclass(frozen=True)
class IOShape:
    """Per-sample data shape (discriminator input, generator output) and latent size."""

    sample_shape: tuple
    latent_dim: int


def random_gene(role, rng, width_range, next_uid):
    kinds = LEGAL_KINDS[role]
    kind = kinds[rng.integers(len(kinds))]
    activation = ACTIVATIONS[rng.integers(len(ACTIVATIONS))]
    width = int(rng.integers(width_range[0], width_range[1] + 1))
    return Gene(next(next_uid), kind, activation, width)


def random_genome(role, rng, width_range, next_uid, length=1):
    return Genome(role, [random_gene(role, rng, width_range, next_uid) for _ in range(length)])


def mutate(genome, rng, rates=MutationRates(), *, width_range=(32, 256), genome_limit=4,
           next_uid, trace=None):
    """Return a mutated copy of ``genome``.

    Add, remove and change are rolled independently. Sub-mutations that would
    push the length outside ``[1, genome_limit]`` are skipped. Structural
    edits (new genes, width changes) get fresh uids from ``next_uid``; an
    activation change keeps the uid so the layer weights can still be
    inherited. The names of the operations that fired are appended to
    ``trace`` when given (skipped ones included, as ``"add-skipped"`` etc.).
    """
    do_add, do_remove, do_change = rng.random(3) < (rates.add, rates.remove, rates.change)
    genes = list(genome.genes)
    if do_add:
        if len(genes) < genome_limit:
            pos = int(rng.integers(len(genes) + 1))
            genes.insert(pos, random_gene(genome.role, rng, width_range, next_uid))
            _note(trace, "add")
        else:
            _note(trace, "add-skipped")
    if do_remove:
        if len(genes) > 1:
            del genes[int(rng.integers(len(genes)))]
            _note(trace, "remove")
        else:
            _note(trace, "remove-skipped")
    if do_change:
        i = int(rng.integers(len(genes)))
        gene = genes[i]
        if rng.random() < 0.5:
            genes[i] = replace(gene, activation=ACTIVATIONS[rng.integers(len(ACTIVATIONS))])
        else:
            width = int(rng.integers(width_range[0], width_range[1] + 1))
            genes[i] = Gene(next(next_uid), gene.kind, gene.activation, width)
        _note(trace, "change")
    if not (do_add or do_remove or do_change):
        return genome
    return Genome(genome.role, genes)


def _note(trace, op):
    if trace is not None:
        trace.append(op)


def substitution_cost(a, b):
    if a.kind != b.kind:
        return 1.0
    if a.activation != b.activation:
        return 0.5
    if a.width != b.width:
        return 0.25
    return 0.0


def genome_distance(a, b):
    """Edit distance over gene signatures normalised by the longer genome.

    Insert/delete cost 1; substitution costs 1 (kind differs), 0.5 (activation
    differs), 0.25 (only width differs). Result lies in ``[0, 1]``.
    """
    if a.role != b.role:
        raise UsageError(f"cannot compare a {a.role} with a {b.role}")
    ga, gb = a.genes, b.genes
    longest = max(len(ga), len(gb))
    if longest == 0:
        return 0.0
    prev = [float(j) for j in range(len(gb) + 1)]
    for i in range(1, len(ga) + 1):
        cur = [float(i)] + [0.0] * len(gb)
        for j in range(1, len(gb) + 1):
            cur[j] = min(prev[j] + 1.0, cur[j - 1] + 1.0,
                         prev[j - 1] + substitution_cost(ga[i - 1], gb[j - 1]))
        prev = cur
    return prev[-1] / longest


def _layer_for_gene(gene, in_shape, rng, adam_options):
    if gene.kind == "Linear":
        hyper = {"in_features": int(np.prod(in_shape)), "out_features": gene.width}
        params = init_params("Dense", hyper, rng, gene.activation)
    else:
        if len(in_shape) == 3 and min(in_shape[1:]) < 1:
            raise InfeasiblePhenotypeError(f"spatial size collapsed to {in_shape}")
        hyper = {"in_channels": int(in_shape[0]), "out_channels": gene.width}
        params = init_params(gene.kind, hyper, rng, gene.activation)
    layer = Layer(params, in_shape, tag=gene.uid, adam_options=adam_options)
    if len(layer.out_shape) == 3 and min(layer.out_shape[1:]) < 1:
        raise InfeasiblePhenotypeError(
            f"gene {gene.kind}:{gene.width} collapses spatial size below 1x1 ({layer.out_shape})")
    return layer


def build_phenotype(genome, io_shape, rng, adam_options=None):
    """Map ``genome`` onto a freshly initialised :class:`~qdgan.nn.Network`.

    ``adam_options`` (e.g. ``{"beta1": 0.5}``) sets the optimizer constants
    of every layer.
    """
    sample_shape = tuple(io_shape.sample_shape)
    if genome.role == GENERATOR:
        shape = (io_shape.latent_dim,)
    else:
        shape = sample_shape
    input_shape = shape
    layers = []
    for gene in genome.genes:
        layer = _layer_for_gene(gene, shape, rng, adam_options)
        layers.append(layer)
        shape = layer.out_shape
    if genome.role == GENERATOR:
        head_out, head_act = int(np.prod(sample_shape)), "Tanh"
    else:
        head_out, head_act = 1, "Sigmoid"
    head = init_params("Dense", {"in_features": int(np.prod(shape)), "out_features": head_out},
                       rng, head_act)
    layers.append(Layer(head, shape, tag=HEAD_TAG, adam_options=adam_options))
    return Network(layers, input_shape)


@dataclass
class Individual:
    """A genome, its trained phenotype and evaluation bookkeeping."""

    uid: int
    genome: Genome
    network: Network
    io_shape: IOShape
    fitness: float = float("inf")
    novelty: float = 0.0
    competition: float = 0.0
    trained_samples: int = 0
    age: int = 0
    failed: bool = False
    shared_fitness: float = float("inf")
    species: int = -1
    extra: dict = field(default_factory=dict)

    @property
    def role(self):
        return self.genome.role

    def sample(self, n_samples, rng):
        """Draw ``n_samples`` latent vectors and return generated samples."""
        if self.role != GENERATOR:
            raise UsageError("only generators can sample")
        z = rng.standard_normal((n_samples, self.io_shape.latent_dim))
        out = self.network.forward(z)
        self.network.clear_cache()
        return out.reshape((n_samples,) + tuple(self.io_shape.sample_shape))

    def score(self, x):
        """Discriminator probability that each sample in ``x`` is real."""
        if self.role != DISCRIMINATOR:
            raise UsageError("only discriminators can score samples")
        out = self.network.forward(x)
        self.network.clear_cache()
        return out.reshape(-1)


def transfer_weights(parent, child_genome, io_shape, rng, adam_options=None):
    """Build the child phenotype, inheriting parent layers where possible.

    A child layer inherits weights, bias and Adam state from the parent layer
    with the same gene uid (or the output head) when kind, input shape and
    parameter shapes match exactly. Every other layer keeps its fresh
    initialisation and a zeroed Adam state.
    """
    child = build_phenotype(child_genome, io_shape, rng, adam_options)
    parent_layers = {layer.tag: layer for layer in parent.network.layers}
    for layer in child.layers:
        src = parent_layers.get(layer.tag)
        if src is None or src.kind != layer.kind or src.in_shape != layer.in_shape:
            continue
        if (src.params.weights.shape != layer.params.weights.shape
                or src.params.bias.shape != layer.params.bias.shape):
            continue
        layer.params.weights = src.params.weights.copy()
        layer.params.bias = src.params.bias.copy()
        layer.adam = copy.deepcopy(src.adam)
    return child
