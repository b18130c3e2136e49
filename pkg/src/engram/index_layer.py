"""Symbolic index layer: indices, domains, embeddings, decode/encode.

Each index (concept, predicate, or episodic) is a localized symbol whose
embedding column ties it to the representation layer.  The same column
serves bottom-up decoding (softmax logits over a domain) and top-down
encoding (additive pre-activation update), so the connection weights are
symmetric by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core_state import RepresentationState, activate
from .errors import (ConfigurationError, DomainError, DuplicateNameError,
                     ParameterError, UnknownIndexError)
from .rng import generator


class IndexKind(enum.Enum):
    CONCEPT = "concept"
    PREDICATE = "predicate"
    EPISODIC = "episodic"


@dataclass(frozen=True)
class IndexId:
    """Opaque handle for one symbol. ``id`` doubles as its embedding column."""

    id: int
    kind: IndexKind
    name: str


@dataclass
class Domain:
    """Mutually exclusive label set normalized by one softmax."""

    name: str
    members: list[IndexId] = field(default_factory=list)

    def position(self, index: IndexId) -> int:
        for pos, member in enumerate(self.members):
            if member.id == index.id:
                return pos
        raise UnknownIndexError(f"{index.name!r} is not a member of domain {self.name!r}")

    def columns(self) -> np.ndarray:
        return np.array([m.id for m in self.members], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.members)


class IndexRegistry:
    """All registered indices plus their domain partition.

    An index belongs to at most one domain; domain membership order is
    the decode order (ties in any argmax readout break toward the
    lowest position).
    """

    def __init__(self):
        self.indices: list[IndexId] = []
        self.domains: dict[str, Domain] = {}
        self._by_name: dict[tuple[IndexKind, str], IndexId] = {}
        self._domain_of: dict[int, str] = {}

    def __len__(self) -> int:
        return len(self.indices)

    def create(self, kind: IndexKind, name: str) -> IndexId:
        key = (kind, name)
        if key in self._by_name:
            raise DuplicateNameError(f"{kind.value} index named {name!r} already exists")
        index = IndexId(id=len(self.indices), kind=kind, name=name)
        self.indices.append(index)
        self._by_name[key] = index
        return index

    def get(self, id_: int) -> IndexId:
        if not 0 <= id_ < len(self.indices):
            raise UnknownIndexError(f"no index with id {id_}")
        return self.indices[id_]

    def find(self, kind: IndexKind, name: str) -> IndexId:
        try:
            return self._by_name[(kind, name)]
        except KeyError:
            raise UnknownIndexError(f"no {kind.value} index named {name!r}") from None

    def find_by_name(self, name: str) -> IndexId:
        """Name lookup across kinds; unique names make this unambiguous."""
        hits = [ix for (k, n), ix in self._by_name.items() if n == name]
        if not hits:
            raise UnknownIndexError(f"no index named {name!r}")
        if len(hits) > 1:
            raise UnknownIndexError(f"name {name!r} is ambiguous across kinds")
        return hits[0]

    def ensure_domain(self, name: str) -> Domain:
        if name not in self.domains:
            self.domains[name] = Domain(name=name)
        return self.domains[name]

    def domain(self, name: str) -> Domain:
        try:
            return self.domains[name]
        except KeyError:
            raise DomainError(f"no domain named {name!r}") from None

    def add_to_domain(self, index: IndexId, domain_name: str) -> None:
        current = self._domain_of.get(index.id)
        if current is not None and current != domain_name:
            raise ConfigurationError(
                f"index {index.name!r} already belongs to domain {current!r}")
        dom = self.ensure_domain(domain_name)
        if current is None:
            dom.members.append(index)
            self._domain_of[index.id] = domain_name

    def domain_of(self, index: IndexId) -> str | None:
        return self._domain_of.get(index.id)


class EmbeddingStore:
    """Embedding matrix (one column per index) plus per-index biases.

    Columns grow append-only, in lockstep with the registry; the column
    read by bottom-up logits is the very array added by top-down
    updates.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ConfigurationError("representation dimension must be >= 1")
        self._n = n
        self.a = np.zeros((n, 0), dtype=np.float64)
        self.a0 = np.zeros(0, dtype=np.float64)

    @property
    def n(self) -> int:
        return self._n

    @property
    def count(self) -> int:
        return self.a.shape[1]

    def append_column(self, init: np.ndarray | None = None) -> int:
        col = np.zeros((self._n, 1)) if init is None else \
            np.asarray(init, dtype=np.float64).reshape(self._n, 1).copy()
        self.a = np.hstack([self.a, col])
        self.a0 = np.append(self.a0, 0.0)
        return self.a.shape[1] - 1

    def column(self, index: IndexId) -> np.ndarray:
        self._check(index)
        return self.a[:, index.id]

    def bias(self, index: IndexId) -> float:
        self._check(index)
        return float(self.a0[index.id])

    def _check(self, index: IndexId) -> None:
        if not 0 <= index.id < self.count:
            raise UnknownIndexError(f"index {index.name!r} has no embedding column")


@dataclass
class UpdateParams:
    """Top-down update coefficients and decode temperature."""

    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError("alpha must lie in [0, 1]")
        if self.temperature <= 0.0:
            raise ParameterError("temperature must be positive")


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Stable softmax with temperature (max-subtraction before exp)."""
    if temperature <= 0.0:
        raise ParameterError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def logits(state: RepresentationState, emb: EmbeddingStore, dom: Domain) -> np.ndarray:
    """Bottom-up logits a0_k + a_k . gamma for every domain member, in order."""
    if len(dom) == 0:
        raise DomainError(f"domain {dom.name!r} is empty")
    if emb.n != state.n:
        raise ConfigurationError("embedding store width does not match state")
    cols = dom.columns()
    return emb.a0[cols] + emb.a[:, cols].T @ state.post


def decode_distribution(state: RepresentationState, emb: EmbeddingStore,
                        dom: Domain, temperature: float = 1.0) -> np.ndarray:
    """Softmax label distribution over a domain at the given temperature."""
    return softmax(logits(state, emb, dom), temperature)


def sample_index(state: RepresentationState, emb: EmbeddingStore, dom: Domain,
                 temperature: float = 1.0, rng_seed: int = 0) -> IndexId:
    rng = generator(rng_seed, "decode")
    return sample_index_rng(state, emb, dom, temperature, rng)


def sample_index_rng(state: RepresentationState, emb: EmbeddingStore, dom: Domain,
                     temperature: float, rng: np.random.Generator) -> IndexId:
    """Sample-take-all draw: exactly one member fires."""
    p = decode_distribution(state, emb, dom, temperature)
    pos = int(rng.choice(len(dom), p=p))
    return dom.members[pos]


def topdown_update(state: RepresentationState, emb: EmbeddingStore, k: IndexId,
                   params: UpdateParams | None = None) -> RepresentationState:
    """Top-down encoding of a fired index: pre <- alpha*pre + beta*a_k."""
    params = params or UpdateParams()
    a_k = emb.column(k)
    state.pre = params.alpha * state.pre + params.beta * a_k
    return activate(state)


def multi_sample_update(state: RepresentationState, emb: EmbeddingStore, dom: Domain,
                        rounds: int, params: UpdateParams | None = None,
                        rng_seed: int = 0) -> tuple[RepresentationState, list[IndexId]]:
    """Repeated sample/update rounds; each draw conditions on the previous ones."""
    if rounds < 1:
        raise ParameterError("rounds must be >= 1")
    params = params or UpdateParams()
    rng = generator(rng_seed, "decode")
    sampled: list[IndexId] = []
    for _ in range(rounds):
        k = sample_index_rng(state, emb, dom, params.temperature, rng)
        topdown_update(state, emb, k, params)
        sampled.append(k)
    return state, sampled


def attention_update(state: RepresentationState, emb: EmbeddingStore,
                     dom: Domain) -> RepresentationState:
    """Probability-weighted top-down update over a whole domain.

    The label distribution is computed once from the input state's
    post-activations; the pre-activation then moves by the convex
    combination of the member embeddings.
    """
    p = decode_distribution(state, emb, dom, temperature=1.0)
    cols = dom.columns()
    state.pre = state.pre + emb.a[:, cols] @ p
    return activate(state)


def register_index(registry: IndexRegistry, emb: EmbeddingStore, kind: IndexKind,
                   name: str, init: np.ndarray | None = None,
                   domain: str | None = None) -> IndexId:
    """Create an index and its embedding column in lockstep.

    The registry and the store must already agree on size; the new
    column id equals the new index id.
    """
    if len(registry) != emb.count:
        raise ConfigurationError(
            f"registry ({len(registry)}) and embedding store ({emb.count}) out of sync")
    index = registry.create(kind, name)
    emb.append_column(init)
    if domain is not None:
        registry.add_to_domain(index, domain)
    return index


def input_and_attention(state: RepresentationState, v_features: np.ndarray,
                        encoder, emb: EmbeddingStore,
                        dom: Domain | None) -> RepresentationState:
    """Write an encoded input into the state, then (optionally) attend.

    ``encoder`` is any object with a ``forward(features) -> ndarray``
    map onto the representation layer.  An empty or missing domain
    means "skip attention".
    """
    contribution = encoder.forward(np.asarray(v_features, dtype=np.float64))
    if contribution.shape != state.pre.shape:
        raise ConfigurationError("encoder output width does not match state")
    state.pre = state.pre + contribution
    activate(state)
    if dom is not None and len(dom) > 0:
        attention_update(state, emb, dom)
    return state
