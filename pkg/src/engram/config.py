"""Engine and training configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .errors import ConfigurationError


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    steps: int = 200
    rounds_per_event: int = 1
    l1_embedding: float = 0.0
    temperature: float = 1.0
    seed: int = 0
    grad_check: bool = False
    perception_weight: float = 1.0
    episodic_weight: float = 1.0
    semantic_weight: float = 1.0
    reconstruction_weight: float = 1.0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be nonnegative")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.l1_embedding < 0:
            raise ConfigurationError("l1_embedding must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class DomainSpec:
    """One declared softmax domain and its member names."""

    name: str
    kind: str = "concept"  # concept | predicate
    members: list[str] = field(default_factory=list)


@dataclass
class EngineConfig:
    n: int = 24
    d: int = 16
    h: int = 24
    domains: list[DomainSpec] = field(default_factory=list)
    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 1.0
    rounds_scene: int = 2
    rounds_roi: int = 4
    rounds_relation: int = 1
    scene_domains: list[str] = field(default_factory=list)
    roi_domains: list[str] = field(default_factory=list)
    relation_domain: str = "predicates"
    entity_domain: str = "entities"
    episodes_domain: str = "episodes"
    attention: bool = True
    scene_attention_domain: str = "episodes"
    roi_attention_domain: str = "entities"
    generalized_triples: bool = False
    world_noise_sigma: float = 0.0
    seed: int = 0
    reuse_episodic_index: bool = True
    per_roi_episodes: bool = False
    form_episodic: bool = True
    learning: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if min(self.n, self.d, self.h) < 1:
            raise ConfigurationError("n, d and h must all be >= 1")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in [0, 1]")
        names: set[str] = set()
        domain_names: set[str] = set()
        for spec in self.domains:
            if spec.kind not in ("concept", "predicate"):
                raise ConfigurationError(
                    f"domain {spec.name!r} has unknown kind {spec.kind!r}")
            if spec.name in domain_names:
                raise ConfigurationError(f"duplicate domain name {spec.name!r}")
            domain_names.add(spec.name)
            for member in spec.members:
                if member in names:
                    raise ConfigurationError(f"duplicate member name {member!r}")
                names.add(member)
        declared = domain_names | {self.episodes_domain}
        for name in [*self.scene_domains, *self.roi_domains]:
            if name not in declared:
                raise ConfigurationError(f"schedule references unknown domain {name!r}")
        self.learning.validate()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["domains"] = [asdict(spec) for spec in self.domains]
        data["learning"] = self.learning.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        data = dict(data)
        data["domains"] = [DomainSpec(**spec) for spec in data.get("domains", [])]
        data["learning"] = TrainConfig.from_dict(data.get("learning", {}))
        config = cls(**data)
        config.validate()
        return config


def default_config(seed: int = 0) -> EngineConfig:
    """A small fully-wired world: two scenes' worth of concepts and relations."""
    domains = [
        DomainSpec("locations", "concept", ["Park", "Market"]),
        DomainSpec("weathers", "concept", ["Sunny", "Rainy"]),
        DomainSpec("entities", "concept", ["Sparky", "Jack", "Bench1"]),
        DomainSpec("classes", "concept", ["Dog", "Person", "Bench", "Mammal"]),
        DomainSpec("colors", "concept", ["Black", "White"]),
        DomainSpec("moods", "concept", ["Happy", "Calm"]),
        DomainSpec("predicates", "predicate", ["looksAt", "sitOn"]),
    ]
    return EngineConfig(
        domains=domains,
        scene_domains=["locations", "weathers"],
        roi_domains=["entities", "classes", "colors", "moods"],
        seed=seed,
    )
