"""Representation layer: workspace state, evolution network, Bernoulli reading.

The workspace holds ``n`` neuron ensembles.  Each ensemble carries a
pre-activation (unbounded, written by inputs and top-down updates) and a
post-activation in (0, 1) obtained through the logistic function.  The
post-activation vector doubles as the parameter vector of ``n``
independent Bernoulli variables, which gives the state its probabilistic
reading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidStateError
from .rng import generator

# Logistic argument clamp; exp() overflows well past this range anyway.
SIGMOID_CLIP = 500.0


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function with an overflow guard."""
    return 1.0 / (1.0 + np.exp(-np.clip(x, -SIGMOID_CLIP, SIGMOID_CLIP)))


@dataclass
class RepresentationState:
    """Workspace state: pre-activations ``pre`` and post-activations ``post``.

    ``post`` is kept in sync by every mutating operation; constructing a
    state from raw pre-activations activates it immediately.
    """

    pre: np.ndarray
    post: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.pre = np.asarray(self.pre, dtype=np.float64)
        if self.pre.ndim != 1:
            raise ConfigurationError("pre-activations must be a 1-d vector")
        if self.post is None:
            activate(self)
        else:
            self.post = np.asarray(self.post, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.pre.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "RepresentationState":
        return cls(pre=np.zeros(n, dtype=np.float64))

    def copy(self) -> "RepresentationState":
        return RepresentationState(pre=self.pre.copy(), post=self.post.copy())


@dataclass
class EvolutionNetwork:
    """One-hidden-layer network with linear outputs; provides recurrence.

    Hidden activation is the same logistic function as the workspace.
    The forward map consumes post-activations and returns an additive
    pre-activation contribution.
    """

    w_in: np.ndarray    # (h, n)
    b_hidden: np.ndarray  # (h,)
    w_out: np.ndarray   # (n, h)
    b_out: np.ndarray   # (n,)

    def __post_init__(self):
        self.w_in = np.asarray(self.w_in, dtype=np.float64)
        self.b_hidden = np.asarray(self.b_hidden, dtype=np.float64)
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        if self.w_out.shape != (self.n, self.h) or self.b_out.shape != (self.n,):
            raise ConfigurationError("evolution network shapes are inconsistent")

    @property
    def n(self) -> int:
        return self.w_in.shape[1]

    @property
    def h(self) -> int:
        return self.w_in.shape[0]

    @classmethod
    def zeros(cls, n: int, h: int | None = None) -> "EvolutionNetwork":
        h = n if h is None else h
        return cls(np.zeros((h, n)), np.zeros(h), np.zeros((n, h)), np.zeros(n))

    @classmethod
    def init_random(cls, n: int, h: int | None = None,
                    rng: np.random.Generator | None = None) -> "EvolutionNetwork":
        """Uniform weights in [-1/sqrt(n), 1/sqrt(n)], zero biases.

        Keeps initial pre-activation contributions O(1).
        """
        h = n if h is None else h
        rng = rng if rng is not None else generator(0, "init")
        scale = 1.0 / np.sqrt(n)
        return cls(
            w_in=rng.uniform(-scale, scale, size=(h, n)),
            b_hidden=np.zeros(h),
            w_out=rng.uniform(-scale, scale, size=(n, h)),
            b_out=np.zeros(n),
        )

    def forward(self, gamma: np.ndarray) -> np.ndarray:
        hidden = sigmoid(self.w_in @ gamma + self.b_hidden)
        return self.w_out @ hidden + self.b_out


@dataclass
class BernoulliSample:
    """One realization of the workspace's Bernoulli variables."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int64)
        if not np.isin(self.bits, (0, 1)).all():
            raise InvalidStateError("sample bits must be 0 or 1")

    @property
    def n(self) -> int:
        return self.bits.shape[0]


def activate(state: RepresentationState) -> RepresentationState:
    """Recompute post-activations from pre-activations (logistic)."""
    if not np.isfinite(state.pre).all():
        raise InvalidStateError("pre-activations contain non-finite entries")
    state.post = sigmoid(state.pre)
    return state


def evolve(state: RepresentationState, net: EvolutionNetwork) -> RepresentationState:
    """One evolution step with skip connection: pre += net(sig(pre))."""
    if net.n != state.n:
        raise ConfigurationError(
            f"evolution network width {net.n} != state width {state.n}")
    gamma = sigmoid(state.pre)
    state.pre = state.pre + net.forward(gamma)
    return activate(state)


def pcbs_sample(state: RepresentationState, rng_seed: int) -> BernoulliSample:
    """Draw one joint sample of the independent Bernoulli variables.

    Uses ``state.post`` as-is so degenerate parameters (exactly 0 or 1)
    sample deterministically.
    """
    if not np.isfinite(state.post).all() or (state.post < 0).any() or (state.post > 1).any():
        raise InvalidStateError("post-activations are not valid Bernoulli parameters")
    rng = generator(rng_seed, "pcbs")
    bits = (rng.random(state.n) < state.post).astype(np.int64)
    return BernoulliSample(bits=bits)


def pcbs_log_prob(state: RepresentationState, sample: BernoulliSample) -> float:
    """Log probability of a joint sample under the Bernoulli reading.

    Returns -inf when a degenerate parameter (exactly 0 or 1) is
    contradicted by the sample.
    """
    if sample.n != state.n:
        raise ConfigurationError("sample length does not match state width")
    gamma = state.post
    with np.errstate(divide="ignore"):
        on = np.log(gamma)
        off = np.log1p(-gamma)
    terms = np.where(sample.bits == 1, on, off)
    return float(terms.sum())
