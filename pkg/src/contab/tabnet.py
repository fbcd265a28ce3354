"""Attentive tabular encoder with sequential sparse feature selection.

Each decision step scores features from the previous step's attention half,
scales the logits by a multiplicative prior that discourages reusing already
selected features, projects onto the simplex with sparsemax, and pushes the
masked input through shared then step-specific GLU stacks. ReLU'd decision
halves accumulate into the latent; a two-layer projection head produces the
contrastive embedding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from contab.tensor import (
    Tape,
    Tensor,
    add,
    affine,
    batch_norm,
    glu,
    mul,
    relu,
    slice_cols,
    sparsemax,
)


@dataclass
class TabNetConfig:
    input_dim: int
    n_steps: int = 3
    n_d: int = 64
    n_a: int = 64
    relaxation: float = 1.3
    n_shared: int = 2
    n_step_specific: int = 2
    latent_dim: int = 64
    projection_dim: int = 64

    def __post_init__(self):
        for name in ("input_dim", "n_steps", "n_d", "n_a", "n_shared",
                     "n_step_specific", "latent_dim", "projection_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TabNetConfig.{name} must be positive")
        if self.latent_dim != self.n_d:
            raise ValueError("latent_dim must equal the decision width n_d")
        if self.relaxation <= 0:
            raise ValueError("relaxation must be positive")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "n_steps": self.n_steps,
            "n_d": self.n_d,
            "n_a": self.n_a,
            "relaxation": self.relaxation,
            "n_shared": self.n_shared,
            "n_step_specific": self.n_step_specific,
            "latent_dim": self.latent_dim,
            "projection_dim": self.projection_dim,
        }


@dataclass
class StepTrace:
    """Per-step mask/decision/prior values captured during a forward pass."""

    masks: list[np.ndarray] = field(default_factory=list)
    decisions: list[np.ndarray] = field(default_factory=list)
    priors: list[np.ndarray] = field(default_factory=list)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class TabNetEncoder:
    """One view's encoder; parameters live in a flat name -> array mapping."""

    def __init__(self, config: TabNetConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._init_params(rng)

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        width = cfg.n_d + cfg.n_a
        p, b = self.params, self.buffers

        p["input_bn.gamma"] = np.ones((1, cfg.input_dim))
        p["input_bn.beta"] = np.zeros((1, cfg.input_dim))
        b["input_bn.mean"] = np.zeros(cfg.input_dim)
        b["input_bn.var"] = np.ones(cfg.input_dim)

        fan_in = cfg.input_dim
        for i in range(cfg.n_shared):
            p[f"shared.{i}.W"] = _glorot(rng, fan_in, 2 * width)
            p[f"shared.{i}.b"] = np.zeros((1, 2 * width))
            fan_in = width

        for t in range(cfg.n_steps):
            p[f"step.{t}.att.W"] = _glorot(rng, cfg.n_a, cfg.input_dim)
            p[f"step.{t}.att.b"] = np.zeros((1, cfg.input_dim))
            p[f"step.{t}.att_bn.gamma"] = np.ones((1, cfg.input_dim))
            p[f"step.{t}.att_bn.beta"] = np.zeros((1, cfg.input_dim))
            b[f"step.{t}.att_bn.mean"] = np.zeros(cfg.input_dim)
            b[f"step.{t}.att_bn.var"] = np.ones(cfg.input_dim)
            for i in range(cfg.n_step_specific):
                p[f"step.{t}.glu.{i}.W"] = _glorot(rng, width, 2 * width)
                p[f"step.{t}.glu.{i}.b"] = np.zeros((1, 2 * width))

        p["final.W"] = _glorot(rng, cfg.n_d, cfg.latent_dim)
        p["final.b"] = np.zeros((1, cfg.latent_dim))
        p["proj.0.W"] = _glorot(rng, cfg.latent_dim, cfg.projection_dim)
        p["proj.0.b"] = np.zeros((1, cfg.projection_dim))
        p["proj.1.W"] = _glorot(rng, cfg.projection_dim, cfg.projection_dim)
        p["proj.1.b"] = np.zeros((1, cfg.projection_dim))

    def _shared_stack(self, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
        h = x
        for i in range(self.config.n_shared):
            h = glu(h, params[f"shared.{i}.W"], params[f"shared.{i}.b"])
        return h

    def _step_stack(self, h: Tensor, params: Mapping[str, Tensor], t: int) -> Tensor:
        for i in range(self.config.n_step_specific):
            h = glu(h, params[f"step.{t}.glu.{i}.W"], params[f"step.{t}.glu.{i}.b"])
        return h

    def forward(
        self,
        x: np.ndarray | Tensor,
        params: Mapping[str, Tensor],
        mode: str = "eval",
    ) -> tuple[Tensor, Tensor, StepTrace]:
        """Encode a batch; params and x may be tape leaves or constants."""
        cfg = self.config
        x_t = x if isinstance(x, Tensor) else Tensor(x)
        if x_t.cols != cfg.input_dim:
            raise ValueError(f"input has {x_t.cols} columns, expected {cfg.input_dim}")
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        train = mode == "train"

        xb = batch_norm(
            x_t,
            params["input_bn.gamma"],
            params["input_bn.beta"],
            self.buffers["input_bn.mean"],
            self.buffers["input_bn.var"],
            train=train,
        )

        # first-step attention input: attention half of the shared transform
        # of the full, unmasked features
        h0 = self._shared_stack(xb, params)
        a_prev = slice_cols(h0, cfg.n_d, cfg.n_d + cfg.n_a)

        prior = Tensor(np.ones(x_t.shape))
        d_sum: Tensor | None = None
        trace = StepTrace()
        for t in range(cfg.n_steps):
            logits = affine(a_prev, params[f"step.{t}.att.W"], params[f"step.{t}.att.b"])
            logits = batch_norm(
                logits,
                params[f"step.{t}.att_bn.gamma"],
                params[f"step.{t}.att_bn.beta"],
                self.buffers[f"step.{t}.att_bn.mean"],
                self.buffers[f"step.{t}.att_bn.var"],
                train=train,
            )
            mask = sparsemax(mul(logits, prior))
            prior = mul(prior, cfg.relaxation - mask)

            h = self._shared_stack(mul(mask, xb), params)
            h = self._step_stack(h, params, t)
            d_t = relu(slice_cols(h, 0, cfg.n_d))
            a_prev = slice_cols(h, cfg.n_d, cfg.n_d + cfg.n_a)
            d_sum = d_t if d_sum is None else add(d_sum, d_t)

            trace.masks.append(mask.values.copy())
            trace.decisions.append(d_t.values.copy())
            trace.priors.append(prior.values.copy())

        latent = affine(d_sum, params["final.W"], params["final.b"])
        hidden = relu(affine(latent, params["proj.0.W"], params["proj.0.b"]))
        projected = affine(hidden, params["proj.1.W"], params["proj.1.b"])
        return latent, projected, trace

    def encode(self, x: np.ndarray, mode: str = "eval") -> tuple[Tensor, Tensor, StepTrace]:
        """Forward pass with the encoder's own parameters as constants."""
        params = {name: Tensor(arr) for name, arr in self.params.items()}
        return self.forward(x, params, mode=mode)

    def leaf_params(self, tape: Tape) -> dict[str, Tensor]:
        return {name: tape.leaf(arr) for name, arr in self.params.items()}


def feature_importances(trace: StepTrace) -> np.ndarray:
    """Masks aggregated across steps, weighted by each step's decision output.

    Weights are the per-sample sums of the ReLU'd decision halves; the result
    is averaged over the batch and normalized to sum to 1.
    """
    if not trace.masks:
        raise ValueError("trace has no steps")
    total = np.zeros(trace.masks[0].shape[1])
    for mask, decision in zip(trace.masks, trace.decisions):
        eta = decision.sum(axis=1, keepdims=True)      # batch x 1
        total += (eta * mask).sum(axis=0)
    weight = total.sum()
    if weight <= 0.0:
        warnings.warn("all decision contributions are zero; returning uniform importances")
        return np.full(total.shape, 1.0 / total.size)
    return total / weight
