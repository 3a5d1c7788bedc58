"""Stable invariant model architectures.

All three variants share the shape ``z = nu(U_hat @ V_hat @ lift(x))``:

* single-tier: ``lift = mu``          (an MLP encoder)
* two-tier:    ``lift = psi o mu``    (random Fourier features on top of mu)
* RFF-only:    ``lift = psi``         (Fourier features of the raw input)

``U_hat`` (N x K) and ``V_hat`` (K x N) are free trainable matrices; ``nu`` is
a plain ReLU MLP standing in for the inverse of the lift.  Batches are rows.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BadConfigError, DimensionMismatchError, ShapeMismatchError, VariantMismatchError

VARIANTS = ("single", "two", "rff")


# ---------------------------------------------------------------------------
# random Fourier features


@dataclass
class RffMap:
    """``psi(x) = sqrt(2/M) (sin w_1.x, cos w_1.x, ..., sin w_{M/2}.x, cos w_{M/2}.x)``.

    ``omega`` has shape (M/2, input_dim); rows are standard normals divided by
    the bandwidth, so ``psi(x).psi(y)`` approximates
    ``exp(-|x - y|^2 / (2 b^2))``.
    """

    omega: np.ndarray
    bandwidth: float
    seed: int | None = None
    # last constant input and its features; reused while the input is unchanged
    _cache: tuple | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def M(self) -> int:
        return 2 * self.omega.shape[0]

    @property
    def input_dim(self) -> int:
        return self.omega.shape[1]

    @classmethod
    def sample(cls, M: int, input_dim: int, bandwidth: float, seed: int | None = None, rng=None) -> "RffMap":
        if M <= 0 or M % 2:
            raise BadConfigError(f"RFF dimension must be a positive even number, got {M}")
        if bandwidth <= 0:
            raise BadConfigError("bandwidth must be positive")
        rng = np.random.default_rng(seed) if rng is None else rng
        omega = rng.standard_normal((M // 2, input_dim)) / bandwidth
        return cls(omega, float(bandwidth), seed)


def rff_features(x, rmap: RffMap) -> np.ndarray:
    """Interleaved sin/cos features of a single vector ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != rmap.input_dim:
        raise DimensionMismatchError(f"x has length {x.shape[0]}, map expects {rmap.input_dim}")
    proj = rmap.omega @ x
    out = np.empty(rmap.M)
    out[0::2] = np.sin(proj)
    out[1::2] = np.cos(proj)
    return out / math.sqrt(rmap.M / 2)


def rff_embed(x, rmap: RffMap) -> Tensor:
    """Batched, differentiable version of :func:`rff_features`."""
    x = ad.as_tensor(x)
    if x.shape[1] != rmap.input_dim:
        raise ShapeMismatchError(f"input has {x.shape[1]} features, map expects {rmap.input_dim}")
    if not x.requires_grad:
        hit = rmap._cache
        if hit is not None and hit[0].shape == x.shape and np.array_equal(hit[0], x.data):
            return Tensor(hit[1])
    proj = ad.matmul(x, Tensor(rmap.omega.T))
    out = ad.sincos_interleaved(proj, 1.0 / math.sqrt(rmap.M / 2))
    if not x.requires_grad:
        rmap._cache = (x.data.copy(), out.data)
    return out


# ---------------------------------------------------------------------------
# MLP


@dataclass
class Mlp:
    """Linear layers with ReLU in between (none after the last).

    Weights are stored input-major, shape (fan_in, fan_out), so a layer is
    ``x @ W + b``.
    """

    weights: list[Tensor]
    biases: list[Tensor]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def init(cls, dims, rng) -> "Mlp":
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            ws.append(Tensor(_uniform(rng, (fan_in, fan_out), fan_in), requires_grad=True))
            bs.append(Tensor(np.zeros(fan_out), requires_grad=True))
        return cls(ws, bs)

    def __call__(self, x) -> Tensor:
        h = ad.as_tensor(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            if i < last:
                h = ad.relu(h)
        return h

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def pre_activations(self, x) -> list[np.ndarray]:
        """Hidden pre-ReLU values, used to keep finite differences off kinks."""
        h = np.asarray(x, dtype=np.float64)
        pre = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w.data + b.data
            pre.append(z)
            h = np.maximum(z, 0.0)
        return pre


def _uniform(rng, shape, fan_in) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# configuration and model


@dataclass
class ModelConfig:
    """Dimensions of a SIM.

    ``lift_dim`` is N (output of mu), ``rff_dim`` is M.  ``rank`` is K for the
    bottleneck and defaults to half the dimension it acts on.  ``hidden_dim``
    is d, the output width of nu, and defaults to ``nu_hidden``.
    """

    variant: str = "single"
    input_dim: int = 2
    output_dim: int = 3
    lift_dim: int | None = None
    rff_dim: int | None = None
    rank: int | None = None
    mu_hidden: int = 64
    nu_hidden: int = 64
    hidden_dim: int | None = None
    bandwidth: float = 1.0

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise BadConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant in ("single", "two") and not self.lift_dim:
            raise BadConfigError("lift_dim (N) is required for single- and two-tier models")
        if self.variant in ("two", "rff"):
            if not self.rff_dim or self.rff_dim % 2:
                raise BadConfigError("rff_dim (M) must be a positive even number")
            if self.bandwidth <= 0:
                raise BadConfigError("bandwidth must be positive")
        for name in ("input_dim", "output_dim", "mu_hidden", "nu_hidden"):
            if getattr(self, name) <= 0:
                raise BadConfigError(f"{name} must be positive")
        for name in ("lift_dim", "rff_dim", "rank", "hidden_dim"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise BadConfigError(f"{name} must be positive")
        return self

    @property
    def bottleneck_dim(self) -> int:
        return self.lift_dim if self.variant == "single" else self.rff_dim

    @property
    def K(self) -> int:
        return self.rank if self.rank is not None else max(1, self.bottleneck_dim // 2)

    @property
    def d(self) -> int:
        return self.hidden_dim if self.hidden_dim is not None else self.nu_hidden


@dataclass
class SimModel:
    config: ModelConfig
    U_hat: Tensor
    V_hat: Tensor
    nu: Mlp
    head_W: Tensor
    head_b: Tensor
    mu: Mlp | None = None
    rff: RffMap | None = None
    seed: int | None = None

    @property
    def variant(self) -> str:
        return self.config.variant

    def parameters(self) -> list[Tensor]:
        params = self.mu.parameters() if self.mu is not None else []
        params += [self.V_hat, self.U_hat]
        params += self.nu.parameters()
        params += [self.head_W, self.head_b]
        return params

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        def mlp(m):
            return None if m is None else {
                "weights": [w.data.tolist() for w in m.weights],
                "biases": [b.data.tolist() for b in m.biases],
            }

        return {
            "variant": self.variant,
            "config": asdict(self.config),
            "seed": self.seed,
            "bandwidth": self.rff.bandwidth if self.rff is not None else None,
            "omega": self.rff.omega.tolist() if self.rff is not None else None,
            "mu": mlp(self.mu),
            "U_hat": self.U_hat.data.tolist(),
            "V_hat": self.V_hat.data.tolist(),
            "nu": mlp(self.nu),
            "head_W": self.head_W.data.tolist(),
            "head_b": self.head_b.data.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "SimModel":
        cfg = ModelConfig(**d["config"]).validate()

        def mlp(m):
            if m is None:
                return None
            return Mlp([Tensor(w, requires_grad=True) for w in m["weights"]],
                       [Tensor(b, requires_grad=True) for b in m["biases"]])

        def mat(v, shape):
            return Tensor(np.array(v, dtype=np.float64).reshape(shape), requires_grad=True)

        K, B = cfg.K, cfg.bottleneck_dim
        rff = None
        if d.get("omega") is not None:
            omega = np.array(d["omega"], dtype=np.float64).reshape(cfg.rff_dim // 2, -1)
            rff = RffMap(omega, d["bandwidth"], d.get("seed"))
        return cls(
            config=cfg,
            U_hat=mat(d["U_hat"], (B, K)),
            V_hat=mat(d["V_hat"], (K, B)),
            nu=mlp(d["nu"]),
            head_W=mat(d["head_W"], (cfg.d, cfg.output_dim)),
            head_b=mat(d["head_b"], (cfg.output_dim,)),
            mu=mlp(d.get("mu")),
            rff=rff,
            seed=d.get("seed"),
        )

    @classmethod
    def load(cls, path) -> "SimModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_model(cfg: ModelConfig, seed: int) -> SimModel:
    """Fresh model; every parameter is a deterministic function of ``seed``.

    Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero, RFF frequencies
    standard normal over the bandwidth.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    mu = rff = None
    if cfg.variant in ("single", "two"):
        mu = Mlp.init([cfg.input_dim, cfg.mu_hidden, cfg.mu_hidden, cfg.lift_dim], rng)
    if cfg.variant == "two":
        rff = RffMap.sample(cfg.rff_dim, cfg.lift_dim, cfg.bandwidth, seed, rng=rng)
    elif cfg.variant == "rff":
        rff = RffMap.sample(cfg.rff_dim, cfg.input_dim, cfg.bandwidth, seed, rng=rng)
    B, K = cfg.bottleneck_dim, cfg.K
    V_hat = Tensor(_uniform(rng, (K, B), B), requires_grad=True)
    U_hat = Tensor(_uniform(rng, (B, K), K), requires_grad=True)
    nu = Mlp.init([B, cfg.nu_hidden, cfg.nu_hidden, cfg.d], rng)
    head_W = Tensor(_uniform(rng, (cfg.d, cfg.output_dim), cfg.d), requires_grad=True)
    head_b = Tensor(np.zeros(cfg.output_dim), requires_grad=True)
    return SimModel(cfg, U_hat, V_hat, nu, head_W, head_b, mu=mu, rff=rff, seed=seed)


# ---------------------------------------------------------------------------
# forward passes


def _batch(x, model: SimModel) -> Tensor:
    t = ad.as_tensor(x)
    if t.data.ndim == 1:
        t = Tensor(t.data[None, :])
    if t.data.ndim != 2 or t.shape[1] != model.config.input_dim:
        raise ShapeMismatchError(f"input of shape {t.shape}, model expects (batch, {model.config.input_dim})")
    return t


def _bottleneck(h: Tensor, model: SimModel) -> Tensor:
    # rows are samples: (U V h^T)^T = h V^T U^T
    return ad.matmul(ad.matmul(h, ad.transpose(model.V_hat)), ad.transpose(model.U_hat))


def _require(model: SimModel, variant: str) -> None:
    if model.variant != variant:
        raise VariantMismatchError(f"model is {model.variant!r}, expected {variant!r}")


def single_tier_forward(x, model: SimModel) -> Tensor:
    """``nu(U V mu(x))``."""
    _require(model, "single")
    return model.nu(_bottleneck(model.mu(_batch(x, model)), model))


def two_tier_forward(x, model: SimModel) -> Tensor:
    """``nu(U' V' psi(mu(x)))``."""
    _require(model, "two")
    return model.nu(_bottleneck(rff_embed(model.mu(_batch(x, model)), model.rff), model))


def rff_only_forward(x, model: SimModel) -> Tensor:
    """``nu(U V psi(x))``."""
    _require(model, "rff")
    return model.nu(_bottleneck(rff_embed(_batch(x, model), model.rff), model))


_FORWARD = {"single": single_tier_forward, "two": two_tier_forward, "rff": rff_only_forward}


def hidden(x, model: SimModel) -> Tensor:
    return _FORWARD[model.variant](x, model)


def head_apply(z, model: SimModel, task: str = "regression"):
    """Linear output head.

    Regression returns the raw linear output (no squashing).  Classification
    returns softmax probabilities as a plain array; train on the logits with
    :func:`stablesim.autodiff.softmax_cross_entropy` instead.
    """
    z = ad.as_tensor(z)
    if z.data.ndim != 2 or z.shape[1] != model.head_W.shape[0]:
        raise ShapeMismatchError(f"hidden batch {z.shape} vs head input {model.head_W.shape[0]}")
    out = ad.add(ad.matmul(z, model.head_W), model.head_b)
    if task == "classification":
        return ad.softmax(out.data)
    if task != "regression":
        raise ValueError(f"unknown task {task!r}")
    return out


def _lift(x: Tensor, model: SimModel) -> Tensor:
    if model.variant == "single":
        return model.mu(x)
    if model.variant == "two":
        return rff_embed(model.mu(x), model.rff)
    return rff_embed(x, model.rff)


def forward(x, model: SimModel) -> Tensor:
    """Hidden state through the linear head (regression output / logits).

    Computes ``head_apply(hidden(x, model))`` but folds the bottleneck into
    the first layer of nu, and the last layer of nu into the head, so each
    linear run is multiplied in its cheapest order.
    """
    h = _lift(_batch(x, model), model)
    nu = model.nu
    last = len(nu.weights) - 1
    factors = [ad.transpose(model.V_hat), ad.transpose(model.U_hat)]
    for i, (w, b) in enumerate(zip(nu.weights, nu.biases)):
        factors.append(w)
        if i == last:
            factors.append(model.head_W)
            b = ad.add(ad.matmul(b, model.head_W), model.head_b)
        h = ad.add(ad.linear_chain(h, *factors), b)
        if i < last:
            h = ad.relu(h)
        factors = []
    return h


def predict(x, model: SimModel) -> np.ndarray:
    """Forward pass without recording a graph."""
    return forward(np.asarray(x, dtype=np.float64), model).data
