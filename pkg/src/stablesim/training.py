"""Adam, gradient clipping, PSNR and the training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import autodiff as ad
from .dynamics import Dataset
from .errors import BadConfigError, NonFiniteError, ShapeMismatchError
from .models import SimModel, _lift, forward, predict

PSNR_EVERY = 100


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    iterations: int = 2000
    batch_size: int | None = None  # None = full batch
    clip_norm: float | None = None
    seed: int = 0
    loss: str = "mse"

    def validate(self) -> "TrainConfig":
        b1, b2 = self.adam_betas
        if self.learning_rate < 0:
            raise BadConfigError("learning_rate must be non-negative")
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise BadConfigError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise BadConfigError("adam_eps must be positive")
        if self.iterations < 1:
            raise BadConfigError("iterations must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise BadConfigError("batch_size must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise BadConfigError("clip_norm must be positive")
        if self.loss not in ("mse", "cross_entropy"):
            raise BadConfigError(f"unknown loss {self.loss!r}")
        return self


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update.  Returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError("params, grads and state differ in length")
    b1, b2 = cfg.adam_betas
    t = state.t + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(f"parameter {p.shape} vs gradient {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def clip_gradients(grads, max_norm: float):
    """Rescale all gradients together so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total <= max_norm:
        return list(grads)
    s = max_norm / total
    return [g * s for g in grads]


def psnr(pred, target) -> float:
    """PSNR in dB with peak 1; ``pred`` is clamped to [0, 1] first."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    err = float(np.mean((np.clip(pred, 0.0, 1.0) - target) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def format_float(x: float) -> str:
    return "inf" if x == math.inf else repr(float(x))


# ---------------------------------------------------------------------------
# loop


@dataclass
class History:
    losses: list[float] = field(default_factory=list)
    psnr: dict[int, float] = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


class _MetricsWriter:
    def __init__(self, fh: IO[str] | None, with_psnr: bool):
        self.fh = fh
        self.with_psnr = with_psnr
        if fh is not None:
            fh.write("step,loss,psnr\n" if with_psnr else "step,loss\n")

    def row(self, step: int, loss: float, value: float | None):
        if self.fh is None:
            return
        if self.with_psnr:
            cell = "" if value is None else format_float(value)
            self.fh.write(f"{step},{format_float(loss)},{cell}\n")
        else:
            self.fh.write(f"{step},{format_float(loss)}\n")
        if step % PSNR_EVERY == 0:
            self.fh.flush()


def _loss(model: SimModel, x: np.ndarray, y: np.ndarray, kind: str) -> ad.Tensor:
    out = forward(x, model)
    if kind == "mse":
        return ad.mse(out, y)
    return ad.softmax_cross_entropy(out, y)


def train(model: SimModel, data: Dataset, cfg: TrainConfig, eval_data: Dataset | None = None,
          metrics_path=None, log=None):
    """Run ``cfg.iterations`` Adam steps on ``model`` in place.

    The loss of every step is recorded.  For MSE training, PSNR on
    ``eval_data`` (the training data if omitted) is recorded after every
    100th update and after the last one.  Returns ``(model, history)``.
    A non-finite loss raises :class:`NonFiniteError`; ``model`` is rolled back
    to the parameters of the last step whose loss was finite.
    """
    cfg.validate()
    if len(data) == 0:
        raise BadConfigError("training data is empty")
    params = model.parameters()
    state = AdamState.zeros_like([p.data for p in params])
    history = History()
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    targets = data.targets
    if cfg.loss == "cross_entropy":
        targets = targets.reshape(-1).astype(np.int64)
    regression = cfg.loss == "mse"
    evals = eval_data if eval_data is not None else data

    order = np.arange(n)
    cursor = n
    previous = [p.data for p in params]
    fh = open(metrics_path, "w", encoding="utf-8", newline="") if metrics_path else None
    writer = _MetricsWriter(fh, regression)
    try:
        for step in range(1, cfg.iterations + 1):
            if cfg.batch_size is None or cfg.batch_size >= n:
                xb, yb = data.inputs, targets
            else:
                if cursor + cfg.batch_size > n:
                    order = rng.permutation(n)
                    cursor = 0
                idx = order[cursor:cursor + cfg.batch_size]
                cursor += cfg.batch_size
                xb, yb = data.inputs[idx], targets[idx]

            with ad.Tape():
                loss = _loss(model, xb, yb, cfg.loss)
            value = float(loss.data)
            if not math.isfinite(value):
                writer.row(step, value, None)
                for p, arr in zip(params, previous):
                    p.data = arr
                raise NonFiniteError(step, model, history)
            grad_map = ad.backward(loss)
            grads = [grad_map.get(p, np.zeros_like(p.data)) for p in params]
            if cfg.clip_norm is not None:
                grads = clip_gradients(grads, cfg.clip_norm)
            previous = [p.data for p in params]
            new, state = adam_step(previous, grads, state, cfg)
            for p, arr in zip(params, new):
                p.data = arr
            history.losses.append(value)

            score = None
            if regression and (step % PSNR_EVERY == 0 or step == cfg.iterations):
                score = psnr(predict(evals.inputs, model), evals.targets)
                history.psnr[step] = score
                if log is not None:
                    log(f"step {step} loss {value:.6g} psnr {score:.3f}")
            writer.row(step, value, score)
    finally:
        if fh is not None:
            fh.close()
    return model, history


# ---------------------------------------------------------------------------
# gradient verification


def _kink_free(model: SimModel, x: np.ndarray, margin: float) -> bool:
    """True when no hidden ReLU pre-activation lies within ``margin`` of zero."""
    pre = []
    if model.mu is not None:
        pre += model.mu.pre_activations(x)
    feat = _lift(ad.Tensor(x), model).data
    pre += model.nu.pre_activations(feat @ model.V_hat.data.T @ model.U_hat.data.T)
    return all(np.min(np.abs(p)) > margin for p in pre)


def sample_kink_free(model: SimModel, n: int, rng, margin: float = 1e-3, tries: int = 1000) -> np.ndarray:
    """``n`` inputs in [-1, 1]^D whose ReLUs all sit at least ``margin`` from their kink."""
    D = model.config.input_dim
    for _ in range(tries):
        x = rng.uniform(-1.0, 1.0, size=(n, D))
        if _kink_free(model, x, margin):
            return x
    raise BadConfigError(f"no kink-free batch of {n} inputs found in {tries} draws")


def check_model_gradients(model: SimModel, x, y, h: float = 1e-5, corrupt: bool = False) -> float:
    """Largest relative backprop-vs-central-difference error over every parameter.

    With ``corrupt`` a small term the tape never sees is added to the loss, so
    the analytic gradient is wrong on purpose (a negative control).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    worst = 0.0
    for theta in model.parameters():
        def f(_t, theta=theta):
            loss = ad.mse(forward(x, model), y)
            if corrupt:
                loss = ad.add(loss, ad.Tensor(1e-3 * np.sum(theta.data ** 2)))
            return loss

        worst = max(worst, ad.grad_check(f, theta, h))
    return worst
