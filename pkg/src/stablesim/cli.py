"""Command-line entry point: ``stablesim {analyze,train,render,simulate,gradcheck}``.

Exit codes: 0 success, 1 failed gradient check, 2 bad input or config,
3 dimension or shape mismatch, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import errors as E
from .dynamics import Dataset
from .imageio import ImageGrid, gather, lattice, load_ppm, save_ppm, split_pixels
from .linalg import read_matrix_csv
from .models import ModelConfig, SimModel, init_model, predict
from .spectra import DEFAULT_EIG_TOL, ConvergenceClass, classify, oscillation_term, simulate_lifted
from .training import TrainConfig, check_model_gradients, format_float, sample_kink_free, train

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_SHAPE, EXIT_NUMERIC = 0, 1, 2, 3, 4

TASKS = ("image_regression", "deq_approx")


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """One training run as read from a JSON document.

    ``image_regression`` reads ``image`` (PPM), trains on the parity train
    split and reports PSNR on the test split.  ``deq_approx`` reads
    ``train_data`` (and optionally ``eval_data``) fixed-point CSVs.
    """

    task: str
    variant: str
    model_out: str
    metrics_out: str
    image: str | None = None
    train_data: str | None = None
    eval_data: str | None = None
    lift_dim: int | None = None
    rff_dim: int | None = None
    rank: int | None = None
    mu_hidden: int = 64
    nu_hidden: int = 64
    hidden_dim: int | None = None
    bandwidth: float = 1.0
    seed: int = 0
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    iterations: int = 2000
    batch_size: int | None = None
    clip_norm: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise E.BadConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise E.BadConfigError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in ("task", "variant", "model_out", "metrics_out") if k not in d]
        if missing:
            raise E.BadConfigError(f"missing config keys: {', '.join(missing)}")
        d = dict(d)
        if "adam_betas" in d:
            betas = d["adam_betas"]
            if not isinstance(betas, (list, tuple)) or len(betas) != 2:
                raise E.BadConfigError("adam_betas must be a pair")
            d["adam_betas"] = tuple(float(b) for b in betas)
        cfg = cls(**d)
        if cfg.task not in TASKS:
            raise E.BadConfigError(f"task must be one of {TASKS}, got {cfg.task!r}")
        if cfg.task == "image_regression" and not cfg.image:
            raise E.BadConfigError("image_regression needs 'image'")
        if cfg.task == "deq_approx" and not cfg.train_data:
            raise E.BadConfigError("deq_approx needs 'train_data'")
        return cfg

    def model_config(self, input_dim: int, output_dim: int) -> ModelConfig:
        return ModelConfig(
            variant=self.variant, input_dim=input_dim, output_dim=output_dim,
            lift_dim=self.lift_dim, rff_dim=self.rff_dim, rank=self.rank,
            mu_hidden=self.mu_hidden, nu_hidden=self.nu_hidden,
            hidden_dim=self.hidden_dim, bandwidth=self.bandwidth,
        ).validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, adam_betas=self.adam_betas,
            adam_eps=self.adam_eps, iterations=self.iterations,
            batch_size=self.batch_size, clip_norm=self.clip_norm, seed=self.seed,
        ).validate()


def load_run_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise E.BadConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return RunConfig.from_dict(raw)
    except TypeError as exc:
        raise E.BadConfigError(str(exc)) from None


def _read_dataset(path) -> Dataset:
    try:
        return Dataset.from_csv(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise E.BadConfigError(f"cannot read dataset {path}: {exc}") from None
    except (ValueError, IndexError) as exc:
        raise E.BadConfigError(f"malformed dataset {path}: {exc}") from None


def prepare_task(cfg: RunConfig) -> tuple[Dataset, Dataset | None]:
    """(training data, evaluation data) for a run."""
    if cfg.task == "image_regression":
        try:
            grid = load_ppm(cfg.image)
        except OSError as exc:
            raise E.BadConfigError(f"cannot read image {cfg.image}: {exc}") from None
        split = split_pixels(grid)
        return Dataset(*gather(grid, split.train)), Dataset(*gather(grid, split.test))
    data = _read_dataset(cfg.train_data)
    evals = _read_dataset(cfg.eval_data) if cfg.eval_data else None
    return data, evals


def run_training(cfg: RunConfig, log=None) -> tuple[SimModel, object]:
    """Train as configured, writing the model and metrics files."""
    data, evals = prepare_task(cfg)
    mcfg = cfg.model_config(data.inputs.shape[1], data.targets.shape[1])
    tcfg = cfg.train_config()
    model = init_model(mcfg, cfg.seed)
    try:
        model, history = train(model, data, tcfg, eval_data=evals, metrics_path=cfg.metrics_out, log=log)
    except E.NonFiniteError as exc:
        model.save(cfg.model_out)
        raise _Exit(EXIT_NUMERIC, f"non-finite loss at step {exc.step}; kept last finite model") from None
    model.save(cfg.model_out)
    return model, history


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args) -> int:
    a = read_matrix_csv(args.matrix)
    report = classify(a, args.eig_tol)
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.model_out = args.out
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    _, history = run_training(cfg, log=log)
    line = f"final loss {format_float(history.final_loss)}"
    if history.psnr:
        line += f" psnr {format_float(history.psnr[max(history.psnr)])}"
    print(line)
    return EXIT_OK


def render_grid(model: SimModel, width: int, height: int) -> ImageGrid:
    cfg = model.config
    if cfg.input_dim != 2 or cfg.output_dim != 3:
        raise E.VariantMismatchError(
            f"rendering needs a 2-D input, 3-channel model; got {cfg.input_dim} -> {cfg.output_dim}")
    out = predict(lattice(width, height), model)
    return ImageGrid(np.clip(out, 0.0, 1.0).reshape(height, width, 3))


def cmd_render(args) -> int:
    if args.width < 1 or args.height < 1:
        raise E.BadConfigError("width and height must be positive")
    model = _load_model(args.model)
    save_ppm(render_grid(model, args.width, args.height), args.out)
    return EXIT_OK


def _limit_lines(a: np.ndarray, phi0: np.ndarray, steps: int, eig_tol: float) -> list[str]:
    report = classify(a, eig_tol)
    cls = report.cls
    if cls is ConvergenceClass.Unstable:
        why = "defective unit-circle eigenvalue" if report.defect_detected else "spectral radius above 1"
        return [f"# predicted: diverges ({why}; spectral radius {format_float(report.spectral_radius)})"]
    if cls is not ConvergenceClass.ConvergesToInvariantSet:
        vals = ",".join(format_float(v) for v in report.projector @ phi0)
        kind = "origin" if cls is ConvergenceClass.ConvergesToOrigin else "fixed point"
        return [f"# predicted limit ({kind}): {vals}"]
    vals = ",".join(format_float(v) for v in oscillation_term(a, steps, eig_tol) @ phi0)
    lines = [f"# predicted: oscillation, state at step {steps} approx {vals}"]
    if report.J2:
        lines.append("# period-2 component from eigenvalue -1")
    for _, _, delta in report.J3:
        lines.append(f"# rotation by {format_float(delta)} rad per step")
    return lines


def cmd_simulate(args) -> int:
    a = read_matrix_csv(args.matrix)
    phi0 = read_matrix_csv(args.phi0).reshape(-1)
    if args.steps < 0:
        raise E.BadConfigError("steps must be non-negative")
    traj = simulate_lifted(a, phi0, args.steps)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step"] + [f"phi{i}" for i in range(phi0.shape[0])])
    for l, row in enumerate(traj):
        w.writerow([l] + [format_float(v) for v in row])
    limit = "\n".join(_limit_lines(a, phi0, args.steps, args.eig_tol)) + "\n"
    if args.out is None:
        sys.stdout.write(buf.getvalue() + limit)
    else:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8", newline="")
        sys.stdout.write(limit)
    return EXIT_OK


GRADCHECK_DIMS = dict(input_dim=2, output_dim=3, lift_dim=8, rff_dim=16, hidden_dim=3,
                      mu_hidden=16, nu_hidden=16, bandwidth=1.0)
GRADCHECK_POINTS = 5
GRADCHECK_STEP = 1e-5
GRADCHECK_LIMIT = 1e-6


def gradcheck_error(variant: str, seed: int, corrupt: bool = False) -> float:
    """Worst relative gradient error of a small fresh model at 5 random inputs."""
    model = init_model(ModelConfig(variant=variant, **GRADCHECK_DIMS), seed)
    rng = np.random.default_rng(seed)
    x = sample_kink_free(model, GRADCHECK_POINTS, rng)
    y = rng.uniform(-1.0, 1.0, size=(GRADCHECK_POINTS, model.config.output_dim))
    return check_model_gradients(model, x, y, GRADCHECK_STEP, corrupt=corrupt)


def cmd_gradcheck(args) -> int:
    err = gradcheck_error(args.variant, 0 if args.seed is None else args.seed, corrupt=args.corrupt_grad)
    ok = err <= GRADCHECK_LIMIT
    print(f"{args.variant}: max relative error {err:.3e} ({'ok' if ok else 'FAILED'})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# plumbing


def _emit(text: str, out) -> None:
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8", newline="")


def _load_model(path) -> SimModel:
    try:
        return SimModel.load(path)
    except OSError as exc:
        raise E.BadConfigError(f"cannot read model {path}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise E.BadConfigError(f"malformed model file {path}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablesim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("analyze", help="classify the long-run behaviour of A^l")
    s.add_argument("matrix", help="square matrix as CSV")
    s.add_argument("--eig-tol", type=float, default=DEFAULT_EIG_TOL)
    s.add_argument("--out", help="write the JSON report here instead of stdout")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", help="train a model from a JSON run config")
    s.add_argument("config")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--out", help="override the model output path")
    s.add_argument("-v", "--verbose", action="store_true", help="log PSNR to stderr")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("render", help="evaluate an image model on a pixel lattice")
    s.add_argument("model")
    s.add_argument("width", type=int)
    s.add_argument("height", type=int)
    s.add_argument("--out", required=True, help="output PPM path")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("simulate", help="iterate phi_{l+1} = A phi_l")
    s.add_argument("matrix")
    s.add_argument("phi0", help="initial vector as CSV")
    s.add_argument("steps", type=int)
    s.add_argument("--eig-tol", type=float, default=DEFAULT_EIG_TOL)
    s.add_argument("--out", help="trajectory CSV path (default stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gradcheck", help="compare backprop with central differences")
    s.add_argument("variant", choices=("single", "two", "rff"))
    s.add_argument("--seed", type=int)
    s.add_argument("--corrupt-grad", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)
    return p


_EXIT_FOR = (
    (E.NonFiniteError, EXIT_NUMERIC),
    (E.NoConvergenceError, EXIT_NUMERIC),
    (E.SingularError, EXIT_NUMERIC),
    (E.DimensionMismatchError, EXIT_SHAPE),
    (E.NonSquareError, EXIT_SHAPE),
    (E.VariantMismatchError, EXIT_SHAPE),
    (E.SimError, EXIT_INPUT),
)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "eig_tol", None) is not None and not (0 < args.eig_tol < 0.1):
        print("error: --eig-tol must lie in (0, 0.1)", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except E.SimError as exc:
        code = next(c for kind, c in _EXIT_FOR if isinstance(exc, kind))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
