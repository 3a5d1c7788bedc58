"""Fit a single-tier SIM to fixed points of the toy lifted map.

    python scripts/run_deq_approx.py [iterations] [seed]

Targets come from plain fixed-point iteration; the held-out error is
measured on fresh inputs.
"""
import sys

import numpy as np

from stablesim.dynamics import Dataset, deq_forward, toy_koopman_system
from stablesim.models import ModelConfig, init_model, predict
from stablesim.training import TrainConfig, train


def fixed_points(system, xs):
    return Dataset(xs, np.stack([deq_forward(system.map, x).z_star for x in xs]))


def main(iterations="2000", seed="0"):
    system = toy_koopman_system(0.5, 0.5, 1.0)
    rng = np.random.default_rng(int(seed))
    data = fixed_points(system, rng.uniform(-1, 1, (256, 1)))
    held = fixed_points(system, rng.uniform(-1, 1, (64, 1)))
    cfg = ModelConfig("single", 1, 2, lift_dim=16, mu_hidden=32, nu_hidden=32, hidden_dim=2)
    model, history = train(init_model(cfg, int(seed)), data, TrainConfig(1e-3, iterations=int(iterations)))
    mse = np.mean((predict(held.inputs, model) - held.targets) ** 2)
    print(f"train loss {history.final_loss:.3e}  held-out mse {mse:.3e}")


if __name__ == "__main__":
    main(*sys.argv[1:])
