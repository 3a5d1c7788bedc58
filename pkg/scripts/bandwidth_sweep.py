"""RFF-only test PSNR as a function of the kernel bandwidth.

    python scripts/bandwidth_sweep.py data/astronaut128.ppm [iterations]
"""
import sys

from stablesim.cli import RunConfig, prepare_task
from stablesim.models import ModelConfig, init_model
from stablesim.training import TrainConfig, train

BANDWIDTHS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


def main(image="data/astronaut128.ppm", iterations="500"):
    cfg = RunConfig(task="image_regression", variant="rff", image=image, model_out="", metrics_out="")
    data, test = prepare_task(cfg)
    for b in BANDWIDTHS:
        model = init_model(ModelConfig("rff", 2, 3, rff_dim=512, nu_hidden=256, bandwidth=b), 0)
        _, history = train(model, data, TrainConfig(1e-3, iterations=int(iterations)), eval_data=test)
        print(f"bandwidth {b:<5} test psnr {history.psnr[max(history.psnr)]:.2f} dB")


if __name__ == "__main__":
    main(*sys.argv[1:])
