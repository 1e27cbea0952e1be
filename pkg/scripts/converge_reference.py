"""Population energy distance between the Gaussian-backend record law and the classical one.

For a coherent start, free motion and a Gaussian kernel both laws are normal
with the same mean, so the energy distance the converge scenario estimates
from samples has an exact value. This prints it next to each epsilon.

    python scripts/converge_reference.py [--config configs/converge.cfg]
"""
import argparse
from pathlib import Path

import numpy as np

from tracksim.config import load_config
from tracksim.experiments import build_dynamics, build_kernel
from tracksim.quantum import coherent_gaussian, gaussian_record_law
from tracksim.stats import gaussian_energy_distance


def main(argv=None):
    default = Path(__file__).resolve().parents[1] / "configs" / "converge.cfg"
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", default=str(default))
    cfg = load_config(ap.parse_args(argv).config)
    J = build_dynamics(cfg).symplectic_map()
    kernel = build_kernel(cfg)
    n = cfg.n_steps[0]
    classical = cfg.kernel_sigma ** 2 * np.eye((n + 1) * cfg.d)
    print("epsilon,population_energy_distance")
    for eps in cfg.epsilon:
        state = coherent_gaussian(cfg.mu0_x0, cfg.mu0_p0, eps, cfg.coherent_beta)
        _, cov = gaussian_record_law(state, J, kernel, n)
        print(f"{eps},{gaussian_energy_distance(cov, classical):.6g}")


if __name__ == "__main__":
    main()
