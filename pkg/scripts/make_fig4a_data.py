"""Regenerate the bundled DQ drive dataset (omega_hz, t2star_s, sigma_s).

Points are drawn from the reference fit of the driven DQ T2* curve
(gamma = 2 pi x 9.3 kHz, delta = 60 kHz, T2_other = 27 us) with 2 %
Gaussian scatter and a 3 % error bar, so the fit can be exercised on data
that behave like the measurement. Output is committed; rerun only if the
recipe changes.
"""

from pathlib import Path

import numpy as np

from nvdephase.drive import DriveModel, total_t2_with_drive
from nvdephase.io import write_columns

OMEGA_MHZ = [0.04, 0.06, 0.08, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0]
SEED = 4


def main() -> None:
    model = DriveModel(2 * np.pi * 9.3e3, 60e3, 2, 27e-6)
    w = np.array(OMEGA_MHZ) * 1e6
    t2 = total_t2_with_drive(model, w)
    noisy = t2 * (1.0 + 0.02 * np.random.default_rng(SEED).standard_normal(w.size))
    out = Path(__file__).resolve().parents[1] / "src" / "nvdephase" / "data" / "fig4a_dq.txt"
    write_columns(out, ["omega_hz", "t2star_s", "sigma_s"], np.column_stack((w, noisy, 0.03 * noisy)))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
