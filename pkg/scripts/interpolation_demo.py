"""Print spectral peaks along the root-distance and closed-form W2 paths between two resonances.

The RD path moves the poles; the W2 path moves quantiles. Both shift the peak
smoothly from one frequency to the other instead of cross-fading.
"""

import numpy as np

from rootdist.experiments import conjugate_model
from rootdist.interpolation import interpolate_rd, interpolate_w2
from rootdist.model import spectrum_at


def main() -> None:
    m1 = conjugate_model([-0.05 + 1.0j])
    m2 = conjugate_model([-0.05 + 3.0j])
    grid = np.linspace(0.0, 4.0, 4001)
    print(f"{'t':>5} {'rd peak':>9} {'w2 peak':>9}")
    for t in np.linspace(0.0, 1.0, 6):
        rd_peak = grid[np.argmax(spectrum_at(interpolate_rd(m1, m2, t), grid))]
        w2 = interpolate_w2(m1, m2, t, grid)
        w2_peak = w2.frequencies[np.argmax(w2.density)]
        print(f"{t:5.2f} {rd_peak:9.3f} {w2_peak:9.3f}")


if __name__ == "__main__":
    main()
