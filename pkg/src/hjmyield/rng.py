"""Counter-based standard Gaussian draws.

Every draw is addressed by ``(seed, stream, step, component)``: the Philox
counter is set from ``(step, stream)`` and the uniform at position
``component`` is mapped through the inverse normal CDF.  Output for a given
address never depends on how many other draws were taken or in what order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# stream identifiers used inside the package
SIMULATION = 0
RESAMPLING = 1
VASICEK = 2

_TWO_M53 = 2.0 ** -53


def _uniforms(seed: int, stream: int, step: int, n: int) -> np.ndarray:
    if seed < 0 or step < 0 or stream < 0:
        raise ValueError("seed, stream and step must be non-negative")
    bits = np.random.Philox(key=seed, counter=[0, step, stream, 0]).random_raw(n)
    # 53-bit mantissa, shifted by half an ulp to stay inside (0, 1)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def gaussian(seed: int, step: int, n: int, stream: int = SIMULATION) -> np.ndarray:
    """Return ``n`` standard normal draws for one ``(seed, stream, step)``."""
    return ndtri(_uniforms(seed, stream, step, n))


def gaussian_block(
    seed: int, steps: int, n: int, stream: int = SIMULATION, start: int = 0
) -> np.ndarray:
    """Stack :func:`gaussian` rows for steps ``start .. start+steps-1``.

    Row ``i`` equals ``gaussian(seed, start + i, n, stream)`` exactly.
    """
    out = np.empty((steps, n))
    for i in range(steps):
        out[i] = gaussian(seed, start + i, n, stream)
    return out
