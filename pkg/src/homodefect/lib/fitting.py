"""Log-log least squares used by the rate and growth fits."""

from typing import Tuple

import numpy as np


def loglog_slope(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Fit ``log y = slope * log x + intercept``.

    Returns:
        ``(slope, intercept, stderr)``; the standard error is 0 for two points.
    """
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    n = lx.size
    if n <= 2:
        return float(slope), float(intercept), 0.0
    residuals = ly - (slope * lx + intercept)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(residuals ** 2) / (n - 2) / sxx))
    return float(slope), float(intercept), stderr
