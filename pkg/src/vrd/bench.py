"""
Benchmark Module for VRD

Times the forward and backward passes of a single VRD layer over a range of
lattice sizes, to check the near-linear scaling of inference in L.
"""

import logging
import time
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import BENCH_DEFAULTS, REFERENCE_TIMINGS_MS, VRD_INIT_SCALE
from .core import VrdParams, vrd_backward, vrd_forward
from .lattice import Field

logger = logging.getLogger(__name__)


class Benchmarker:
    """Times the VRD forward and backward passes over a range of lattice sizes."""

    def __init__(self, n_in: int = BENCH_DEFAULTS["n_in"], n_out: int = BENCH_DEFAULTS["n_out"],
                 repetitions: int = BENCH_DEFAULTS["repetitions"], seed: int = BENCH_DEFAULTS["seed"]):
        """Initialize the Benchmarker."""
        self.n_in = n_in
        self.n_out = n_out
        self.repetitions = repetitions
        self.rng = np.random.default_rng(seed)

    def _random_params(self) -> VrdParams:
        n_in, n_out = self.n_in, self.n_out
        return VrdParams(
            r_b=VRD_INIT_SCALE * self.rng.standard_normal((n_out, n_out)),
            r_q=VRD_INIT_SCALE * self.rng.standard_normal((n_out, n_out)),
            b_i=self.rng.standard_normal((n_out, n_in)),
            q_i=self.rng.standard_normal((n_out, n_in)),
        )

    def time_grid(self, height: int, width: int) -> Tuple[float, float]:
        """
        Median forward and backward wall time in milliseconds on one grid.

        Every repetition draws fresh parameters and inputs.
        """
        forward_ms, backward_ms = [], []
        for _ in range(self.repetitions):
            params = self._random_params()
            s_i = Field.random(height, width, self.n_in, self.rng)
            dl_dso = Field.random(height, width, self.n_out, self.rng)

            start = time.perf_counter()
            _, cache = vrd_forward(s_i, params)
            forward_ms.append(1e3 * (time.perf_counter() - start))

            start = time.perf_counter()
            vrd_backward(dl_dso, cache, s_i, params)
            backward_ms.append(1e3 * (time.perf_counter() - start))
        return float(np.median(forward_ms)), float(np.median(backward_ms))

    def run(self, grids: Iterable[Tuple[int, int]]) -> pd.DataFrame:
        """
        Time every grid.

        Returns:
            DataFrame with columns L, t_fwd_ms, t_bwd_ms (plus height and width)
        """
        rows = []
        for height, width in grids:
            print(f"Timing {height}x{width} (N_i={self.n_in}, N_o={self.n_out})...")
            t_fwd, t_bwd = self.time_grid(height, width)
            logger.info("%dx%d: forward %.1f ms, backward %.1f ms", height, width, t_fwd, t_bwd)
            rows.append({"L": height * width, "t_fwd_ms": t_fwd, "t_bwd_ms": t_bwd,
                         "height": height, "width": width})
        return pd.DataFrame(rows, columns=["L", "t_fwd_ms", "t_bwd_ms", "height", "width"])


def scaling_ratios(df: pd.DataFrame, column: str = "t_fwd_ms") -> List[float]:
    """Successive time ratios t(L_k+1) / t(L_k) of a benchmark table sorted by L."""
    times = df.sort_values("L")[column].to_numpy()
    return [float(b / a) for a, b in zip(times[:-1], times[1:])]


def reference_ratio(df: pd.DataFrame, height: int = 511, width: int = 255) -> Optional[dict]:
    """Measured / reported time on the reference grid, if it was benchmarked."""
    match = df[(df["height"] == height) & (df["width"] == width)]
    if match.empty:
        return None
    row = match.iloc[0]
    return {
        "forward": row["t_fwd_ms"] / REFERENCE_TIMINGS_MS["forward"],
        "backward": row["t_bwd_ms"] / REFERENCE_TIMINGS_MS["backward"],
    }
