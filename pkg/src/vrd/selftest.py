"""
Self-Test Module for VRD

Runs the oracle suite behind `vrd selftest`:
1. Lattice identities (DST roundtrip, direct-summation agreement, Laplacian diagonalization, self-adjointness)
2. Dense linear algebra (Schur diagonal, matrix-exponential derivative)
3. Solver equivalence with the dense oracle and the stationarity residual
4. Every VRD and network gradient against finite differences
5. Minimizer, submodularity, self-adjointness of the solve and Green's-function width ordering
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
import pandas as pd

from . import linalg, oracle
from .core import (
    VrdParams,
    green_function,
    green_support_radius,
    stationarity_residual,
    vrd_forward,
    vrd_solve,
    factorize,
)
from .data import LabeledExample
from .lattice import Field, dst1_2d, inner_product, laplacian_apply, laplacian_eigenvalues
from .model import Network

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)


def random_params(rng: np.random.Generator, n_in: int, n_out: int, scale: float = 0.3) -> VrdParams:
    """Random parameters with well-conditioned B^o, Q^o."""
    return VrdParams(
        r_b=scale * rng.standard_normal((n_out, n_out)),
        r_q=scale * rng.standard_normal((n_out, n_out)),
        b_i=rng.standard_normal((n_out, n_in)),
        q_i=rng.standard_normal((n_out, n_in)),
    )


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_dst(rng) -> List[CheckResult]:
    roundtrip, direct, diag = 0.0, 0.0, 0.0
    for _ in range(100):
        h, w = rng.integers(1, 12, size=2)
        f = Field.random(h, w, 2, rng)
        fwd = dst1_2d(f, "forward")
        roundtrip = max(roundtrip, np.max(np.abs(dst1_2d(fwd, "inverse").data - f.data)))
        direct = max(direct, np.max(np.abs(oracle.dst1_direct(f.data) - fwd.data)) / max(fwd.max_abs(), 1.0))
        lhs = dst1_2d(laplacian_apply(f), "forward").data
        rhs = laplacian_eigenvalues(h, w)[:, :, np.newaxis] * fwd.data
        diag = max(diag, np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1.0))
    return [
        CheckResult("DST-I roundtrip", roundtrip, 1e-12),
        CheckResult("DST-I fast vs direct summation", direct, 1e-12),
        CheckResult("DST-I diagonalizes Laplacian", diag, 1e-10),
    ]


def check_laplacian_self_adjoint(rng) -> List[CheckResult]:
    f, g = Field.random(7, 9, 1, rng), Field.random(7, 9, 1, rng)
    lhs = inner_product(laplacian_apply(f), g)
    rhs = inner_product(f, laplacian_apply(g))
    return [CheckResult("Laplacian self-adjoint", abs(lhs - rhs) / max(abs(lhs), 1.0), 1e-12)]


def check_schur(rng) -> List[CheckResult]:
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 9))
        m1, m2 = rng.standard_normal((2, n, n))
        b_o, q_o = m1 @ m1.T + 0.5 * np.eye(n), m2 @ m2.T + 0.5 * np.eye(n)
        c = linalg.cholesky_lower(b_o)
        schur = linalg.schur_real(linalg.chol_inverse(b_o) @ q_o, c)
        c_inv = np.linalg.inv(c)
        expected = linalg.sym_eig(c_inv @ q_o @ c_inv.T).values
        if np.any(np.diag(schur.u) <= 0):
            return [CheckResult("Schur diagonal = spectrum", np.inf, 1e-8)]
        worst = max(worst, np.max(np.abs(np.diag(schur.u) - expected)) / np.max(np.abs(expected)))
    return [CheckResult("Schur diagonal = spectrum", worst, 1e-8)]


def check_expm_grad(rng) -> List[CheckResult]:
    worst = 0.0
    h = 1e-6
    for trial in range(50):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal((n, n))
        a = 0.5 * (a + a.T)
        if trial % 5 == 0 and n >= 2:
            # Eigenvalue pair closer than 1e-10
            eig = linalg.sym_eig(a)
            values = eig.values.copy()
            values[1] = values[0] + 1e-11
            a = (eig.vectors * values) @ eig.vectors.T
            a = 0.5 * (a + a.T)
        m = rng.standard_normal((n, n))
        e = rng.standard_normal((n, n))
        e = 0.5 * (e + e.T)
        analytic = np.sum(linalg.expm_grad(a, m) * e)
        numeric = (np.sum(m * linalg.expm_sym(a + h * e)) - np.sum(m * linalg.expm_sym(a - h * e))) / (2 * h)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
    return [CheckResult("expm derivative vs finite differences", worst, 1e-5)]


def check_oracle_equivalence(rng) -> List[CheckResult]:
    worst = 0.0
    for _ in range(20):
        n_out = int(rng.integers(1, 5))
        n_in = int(rng.choice([1, 2, 4]))
        h, w = rng.integers(1, 9, size=2)
        params = random_params(rng, n_in, n_out)
        s_p = Field.random(h, w, n_out, rng)
        _, _, b_o_inv, schur = factorize(params)
        fast = vrd_solve(s_p, schur, b_o_inv)
        dense = oracle.dense_solve_oracle(params, s_p)
        worst = max(worst, _rel_l2(fast.data, dense.data))
    return [CheckResult("vrd_solve vs dense oracle", worst, 1e-8)]


def check_stationarity(rng) -> List[CheckResult]:
    worst = 0.0
    for h, w in ((6, 5), (32, 17), (256, 256)):
        params = random_params(rng, 2, 3)
        s_i = Field.random(h, w, 2, rng)
        s_o, cache = vrd_forward(s_i, params)
        worst = max(worst, stationarity_residual(s_i, s_o, params) / cache.s_p.max_abs())
    return [CheckResult("Stationarity residual", worst, 1e-8)]


def check_vrd_gradients(rng) -> List[CheckResult]:
    params = random_params(rng, 2, 3)
    s_i = Field.random(5, 4, 2, rng)
    weights = rng.standard_normal((5, 4, 3))
    errors = oracle.vrd_gradient_check(params, s_i, weights)
    return [CheckResult(f"Gradient {name}", err, 1e-4) for name, err in errors.items()]


def check_network_gradients(rng) -> List[CheckResult]:
    net = Network.from_arch("mix:3,vrd:3,relu,mix:2", 2, seed=int(rng.integers(1 << 31)))
    example = LabeledExample(Field.random(5, 5, 2, rng), rng.integers(0, 2, size=(5, 5)))
    errors = oracle.network_gradient_check(net, example)
    return [CheckResult(f"Network gradient ({name})", err, 1e-3) for name, err in errors.items()]


def check_minimizer(rng) -> List[CheckResult]:
    worst, violations = np.inf, 0
    for _ in range(10):
        params = random_params(rng, 2, 2)
        report = oracle.minimizer_check(params, Field.random(6, 5, 2, rng), trials=10,
                                        epsilons=(1e-2, 1.0), rng=rng)
        worst = min(worst, report.worst_margin)
        violations += report.violations
    # Error column reports the violation count; the worst margin is logged
    logger.info("Minimizer check worst margin %.3e", worst)
    return [CheckResult("Minimizer (energy perturbation violations)", float(violations), 0.0)]


def check_submodularity(rng) -> List[CheckResult]:
    worst = np.inf
    for _ in range(1000):
        r_b = rng.standard_normal((2, 2))
        b_o = linalg.expm_sym(r_b + r_b.T)
        worst = min(worst, b_o[0, 0] + b_o[1, 1] - b_o[1, 0] - b_o[0, 1])
    return [CheckResult("Submodularity of binary potential", max(0.0, -worst), 1e-12)]


def check_solve_self_adjoint(rng) -> List[CheckResult]:
    params = random_params(rng, 1, 3)
    _, _, b_o_inv, schur = factorize(params)
    f, g = Field.random(8, 7, 3, rng), Field.random(8, 7, 3, rng)
    lhs = float(np.vdot(vrd_solve(f, schur, b_o_inv).data, g.data))
    rhs = float(np.vdot(f.data, vrd_solve(g, schur, b_o_inv).data))
    return [CheckResult("Solve operator self-adjoint", abs(lhs - rhs) / max(abs(lhs), 1e-300), 1e-9)]


def check_green_ordering(rng) -> List[CheckResult]:
    narrow = green_support_radius(green_function(1e-2, 255, 255))
    wide = green_support_radius(green_function(1e-6, 255, 255))
    return [CheckResult("Green's function width ordering", 0.0 if wide > narrow else 1.0, 0.0)]


CHECKS: List[Callable] = [
    check_dst,
    check_laplacian_self_adjoint,
    check_schur,
    check_expm_grad,
    check_oracle_equivalence,
    check_stationarity,
    check_vrd_gradients,
    check_network_gradients,
    check_minimizer,
    check_submodularity,
    check_solve_self_adjoint,
    check_green_ordering,
]


def run_selftest(seed: int = 0) -> pd.DataFrame:
    """
    Run every check.

    Returns:
        DataFrame with columns check, error, tolerance, status
    """
    rng = np.random.default_rng(seed)
    rows = []
    for check in CHECKS:
        start = time.perf_counter()
        try:
            results = check(rng)
        except Exception as e:
            logger.error("Check %s raised %s: %s", check.__name__, type(e).__name__, e)
            results = [CheckResult(check.__name__, np.inf, 0.0)]
        logger.info("%s finished in %.2f s", check.__name__, time.perf_counter() - start)
        for result in results:
            rows.append({
                "check": result.name,
                "error": result.error,
                "tolerance": result.tolerance,
                "status": "PASS" if result.passed else "FAIL",
            })
    return pd.DataFrame(rows, columns=["check", "error", "tolerance", "status"])
