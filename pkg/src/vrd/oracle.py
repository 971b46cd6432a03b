"""
Oracle Module for VRD

Brute-force ground truth, sharing no code path with the fast solver:
1. Dense assembly of the discretized operator B^o Delta - Q^o
2. Dense solution by Gaussian elimination with partial pivoting
3. Central finite-difference gradients and their comparison to analytic ones
4. Energy checks of the minimizer property
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from .config import ORACLE_MAX_DIM, TOLERANCES
from .core import VrdParams, energy, vrd_backward, vrd_forward
from .exceptions import SingularMatrixError, ShapeMismatchError
from .lattice import Field
from .model import net_backward, net_forward, softmax_xent

logger = logging.getLogger(__name__)


@dataclass
class DenseSystem:
    """Dense matrix of the operator on flattened N_o-channel fields."""
    height: int
    width: int
    channels: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def index(self, channel: int, i: int, j: int) -> int:
        return (i * self.width + j) * self.channels + channel

    def unindex(self, k: int):
        """Inverse of index: flat position -> (channel, i, j)."""
        cell, channel = divmod(k, self.channels)
        i, j = divmod(cell, self.width)
        return channel, i, j


def dense_laplacian_1ch(height: int, width: int) -> np.ndarray:
    """Dense L x L matrix of the 5-point Dirichlet Laplacian (cells row-major)."""
    n = height * width
    lap = np.zeros((n, n))
    for i in range(height):
        for j in range(width):
            p = i * width + j
            lap[p, p] = -4.0
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < height and 0 <= jj < width:
                    lap[p, ii * width + jj] = 1.0
    return lap


def dense_assemble(params: VrdParams, height: int, width: int) -> DenseSystem:
    """
    Dense matrix mapping flattened s^o to B^o Delta s^o - Q^o s^o.

    Raises:
        ValueError: N_o * L exceeds the oracle size guard
    """
    n_out = params.n_out
    dim = n_out * height * width
    if dim > ORACLE_MAX_DIM:
        raise ValueError(f"dense system of dimension {dim} exceeds the guard {ORACLE_MAX_DIM}")
    lap = dense_laplacian_1ch(height, width)
    cells = np.eye(height * width)
    matrix = np.kron(lap, params.b_o) - np.kron(cells, params.q_o)
    return DenseSystem(height=height, width=width, channels=n_out, matrix=matrix)


def dense_solve_oracle(params: VrdParams, s_p: Field) -> Field:
    """
    Solve the dense system for s^o by Gaussian elimination with partial pivoting.

    Raises:
        SingularMatrixError: the assembled matrix is singular
    """
    if s_p.channels != params.n_out:
        raise ShapeMismatchError(f"source has {s_p.channels} channels, expected {params.n_out}")
    system = dense_assemble(params, s_p.height, s_p.width)
    try:
        solution = scipy.linalg.solve(system.matrix, s_p.data.ravel(), check_finite=True)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"dense oracle system is singular: {e}") from e
    return Field(solution.reshape(s_p.shape), check=False)


def dst1_direct(a: np.ndarray) -> np.ndarray:
    """Direct-summation 2-D DST-I kernel over the first two axes."""
    h, w = a.shape[:2]
    out = np.zeros(a.shape)
    for k in range(h):
        for l in range(w):
            basis = np.outer(np.sin(np.pi * np.arange(1, h + 1) * (k + 1) / (h + 1)),
                             np.sin(np.pi * np.arange(1, w + 1) * (l + 1) / (w + 1)))
            out[k, l] = np.tensordot(basis, a, axes=([0, 1], [0, 1]))
    return out


def finite_difference_gradient(loss_fn: Callable[[np.ndarray], float], theta: np.ndarray,
                               h: float = TOLERANCES["fd_step"]) -> np.ndarray:
    """Central differences (f(theta + h e) - f(theta - h e)) / 2h per coordinate."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        x = theta.copy()
        x.flat[j] = theta.flat[j] + h
        f_plus = loss_fn(x)
        x.flat[j] = theta.flat[j] - h
        f_minus = loss_fn(x)
        grad.flat[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   floor: float = TOLERANCES["fd_floor"]) -> float:
    """Max over coordinates of |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_diff_check(loss_fn: Callable[[np.ndarray], float], params_vector: np.ndarray,
                      analytic_grad: np.ndarray, h: float = TOLERANCES["fd_step"],
                      floor: float = TOLERANCES["fd_floor"]) -> float:
    """
    Compare an analytic gradient to central finite differences.

    Args:
        loss_fn: pure scalar function of the parameter vector
        params_vector: point of evaluation
        analytic_grad: gradient to check, same shape as params_vector
        h: step size
        floor: absolute floor of the relative-error denominator

    Returns:
        Maximum relative error over coordinates
    """
    numeric = finite_difference_gradient(loss_fn, params_vector, h)
    err = relative_error(analytic_grad, numeric, floor)
    logger.info("Finite-difference check over %d coordinates: max relative error %.3e",
                np.size(params_vector), err)
    return err


@dataclass
class MinimizerReport:
    passed: bool
    worst_margin: float
    trials: int
    violations: int


def minimizer_check(params: VrdParams, s_i: Field, trials: int = 10,
                    epsilons: Sequence[float] = (1e-2, 1.0),
                    rng: Optional[np.random.Generator] = None) -> MinimizerReport:
    """
    Verify energy(s^o*) <= energy(s^o* + eps v) for random unit fields v.

    Both signs of every eps are tried. The margin is the energy increase;
    the worst margin is the smallest over all trials.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    s_o, _ = vrd_forward(s_i, params)
    base = energy(s_i, s_o, params)
    worst = np.inf
    violations = 0
    for _ in range(trials):
        v = rng.standard_normal(s_o.shape)
        v /= np.linalg.norm(v)
        for eps in _signed(epsilons):
            margin = energy(s_i, Field(s_o.data + eps * v, check=False), params) - base
            # Round-off of the energy evaluation itself
            slack = 1e-12 * max(abs(base), 1.0)
            if margin < -slack:
                violations += 1
            worst = min(worst, margin)
    worst = 0.0 if not np.isfinite(worst) else float(worst)
    return MinimizerReport(passed=violations == 0, worst_margin=worst, trials=trials, violations=violations)


def _signed(epsilons: Iterable[float]):
    for eps in epsilons:
        yield eps
        if eps != 0.0:
            yield -eps


def dense_forward(b_o: np.ndarray, q_o: np.ndarray, b_i: np.ndarray, q_i: np.ndarray,
                  s_i: np.ndarray) -> np.ndarray:
    """
    Dense evaluation of inference from raw (not necessarily symmetric) blocks.

    Args:
        b_o, q_o: N_o x N_o blocks
        b_i, q_i: N_o x N_i blocks
        s_i: (height, width, N_i) array

    Returns:
        (height, width, N_o) array s^o
    """
    height, width, n_in = s_i.shape
    n_out = b_o.shape[0]
    if n_out * height * width > ORACLE_MAX_DIM:
        raise ValueError(f"dense system of dimension {n_out * height * width} exceeds the guard")
    lap = dense_laplacian_1ch(height, width)
    si = s_i.reshape(-1, n_in)
    s_p = si @ q_i.T - (lap @ si) @ b_i.T
    return dense_solve_raw(b_o, q_o, s_p.reshape(height, width, n_out))


def dense_solve_raw(b_o: np.ndarray, q_o: np.ndarray, s_p: np.ndarray) -> np.ndarray:
    """Solve B^o Delta s^o - Q^o s^o = s^p densely for raw blocks."""
    height, width, n_out = s_p.shape
    lap = dense_laplacian_1ch(height, width)
    matrix = np.kron(lap, b_o) - np.kron(np.eye(height * width), q_o)
    try:
        return scipy.linalg.solve(matrix, s_p.ravel()).reshape(s_p.shape)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"dense oracle system is singular: {e}") from e


def vrd_gradient_check(params: VrdParams, s_i: Field, weights: np.ndarray,
                       h: float = TOLERANCES["fd_step"]) -> dict:
    """
    Check every gradient of vrd_backward against central finite differences.

    The loss is L = sum(weights * s^o) + sum(s^o ** 2) / 2. Derivatives with
    respect to s^p, s^i and the raw blocks are differenced through the dense
    oracle; those with respect to r_b, r_q through vrd_forward.

    Returns:
        Dictionary mapping gradient name to max relative error
    """
    def loss_of(s_o: np.ndarray) -> float:
        return float(np.sum(weights * s_o) + 0.5 * np.sum(s_o * s_o))

    s_o, cache = vrd_forward(s_i, params)
    grads = vrd_backward(Field(weights + s_o.data, check=False), cache, s_i, params)
    b_o, q_o = cache.b_o, cache.q_o
    b_i, q_i = params.b_i, params.q_i
    si = s_i.data

    def blockwise(index):
        def fn(x):
            blocks = [b_o, q_o, b_i, q_i]
            blocks[index] = x
            return loss_of(dense_forward(*blocks, si))
        return fn

    def reparam(name):
        def fn(x):
            p = params.copy()
            setattr(p, name, x)
            return loss_of(vrd_forward(s_i, p)[0].data)
        return fn

    checks = {
        "dL/ds^p": (lambda x: loss_of(dense_solve_raw(b_o, q_o, x)), cache.s_p.data, grads.dl_dsp.data),
        "dL/ds^i": (lambda x: loss_of(dense_forward(b_o, q_o, b_i, q_i, x)), si, grads.dl_dsi.data),
        "dL/dB^o": (blockwise(0), b_o, grads.dl_dbo),
        "dL/dQ^o": (blockwise(1), q_o, grads.dl_dqo),
        "dL/dB^i": (blockwise(2), b_i, grads.dl_dbi),
        "dL/dQ^i": (blockwise(3), q_i, grads.dl_dqi),
        "dL/dr_b": (reparam("r_b"), params.r_b, grads.dl_drb),
        "dL/dr_q": (reparam("r_q"), params.r_q, grads.dl_drq),
    }
    return {name: finite_diff_check(fn, point, analytic, h)
            for name, (fn, point, analytic) in checks.items()}


def network_gradient_check(net, example, h: float = TOLERANCES["fd_step"]) -> dict:
    """
    Check net_backward against finite differences of the softmax loss.

    Returns:
        {"parameters": max relative error, "input": max relative error}
    """
    def loss_at(x: Field) -> float:
        scores, _ = net_forward(net, x)
        return softmax_xent(scores, example.labels)[0]

    scores, caches = net_forward(net, example.input)
    _, dl_dscores = softmax_xent(scores, example.labels)
    grads, dl_dinput = net_backward(net, caches, dl_dscores)
    analytic = np.concatenate([grads[name].ravel() for name, _ in net.named_parameters()]) \
        if net.named_parameters() else np.zeros(0)

    theta0 = net.parameter_vector()

    def loss_of_params(theta):
        net.set_parameter_vector(theta)
        return loss_at(example.input)

    try:
        param_err = finite_diff_check(loss_of_params, theta0, analytic, h)
    finally:
        net.set_parameter_vector(theta0)
    input_err = finite_diff_check(lambda x: loss_at(Field(x, check=False)), example.input.data,
                                  dl_dinput.data, h)
    return {"parameters": param_err, "input": input_err}
