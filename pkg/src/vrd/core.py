"""
VRD Core Module

The Variational Reaction-Diffusion layer itself:
1. Assembling the source term s^p = Q^i s^i - B^i Delta s^i
2. Exact inference: Schur change of basis plus DST Helmholtz backsubstitution
3. Exact backward pass: the adjoint solve and every parameter gradient
4. The discrete energy whose minimizer inference returns
5. Green's functions of the scalar operator
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import linalg
from .config import VRD_INIT_SCALE
from .exceptions import NotPositiveDefiniteError, ShapeMismatchError
from .lattice import (
    Field,
    channel_gram,
    dst1_2d,
    laplacian_apply,
    laplacian_eigenvalues,
    mix_channels,
)
from .linalg import SchurForm

logger = logging.getLogger(__name__)


@dataclass
class VrdParams:
    """
    Learnable parameters of one VRD layer.

    B^o = exp(r_b + r_b^T) and Q^o = exp(r_q + r_q^T) are SPD for every value
    of the free matrices r_b, r_q. The cross blocks b_i, q_i (N_o x N_i) are
    unconstrained.
    """
    r_b: np.ndarray
    r_q: np.ndarray
    b_i: np.ndarray
    q_i: np.ndarray

    def __post_init__(self):
        self.r_b = np.array(self.r_b, dtype=np.float64)
        self.r_q = np.array(self.r_q, dtype=np.float64)
        self.b_i = np.array(self.b_i, dtype=np.float64)
        self.q_i = np.array(self.q_i, dtype=np.float64)
        n_out = self.r_b.shape[0]
        if self.r_b.shape != (n_out, n_out) or self.r_q.shape != (n_out, n_out):
            raise ShapeMismatchError(
                f"r_b and r_q must be square N_o x N_o, got {self.r_b.shape} and {self.r_q.shape}")
        if self.b_i.shape != self.q_i.shape or self.b_i.ndim != 2 or self.b_i.shape[0] != n_out:
            raise ShapeMismatchError(
                f"b_i and q_i must both be N_o x N_i, got {self.b_i.shape} and {self.q_i.shape}")
        for name in ("r_b", "r_q", "b_i", "q_i"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"parameter {name} contains non-finite entries")

    @property
    def n_in(self) -> int:
        return self.q_i.shape[1]

    @property
    def n_out(self) -> int:
        return self.r_q.shape[0]

    @property
    def b_o_bar(self) -> np.ndarray:
        return self.r_b + self.r_b.T

    @property
    def q_o_bar(self) -> np.ndarray:
        return self.r_q + self.r_q.T

    @property
    def b_o(self) -> np.ndarray:
        return linalg.expm_sym(self.b_o_bar)

    @property
    def q_o(self) -> np.ndarray:
        return linalg.expm_sym(self.q_o_bar)

    @classmethod
    def initial(cls, n_in: int, n_out: int, rng: Optional[np.random.Generator] = None) -> "VrdParams":
        """
        Default initialization: B^o = Q^o = I, B^i = 0, Q^i ~ uniform(-0.1, 0.1).
        """
        rng = rng if rng is not None else np.random.default_rng()
        return cls(
            r_b=np.zeros((n_out, n_out)),
            r_q=np.zeros((n_out, n_out)),
            b_i=np.zeros((n_out, n_in)),
            q_i=rng.uniform(-VRD_INIT_SCALE, VRD_INIT_SCALE, size=(n_out, n_in)),
        )

    @classmethod
    def from_blocks(cls, b_o_bar, q_o_bar, b_i, q_i) -> "VrdParams":
        """Build parameters from symmetric log-space blocks (r = abar / 2)."""
        b_o_bar = linalg.symmetrize(b_o_bar, "B^o log-space block")
        q_o_bar = linalg.symmetrize(q_o_bar, "Q^o log-space block")
        return cls(r_b=0.5 * b_o_bar, r_q=0.5 * q_o_bar, b_i=b_i, q_i=q_i)

    @classmethod
    def from_spd(cls, b_o, q_o, b_i, q_i) -> "VrdParams":
        """Build parameters from SPD blocks B^o, Q^o via the matrix logarithm."""
        return cls.from_blocks(_logm_spd(b_o), _logm_spd(q_o), b_i, q_i)

    def copy(self) -> "VrdParams":
        return VrdParams(self.r_b.copy(), self.r_q.copy(), self.b_i.copy(), self.q_i.copy())


def _logm_spd(a) -> np.ndarray:
    eig = linalg.sym_eig(a)
    if np.any(eig.values <= 0.0):
        raise NotPositiveDefiniteError("not positive definite")
    return (eig.vectors * np.log(eig.values)) @ eig.vectors.T


@dataclass
class VrdCache:
    """Quantities saved by vrd_forward for the backward pass."""
    s_o: Field
    s_p: Field
    lap_s_o: Field
    lap_s_i: Field
    schur: SchurForm
    b_o_inv: np.ndarray
    b_o: np.ndarray
    q_o: np.ndarray


@dataclass
class VrdGrads:
    """All derivatives produced by vrd_backward."""
    dl_dsp: Field
    dl_dsi: Field
    dl_dbo: np.ndarray
    dl_dqo: np.ndarray
    dl_dbi: np.ndarray
    dl_dqi: np.ndarray
    dl_drb: np.ndarray
    dl_drq: np.ndarray


def _check_channels(f: Field, expected: int, what: str):
    if f.channels != expected:
        raise ShapeMismatchError(f"{what} has {f.channels} channels, expected {expected}")


def assemble_sp(s_i: Field, params: VrdParams, lap_s_i: Optional[Field] = None) -> Field:
    """
    Source term of the reaction-diffusion system.

    Args:
        s_i: input field with N_i channels
        params: layer parameters
        lap_s_i: precomputed Laplacian of s_i (computed if omitted)

    Returns:
        N_o-channel field s^p(x) = Q^i s^i(x) - B^i (Delta s^i)(x)
    """
    _check_channels(s_i, params.n_in, "input field")
    if lap_s_i is None:
        lap_s_i = laplacian_apply(s_i)
    out = mix_channels(params.q_i, s_i).data - mix_channels(params.b_i, lap_s_i).data
    return Field(out, check=False)


def helmholtz_solve(f: Field, lam: float) -> Field:
    """
    Solve Delta z - lam z = f with homogeneous Dirichlet boundary.

    Args:
        f: right-hand side (every channel is solved with the same lam)
        lam: positive reaction coefficient

    Returns:
        Solution field z
    """
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    f_hat = dst1_2d(f, "forward").data
    denom = laplacian_eigenvalues(f.height, f.width) - lam
    return dst1_2d(Field(f_hat / denom[:, :, np.newaxis], check=False), "inverse")


def vrd_solve(s_p: Field, schur: SchurForm, b_o_inv: np.ndarray) -> Field:
    """
    Solve B^o Delta s^o - Q^o s^o = s^p by Schur backsubstitution.

    With (B^o)^-1 Q^o = V U V^T and z = V^T s^o, channel k solves
        Delta z_k - U_kk z_k = (V^T (B^o)^-1 s^p)_k + sum_{j>k} U_kj z_j
    for k = N_o down to 1. The DST is linear, so the backsubstitution runs on
    the transformed channels and only one forward and one inverse transform
    are needed.

    Args:
        s_p: N_o-channel source field
        schur: factorization of (B^o)^-1 Q^o
        b_o_inv: (B^o)^-1

    Returns:
        s^o = V z
    """
    v, u = schur.v, schur.u
    n_out = u.shape[0]
    _check_channels(s_p, n_out, "source field")
    if np.any(np.diag(u) <= 0.0):
        raise NotPositiveDefiniteError("Schur diagonal must be strictly positive")

    rhs = mix_channels(v.T @ b_o_inv, s_p)
    rhs_hat = dst1_2d(rhs, "forward").data
    mu = laplacian_eigenvalues(s_p.height, s_p.width)
    z_hat = np.empty_like(rhs_hat)
    for k in range(n_out - 1, -1, -1):
        acc = rhs_hat[:, :, k].copy()
        if k + 1 < n_out:
            acc += z_hat[:, :, k + 1:] @ u[k, k + 1:]
        z_hat[:, :, k] = acc / (mu - u[k, k])
    z = dst1_2d(Field(z_hat, check=False), "inverse")
    return mix_channels(v, z)


def factorize(params: VrdParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray, SchurForm]:
    """
    Derived matrices of a parameter set.

    Returns:
        (B^o, Q^o, (B^o)^-1, Schur form of (B^o)^-1 Q^o)
    """
    b_o = params.b_o
    q_o = params.q_o
    b_o_inv = linalg.chol_inverse(b_o)
    schur = linalg.schur_real(b_o_inv @ q_o, linalg.cholesky_lower(b_o))
    return b_o, q_o, b_o_inv, schur


def vrd_forward(s_i: Field, params: VrdParams) -> Tuple[Field, VrdCache]:
    """
    Exact inference for one VRD layer.

    Args:
        s_i: input field with N_i channels
        params: layer parameters

    Returns:
        (s^o, cache for vrd_backward)
    """
    _check_channels(s_i, params.n_in, "input field")
    b_o, q_o, b_o_inv, schur = factorize(params)
    lap_s_i = laplacian_apply(s_i)
    s_p = assemble_sp(s_i, params, lap_s_i)
    s_o = vrd_solve(s_p, schur, b_o_inv)
    cache = VrdCache(
        s_o=s_o,
        s_p=s_p,
        lap_s_o=laplacian_apply(s_o),
        lap_s_i=lap_s_i,
        schur=schur,
        b_o_inv=b_o_inv,
        b_o=b_o,
        q_o=q_o,
    )
    return s_o, cache


def vrd_backward(dl_dso: Field, cache: VrdCache, s_i: Field, params: VrdParams) -> VrdGrads:
    """
    Backward pass of one VRD layer.

    The operator B^o Delta - Q^o is self-adjoint, so dL/ds^p solves the same
    system as inference with dL/ds^o on the right-hand side.

    Args:
        dl_dso: dL/ds^o with N_o channels
        cache: cache returned by vrd_forward for the same s_i and params
        s_i: layer input
        params: layer parameters

    Returns:
        VrdGrads with derivatives for s^p, s^i, B^o, Q^o, B^i, Q^i, r_b, r_q
    """
    _check_channels(dl_dso, params.n_out, "output gradient")
    dl_dsp = vrd_solve(dl_dso, cache.schur, cache.b_o_inv)

    dl_dbo = -channel_gram(dl_dsp, cache.lap_s_o)
    dl_dqo = channel_gram(dl_dsp, cache.s_o)
    dl_dqi = channel_gram(dl_dsp, s_i)
    dl_dbi = -channel_gram(dl_dsp, cache.lap_s_i)

    lap_dl_dsp = laplacian_apply(dl_dsp)
    dl_dsi = Field(
        mix_channels(params.q_i.T, dl_dsp).data - mix_channels(params.b_i.T, lap_dl_dsp).data,
        check=False,
    )

    dl_drb = linalg.symmetrize_param_grad(linalg.expm_grad(params.b_o_bar, dl_dbo))
    dl_drq = linalg.symmetrize_param_grad(linalg.expm_grad(params.q_o_bar, dl_dqo))

    return VrdGrads(
        dl_dsp=dl_dsp,
        dl_dsi=dl_dsi,
        dl_dbo=dl_dbo,
        dl_dqo=dl_dqo,
        dl_dbi=dl_dbi,
        dl_dqi=dl_dqi,
        dl_drb=dl_drb,
        dl_drq=dl_drq,
    )


def _edge_differences(a: np.ndarray):
    # Forward differences over every lattice edge, including the edges that
    # connect boundary cells to the zero exterior.
    h, w, c = a.shape
    padded = np.zeros((h + 2, w + 2, c))
    padded[1:-1, 1:-1] = a
    d_rows = padded[1:, 1:-1] - padded[:-1, 1:-1]
    d_cols = padded[1:-1, 1:] - padded[1:-1, :-1]
    return d_rows.reshape(-1, c), d_cols.reshape(-1, c)


def energy(s_i: Optional[Field], s_o: Field, params: VrdParams,
           q_ii: Optional[np.ndarray] = None, b_ii: Optional[np.ndarray] = None) -> float:
    """
    Discrete VRD energy.

        sum_x s^T Q s + sum_{(x,x') in E} ||s(x') - s(x)||_B^2

    over the 4-connected lattice with zero exterior, where s stacks s^o and
    s^i. Cross terms count 2 s^oT Q^i s^i (and likewise for B). The s^i-only
    blocks q_ii, b_ii do not affect the minimizer; they enter only when given.

    Args:
        s_i: input field (None when N_i = 0)
        s_o: output field
        params: layer parameters
        q_ii, b_ii: optional N_i x N_i input-only blocks

    Returns:
        Energy value
    """
    _check_channels(s_o, params.n_out, "output field")
    b_o, q_o = params.b_o, params.q_o
    so = s_o.data.reshape(-1, params.n_out)
    dso_r, dso_c = _edge_differences(s_o.data)

    total = np.einsum("ni,ij,nj->", so, q_o, so)
    total += np.einsum("ni,ij,nj->", dso_r, b_o, dso_r)
    total += np.einsum("ni,ij,nj->", dso_c, b_o, dso_c)

    if s_i is not None and params.n_in > 0:
        _check_channels(s_i, params.n_in, "input field")
        if s_i.grid != s_o.grid:
            raise ShapeMismatchError(f"input grid {s_i.grid} differs from output grid {s_o.grid}")
        si = s_i.data.reshape(-1, params.n_in)
        dsi_r, dsi_c = _edge_differences(s_i.data)
        total += 2.0 * np.einsum("ni,ij,nj->", so, params.q_i, si)
        total += 2.0 * np.einsum("ni,ij,nj->", dso_r, params.b_i, dsi_r)
        total += 2.0 * np.einsum("ni,ij,nj->", dso_c, params.b_i, dsi_c)
        if q_ii is not None:
            total += np.einsum("ni,ij,nj->", si, q_ii, si)
        if b_ii is not None:
            total += np.einsum("ni,ij,nj->", dsi_r, b_ii, dsi_r)
            total += np.einsum("ni,ij,nj->", dsi_c, b_ii, dsi_c)
    return float(total)


def green_function(lam: float, height: int, width: int) -> Field:
    """
    Green's function of Delta - lam on the lattice.

    Returns:
        Single-channel field -z where Delta z - lam z = impulse at the center
        cell, so the peak is positive
    """
    impulse = Field.zeros(height, width, 1)
    impulse.data[height // 2, width // 2, 0] = 1.0
    response = helmholtz_solve(impulse, lam)
    return Field(-response.data, check=False)


def stationarity_residual(s_i: Field, s_o: Field, params: VrdParams) -> float:
    """Max-norm residual of B^o Delta s^o - Q^o s^o - s^p."""
    s_p = assemble_sp(s_i, params)
    lhs = mix_channels(params.b_o, laplacian_apply(s_o)).data - mix_channels(params.q_o, s_o).data
    return float(np.max(np.abs(lhs - s_p.data)))


def green_support_radius(green: Field, fraction: float = 1e-3) -> float:
    """
    Largest distance from the peak cell at which the response is still at
    least fraction * peak.
    """
    values = green.channel(0)
    peak_index = np.unravel_index(np.argmax(values), values.shape)
    peak = values[peak_index]
    rows, cols = np.nonzero(values >= fraction * peak)
    return float(np.max(np.hypot(rows - peak_index[0], cols - peak_index[1])))
