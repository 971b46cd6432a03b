"""
Lattice Module for VRD

This module holds the substrate every other module computes on:
1. The Field type (H x W x C lattice of float64 samples, unit grid spacing)
2. The 5-point Laplacian with homogeneous Dirichlet boundary
3. 2-D type-I discrete sine transforms (FFT-based, plus a direct-summation form)
4. Channel inner products
"""

from typing import Optional, Tuple

import numpy as np
import scipy.fft

from .exceptions import FieldError, ShapeMismatchError


class Field:
    """
    Dense multi-channel field on a regular 2-D lattice.

    Samples are stored as a C-contiguous float64 array of shape
    (height, width, channels), i.e. row-major with the channel innermost.
    """

    __slots__ = ("data",)

    def __init__(self, data, check: bool = True):
        """
        Initialize the Field.

        Args:
            data: array-like of shape (height, width, channels); a 2-D array is
                treated as a single-channel field
            check: validate shape and finiteness
        """
        array = np.ascontiguousarray(data, dtype=np.float64)
        if array.ndim == 2:
            array = array[:, :, np.newaxis]
        if check:
            if array.ndim != 3:
                raise FieldError(f"field data must be 3-D (height, width, channels), got {array.ndim}-D")
            if min(array.shape) < 1:
                raise FieldError(f"field dimensions must be positive, got {array.shape}")
            if not np.all(np.isfinite(array)):
                raise FieldError("field contains non-finite values")
        self.data = array

    @classmethod
    def zeros(cls, height: int, width: int, channels: int = 1) -> "Field":
        """Create an all-zero field."""
        return cls(np.zeros((height, width, channels)), check=False)

    @classmethod
    def random(cls, height: int, width: int, channels: int = 1,
               rng: Optional[np.random.Generator] = None) -> "Field":
        """Create a field of i.i.d. standard normal samples."""
        rng = rng if rng is not None else np.random.default_rng()
        return cls(rng.standard_normal((height, width, channels)), check=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    @property
    def grid(self) -> Tuple[int, int]:
        return self.data.shape[:2]

    def channel(self, k: int) -> np.ndarray:
        """Return channel k as an (height, width) view."""
        return self.data[:, :, k]

    def copy(self) -> "Field":
        return Field(self.data.copy(), check=False)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))

    def __repr__(self):
        return f"Field(height={self.height}, width={self.width}, channels={self.channels})"


def check_finite(f: Field) -> Field:
    if not np.all(np.isfinite(f.data)):
        raise FieldError("field contains non-finite values")
    return f


def laplacian_apply(f: Field) -> Field:
    """
    Apply the 5-point Laplacian to every channel.

    Out-of-range neighbors are treated as zero (homogeneous Dirichlet boundary).

    Args:
        f: input field

    Returns:
        Field of the same shape holding Delta f
    """
    check_finite(f)
    a = f.data
    out = -4.0 * a
    out[1:] += a[:-1]
    out[:-1] += a[1:]
    out[:, 1:] += a[:, :-1]
    out[:, :-1] += a[:, 1:]
    return Field(out, check=False)


def laplacian_eigenvalues(height: int, width: int) -> np.ndarray:
    """
    Eigenvalues of the Dirichlet 5-point Laplacian in the DST-I basis.

    Returns:
        (height, width) array with entry (k, l) equal to
        2cos(pi(k+1)/(H+1)) + 2cos(pi(l+1)/(W+1)) - 4
    """
    mu_rows = 2.0 * np.cos(np.pi * np.arange(1, height + 1) / (height + 1)) - 2.0
    mu_cols = 2.0 * np.cos(np.pi * np.arange(1, width + 1) / (width + 1)) - 2.0
    return mu_rows[:, np.newaxis] + mu_cols[np.newaxis, :]


def _dst1_axis(a: np.ndarray, axis: int) -> np.ndarray:
    # Kernel sum_n a[n] sin(pi(n+1)(k+1)/(N+1)); scipy's type-I DST carries a factor 2
    if a.shape[axis] == 1:
        return a.copy()
    return 0.5 * scipy.fft.dst(a, type=1, axis=axis)


def dst1_2d(f: Field, direction: str = "forward") -> Field:
    """
    2-D type-I discrete sine transform, applied independently per channel.

    The forward transform is
        F(k,l) = sum_{i,j} f(i,j) sin(pi(i+1)(k+1)/(H+1)) sin(pi(j+1)(l+1)/(W+1))
    and the inverse is the same kernel scaled by 4/((H+1)(W+1)).

    Args:
        f: input field
        direction: "forward" or "inverse"

    Returns:
        Transformed field of the same shape
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    out = _dst1_axis(_dst1_axis(f.data, 0), 1)
    if direction == "inverse":
        out *= 4.0 / ((f.height + 1) * (f.width + 1))
    return Field(out, check=False)


def inner_product(f: Field, g: Field, channel_f: int = 0, channel_g: int = 0) -> float:
    """
    Lattice inner product of one channel of f with one channel of g.

    Args:
        f, g: fields on the same grid
        channel_f: channel index in f
        channel_g: channel index in g

    Returns:
        sum over the lattice of f(i,j,channel_f) * g(i,j,channel_g)
    """
    if f.grid != g.grid:
        raise ShapeMismatchError(f"inner product of fields on grids {f.grid} and {g.grid}")
    return float(np.vdot(f.channel(channel_f), g.channel(channel_g)))


def channel_gram(f: Field, g: Field) -> np.ndarray:
    """
    All channel inner products at once.

    Returns:
        (f.channels, g.channels) matrix M with M[i, j] = <f_i, g_j>
    """
    if f.grid != g.grid:
        raise ShapeMismatchError(f"inner product of fields on grids {f.grid} and {g.grid}")
    return np.einsum("hwi,hwj->ij", f.data, g.data)


def mix_channels(matrix: np.ndarray, f: Field) -> Field:
    """
    Apply a constant linear map across channels at every lattice point.

    Args:
        matrix: (out_channels, f.channels) matrix
        f: input field

    Returns:
        Field with out(x) = matrix @ f(x)
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != f.channels:
        raise ShapeMismatchError(
            f"cannot apply a {matrix.shape} channel map to a field with {f.channels} channels")
    return Field(f.data @ matrix.T, check=False)
