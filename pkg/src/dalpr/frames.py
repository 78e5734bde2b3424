"""Overcomplete block-DCT frame and l1 shrinkage.

The analysis operator cuts the image into overlapping ``block x block``
patches whose origins step by ``step`` (the last origin is clamped to the
image edge) and applies an orthonormal 2-D DCT-II to each.  Synthesis
inverts every block, overlap-adds and divides by the per-pixel coverage,
which makes it an exact left inverse of analysis.

Coefficients are laid out block by block in row-major block order, each
block contributing ``block**2`` coefficients in row-major order, so the DC
term of block ``b`` sits at index ``b * block**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import dctn, idctn


def _origins(n: int, block: int, step: int) -> np.ndarray:
    starts = list(range(0, n - block + 1, step))
    if starts[-1] != n - block:
        starts.append(n - block)
    return np.asarray(starts, dtype=np.intp)


@dataclass(frozen=True)
class FrameOperator:
    """Analysis/synthesis pair for real images of a fixed size.

    Parameters
    ----------
    image_rows, image_cols : int
        Image size the frame is built for.
    block : int
        Side of the square DCT block.
    step : int
        Stride between neighbouring block origins; ``step < block`` gives a
        redundant frame.
    dc_exempt : bool
        If true, :func:`soft_threshold` leaves each block's DC coefficient
        untouched.
    """

    image_rows: int
    image_cols: int
    block: int = 8
    step: int = 4
    dc_exempt: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.step <= self.block <= min(self.image_rows, self.image_cols):
            raise ValueError(
                f"need 1 <= step ({self.step}) <= block ({self.block}) "
                f"<= min(image dims) ({min(self.image_rows, self.image_cols)})"
            )

    @cached_property
    def row_origins(self) -> np.ndarray:
        return _origins(self.image_rows, self.block, self.step)

    @cached_property
    def col_origins(self) -> np.ndarray:
        return _origins(self.image_cols, self.block, self.step)

    @property
    def num_blocks(self) -> int:
        return len(self.row_origins) * len(self.col_origins)

    @property
    def num_coefficients(self) -> int:
        return self.num_blocks * self.block**2

    @cached_property
    def _index(self) -> tuple[np.ndarray, np.ndarray]:
        # (nbr, nbc, B, B) row/col gather indices
        off = np.arange(self.block)
        ri = self.row_origins[:, None, None, None] + off[None, None, :, None]
        ci = self.col_origins[None, :, None, None] + off[None, None, None, :]
        ri, ci = np.broadcast_arrays(ri, ci)
        return ri, ci

    @cached_property
    def coverage(self) -> np.ndarray:
        cov = np.zeros((self.image_rows, self.image_cols))
        ri, ci = self._index
        np.add.at(cov, (ri, ci), 1.0)
        return cov

    @cached_property
    def dc_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_coefficients, dtype=bool)
        mask[:: self.block**2] = True
        return mask

    def analyze(self, x: np.ndarray) -> "SpectrumVector":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.image_rows, self.image_cols):
            raise ValueError(
                f"image shape {x.shape} does not match frame ({self.image_rows}, {self.image_cols})"
            )
        ri, ci = self._index
        coeffs = dctn(x[ri, ci], axes=(-2, -1), norm="ortho")
        return SpectrumVector(coeffs.reshape(-1), self)

    def synthesize(self, theta: "SpectrumVector") -> np.ndarray:
        coeffs = np.asarray(theta.coefficients, dtype=np.float64)
        if coeffs.shape != (self.num_coefficients,):
            raise ValueError(
                f"spectrum length {coeffs.size} does not match frame size {self.num_coefficients}"
            )
        ri, ci = self._index
        blocks = idctn(coeffs.reshape(ri.shape), axes=(-2, -1), norm="ortho")
        out = np.zeros((self.image_rows, self.image_cols))
        # np.add.at accumulates in index order, so the result is deterministic
        np.add.at(out, (ri, ci), blocks)
        return out / self.coverage


@dataclass(frozen=True, eq=False)
class SpectrumVector:
    """Frame coefficients together with the frame that produced them."""

    coefficients: np.ndarray
    frame: FrameOperator

    def __len__(self) -> int:
        return len(self.coefficients)

    def with_coefficients(self, coefficients: np.ndarray) -> "SpectrumVector":
        return SpectrumVector(coefficients, self.frame)


def analyze(x: np.ndarray, frame: FrameOperator) -> SpectrumVector:
    return frame.analyze(x)


def synthesize(theta: SpectrumVector, frame: FrameOperator) -> np.ndarray:
    return frame.synthesize(theta)


def shrink(u: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise soft threshold ``sign(u) * max(|u| - tau, 0)``."""
    if tau < 0:
        raise ValueError(f"threshold must be non-negative, got {tau}")
    u = np.asarray(u, dtype=np.float64)
    return np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)


def soft_threshold(theta: SpectrumVector, tau: float) -> SpectrumVector:
    """Soft-threshold a spectrum, skipping DC terms if the frame says so."""
    out = shrink(theta.coefficients, tau)
    if theta.frame.dc_exempt:
        mask = theta.frame.dc_mask
        out[mask] = theta.coefficients[mask]
    return theta.with_coefficients(out)
