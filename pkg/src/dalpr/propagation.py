"""Angular-spectrum free-space propagation.

Each operator ``A_z`` is diagonal in the unitary 2-D DFT basis::

    H(f) = exp(1j * 2*pi/wavelength * z * sqrt(1 - (wavelength*fx)**2 - (wavelength*fy)**2))

with evanescent frequencies zeroed.  Below the evanescent cutoff
``|H| = 1`` and the operator is unitary, so ``A_z^H = A_{-z}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dalpr.field import OpticalSetup, WaveField


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Per-frequency multipliers of a propagation operator at ``distance``."""

    values: np.ndarray
    distance: float

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.complex128, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def make_transfer(setup: OpticalSetup, z: float) -> TransferFunction:
    if z < 0:
        raise ValueError(f"propagation distance must be non-negative, got {z}")
    lam = setup.wavelength
    fx = np.fft.fftfreq(setup.rows, d=setup.pitch)[:, None]
    fy = np.fft.fftfreq(setup.cols, d=setup.pitch)[None, :]
    arg = 1.0 - (lam * fx) ** 2 - (lam * fy) ** 2
    propagating = arg >= 0
    kz = 2 * np.pi / lam * np.sqrt(np.where(propagating, arg, 0.0))
    H = np.where(propagating, np.exp(1j * kz * z), 0.0)
    return TransferFunction(H, float(z))


def _check_dims(field: WaveField, tf: TransferFunction) -> None:
    if field.shape != tf.shape:
        raise ValueError(f"field {field.shape} and transfer function {tf.shape} differ in size")


def fft2u(x: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT."""
    return np.fft.fft2(x, norm="ortho")


def ifft2u(x: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(x, norm="ortho")


def propagate_forward(field: WaveField, tf: TransferFunction) -> WaveField:
    _check_dims(field, tf)
    return field.with_samples(ifft2u(tf.values * fft2u(field.samples)))


def propagate_adjoint(field: WaveField, tf: TransferFunction) -> WaveField:
    _check_dims(field, tf)
    return field.with_samples(ifft2u(np.conj(tf.values) * fft2u(field.samples)))
