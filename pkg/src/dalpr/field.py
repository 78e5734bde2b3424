"""Sampled complex wavefields, optical geometry, test objects and error metrics.

Fields are stored as ``(rows, cols)`` complex128 arrays on a square pixel
grid of side ``pitch`` (meters).  The on-disk format is::

    b"WF01" | rows:u32 | cols:u32 | pitch:f64 | rows*cols x (re:f64, im:f64)

all little-endian, samples row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

PathLike = Union[str, Path]

FIELD_MAGIC = b"WF01"
_FIELD_HEADER = struct.Struct("<4sIId")


class FieldFormatError(ValueError):
    """Raised when a field or observation file is malformed."""


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "grids") -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"dimension mismatch between {what}: {np.shape(a)} vs {np.shape(b)}")


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex field sampled on a regular ``rows x cols`` grid.

    The sample array is copied on construction and made read-only, so a
    ``WaveField`` can be shared freely.
    """

    samples: np.ndarray
    pitch: float

    def __post_init__(self) -> None:
        arr = np.array(self.samples, dtype=np.complex128, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"samples must be a non-empty 2-D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field samples must be finite")
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def rows(self) -> int:
        return self.samples.shape[0]

    @property
    def cols(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape

    def with_samples(self, samples: np.ndarray) -> "WaveField":
        """Return a field on the same grid holding ``samples``."""
        return WaveField(samples, self.pitch)


@dataclass(frozen=True)
class OpticalSetup:
    """Wavelength, sampling and measurement-plane geometry.

    Plane ``r`` (1-based) sits at ``z1 + (r - 1) * delta_z`` from the object.
    """

    wavelength: float
    pitch: float
    z1: float
    delta_z: float
    num_planes: int
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        if not self.delta_z >= 0:
            raise ValueError("delta_z must be non-negative")
        if not self.z1 >= 0:
            raise ValueError("z1 must be non-negative")
        if self.num_planes < 1:
            raise ValueError("num_planes must be at least 1")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def focal_distance(self) -> float:
        """In-focus distance ``z_f = rows * pitch**2 / wavelength``."""
        return self.rows * self.pitch**2 / self.wavelength

    def plane_distance(self, r: int) -> float:
        if not 1 <= r <= self.num_planes:
            raise IndexError(f"plane index {r} outside 1..{self.num_planes}")
        return self.z1 + (r - 1) * self.delta_z

    @property
    def distances(self) -> tuple[float, ...]:
        return tuple(self.plane_distance(r) for r in range(1, self.num_planes + 1))


def make_chessboard_object(rows: int, cols: int, tile: int, pitch: float) -> WaveField:
    """Unit-amplitude chessboard phase object with phases of +-pi/2.

    The binary pattern ``w`` is 1 on the top-left tile, and the field is
    ``exp(1j * pi * (w - 1/2))``.
    """
    if tile < 1:
        raise ValueError("tile must be at least 1")
    if rows % tile or cols % tile:
        raise ValueError(f"grid {rows}x{cols} is not divisible by tile {tile}")
    i = np.arange(rows)[:, None] // tile
    j = np.arange(cols)[None, :] // tile
    w = ((i + j) % 2 == 0).astype(np.float64)
    return WaveField(np.exp(1j * np.pi * (w - 0.5)), pitch)


def wrap_phase(x: np.ndarray) -> np.ndarray:
    """Map angles to the principal interval (-pi, pi]."""
    out = np.angle(np.exp(1j * np.asarray(x, dtype=np.float64)))
    return np.where(out <= -np.pi, np.pi, out)


def amplitude(field: WaveField) -> np.ndarray:
    return np.abs(field.samples)


def phase(field: WaveField) -> np.ndarray:
    """Principal-value phase in (-pi, pi]."""
    out = np.angle(field.samples)
    out[out <= -np.pi] = np.pi
    return out


def compose(a: np.ndarray, phi: np.ndarray, pitch: float) -> WaveField:
    """Build ``a * exp(1j * phi)`` from amplitude and phase grids."""
    a = np.asarray(a, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    _check_same_shape(a, phi, "amplitude and phase")
    if np.any(a < 0):
        raise ValueError("amplitude must be non-negative")
    return WaveField(a * np.exp(1j * phi), pitch)


def rmse(estimate: np.ndarray, reference: np.ndarray) -> float:
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_same_shape(estimate, reference)
    return float(np.sqrt(np.mean((estimate - reference) ** 2)))


def global_phase_offset(estimate: WaveField, reference: WaveField) -> float:
    """Constant phase that best rotates ``estimate`` onto ``reference``."""
    _check_same_shape(estimate.samples, reference.samples, "fields")
    return float(np.angle(np.vdot(estimate.samples, reference.samples)))


def rmse_phase_raw(estimate: WaveField, reference: WaveField) -> float:
    """Phase RMSE on wrapped differences, without global alignment."""
    _check_same_shape(estimate.samples, reference.samples, "fields")
    diff = wrap_phase(phase(estimate) - phase(reference))
    return float(np.sqrt(np.mean(diff**2)))


def rmse_phase_aligned(estimate: WaveField, reference: WaveField) -> tuple[float, float]:
    """Return ``(phase_rmse, amplitude_rmse)`` after removing a global phase.

    Intensity data cannot determine a constant phase factor, so the estimate
    is first rotated by the angle of its inner product with the reference.
    """
    c = global_phase_offset(estimate, reference)
    rotated = estimate.with_samples(estimate.samples * np.exp(1j * c))
    return rmse_phase_raw(rotated, reference), rmse(amplitude(estimate), amplitude(reference))


def write_field(field: WaveField, path: PathLike) -> None:
    header = _FIELD_HEADER.pack(FIELD_MAGIC, field.rows, field.cols, field.pitch)
    payload = np.ascontiguousarray(field.samples, dtype="<c16").tobytes()
    Path(path).write_bytes(header + payload)


def read_field(path: PathLike) -> WaveField:
    data = Path(path).read_bytes()
    if len(data) < _FIELD_HEADER.size:
        raise FieldFormatError(f"{path}: file too short for a field header")
    magic, rows, cols, pitch = _FIELD_HEADER.unpack_from(data)
    if magic != FIELD_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}, expected {FIELD_MAGIC!r}")
    if rows < 1 or cols < 1:
        raise FieldFormatError(f"{path}: invalid dimensions {rows}x{cols}")
    expected = rows * cols * 16
    payload = data[_FIELD_HEADER.size :]
    if len(payload) < expected:
        raise FieldFormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FieldFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    samples = np.frombuffer(payload, dtype="<c16").reshape(rows, cols)
    try:
        return WaveField(samples, pitch)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: {exc}") from exc
