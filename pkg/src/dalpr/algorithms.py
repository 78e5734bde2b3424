"""Observation simulation and the SBMIR-FB, AL and D-AL reconstruction loops.

Observation stacks are stored as::

    b"OB01" | K:u32 | rows:u32 | cols:u32
    K x ( z_r:f64 | sigma_r:f64 | rows*cols x intensity:f64 )

little-endian, intensities row-major.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from dalpr.field import (
    FieldFormatError,
    OpticalSetup,
    PathLike,
    WaveField,
    amplitude,
    phase,
    rmse_phase_aligned,
)
from dalpr.frames import FrameOperator, soft_threshold
from dalpr.propagation import TransferFunction, make_transfer, propagate_adjoint, propagate_forward
from dalpr.solvers import AlgoParams, fit_observation_plane, lagrange_update, object_update

log = logging.getLogger(__name__)

OBS_MAGIC = b"OB01"
_OBS_HEADER = struct.Struct("<4sIII")
_PLANE_HEADER = struct.Struct("<dd")

Frames = tuple[FrameOperator, FrameOperator]


@dataclass(frozen=True, eq=False)
class ObservationStack:
    """``K`` intensity planes with their noise levels and distances."""

    planes: np.ndarray
    sigmas: tuple[float, ...]
    distances: tuple[float, ...]
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        planes = np.array(self.planes, dtype=np.float64, copy=True)
        if planes.ndim != 3 or planes.shape[0] < 1:
            raise ValueError(f"planes must have shape (K, rows, cols), got {planes.shape}")
        k = planes.shape[0]
        sigmas = tuple(float(s) for s in self.sigmas)
        distances = tuple(float(z) for z in self.distances)
        if len(sigmas) != k or len(distances) != k:
            raise ValueError(f"{k} planes but {len(sigmas)} sigmas and {len(distances)} distances")
        if any(s < 0 for s in sigmas):
            raise ValueError("noise levels must be non-negative")
        if any(b <= a for a, b in zip(distances, distances[1:])):
            raise ValueError("plane distances must be strictly increasing")
        planes.flags.writeable = False
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "distances", distances)

    @property
    def num_planes(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    phase_rmse: Optional[float]
    amplitude_rmse: Optional[float]
    objective: float


@dataclass
class ReconstructionState:
    """Current iterate of a reconstruction and its per-iteration history.

    ``v0`` is the splitting field computed from the final ``u0``: the
    sparse synthesis for D-AL, ``u0`` itself for AL and SBMIR-FB.  It is the
    reported reconstruction (:attr:`estimate`) and the field the trace
    metrics are evaluated on.
    """

    u0: WaveField
    lambdas: list[WaveField]
    v0: WaveField
    trace: list[TraceRecord] = field(default_factory=list)

    @property
    def estimate(self) -> WaveField:
        return self.v0

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


def simulate_observations(
    u0: WaveField, setup: OpticalSetup, sigma: float, seed: int
) -> ObservationStack:
    """Noisy intensities ``|A_r u0|**2 + eps_r`` at every plane of ``setup``.

    ``eps_r`` is i.i.d. N(0, sigma**2) from ``numpy.random.default_rng(seed)``,
    drawn plane by plane.  Observations may go negative.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if u0.shape != (setup.rows, setup.cols):
        raise ValueError(f"object {u0.shape} does not match setup grid {(setup.rows, setup.cols)}")
    if not np.isclose(u0.pitch, setup.pitch, rtol=1e-12, atol=0):
        raise ValueError("object pitch differs from setup pitch")
    rng = np.random.default_rng(seed)
    planes = []
    for z in setup.distances:
        ur = propagate_forward(u0, make_transfer(setup, z))
        planes.append(np.abs(ur.samples) ** 2 + sigma * rng.standard_normal(u0.shape))
    return ObservationStack(
        np.stack(planes), (sigma,) * setup.num_planes, setup.distances, seed
    )


def make_initial_guess(
    shape: tuple[int, int], pitch: float, phase_std: float = 0.0, smoothing: float = 0.0, seed: int = 0
) -> WaveField:
    """Unit-amplitude starting field with an optional random phase.

    ``phase_std = 0`` gives the flat field.  Otherwise the phase is seeded
    Gaussian noise, optionally smoothed by a periodic Gaussian kernel of
    width ``smoothing`` pixels, rescaled to standard deviation ``phase_std``.
    """
    if phase_std < 0 or smoothing < 0:
        raise ValueError("phase_std and smoothing must be non-negative")
    if phase_std == 0:
        return WaveField(np.ones(shape, dtype=np.complex128), pitch)
    noise = np.random.default_rng(seed).standard_normal(shape)
    if smoothing > 0:
        noise = gaussian_filter(noise, smoothing, mode="wrap")
    noise *= phase_std / noise.std()
    return WaveField(np.exp(1j * noise), pitch)


def write_observations(obs: ObservationStack, path: PathLike) -> None:
    rows, cols = obs.shape
    parts = [_OBS_HEADER.pack(OBS_MAGIC, obs.num_planes, rows, cols)]
    for z, s, plane in zip(obs.distances, obs.sigmas, obs.planes):
        parts.append(_PLANE_HEADER.pack(z, s))
        parts.append(np.ascontiguousarray(plane, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_observations(path: PathLike) -> ObservationStack:
    data = Path(path).read_bytes()
    if len(data) < _OBS_HEADER.size:
        raise FieldFormatError(f"{path}: file too short for an observation header")
    magic, k, rows, cols = _OBS_HEADER.unpack_from(data)
    if magic != OBS_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}, expected {OBS_MAGIC!r}")
    if k < 1 or rows < 1 or cols < 1:
        raise FieldFormatError(f"{path}: invalid header K={k}, {rows}x{cols}")
    plane_bytes = _PLANE_HEADER.size + rows * cols * 8
    expected = _OBS_HEADER.size + k * plane_bytes
    if len(data) != expected:
        raise FieldFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    distances, sigmas, planes = [], [], []
    offset = _OBS_HEADER.size
    for _ in range(k):
        z, s = _PLANE_HEADER.unpack_from(data, offset)
        offset += _PLANE_HEADER.size
        planes.append(np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols))
        offset += rows * cols * 8
        distances.append(z)
        sigmas.append(s)
    try:
        return ObservationStack(np.stack(planes), tuple(sigmas), tuple(distances))
    except ValueError as exc:
        raise FieldFormatError(f"{path}: {exc}") from exc


def _transfers(obs: ObservationStack, setup: OpticalSetup) -> list[TransferFunction]:
    if obs.shape != (setup.rows, setup.cols):
        raise ValueError(f"observations {obs.shape} do not match setup grid {(setup.rows, setup.cols)}")
    return [make_transfer(setup, z) for z in obs.distances]


def _check_init(init: WaveField, obs: ObservationStack) -> None:
    if init.shape != obs.shape:
        raise ValueError(f"initial field {init.shape} does not match observations {obs.shape}")


def _check_params(params: AlgoParams, obs: ObservationStack) -> None:
    if params.num_planes != obs.num_planes:
        raise ValueError(f"parameters cover {params.num_planes} planes, observations have {obs.num_planes}")


def _objective(
    u0: WaveField,
    obs: ObservationStack,
    transfers: Sequence[TransferFunction],
    sigma_r: Sequence[float],
    tau_a: float = 0.0,
    tau_phi: float = 0.0,
    frames: Optional[Frames] = None,
) -> float:
    total = 0.0
    for o, tf, s in zip(obs.planes, transfers, sigma_r):
        ur = propagate_forward(u0, tf).samples
        total += np.sum((o - np.abs(ur) ** 2) ** 2) / (2 * s**2)
    if frames is not None:
        frame_a, frame_phi = frames
        if tau_a:
            total += tau_a * np.sum(np.abs(frame_a.analyze(amplitude(u0)).coefficients))
        if tau_phi:
            total += tau_phi * np.sum(np.abs(frame_phi.analyze(phase(u0)).coefficients))
    return float(total)


def evaluate_objective(
    state: ReconstructionState,
    obs: ObservationStack,
    params: AlgoParams,
    frames: Optional[Frames],
    setup: OpticalSetup,
) -> float:
    """Penalized likelihood criterion at the state's reported estimate.

    ``sum_r ||o_r - |A_r u0|**2||**2 / (2 sigma_r**2)`` plus
    ``tau_a ||Phi_a a0||_1 + tau_phi ||Phi_phi phi0||_1`` when frames are given.
    """
    _check_init(state.estimate, obs)
    _check_params(params, obs)
    return _objective(
        state.estimate, obs, _transfers(obs, setup), params.sigma_r, params.tau_a, params.tau_phi, frames
    )


class _Recorder:
    """Appends trace records; RMSE columns only when a ground truth is known."""

    def __init__(self, obs, transfers, sigma_r, truth, tau_a=0.0, tau_phi=0.0, frames=None):
        self.obs = obs
        self.transfers = transfers
        self.sigma_r = sigma_r
        self.truth = truth
        self.tau_a = tau_a
        self.tau_phi = tau_phi
        self.frames = frames

    def record(self, trace: list[TraceRecord], iteration: int, u0: WaveField) -> None:
        if self.truth is not None:
            ph, am = rmse_phase_aligned(u0, self.truth)
        else:
            ph = am = None
        obj = _objective(u0, self.obs, self.transfers, self.sigma_r, self.tau_a, self.tau_phi, self.frames)
        trace.append(TraceRecord(iteration, ph, am, obj))
        log.debug("iter %d phase_rmse=%s amp_rmse=%s objective=%.6g", iteration, ph, am, obj)


def _zeros_like(u: WaveField) -> WaveField:
    return u.with_samples(np.zeros(u.shape, dtype=np.complex128))


def run_sbmir_fb(
    obs: ObservationStack,
    setup: OpticalSetup,
    init: WaveField,
    iterations: int,
    truth: Optional[WaveField] = None,
) -> ReconstructionState:
    """Multi-plane magnitude replacement with averaged back-propagation.

    Each iteration propagates the object to every plane, replaces the
    magnitude by ``sqrt(max(o_r, 0))``, back-propagates, and averages the
    ``K`` object estimates.
    """
    _check_init(init, obs)
    transfers = _transfers(obs, setup)
    sigma = tuple(s if s > 0 else 1.0 for s in obs.sigmas)
    rec = _Recorder(obs, transfers, sigma, truth)
    magnitudes = np.sqrt(np.maximum(obs.planes, 0.0))
    u0 = init
    trace: list[TraceRecord] = []
    rec.record(trace, 0, u0)
    for t in range(1, iterations + 1):
        acc = np.zeros(u0.shape, dtype=np.complex128)
        for mag, tf in zip(magnitudes, transfers):
            ur = propagate_forward(u0, tf).samples
            absu = np.abs(ur)
            with np.errstate(divide="ignore", invalid="ignore"):
                direction = np.where(absu > 0, ur / absu, 1.0)
            acc += propagate_adjoint(u0.with_samples(mag * direction), tf).samples
        u0 = u0.with_samples(acc / len(transfers))
        rec.record(trace, t, u0)
    return ReconstructionState(u0, [], u0, trace)


def _al_iterations(
    obs: ObservationStack,
    transfers: Sequence[TransferFunction],
    u0: WaveField,
    lambdas: list[WaveField],
    params: AlgoParams,
    iterations: int,
    rec: _Recorder,
    trace: list[TraceRecord],
    start: int,
    frames: Optional[Frames],
) -> tuple[WaveField, list[WaveField], WaveField]:
    def splitting(u: WaveField) -> WaveField:
        return u if frames is None else sparse_object_estimate(u, frames, params)

    v0 = splitting(u0)
    for t in range(start + 1, start + iterations + 1):
        planes, new_lambdas = [], []
        for o, tf, lam, gamma, alpha in zip(obs.planes, transfers, lambdas, params.gamma_r, params.alpha_r):
            u_half = propagate_forward(v0, tf)
            u_next = fit_observation_plane(o, u_half, lam, gamma)
            planes.append(u_next)
            new_lambdas.append(lagrange_update(lam, u_next, u_half, alpha))
        # the object update uses the multipliers from before this iteration's ascent step
        u0 = object_update(planes, lambdas, v0, transfers, params)
        lambdas = new_lambdas
        # v0 for the next iteration doubles as this iteration's reported estimate
        v0 = splitting(u0)
        rec.record(trace, t, v0)
    return u0, lambdas, v0


def sparse_object_estimate(u0: WaveField, frames: Frames, params: AlgoParams) -> WaveField:
    """Shrink amplitude and phase spectra and recombine them into ``v0``."""
    frame_a, frame_phi = frames
    theta_a = soft_threshold(frame_a.analyze(amplitude(u0)), params.tau_a * params.gamma_a)
    theta_phi = soft_threshold(frame_phi.analyze(phase(u0)), params.tau_phi * params.gamma_phi)
    a = frame_a.synthesize(theta_a)
    phi = frame_phi.synthesize(theta_phi)
    return u0.with_samples(a * np.exp(1j * phi))


def _start_lambdas(init: WaveField, obs: ObservationStack, lambdas) -> list[WaveField]:
    if lambdas is None:
        return [_zeros_like(init) for _ in range(obs.num_planes)]
    lambdas = list(lambdas)
    if len(lambdas) != obs.num_planes or any(l.shape != init.shape for l in lambdas):
        raise ValueError("initial multipliers do not match the observation planes")
    return lambdas


def run_al(
    obs: ObservationStack,
    setup: OpticalSetup,
    init: WaveField,
    params: AlgoParams,
    truth: Optional[WaveField] = None,
    lambdas: Optional[Sequence[WaveField]] = None,
    frames: Optional[Frames] = None,
) -> ReconstructionState:
    """Augmented-Lagrangian phase retrieval without sparse filtering (``v0 = u0``).

    ``frames`` is used only to include the sparsity penalty in the traced
    objective; it does not change the iterates.
    """
    _check_init(init, obs)
    _check_params(params, obs)
    transfers = _transfers(obs, setup)
    rec = _Recorder(obs, transfers, params.sigma_r, truth, params.tau_a, params.tau_phi, frames)
    lam = _start_lambdas(init, obs, lambdas)
    trace: list[TraceRecord] = []
    rec.record(trace, 0, init)
    u0, lam, v0 = _al_iterations(obs, transfers, init, lam, params, params.iterations, rec, trace, 0, None)
    return ReconstructionState(u0, lam, v0, trace)


def run_dal(
    obs: ObservationStack,
    setup: OpticalSetup,
    init: WaveField,
    frames: Frames,
    params: AlgoParams,
    truth: Optional[WaveField] = None,
    lambdas: Optional[Sequence[WaveField]] = None,
) -> ReconstructionState:
    """Decoupled augmented-Lagrangian reconstruction.

    Per iteration: shrink the frame spectra of ``|u0|`` and ``angle(u0)``,
    synthesize ``v0``, propagate it to every plane, fit the observations,
    step the multipliers, and solve for the new ``u0``.  The returned
    estimate is the sparse synthesis of the final ``u0``.
    """
    _check_init(init, obs)
    _check_params(params, obs)
    frame_a, frame_phi = frames
    for fr in frames:
        if (fr.image_rows, fr.image_cols) != init.shape:
            raise ValueError(f"frame built for {(fr.image_rows, fr.image_cols)}, field is {init.shape}")
    transfers = _transfers(obs, setup)
    rec = _Recorder(obs, transfers, params.sigma_r, truth, params.tau_a, params.tau_phi, frames)
    lam = _start_lambdas(init, obs, lambdas)
    trace: list[TraceRecord] = []
    rec.record(trace, 0, sparse_object_estimate(init, frames, params))
    u0, lam, v0 = _al_iterations(
        obs, transfers, init, lam, params, params.iterations, rec, trace, 0, (frame_a, frame_phi)
    )
    return ReconstructionState(u0, lam, v0, trace)


def run_two_stage(
    obs: ObservationStack,
    setup: OpticalSetup,
    init: WaveField,
    frames: Frames,
    params: AlgoParams,
    warm_iterations: int,
    dal_iterations: int,
    truth: Optional[WaveField] = None,
    reset_multipliers: bool = False,
) -> ReconstructionState:
    """AL warm start followed by D-AL, with one continuous trace.

    Multipliers carry over from the AL stage unless ``reset_multipliers``.
    """
    warm = run_al(obs, setup, init, params.updated(iterations=warm_iterations), truth, frames=frames)
    lambdas = None if reset_multipliers else warm.lambdas
    final = run_dal(obs, setup, warm.u0, frames, params.updated(iterations=dal_iterations), truth, lambdas)
    trace = warm.trace + [
        TraceRecord(r.iteration + warm_iterations, r.phase_rmse, r.amplitude_rmse, r.objective)
        for r in final.trace[1:]
    ]
    return ReconstructionState(final.u0, final.lambdas, final.v0, trace)
