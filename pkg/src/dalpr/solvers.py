"""Inner solvers of the augmented-Lagrangian iteration.

* :func:`fit_observation_plane` -- pixelwise fit of a sensor-plane field to
  its intensity observation (the ``G`` operator),
* :func:`lagrange_update` -- dual ascent on the per-plane multipliers,
* :func:`object_update` -- the regularized least-squares object estimate,
  solved exactly per spatial frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Sequence, Union

import numpy as np

from dalpr.field import WaveField
from dalpr.propagation import TransferFunction, fft2u, ifft2u

PerPlane = Union[float, Sequence[float]]


@dataclass(frozen=True)
class AlgoParams:
    """Weights and step sizes of the D-AL / AL iterations.

    Per-plane quantities (``sigma_r``, ``gamma_r``, ``alpha_r``) are stored
    as tuples; a scalar ``gamma_r`` or ``alpha_r`` is broadcast over the
    planes implied by ``sigma_r``.
    """

    sigma_r: tuple[float, ...]
    gamma_r: tuple[float, ...]
    alpha_r: tuple[float, ...]
    tau_a: float = 0.01
    tau_phi: float = 0.01
    gamma_a: float = 1.0
    gamma_phi: float = 1.0
    xi: float = 1.0
    iterations: int = 50

    def __post_init__(self) -> None:
        sigma = tuple(float(s) for s in np.atleast_1d(self.sigma_r))
        k = len(sigma)
        per_plane = {}
        for name in ("gamma_r", "alpha_r"):
            vals = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if vals.size == 1:
                vals = np.repeat(vals, k)
            if vals.size != k:
                raise ValueError(f"{name} has {vals.size} entries for {k} planes")
            per_plane[name] = tuple(float(v) for v in vals)
        object.__setattr__(self, "sigma_r", sigma)
        for name, vals in per_plane.items():
            object.__setattr__(self, name, vals)

        if k < 1:
            raise ValueError("at least one plane is required")
        if any(not s > 0 for s in self.sigma_r):
            raise ValueError("sigma_r must be strictly positive")
        if any(not g > 0 for g in self.gamma_r):
            raise ValueError("gamma_r must be strictly positive")
        if any(not a >= 0 for a in self.alpha_r):
            raise ValueError("alpha_r must be non-negative")
        if self.tau_a < 0 or self.tau_phi < 0:
            raise ValueError("tau_a and tau_phi must be non-negative")
        for name in ("gamma_a", "gamma_phi", "xi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    @classmethod
    def default(cls, sigmas: PerPlane, **overrides) -> "AlgoParams":
        """Unit-order defaults with ``gamma_r = 1 / sigma_r`` and ``alpha_r = 1``."""
        sigma = np.atleast_1d(np.asarray(sigmas, dtype=np.float64))
        kwargs = dict(sigma_r=tuple(sigma), gamma_r=tuple(1.0 / sigma), alpha_r=1.0)
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def num_planes(self) -> int:
        return len(self.sigma_r)

    @property
    def plane_weights(self) -> np.ndarray:
        """``1 / (sigma_r**2 * gamma_r)`` per plane."""
        return 1.0 / (np.square(self.sigma_r) * np.asarray(self.gamma_r))

    def updated(self, **changes) -> "AlgoParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _pixel_objective(a, o, r, gamma):
    return 0.5 * (o - a * a) ** 2 + (a - r) ** 2 / gamma


def _largest_real_root(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Largest real root of the depressed cubic ``t**3 + P t + Q = 0``."""
    D = (Q / 2) ** 2 + (P / 3) ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        # one real root (Cardano); the sign choice avoids cancellation
        A = -np.sign(Q) * np.cbrt(np.abs(Q) / 2 + np.sqrt(np.maximum(D, 0.0)))
        A = np.where(Q == 0, np.cbrt(np.sqrt(np.maximum(D, 0.0))), A)
        cardano = np.where(A != 0, A - P / (3 * A), 0.0)
        # three real roots (trigonometric form), k = 0 branch is the largest
        m = 2 * np.sqrt(np.maximum(-P / 3, 0.0))
        c = np.where(m > 0, 3 * Q / (P * m), 0.0)
        trig = m * np.cos(np.arccos(np.clip(c, -1.0, 1.0)) / 3)
    return np.where(D > 0, cardano, trig)


def fit_amplitude(o: np.ndarray, r: np.ndarray, gamma) -> np.ndarray:
    """Minimize ``0.5*(o - a**2)**2 + (a - r)**2 / gamma`` over ``a >= 0``.

    Stationary points solve ``gamma*a**3 + (1 - gamma*o)*a - r = 0``.  Since
    the roots sum to zero and their product is ``r/gamma >= 0``, every
    non-negative root other than the largest one is zero, so comparing the
    largest root against ``a = 0`` covers all candidates.  Ties go to the
    smaller amplitude.
    """
    o, r, gamma = np.broadcast_arrays(
        np.asarray(o, dtype=np.float64),
        np.asarray(r, dtype=np.float64),
        np.asarray(gamma, dtype=np.float64),
    )
    if not (np.all(np.isfinite(o)) and np.all(np.isfinite(r)) and np.all(np.isfinite(gamma))):
        raise ValueError("observation fit inputs must be finite")
    if np.any(gamma <= 0):
        raise ValueError("gamma must be strictly positive")
    if np.any(r < 0):
        raise ValueError("magnitude |p| must be non-negative")

    lin = 1.0 - gamma * o
    a = _largest_real_root(lin / gamma, -r / gamma)
    # two Newton steps tidy up the closed form
    for _ in range(2):
        f = gamma * a**3 + lin * a - r
        df = 3 * gamma * a**2 + lin
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(df) > 1e-12 * (1 + np.abs(f)), f / df, 0.0)
        a = a - step
    a = np.maximum(a, 0.0)
    keep_zero = _pixel_objective(0.0, o, r, gamma) <= _pixel_objective(a, o, r, gamma)
    return np.where(keep_zero, 0.0, a)


def fit_observation_pixel(o: float, p: complex, gamma: float) -> complex:
    """Per-pixel ``argmin_u 0.5*(o - |u|**2)**2 + |u - p|**2 / gamma``.

    The minimizer lies along ``p``; for ``p == 0`` the phase is taken as 0.
    """
    p = complex(p)
    if not np.isfinite(p):
        raise ValueError("observation fit inputs must be finite")
    a = float(fit_amplitude(o, abs(p), gamma))
    # exp(j*angle) keeps unit modulus even for subnormal p, where p/|p| may not
    direction = np.exp(1j * np.angle(p)) if p != 0 else 1.0
    return complex(a * direction)


def fit_observation_plane(
    o_r: np.ndarray, u_half: WaveField, lambda_r: WaveField, gamma: float
) -> WaveField:
    """Apply :func:`fit_observation_pixel` to every pixel with ``p = u_half - lambda_r``.

    Pixels where ``p`` vanishes keep the phase of ``u_half`` (or 0 if that is
    zero too).
    """
    o_r = np.asarray(o_r, dtype=np.float64)
    if o_r.shape != u_half.shape or lambda_r.shape != u_half.shape:
        raise ValueError(
            f"dimension mismatch: o {o_r.shape}, u_half {u_half.shape}, lambda {lambda_r.shape}"
        )
    p = u_half.samples - lambda_r.samples
    r = np.abs(p)
    a = fit_amplitude(o_r, r, gamma)
    h = u_half.samples
    habs = np.abs(h)
    direction = np.exp(1j * np.angle(np.where(r > 0, p, np.where(habs > 0, h, 1.0))))
    return u_half.with_samples(a * direction)


def lagrange_update(
    lambda_r: WaveField, u_next: WaveField, u_half: WaveField, alpha: float
) -> WaveField:
    if not (lambda_r.shape == u_next.shape == u_half.shape):
        raise ValueError("dimension mismatch in multiplier update")
    return lambda_r.with_samples(lambda_r.samples + alpha * (u_next.samples - u_half.samples))


def object_update_denominator(transfers: Sequence[TransferFunction], params: AlgoParams) -> np.ndarray:
    w = params.plane_weights
    denom = np.full(transfers[0].shape, 1.0 / params.xi)
    for wr, tf in zip(w, transfers):
        denom = denom + wr * np.abs(tf.values) ** 2
    return denom


def object_update(
    planes: Sequence[WaveField],
    lambdas: Sequence[WaveField],
    v0: WaveField,
    transfers: Sequence[TransferFunction],
    params: AlgoParams,
) -> WaveField:
    """Solve ``(sum_r w_r A_r^H A_r + I/xi) u0 = sum_r w_r A_r^H (u_r + Lambda_r) + v0/xi``.

    ``w_r = 1 / (sigma_r**2 gamma_r)``.  Every ``A_r`` is diagonal in the
    unitary DFT basis, so the system decouples into one scalar division per
    frequency.
    """
    k = len(planes)
    if k < 1:
        raise ValueError("at least one plane is required")
    if not (len(lambdas) == len(transfers) == params.num_planes == k):
        raise ValueError(
            f"length mismatch: {k} planes, {len(lambdas)} multipliers, "
            f"{len(transfers)} transfer functions, {params.num_planes} parameter planes"
        )
    shape = v0.shape
    for obj in (*planes, *lambdas, *transfers):
        if obj.shape != shape:
            raise ValueError(f"dimension mismatch: {obj.shape} vs {shape}")

    w = params.plane_weights
    numer = fft2u(v0.samples) / params.xi
    for wr, u, lam, tf in zip(w, planes, lambdas, transfers):
        numer = numer + wr * np.conj(tf.values) * fft2u(u.samples + lam.samples)
    denom = object_update_denominator(transfers, params)
    return v0.with_samples(ifft2u(numer / denom))
