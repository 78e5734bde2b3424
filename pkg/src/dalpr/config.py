"""Experiment configuration: flat ``key = value`` files.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Unknown or repeated keys are rejected with the offending line number.
``z1 = auto`` places the first plane at twice the in-focus distance and
``gamma_r = auto`` uses ``1 / sigma``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from dalpr.field import OpticalSetup
from dalpr.frames import FrameOperator
from dalpr.solvers import AlgoParams

ALGORITHMS = ("sbmir", "al", "dal")


class ConfigError(ValueError):
    """Invalid configuration text or values."""


@dataclass(frozen=True)
class ExperimentConfig:
    # optics and geometry
    wavelength: float = 532e-9
    pitch: float = 6.7e-6
    rows: int = 128
    cols: int = 128
    num_planes: int = 5
    z1: Optional[float] = None
    delta_z: float = 2e-3
    # object
    tile: int = 16
    object_file: str = ""
    # observations
    sigma: float = 0.05
    seed: int = 0
    # shared initial guess: unit amplitude; a non-zero std adds a seeded random phase.
    # init_file, when set, names a field file used as the starting point instead
    init_phase_std: float = 0.0
    init_smoothing: float = 0.0
    init_seed: int = 1000
    init_file: str = ""
    # algorithm and weights
    algorithm: str = "dal"
    iterations: int = 100
    warm_iterations: int = 50
    dal_iterations: int = 50
    reset_multipliers: bool = False
    tau_a: float = 0.01
    tau_phi: float = 0.01
    gamma_r: Optional[float] = None
    gamma_a: float = 1.0
    gamma_phi: float = 1.0
    xi: float = 1.0
    alpha_r: float = 1.0
    # frame
    frame_block: int = 8
    frame_step: int = 4
    dc_exempt: bool = True
    output_dir: str = "out"

    def __post_init__(self) -> None:
        positive = ("wavelength", "pitch", "rows", "cols", "num_planes", "tile", "gamma_a", "gamma_phi", "xi")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        non_negative = (
            "delta_z", "sigma", "init_phase_std", "init_smoothing", "iterations",
            "warm_iterations", "dal_iterations", "tau_a", "tau_phi", "alpha_r", "seed", "init_seed",
        )
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.z1 is not None and self.z1 < 0:
            raise ConfigError("z1 must be non-negative")
        if self.gamma_r is not None and not self.gamma_r > 0:
            raise ConfigError("gamma_r must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}, got {self.algorithm!r}")
        if not 1 <= self.frame_step <= self.frame_block <= min(self.rows, self.cols):
            raise ConfigError("need 1 <= frame_step <= frame_block <= min(rows, cols)")
        if not self.object_file and (self.rows % self.tile or self.cols % self.tile):
            raise ConfigError(f"rows x cols = {self.rows}x{self.cols} is not divisible by tile {self.tile}")

    def setup(self) -> OpticalSetup:
        focal = self.rows * self.pitch**2 / self.wavelength
        z1 = 2 * focal if self.z1 is None else self.z1
        return OpticalSetup(
            self.wavelength, self.pitch, z1, self.delta_z, self.num_planes, self.rows, self.cols
        )

    def frames(self) -> tuple[FrameOperator, FrameOperator]:
        frame = FrameOperator(self.rows, self.cols, self.frame_block, self.frame_step, self.dc_exempt)
        return frame, frame

    def params(self, sigmas) -> AlgoParams:
        """Algorithm weights for observations with noise levels ``sigmas``.

        Noise-free planes (``sigma = 0``) are weighted as if ``sigma = 1``.
        """
        sigma = tuple(s if s > 0 else 1.0 for s in sigmas)
        gamma = tuple(1.0 / s for s in sigma) if self.gamma_r is None else self.gamma_r
        return AlgoParams(
            sigma_r=sigma,
            gamma_r=gamma,
            alpha_r=self.alpha_r,
            tau_a=self.tau_a,
            tau_phi=self.tau_phi,
            gamma_a=self.gamma_a,
            gamma_phi=self.gamma_phi,
            xi=self.xi,
            iterations=self.iterations,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_AUTO_KEYS = {"z1", "gamma_r"}


def _field_kinds() -> dict[str, type]:
    kinds = {}
    for f in dataclasses.fields(ExperimentConfig):
        default = f.default
        if f.name in _AUTO_KEYS:
            kinds[f.name] = float
        else:
            kinds[f.name] = type(default)
    return kinds


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, raw: str, kind: type):
    if key in _AUTO_KEYS and raw.lower() == "auto":
        return None
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    kinds = _field_kinds()
    values: dict[str, object] = {}
    linenos: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, raw, kinds[key])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        linenos[key] = lineno
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        msg = str(exc)
        # point at the first key the message names that the file actually sets
        named = sorted(
            (m.start(), linenos[m.group()]) for m in re.finditer(r"\w+", msg) if m.group() in linenos
        )
        where = named[0][1] if named else None
        prefix = f"{source}:{where}" if where is not None else source
        raise ConfigError(f"{prefix}: {msg}") from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# Weights tuned for the 128x128 chessboard bench; the library defaults above
# are unit-order starting points.
CHESSBOARD_OVERRIDES = dict(
    init_phase_std=1.5,
    init_smoothing=4.0,
    gamma_r=40.0,
    alpha_r=0.5,
    xi=1000.0,
    tau_a=0.4,
    tau_phi=0.4,
)


def chessboard_config(**changes) -> ExperimentConfig:
    """Chessboard experiment: 128x128, K=5, sigma=0.05, 50 AL + 50 D-AL iterations."""
    return ExperimentConfig(**{**CHESSBOARD_OVERRIDES, **changes})
