"""Experiment bench: simulate, reconstruct, compare and render.

Every command writes into an output directory and returns the paths it
wrote, so the same functions back the CLI and the tests.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from dalpr.algorithms import (
    ObservationStack,
    ReconstructionState,
    TraceRecord,
    make_initial_guess,
    read_observations,
    run_al,
    run_dal,
    run_sbmir_fb,
    run_two_stage,
    simulate_observations,
    write_observations,
)
from dalpr.config import ExperimentConfig
from dalpr.field import (
    WaveField,
    amplitude,
    global_phase_offset,
    make_chessboard_object,
    phase,
    read_field,
    rmse_phase_aligned,
    rmse_phase_raw,
    write_field,
)

log = logging.getLogger(__name__)

OBSERVATIONS_NAME = "observations.ob"
TRUTH_NAME = "truth.wf"


class BenchError(RuntimeError):
    """Inputs that are individually valid but inconsistent with each other."""


def write_pgm(image: np.ndarray, path: Path) -> None:
    """Binary 8-bit PGM (P5, maxval 255)."""
    img = np.asarray(image, dtype=np.uint8)
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return np.frombuffer(parts[4][: rows * cols], dtype=np.uint8).reshape(rows, cols)


def amplitude_gray(a: np.ndarray) -> np.ndarray:
    """Linear map of ``[0, max]`` onto ``[0, 255]``."""
    top = float(np.max(a))
    if top <= 0:
        return np.zeros(a.shape, dtype=np.uint8)
    return np.rint(np.clip(a / top, 0.0, 1.0) * 255).astype(np.uint8)


def phase_gray(phi: np.ndarray) -> np.ndarray:
    """Linear map of ``(-pi, pi]`` onto ``[0, 255]``."""
    return np.rint((np.asarray(phi) + np.pi) / (2 * np.pi) * 255).astype(np.uint8)


def render_field(field: WaveField, out_dir: Path, stem: str) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "amplitude_image": out_dir / f"{stem}_amplitude.pgm",
        "phase_image": out_dir / f"{stem}_phase.pgm",
        "cross_section": out_dir / f"{stem}_cross_section.csv",
    }
    write_pgm(amplitude_gray(amplitude(field)), paths["amplitude_image"])
    write_pgm(phase_gray(phase(field)), paths["phase_image"])
    mid = field.rows // 2
    _write_csv(
        paths["cross_section"],
        ["col", "amplitude", "phase"],
        zip(range(field.cols), amplitude(field)[mid], phase(field)[mid]),
    )
    return paths


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_trace(trace: Sequence[TraceRecord], path: Path, with_rmse: bool) -> None:
    """One CSV row per completed iteration; the record of the starting point is left out."""
    trace = [r for r in trace if r.iteration > 0]
    if with_rmse:
        header = ["iteration", "phase_rmse", "amplitude_rmse", "objective"]
        rows = ((r.iteration, r.phase_rmse, r.amplitude_rmse, r.objective) for r in trace)
    else:
        header = ["iteration", "objective"]
        rows = ((r.iteration, r.objective) for r in trace)
    _write_csv(path, header, rows)


def true_object(config: ExperimentConfig) -> WaveField:
    if config.object_file:
        obj = read_field(config.object_file)
        if obj.shape != (config.rows, config.cols):
            raise BenchError(
                f"object file {config.object_file} is {obj.shape}, config grid is {(config.rows, config.cols)}"
            )
        return obj
    return make_chessboard_object(config.rows, config.cols, config.tile, config.pitch)


def initial_guess(config: ExperimentConfig) -> WaveField:
    if config.init_file:
        init = read_field(config.init_file)
        if init.shape != (config.rows, config.cols):
            raise BenchError(
                f"init file {config.init_file} is {init.shape}, config grid is {(config.rows, config.cols)}"
            )
        return init
    return make_initial_guess(
        (config.rows, config.cols),
        config.pitch,
        config.init_phase_std,
        config.init_smoothing,
        config.init_seed,
    )


def cmd_simulate(config: ExperimentConfig, out_dir: Optional[Path] = None) -> dict[str, Path]:
    setup = config.setup()
    truth = true_object(config)
    obs = simulate_observations(truth, setup, config.sigma, config.seed)
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"observations": out_dir / OBSERVATIONS_NAME, "truth": out_dir / TRUTH_NAME}
    write_observations(obs, paths["observations"])
    write_field(truth, paths["truth"])

    print(f"in-focus distance z_f = {setup.focal_distance * 1e3:.4f} mm")
    for r, (z, plane) in enumerate(zip(obs.distances, obs.planes), start=1):
        print(f"plane {r}: z = {z * 1e3:.4f} mm, mean intensity = {plane.mean():.6f}")
    noise = obs.planes - np.stack([p for p in _clean_planes(truth, setup)])
    print(f"noise: sigma = {config.sigma}, seed = {config.seed}, "
          f"sample mean = {noise.mean():.3e}, sample std = {noise.std():.6f}")
    return paths


def _clean_planes(truth: WaveField, setup):
    from dalpr.propagation import make_transfer, propagate_forward

    for z in setup.distances:
        yield np.abs(propagate_forward(truth, make_transfer(setup, z)).samples) ** 2


def _check_consistent(config: ExperimentConfig, obs: ObservationStack, truth: Optional[WaveField]) -> None:
    if obs.shape != (config.rows, config.cols):
        raise BenchError(f"observations are {obs.shape}, config grid is {(config.rows, config.cols)}")
    if truth is not None and truth.shape != obs.shape:
        raise BenchError(f"ground truth is {truth.shape}, observations are {obs.shape}")


def run_algorithm(
    config: ExperimentConfig,
    obs: ObservationStack,
    algorithm: str,
    truth: Optional[WaveField] = None,
    init: Optional[WaveField] = None,
) -> ReconstructionState:
    """Run one algorithm as configured; D-AL runs its AL warm start first."""
    setup = config.setup()
    if init is None:
        init = initial_guess(config)
    params = config.params(obs.sigmas)
    frames = config.frames()
    if algorithm == "sbmir":
        return run_sbmir_fb(obs, setup, init, config.iterations, truth)
    if algorithm == "al":
        return run_al(obs, setup, init, params, truth, frames=frames)
    if algorithm == "dal":
        if config.warm_iterations == 0:
            return run_dal(obs, setup, init, frames, params.updated(iterations=config.dal_iterations), truth)
        return run_two_stage(
            obs, setup, init, frames, params,
            config.warm_iterations, config.dal_iterations, truth, config.reset_multipliers,
        )
    raise BenchError(f"unknown algorithm {algorithm!r}")


def cmd_reconstruct(
    config: ExperimentConfig,
    observations: Path,
    truth_path: Optional[Path] = None,
    out_dir: Optional[Path] = None,
) -> dict[str, Path]:
    obs = read_observations(observations)
    truth = read_field(truth_path) if truth_path else None
    _check_consistent(config, obs, truth)
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    alg = config.algorithm
    state = run_algorithm(config, obs, alg, truth)
    paths = {"field": out_dir / f"{alg}_estimate.wf", "trace": out_dir / f"{alg}_trace.csv"}
    write_field(state.estimate, paths["field"])
    write_trace(state.trace, paths["trace"], truth is not None)
    paths.update(render_field(state.estimate, out_dir, alg))

    last = state.trace[-1]
    msg = f"{alg}: {last.iteration} iterations, objective {last.objective:.6g}"
    if truth is not None:
        msg += f", phase RMSE {last.phase_rmse:.4f}, amplitude RMSE {last.amplitude_rmse:.4f}"
    print(msg)
    return paths


@dataclass(frozen=True)
class ComparisonRow:
    algorithm: str
    phase_rmse: float
    amplitude_rmse: float
    phase_rmse_raw: float
    iterations: int


def cmd_compare(
    config: ExperimentConfig,
    observations: Path,
    truth_path: Path,
    out_dir: Optional[Path] = None,
) -> tuple[list[ComparisonRow], dict[str, Path]]:
    """Run SBMIR-FB, AL and D-AL from the same initial guess and tabulate final errors.

    SBMIR-FB and AL run ``warm_iterations + dal_iterations`` iterations so all
    three spend the same iteration budget.
    """
    obs = read_observations(observations)
    truth = read_field(truth_path)
    _check_consistent(config, obs, truth)
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    budget = config.warm_iterations + config.dal_iterations
    baseline = config.replace(iterations=budget)
    init = initial_guess(config)
    rows: list[ComparisonRow] = []
    estimates: dict[str, WaveField] = {}
    paths: dict[str, Path] = {}
    for alg in ("sbmir", "al", "dal"):
        state = run_algorithm(baseline, obs, alg, truth, init)
        est = state.estimate
        ph, am = rmse_phase_aligned(est, truth)
        rows.append(ComparisonRow(alg, ph, am, rmse_phase_raw(est, truth), state.iterations))
        # align the global phase so cross-sections are comparable with the truth
        estimates[alg] = est.with_samples(est.samples * np.exp(1j * global_phase_offset(est, truth)))
        paths[f"{alg}_trace"] = out_dir / f"{alg}_trace.csv"
        write_trace(state.trace, paths[f"{alg}_trace"], True)
        paths[f"{alg}_field"] = out_dir / f"{alg}_estimate.wf"
        write_field(est, paths[f"{alg}_field"])

    paths["report"] = out_dir / "comparison.csv"
    _write_csv(
        paths["report"],
        ["algorithm", "iterations", "phase_rmse", "amplitude_rmse", "phase_rmse_unaligned"],
        ((r.algorithm, r.iterations, r.phase_rmse, r.amplitude_rmse, r.phase_rmse_raw) for r in rows),
    )
    mid = config.rows // 2
    names = ["truth", "sbmir", "al", "dal"]
    fields = [truth] + [estimates[n] for n in names[1:]]
    for kind, fn in (("phase", phase), ("amplitude", amplitude)):
        key = f"cross_section_{kind}"
        paths[key] = out_dir / f"{key}.csv"
        columns = [fn(f)[mid] for f in fields]
        _write_csv(paths[key], ["col"] + names, zip(range(config.cols), *columns))

    print(f"{'algorithm':<10}{'iterations':>11}{'phase RMSE':>12}{'amp RMSE':>10}{'unaligned':>11}")
    for r in rows:
        print(f"{r.algorithm:<10}{r.iterations:>11}{r.phase_rmse:>12.4f}{r.amplitude_rmse:>10.4f}{r.phase_rmse_raw:>11.4f}")
    return rows, paths


def cmd_render(field_path: Path, out_dir: Path) -> dict[str, Path]:
    field = read_field(field_path)
    return render_field(field, Path(out_dir), Path(field_path).stem)
