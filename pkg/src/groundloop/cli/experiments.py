"""Experiment harness: seeded repetitions, report rows and per-run artifacts."""

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from ..backends.adapter import AdapterBackend, AdapterDetector, handshake
from ..backends.sim_backend import SimDetector, SimGenerator
from ..config import BackendKind, Settings, load_run_config, write_snapshot
from ..controller.feedback import ControllerConfig, ControllerMode
from ..controller.stability import stability_analysis
from ..core.types import encode
from ..errors import ConfigError, IoError
from ..grounding.score import GroundingMode
from ..pipeline.frame import Backends, FrameResult, LoopConfig
from ..pipeline.stream import RunReport, run_stream
from ..simworld.config import SimWorldConfig
from ..simworld.experiments import (
    LinearPlant,
    closed_loop_run,
    estimate_sensitivity,
    frames_to_converge,
    steady_state_h,
)
from ..simworld.world import SimFrameSource
from .report import ReportFormat, ReportRow, emit_report, write_trajectory

logger = logging.getLogger(__name__)

STEADY_STATE_FRAMES = 300
CONVERGENCE_EPS = 0.01
SENSITIVITY_GRID = (0.3, 0.4, 0.5, 0.6, 0.7)
STABILITY_GAINS = (0.5, 1.0, 1.5, 1.9, 2.0, 2.5)
STABILITY_STEPS = 100


class ExperimentKind(str, enum.Enum):
    CONVERGENCE = "Convergence"
    STABILITY_BOUNDARY = "StabilityBoundary"
    ABLATION = "Ablation"
    SENSITIVITY = "Sensitivity"
    ADAPTER_RUN = "AdapterRun"
    LATENCY_MODEL = "LatencyModel"
    STREAM = "Stream"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: ExperimentKind
    output_dir: Path
    base_config: Optional[Path] = None
    overrides: Tuple[Tuple[str, str], ...] = ()
    repetitions: Optional[int] = None

    def __post_init__(self):
        if not self.name or "/" in self.name:
            raise ConfigError("name", f"experiment name {self.name!r} is not a valid directory name")
        if self.repetitions is not None and self.repetitions < 1:
            raise ConfigError("repetitions", f"must be at least 1, got {self.repetitions}")

    def settings(self) -> Settings:
        overrides = dict(self.overrides)
        if self.repetitions is not None:
            overrides["repetitions"] = str(self.repetitions)
        return load_run_config(self.base_config, overrides)

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.name


def validate_batch(specs: Sequence[ExperimentSpec]) -> None:
    seen = set()
    for spec in specs:
        if spec.name in seen:
            raise ConfigError("name", f"duplicate experiment name {spec.name!r} in batch")
        seen.add(spec.name)


class ResultSink:
    """Writes one encoded :class:`FrameResult` per line."""

    def __init__(self, path: Path):
        self.path = path
        try:
            self._handle: TextIO = path.open("w", encoding="utf-8")
        except OSError as e:
            raise IoError(path, e)

    def __call__(self, result: FrameResult) -> None:
        self._handle.write(encode(result) + "\n")

    def close(self) -> None:
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class _Artifacts:
    directory: Path
    files: List[Path] = field(default_factory=list)

    def trajectory(self, label: str, seed: int, records) -> None:
        self.files.append(write_trajectory(self.directory, label, seed, records))

    def results(self, label: str, seed: int) -> ResultSink:
        sink = ResultSink(self.directory / f"results_{label}_{seed}.txt")
        self.files.append(sink.path)
        return sink


def _seeds(settings: Settings) -> List[int]:
    base = settings.sim.seed
    return [base + i for i in range(settings.run.repetitions)]


def _adaptive(controller: ControllerConfig) -> ControllerConfig:
    if controller.mode is ControllerMode.FIXED:
        return controller.replace(mode=ControllerMode.PROPORTIONAL)
    return controller


def _static(controller: ControllerConfig) -> ControllerConfig:
    return controller.replace(mode=ControllerMode.FIXED)


def _closed_loop_rows(
    settings: Settings,
    arms: Sequence[Tuple[str, SimWorldConfig, ControllerConfig]],
    artifacts: _Artifacts,
) -> List[ReportRow]:
    rows = []
    for label, world, controller in arms:
        h_values, final_taus, converged = [], [], []

        for seed in _seeds(settings):
            trajectory = closed_loop_run(
                world.replace(seed=seed),
                controller,
                settings.run.frames,
                pipeline=settings.pipeline,
                grounding=settings.grounding.replace(mode=GroundingMode.ORACLE),
            )
            artifacts.trajectory(label, seed, trajectory)

            h_values.append(steady_state_h(trajectory, STEADY_STATE_FRAMES))
            final_taus.append(trajectory[-1].tau)
            ftc = frames_to_converge(trajectory, CONVERGENCE_EPS, start=settings.grounding.window)
            converged.append(ftc if ftc is not None else np.nan)

            logger.info(f"{label} seed {seed}: steady-state h {h_values[-1]:.4f}, frames to converge {ftc}")

        rows.append(
            ReportRow.from_rates(
                label,
                h_values,
                final_tau=float(np.mean(final_taus)),
                frames_to_converge=float(np.nanmean(converged)) if not np.all(np.isnan(converged)) else None,
            )
        )
    return rows


def _convergence(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    controller = _adaptive(settings.controller)
    rows = _closed_loop_rows(settings, [("closed-loop", settings.sim, controller)], artifacts)

    # Linearised prediction around the starting threshold
    tau0 = controller.tau_init
    step = min(0.1, tau0 / 2, (1.0 - tau0) / 2)
    grid = (tau0 - step, tau0, tau0 + step)
    estimate = estimate_sensitivity(settings.sim, grid, max(1000, settings.run.frames))
    e0 = abs(estimate.h_of_tau[1] - controller.h_target)

    extra = dict(rows[0].extra, beta_hat=estimate.beta_hat, e0=e0)
    if estimate.beta_hat > 0 and e0 > 0:
        report = stability_analysis(estimate.beta_hat, controller.lam, e0, CONVERGENCE_EPS)
        extra["predicted_frames"] = report.predicted_frames_to_eps
        extra["stability"] = report.classification.value

    rows[0] = ReportRow(rows[0].label, rows[0].gamma_mean, rows[0].gamma_std, rows[0].h_mean, rows[0].h_std, extra)
    return rows


def _ablation(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    structured = settings.sim
    free_form = settings.sim.free_form()
    adaptive = _adaptive(settings.controller)
    static = _static(settings.controller)

    arms = [
        ("baseline", free_form, static),
        ("adaptive-only", free_form, adaptive),
        ("prompts-only", structured, static),
        ("full", structured, adaptive),
    ]
    return _closed_loop_rows(settings, arms, artifacts)


def _sensitivity(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    grid = settings.run.tau_grid
    per_seed = []

    for seed in _seeds(settings):
        estimate = estimate_sensitivity(settings.sim.replace(seed=seed), grid, settings.run.frames)
        per_seed.append(estimate)

    rows = [ReportRow.from_rates(f"tau={tau:g}", [e.h_of_tau[i] for e in per_seed]) for i, tau in enumerate(grid)]
    rows.append(
        ReportRow(
            "estimate",
            extra={
                "beta_hat": float(np.mean([e.beta_hat for e in per_seed])),
                "beta_hat_std": float(np.std([e.beta_hat for e in per_seed])),
                "lipschitz_hat": float(np.max([e.lipschitz_hat for e in per_seed])),
            },
        )
    )
    return rows


def _stability(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    """Sweeps the loop gain on a linear plant stub: predicted class versus measured error growth."""

    controller = settings.controller.replace(lam=1.0, clamp=False, mode=ControllerMode.PROPORTIONAL)
    rows = []

    for gain in STABILITY_GAINS:
        plant = LinearPlant(intercept=controller.h_target + gain * controller.tau_init + 0.1, slope=-gain)
        trajectory = closed_loop_run(settings.sim, controller, STABILITY_STEPS, plant=plant)
        label = f"gain={gain:g}"
        artifacts.trajectory(label, settings.sim.seed, trajectory)

        e0 = abs(trajectory[0].e_t)
        report = stability_analysis(gain, controller.lam, e0, CONVERGENCE_EPS)
        growth = abs(trajectory[-1].e_t) / e0

        rows.append(
            ReportRow(
                label,
                extra={
                    "loop_gain": report.loop_gain,
                    "stability": report.classification.value,
                    "predicted_frames": report.predicted_frames_to_eps,
                    "error_growth": growth,
                },
            )
        )
    return rows


def _stream_row(label: str, reports: Sequence[RunReport], predicted_us: Optional[float] = None) -> ReportRow:
    h_values = [_report_h(r) for r in reports]
    extra = {
        "frames": reports[0].frames,
        "final_tau": float(np.mean([r.final_tau for r in reports])),
        "latency_p50_us": float(np.mean([r.latency_p50_us for r in reports])),
        "latency_p95_us": float(np.mean([r.latency_p95_us for r in reports])),
        "latency_p99_us": float(np.mean([r.latency_p99_us for r in reports])),
        "wall_us_per_frame": float(np.mean([r.wall_us_per_frame for r in reports])),
        "budget_misses": int(sum(r.budget_misses for r in reports)),
    }
    if predicted_us is not None:
        extra["predicted_us"] = predicted_us
    return ReportRow.from_rates(label, h_values, **extra)


def _report_h(report: RunReport) -> float:
    tail = report.h_trajectory[-STEADY_STATE_FRAMES:]
    return float(np.mean(tail)) if tail else 0.0


def _latency(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    """Pipelined against serial execution of the same stream; predictions use the configured stage delays."""

    pcfg = settings.pipeline
    d_us, g_us = pcfg.delay_detect_ms * 1000.0, pcfg.delay_generate_ms * 1000.0
    predictions = {"pipelined": max(d_us, g_us) + pcfg.alpha_us, "serial": d_us + g_us + pcfg.alpha_us}
    rows = []

    for label, serial in (("pipelined", False), ("serial", True)):
        loop = LoopConfig(pcfg.replace(serial=serial), settings.grounding, settings.controller)
        reports = []
        for seed in _seeds(settings):
            world = settings.sim.replace(seed=seed)
            backends = Backends(SimDetector(world), SimGenerator(world))
            with artifacts.results(label, seed) as sink:
                reports.append(run_stream(SimFrameSource(world, settings.run.frames), backends, loop, sink))
        rows.append(_stream_row(label, reports, predictions[label]))
    return rows


def _sim_stream(settings: Settings, label: str, artifacts: _Artifacts) -> ReportRow:
    loop = settings.loop_config()
    reports = []

    for seed in _seeds(settings):
        world = settings.sim.replace(seed=seed)
        backends = Backends(SimDetector(world), SimGenerator(world))
        with artifacts.results(label, seed) as sink:
            reports.append(run_stream(SimFrameSource(world, settings.run.frames), backends, loop, sink))

    return _stream_row(label, reports)


def _adapter_stream(settings: Settings, label: str, artifacts: _Artifacts) -> ReportRow:
    # Adapter tokens carry no truth tags
    loop = LoopConfig(settings.pipeline, settings.grounding.replace(mode=GroundingMode.TOKEN_LEVEL), settings.controller)
    reports = []

    for seed in _seeds(settings):
        world = settings.sim.replace(seed=seed)
        with handshake(settings.adapter) as session:
            backends = Backends(AdapterDetector(session), AdapterBackend(session))
            with artifacts.results(label, seed) as sink:
                reports.append(run_stream(SimFrameSource(world, settings.run.frames), backends, loop, sink))

    return _stream_row(label, reports)


def _adapter(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    return [_adapter_stream(settings, "adapter", artifacts)]


def _stream(spec: ExperimentSpec, settings: Settings, artifacts: _Artifacts) -> List[ReportRow]:
    """The full pipeline over simulated frames with whichever backend the run selects."""

    if settings.run.backend is BackendKind.ADAPTER:
        return [_adapter_stream(settings, "adapter", artifacts)]
    return [_sim_stream(settings, "sim", artifacts)]


_RUNNERS = {
    ExperimentKind.CONVERGENCE: _convergence,
    ExperimentKind.STABILITY_BOUNDARY: _stability,
    ExperimentKind.ABLATION: _ablation,
    ExperimentKind.SENSITIVITY: _sensitivity,
    ExperimentKind.ADAPTER_RUN: _adapter,
    ExperimentKind.LATENCY_MODEL: _latency,
    ExperimentKind.STREAM: _stream,
}


def run_experiment(spec: ExperimentSpec, settings: Optional[Settings] = None) -> Tuple[List[ReportRow], List[Path]]:
    """
    Runs every configuration of ``spec`` and writes rows, trajectories and the
    config snapshot under ``<output_dir>/<name>/``.

    :returns: The rows and the paths of every file written.
    """

    settings = settings or spec.settings()
    run_dir = spec.run_dir
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(run_dir, e)

    artifacts = _Artifacts(run_dir)
    artifacts.files.append(write_snapshot(settings, run_dir))

    logger.info(f"Running {spec.kind.value} experiment '{spec.name}' ({settings.run.repetitions} repetition(s))")
    rows = _RUNNERS[spec.kind](spec, settings, artifacts)

    for fmt in ReportFormat:
        artifacts.files.append(emit_report(rows, fmt, run_dir / f"rows{fmt.suffix}"))

    return rows, artifacts.files


def run_batch(specs: Sequence[ExperimentSpec]) -> Dict[str, List[ReportRow]]:
    validate_batch(specs)
    return {spec.name: run_experiment(spec)[0] for spec in specs}
