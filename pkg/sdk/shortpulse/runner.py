"""
Scenario execution for the shortpulse CLI.

Each scenario fills a :class:`~shortpulse.reports.RunManifest` and a set of
named tables. Solver aborts never escape: they are recorded in the manifest
and turn the matching hard check into a failure.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .exceptions import ShortPulseError, ValidityRegionExceeded
from .justification import (
    JustificationReport,
    add_balance_residual,
    build_paired_initial_data,
    convergence_study,
    run_epsilon,
    sample_schedule,
    short_pulse_reference,
    study_initial_data,
    study_perturbation,
)
from .klein_gordon import (
    ENERGY_RATE_COLUMNS,
    KGState,
    ScalingParams,
    continuation_monitor,
    energy_rate_check,
    kg_dt,
    kg_energies,
    kg_evolve,
)
from .reports import RunManifest, emit_reports
from .short_pulse import (
    admissible_initial_data,
    delta_of_trajectory,
    small_norm_check,
    sp_evolve,
)
from .spectral_core import differentiate, sobolev_norm

logger = logging.getLogger(__name__)

Tables = Dict[str, pd.DataFrame]

MEAN_PRESERVATION_TOL = 1e-12
TILDE_RATIO_CAP = 0.5
UNSCALED_EXPONENT = (0.5, 0.1)
LEADING_EXPONENT = (-0.5, 0.05)
MANUFACTURED_TOL = 1e-10


def _eps_label(epsilon: float) -> str:
    return f"{epsilon:g}"


def _abort(manifest: RunManifest, stage: str, exc: ShortPulseError, check: str) -> None:
    """Record a stage failure and fail the hard check that depends on it."""
    logger.warning("%s aborted: %s", stage, exc)
    manifest.record_abort(stage, exc)
    manifest.add_check(check, False, detail=f"{type(exc).__name__} in {stage}: {exc}")


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def simulate_sp(config: ExperimentConfig, manifest: RunManifest) -> Tables:
    """Evolve the short-pulse equation and tabulate norms along the run."""
    study = config.to_study_config()
    columns = ["tau", "mean", "l2", "h1", "h2", "hs"]
    with manifest.stage("initial_data"):
        try:
            A0 = admissible_initial_data(study.shape, study.amplitude, study.width, study.grid)
        except ShortPulseError as exc:
            _abort(manifest, "initial_data", exc, "evolution_completed")
            return {"trajectory_sp.csv": pd.DataFrame(columns=columns)}
        total, ok = small_norm_check(A0)
    manifest.add_check("small_norm", ok, hard=False, value=total,
                       detail="||A0'||^2 + ||A0''||^2 < 1/6")

    trajectory = []
    with manifest.stage("short_pulse"):
        try:
            dt, substeps = sample_schedule(study, A0)
            trajectory = sp_evolve(A0, study.T, dt, sample_every=substeps,
                                   linear=study.linear, mean_tol=study.mean_tol)
        except ShortPulseError as exc:
            logger.warning("short-pulse evolution aborted: %s", exc)
            manifest.record_abort("short_pulse", exc)
    manifest.add_check("evolution_completed", bool(trajectory) and not manifest.aborts,
                       value=trajectory[-1].tau if trajectory else 0.0)

    rows = [(s.tau, s.A.mean(), sobolev_norm(s.A, 0.0), sobolev_norm(s.A, 1.0),
             sobolev_norm(s.A, 2.0), sobolev_norm(s.A, config.run.s)) for s in trajectory]
    table = pd.DataFrame(rows, columns=columns)
    drift = max((abs(s.A.spectrum[0]) for s in trajectory), default=0.0)
    manifest.add_check("mean_preserved", drift <= MEAN_PRESERVATION_TOL, value=drift,
                       detail="max |A_hat(0)| over samples")
    return {"trajectory_sp.csv": table}


def _kg_table(trajectory: List[KGState], epsilon: float) -> pd.DataFrame:
    rows = []
    for state in trajectory:
        e = kg_energies(state)
        rows.append((state.t, epsilon * state.t, e.E1, e.E2, e.E3, state.u.sup_norm(),
                     state.ut.sup_norm(), differentiate(state.u, 1).sup_norm()))
    return pd.DataFrame(rows, columns=["t", "tau", "E1", "E2", "E3", "M0", "M1", "M2"])


def simulate_kg(config: ExperimentConfig, manifest: RunManifest) -> Tables:
    """Evolve the Klein-Gordon equation from data paired with the first epsilon."""
    study = config.to_study_config()
    epsilon = study.epsilons[0]
    p = ScalingParams(epsilon)
    with manifest.stage("initial_data"):
        try:
            A0 = admissible_initial_data(study.shape, study.amplitude, study.width, study.grid)
            paired = build_paired_initial_data(
                A0, study_perturbation(study, A0), p,
                velocity=study.velocity if study.perturbation != "none" else None,
                include_time_correction=study.include_time_correction, mean_tol=study.mean_tol)
        except ShortPulseError as exc:
            _abort(manifest, "initial_data", exc, "continuation")
            return {"trajectory_kg.csv": _kg_table([], epsilon),
                    "energy_rates.csv": pd.DataFrame(columns=ENERGY_RATE_COLUMNS)}

    t_end = study.T / epsilon
    interval = t_end / study.samples
    substeps = int(math.ceil(interval / kg_dt(paired.kg0.grid_x, study.cfl) - 1e-9))
    with manifest.stage("klein_gordon"):
        try:
            trajectory = kg_evolve(paired.kg0.u, paired.kg0.ut, t_end, interval / substeps,
                                   sample_every=substeps, linear=study.linear,
                                   margin=study.margin, slope_cap=study.slope_cap)
        except ValidityRegionExceeded as exc:
            manifest.record_abort("klein_gordon", exc)
            trajectory = exc.trajectory

    with manifest.stage("diagnostics"):
        monitor = continuation_monitor(trajectory, study.margin)
        table = _kg_table(trajectory, epsilon)
        rates = energy_rate_check(trajectory)
    manifest.add_check("continuation", monitor.ok and not manifest.aborts, value=monitor.M0,
                       detail=f"M0={monitor.M0:.6g} M1={monitor.M1:.6g} M2={monitor.M2:.6g}")
    normalized = rates[["r1_normalized", "r2_normalized", "r3_normalized"]].to_numpy()
    worst = float(normalized.max()) if normalized.size else 0.0
    manifest.add_check("energy_rate_residual", worst <= config.tolerances.energy_rate_residual,
                       value=worst, detail="max normalized |dE/dt - rate|")
    return {"trajectory_kg.csv": table, "energy_rates.csv": rates}


def _single_epsilon(config: ExperimentConfig, manifest: RunManifest):
    study = config.to_study_config(epsilons=config.run.epsilons[:1])
    with manifest.stage("short_pulse"):
        try:
            amplitude, A0, delta = study_initial_data(study)
            perturbation = study_perturbation(study, A0)
            sp_traj = short_pulse_reference(study, A0)
            if delta is None:
                delta = delta_of_trajectory(sp_traj, study.s, study.mean_tol)
        except ShortPulseError as exc:
            _abort(manifest, "short_pulse", exc, "solver_completed")
            return study, None
    logger.info("amplitude=%.6g delta=%.6g", amplitude, delta.delta)
    epsilon = study.epsilons[0]
    with manifest.stage(f"epsilon_{_eps_label(epsilon)}"):
        run = run_epsilon(study, epsilon, A0, perturbation, sp_traj, delta.delta)
    if run.error:
        manifest.aborts.append({"epsilon": epsilon, **run.error})
    manifest.add_check("solver_completed", run.ok,
                       detail=run.error["message"] if run.error else "")
    return study, run


def justify(config: ExperimentConfig, manifest: RunManifest) -> Tables:
    """Full diagnostics of one epsilon: error, energies, balance and bounds."""
    study, run = _single_epsilon(config, manifest)
    if run is None:
        return {}
    tol = config.tolerances
    eps = run.epsilon
    manifest.add_check("initial_data_bound", run.bound_value <= eps, value=run.bound_value,
                       detail=f"distance of paired data vs eps={eps:g}")
    if not run.ok:
        return {}
    manifest.add_check("gronwall", run.gronwall.ok, value=run.gronwall.C1,
                       detail=f"C0={run.gronwall.C0:.6g} C1={run.gronwall.C1:.6g}")
    manifest.add_check("balance_residual", run.max_balance_residual <= tol.balance_residual,
                       value=run.max_balance_residual)
    worst = max(run.max_constants.values(), default=0.0)
    manifest.add_check("bound_constants", worst <= tol.bound_cap, hard=False, value=worst,
                       detail=", ".join(f"{k}={v:.3g}" for k, v in run.max_constants.items()))
    manifest.add_check("tilde_ratio", run.max_tilde_ratio <= TILDE_RATIO_CAP, hard=False,
                       value=run.max_tilde_ratio, detail="max |Etilde|/E")
    return {
        f"trajectory_eps_{_eps_label(eps)}.csv": run.series,
        "energy.csv": run.energy,
        "bounds.csv": run.bounds,
    }


def _spread(values: List[float]) -> float:
    top = max(values, default=0.0)
    return (top - min(values)) / top if top > 0 else 0.0


def _converge_checks(report: JustificationReport, config: ExperimentConfig,
                     manifest: RunManifest) -> None:
    tol = config.tolerances
    ok = report.successful
    manifest.add_check("epsilons_succeeded", len(ok) >= 3, value=len(ok),
                       detail=f"{len(ok)} of {len(report.runs)} runs completed")
    if config.run.manufactured:
        worst = max((r.sup_h2_error for r in ok), default=0.0)
        manifest.add_check("manufactured_identity", worst <= MANUFACTURED_TOL, value=worst)
        return
    ratios = [r.sup_h2_error / r.epsilon for r in ok]
    band = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else math.inf
    manifest.add_check("error_band", band <= tol.band_factor, value=band,
                       detail="max/min of sup_h2_error/eps")
    manifest.add_check("slope", report.slope is not None and report.slope >= tol.slope_min,
                       value=report.slope)
    manifest.add_check("initial_data_bound", all(r.bound_value <= r.epsilon for r in ok),
                       value=max((r.bound_value / r.epsilon for r in ok), default=0.0))
    fits = [r.gronwall for r in ok]
    manifest.add_check("gronwall_caps", bool(fits) and all(g.ok for g in fits),
                       value=max((g.C0 for g in fits), default=0.0))
    spread = max(_spread([g.C0 for g in fits]), _spread([g.C1 for g in fits]))
    manifest.add_check("gronwall_spread", spread <= tol.gronwall_spread, value=spread)
    target, width = UNSCALED_EXPONENT
    manifest.add_check("unscaled_exponent", report.unscaled_slope is not None
                       and abs(report.unscaled_slope - target) <= width, value=report.unscaled_slope)
    target, width = LEADING_EXPONENT
    manifest.add_check("leading_order_exponent", report.leading_u_slope is not None
                       and abs(report.leading_u_slope - target) <= width, value=report.leading_u_slope)
    worst = max((r.max_balance_residual for r in ok), default=0.0)
    manifest.add_check("balance_residual", worst <= tol.balance_residual, hard=False, value=worst)
    worst = max((r.max_tilde_ratio for r in ok), default=0.0)
    manifest.add_check("tilde_ratio", worst <= TILDE_RATIO_CAP, hard=False, value=worst)


def converge(config: ExperimentConfig, manifest: RunManifest) -> Tables:
    """The epsilon sweep and its scaling-law checks."""
    with manifest.stage("convergence_study"):
        try:
            report = convergence_study(config.to_study_config())
        except ShortPulseError as exc:
            _abort(manifest, "short_pulse", exc, "epsilons_succeeded")
            return {}
    for run in report.runs:
        if run.error:
            manifest.aborts.append({"epsilon": run.epsilon, **run.error})
    _converge_checks(report, config, manifest)

    tables: Tables = {"convergence.csv": report.summary_table()}
    ok = report.successful
    for run in ok:
        tables[f"trajectory_eps_{_eps_label(run.epsilon)}.csv"] = run.series
    if ok:
        tables["energy.csv"] = min(ok, key=lambda r: r.epsilon).energy
    return tables


def balance(config: ExperimentConfig, manifest: RunManifest) -> Tables:
    """Energy balance at stride 1 and its decay under coarser sampling strides."""
    study, run = _single_epsilon(config, manifest)
    if run is None or not run.ok:
        return {}
    spacing = study.T / study.samples
    base = run.energy[["tau", "E", "Etilde", "J"]]
    rows = []
    previous = None
    for stride in sorted(set(config.run.strides)):
        sampled = add_balance_residual(base.iloc[::stride])
        worst = float(sampled["balance_residual"].max()) if len(sampled) else 0.0
        ratio = worst / previous if previous else math.nan
        rows.append((stride, stride * spacing, worst, ratio))
        previous = worst
    strides = pd.DataFrame(rows, columns=["stride", "dtau", "max_residual", "ratio"])

    tol = config.tolerances.balance_residual
    manifest.add_check("balance_residual", run.max_balance_residual <= tol,
                       value=run.max_balance_residual, detail="stride 1")
    ratios = strides["ratio"].dropna().to_numpy()
    second_order = bool(np.all(ratios >= 3.0)) or float(strides["max_residual"].max()) < 1e-10
    manifest.add_check("balance_order", second_order,
                       value=float(ratios.min()) if ratios.size else None,
                       detail="residual ratio under stride doubling (2nd order gives 4)")
    return {"energy.csv": run.energy, "balance_strides.csv": strides}


SCENARIO_RUNNERS: Dict[str, Callable[[ExperimentConfig, RunManifest], Tables]] = {
    "simulate-sp": simulate_sp,
    "simulate-kg": simulate_kg,
    "justify": justify,
    "converge": converge,
    "balance": balance,
}


def run_scenario(config: ExperimentConfig) -> Tuple[RunManifest, Tables]:
    """Execute the configured scenario without writing anything."""
    from . import __version__

    manifest = RunManifest(config.scenario, config.snapshot(), __version__)
    logger.info("scenario %s started", config.scenario)
    try:
        tables = SCENARIO_RUNNERS[config.scenario](config, manifest)
    except ShortPulseError as exc:
        _abort(manifest, config.scenario, exc, "scenario_completed")
        tables = {}
    logger.info("scenario %s finished (passed=%s)", config.scenario, manifest.passed)
    return manifest, tables


def run(config: ExperimentConfig) -> RunManifest:
    """Execute the scenario and write its reports to ``config.output_dir``."""
    manifest, tables = run_scenario(config)
    emit_reports(manifest, tables, config.output_dir or f"runs/{config.scenario}")
    return manifest
