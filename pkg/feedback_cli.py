#!/usr/bin/env python3
"""
Command-line front end: figure data, O-U kernel verification and the
2τ-window comparison of the two noise-averaged population formulas.

Usage:
    feedback-sim analytic --points 61
    feedback-sim fig1 --paths 100000 --workers 8 --out fig1.csv
    feedback-sim fig2 --phase-steps 32 --time-steps 41 --out fig2.csv
    feedback-sim verify-ou --gamma-tau 1 --lags 10
    feedback-sim adjudicate-eq13 --out adjudication.csv
    feedback-sim moments --t-over-tau 3 --gamma-tau 1

Every CSV starts with a `# config: {...}` line holding the resolved
configuration. Exit codes: 0 success, 1 I/O failure, 2 invalid input,
3 quadrature did not converge.
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from analytic_solutions import (population_2tau_paper, population_2tau_with_cross, population_3tau,
                                series_amplitude_no_noise, wigner_weisskopf_population)
from csv_output import write_csv
from ensemble import phase_difference_map, run_ensemble
from gaussian_moments import MOMENT_NAMES, monte_carlo_moments, noise_moments
from noise_paths import generate_path, path_seed, sample_phase_autocovariance
from scenario_config import ScenarioConfig, resolve_config
from sdde_integrator import integrate, write_trajectory_csv
from sim_errors import EXIT_IO, EXIT_OK, DomainError, FeedbackSimError, exit_code_for
from system_params import TWO_PI

logger = logging.getLogger(__name__)

# Significance threshold of every verdict, in standard errors
SIGMA_LIMIT = 3.0
# Floor on the adjudication error bar so noiseless ensembles still score
STDERR_FLOOR = 1e-9
# Absolute slack of the Fig. 1 comparisons (rounding of e^{-2Γt})
ROUNDING_SLACK = 1e-12


@dataclass
class Report:
    """What a subcommand computed, besides the CSV it wrote"""
    rows: int
    lines: List[str] = field(default_factory=list)
    passed: Optional[bool] = None
    details: Dict[str, object] = field(default_factory=dict)


def _flag(value: bool) -> str:
    return "true" if value else "false"


def _emit(config: ScenarioConfig, columns: Sequence[str], rows, lines: Sequence[str] = ()) -> int:
    comments = [f"config: {config.header()}", *lines]
    return write_csv(config.output_path, columns, rows, comments=comments, timestamp=config.timestamp)


def cmd_simulate(config: ScenarioConfig) -> Report:
    """One noise realization (path index 0) as a trajectory dump"""
    params = config.params
    steps = round(config.t_max / config.dt)
    path = generate_path(path_seed(config.master_seed, 0), steps, config.dt, params.gamma)
    traj = integrate(params, path, config.dt, t_max=config.t_max)
    rows = write_trajectory_csv(traj, config.output_path, comments=[f"config: {config.header()}"],
                                timestamp=config.timestamp)
    return Report(rows=rows)


def _in_window(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (t >= lo * (1.0 - 1e-12)) & (t <= hi * (1.0 + 1e-12))


def cmd_analytic(config: ScenarioConfig) -> Report:
    """Closed-form curves on [0, t_max]; each formula is blank outside its window"""
    params, tau = config.params, config.tau
    times = np.linspace(0.0, config.t_max, config.points)
    ww = wigner_weisskopf_population(times, params)
    no_noise = np.abs(series_amplitude_no_noise(times, params)) ** 2
    second = _in_window(times, tau, 2.0 * tau)
    third = times <= 3.0 * tau * (1.0 + 1e-12)
    paper = np.full(times.shape, np.nan)
    cross = np.full(times.shape, np.nan)
    full = np.full(times.shape, np.nan)
    paper[second] = population_2tau_paper(np.clip(times[second], tau, 2.0 * tau), params)
    cross[second] = population_2tau_with_cross(np.clip(times[second], tau, 2.0 * tau), params)
    full[third] = population_3tau(np.minimum(times[third], 3.0 * tau), params)
    rows = zip(times / tau, ww, no_noise, paper, cross, full)
    count = _emit(config, ["t_over_tau", "wigner_weisskopf", "feedback_no_noise", "population_2tau_paper",
                           "population_2tau_with_cross", "population_3tau"], rows)
    return Report(rows=count)


def _fig1_checks(times: np.ndarray, tau: float, ww: np.ndarray, no_noise: np.ndarray, mean: np.ndarray,
                 stderr: np.ndarray) -> Dict[str, bool]:
    window = _in_window(times, tau, 3.0 * tau)
    if not np.any(window):
        return {}
    t, ww, no_noise, mean, stderr = times[window], ww[window], no_noise[window], mean[window], stderr[window]
    lowest = int(np.argmin(no_noise))
    return {
        "noise_above_wigner_weisskopf": bool(np.all(mean + SIGMA_LIMIT * stderr >= ww - ROUNDING_SLACK)),
        "no_noise_below_noise": bool(np.any(no_noise < mean)),
        "no_noise_end_gain": bool(2.0 * tau < t[lowest] < 3.0 * tau and no_noise[-1] > no_noise[lowest]),
    }


def cmd_fig1(config: ScenarioConfig) -> Report:
    """Decay without feedback, with feedback, and with feedback plus noise (ensemble mean)"""
    config.warn_if_coarse()
    params = config.params
    stats = run_ensemble(params, config.n_paths, config.master_seed, config.dt, t_max=config.t_max,
                         workers=config.workers)
    times = stats.times
    ww = wigner_weisskopf_population(times, params)
    no_noise = np.abs(series_amplitude_no_noise(times, params)) ** 2
    stderr = stats.stderr
    checks = _fig1_checks(times, config.tau, ww, no_noise, stats.mean, stderr)
    lines = [f"check: {name}={_flag(value)}" for name, value in checks.items()]
    for line in lines:
        logger.info(line)
    rows = zip(times / config.tau, ww, no_noise, stats.mean, stderr)
    count = _emit(config, ["t_over_tau", "wigner_weisskopf", "feedback_no_noise", "feedback_noise_mean",
                           "feedback_noise_stderr"], rows, lines)
    return Report(rows=count, lines=lines, passed=all(checks.values()) if checks else None, details=checks)


def cmd_fig2(config: ScenarioConfig) -> Report:
    """Difference map over φ in [0, 2π] and t in [τ, 3τ], long form"""
    config.warn_if_coarse()
    phases = np.linspace(0.0, TWO_PI, config.phase_steps)
    # times snapped to the integration grid
    steps = np.rint(np.linspace(1.0, 3.0, config.time_steps) * config.dt_divisor).astype(int)
    times = steps * config.dt
    diff = phase_difference_map(config.params, phases, times, config.n_paths, config.master_seed, config.dt,
                                workers=config.workers)
    rows = ((phi, t / config.tau, diff[i, j]) for i, phi in enumerate(phases) for j, t in enumerate(times))
    lines = ["convention: difference = |P|^2 without noise - <|P|^2> with noise (negative: noise raises population)"]
    count = _emit(config, ["phi", "t_over_tau", "difference"], rows, lines)
    return Report(rows=count, lines=lines, details={"matrix": diff})


def cmd_verify_ou(config: ScenarioConfig) -> Report:
    """
    Lagged correlation of the feedback phase factors e^{iφ(s+τ,s)} against the O-U kernel.

    Lags run over [0, 2τ]. Up to |Δ| = τ the scaled estimate must match
    Γ²e^{2Γτ-γ|Δ|} within SIGMA_LIMIT standard errors; beyond τ the segments no
    longer overlap and the estimate plateaus at Γ²e^{2Γτ-γτ}, reported separately.
    """
    params, K = config.params, config.dt_divisor
    lag_steps = sorted({round(j * 2 * K / config.lags) for j in range(config.lags + 1)})
    lags = [s * config.dt for s in lag_steps]
    estimates = sample_phase_autocovariance(config.master_seed, config.n_paths, 3 * K, config.dt, params.gamma,
                                            window=params.tau, lags=lags, origin_stride=max(1, K // 10))
    scale = params.Gamma ** 2 * math.exp(2.0 * params.Gamma * params.tau)
    within, beyond, rows = [], [], []
    for est in estimates:
        regime = "within_tau" if abs(est.lag) <= params.tau * (1.0 + 1e-12) else "beyond_tau"
        expected = math.exp(-params.gamma * min(abs(est.lag), params.tau))
        deviation = est.deviation(expected)
        kernel = scale * math.exp(-params.gamma * abs(est.lag))
        (within if regime == "within_tau" else beyond).append(deviation)
        rows.append((est.lag / params.tau, est.estimate.real, est.estimate.imag, est.stderr,
                     scale * est.estimate.real, kernel, scale * expected, deviation, regime))
    max_within = max(within) if within else 0.0
    passed = max_within <= SIGMA_LIMIT
    lines = [f"within_tau: max_deviation_sigma={max_within:.6g}"]
    if beyond:
        lines.append(f"beyond_tau: max_deviation_from_plateau_sigma={max(beyond):.6g} "
                     f"(segments disjoint; the O-U kernel keeps decaying, the estimate does not)")
    lines.append(f"verdict: {'PASS' if passed else 'FAIL'}")
    for line in lines:
        logger.info(line)
    count = _emit(config, ["lag_over_tau", "estimate_re", "estimate_im", "stderr", "scaled_estimate",
                           "ou_kernel", "segment_expected", "deviation_sigma", "regime"], rows, lines)
    return Report(rows=count, lines=lines, passed=passed, details={"max_deviation": max_within})


def _score(mean: np.ndarray, model: np.ndarray, sigma: np.ndarray) -> Dict[str, float]:
    z = (mean - model) / sigma
    return {"chi2": float(np.sum(z ** 2)), "fraction_within": float(np.mean(np.abs(z) <= SIGMA_LIMIT))}


def cmd_adjudicate_eq13(config: ScenarioConfig) -> Report:
    """
    Compare the ensemble mean at φ = 2π on (τ, 2τ] with both 2τ-window formulas.

    The winner has the smaller chi-square; the outcome is a tie when the two
    formulas are less than one standard error apart at the median point.
    """
    params = config.params.with_phi(TWO_PI)
    tau = params.tau
    stats = run_ensemble(params, config.n_paths, config.master_seed, config.dt, t_max=2.0 * tau,
                         workers=config.workers)
    times = stats.times
    scored = (times > tau * (1.0 + 1e-12)) & _in_window(times, tau, 2.0 * tau)
    t = np.clip(times[scored], tau, 2.0 * tau)
    mean = stats.mean[scored]
    sigma = np.sqrt(stats.stderr[scored] ** 2 + STDERR_FLOOR ** 2)
    paper = population_2tau_paper(t, params)
    cross = population_2tau_with_cross(t, params)
    scores = {"paper": _score(mean, paper, sigma), "with_cross": _score(mean, cross, sigma)}
    separation = float(np.median(np.abs(paper - cross) / sigma))
    if separation < 1.0:
        winner = "tie"
    else:
        winner = min(scores, key=lambda name: scores[name]["chi2"])
    lines = [f"score: {name} chi2={s['chi2']:.6g} fraction_within_3sigma={s['fraction_within']:.6g}"
             for name, s in scores.items()]
    lines += [f"median_separation_sigma={separation:.6g}", f"winner: {winner}"]
    for line in lines:
        logger.info(line)
    rows = zip(t / tau, mean, stats.stderr[scored], paper, cross, (mean - paper) / sigma, (mean - cross) / sigma)
    count = _emit(config, ["t_over_tau", "ensemble_mean", "stderr", "population_2tau_paper",
                           "population_2tau_with_cross", "z_paper", "z_with_cross"], rows, lines)
    return Report(rows=count, lines=lines, details={"winner": winner, "scores": scores})


def cmd_moments(config: ScenarioConfig) -> Report:
    """Quadrature noise averages next to the per-path Monte Carlo estimates"""
    params = config.params
    t = round(config.t_over_tau * config.dt_divisor) * config.dt
    if t > 3.0 * params.tau * (1.0 + 1e-12):
        raise DomainError(f"moments are evaluated up to 3τ, got t/τ={config.t_over_tau}")
    quadrature = noise_moments(t, params).as_dict()
    estimates = monte_carlo_moments(t, params, config.n_paths, config.master_seed, config.dt)
    rows, deviations = [], []
    for name in MOMENT_NAMES:
        est = estimates[name]
        deviation = est.deviation(quadrature[name])
        deviations.append(deviation)
        rows.append((name, quadrature[name], est.value, est.stderr, deviation))
    passed = max(deviations) <= SIGMA_LIMIT
    lines = [f"verdict: {'PASS' if passed else 'FAIL'}"]
    logger.info(f"Moments at t/τ={t / params.tau:.6g}: {lines[0]}")
    count = _emit(config, ["moment", "quadrature", "monte_carlo", "stderr", "deviation_sigma"], rows, lines)
    return Report(rows=count, lines=lines, passed=passed)


COMMANDS = {
    "simulate": cmd_simulate,
    "analytic": cmd_analytic,
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
    "verify-ou": cmd_verify_ou,
    "adjudicate-eq13": cmd_adjudicate_eq13,
    "moments": cmd_moments,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, dest="master_seed", help="Ensemble master seed")
    common.add_argument("--paths", type=int, dest="n_paths", help="Number of noise realizations")
    common.add_argument("--dt-divisor", type=int, dest="dt_divisor", help="K with dt = tau / K")
    common.add_argument("--phi", type=float, help="Feedback phase in radians")
    common.add_argument("--gamma-tau", type=float, dest="gamma_tau", help="Noise strength times delay")
    common.add_argument("--Gamma-tau", type=float, dest="Gamma_tau", help="Decay rate times delay")
    common.add_argument("--out", dest="output_path", help="Output CSV (default: stdout)")
    common.add_argument("--workers", type=int, help="Worker processes for ensembles")
    common.add_argument("--no-timestamp", action="store_true", help="Omit the generated_at header line")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

    parser = argparse.ArgumentParser(description="Emitter decay under delayed feedback with phase noise",
                                     allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="One realization as a trajectory CSV")
    analytic = sub.add_parser("analytic", parents=[common], help="Closed-form curves")
    analytic.add_argument("--points", type=int, help="Number of time points")
    sub.add_parser("fig1", parents=[common], help="Population curves with and without noise")
    fig2 = sub.add_parser("fig2", parents=[common], help="Noise-induced population difference map")
    fig2.add_argument("--phase-steps", type=int, dest="phase_steps", help="Phases in [0, 2pi]")
    fig2.add_argument("--time-steps", type=int, dest="time_steps", help="Times in [tau, 3tau]")
    verify = sub.add_parser("verify-ou", parents=[common], help="O-U kernel emergence check")
    verify.add_argument("--lags", type=int, help="Number of lags in (0, 2tau]")
    sub.add_parser("adjudicate-eq13", parents=[common], help="Compare both 2tau-window formulas with the ensemble")
    moments = sub.add_parser("moments", parents=[common], help="Quadrature vs Monte Carlo noise averages")
    moments.add_argument("--t-over-tau", type=float, dest="t_over_tau", help="Evaluation time in units of tau")
    return parser


OVERRIDE_KEYS = ("master_seed", "n_paths", "dt_divisor", "phi", "gamma_tau", "Gamma_tau", "output_path",
                 "workers", "points", "phase_steps", "time_steps", "lags", "t_over_tau")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    overrides = {key: getattr(args, key, None) for key in OVERRIDE_KEYS}
    if args.no_timestamp:
        overrides["timestamp"] = False
    try:
        config = resolve_config(args.config, overrides)
        report = COMMANDS[args.command](config)
        logger.info(f"{args.command}: wrote {report.rows} rows to {config.output_path or 'stdout'}")
        return EXIT_OK
    except FeedbackSimError as e:
        logger.error(f"{args.command} failed: {e}")
        return exit_code_for(e)
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
