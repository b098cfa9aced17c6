#!/usr/bin/env python3
"""
FastAPI server for evaluating the feedback-noise library over HTTP

Provides read-only REST endpoints:
- GET /analytic - Closed-form population curves at one time
- GET /moments - The five noise averages at one time
- GET /ou-kernel - Correlation of the feedback-filtered noise
- POST /ensemble - Monte Carlo population mean at one time
- GET /health - Health check endpoint
"""

import logging
import os
import time
from contextlib import asynccontextmanager
from typing import Any, Dict

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from analytic_solutions import (ou_kernel, population_2tau_paper, population_2tau_with_cross, population_3tau,
                                series_amplitude_no_noise, wigner_weisskopf_population)
from ensemble import run_ensemble
from gaussian_moments import noise_moments
from noise_paths import grid_index
from sim_errors import FeedbackSimError, QuadratureError
from system_params import SystemParams

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

MAX_PATHS_ENV = "FEEDBACK_SIM_MAX_PATHS"
DEFAULT_MAX_PATHS = 20_000
VERSION = "1.0.0"


def max_paths() -> int:
    return int(os.environ.get(MAX_PATHS_ENV, DEFAULT_MAX_PATHS))


@asynccontextmanager
async def lifespan(app: FastAPI):
    """FastAPI lifespan context manager for startup/shutdown"""
    logger.info("Starting feedback curve server...")
    logger.info(f"Ensemble requests capped at {max_paths()} paths ({MAX_PATHS_ENV})")
    yield
    logger.info("Shutting down feedback curve server...")


app = FastAPI(
    title="Feedback Noise Curves API",
    description="Closed-form and Monte Carlo populations of an emitter under delayed feedback with phase noise",
    version=VERSION,
    lifespan=lifespan
)


class EnsembleRequest(BaseModel):
    Gamma_tau: float = 0.5
    gamma_tau: float = 2.0
    phi: float = 3.3
    tau: float = Field(1.0, gt=0)
    n_paths: int = Field(1000, ge=2)
    dt_divisor: int = Field(100, ge=1)
    master_seed: int = Field(42, ge=0)
    t_over_tau: float = Field(2.0, ge=0)


def _raise_http(what: str, e: FeedbackSimError):
    logger.error(f"{what} failed: {e}")
    status = 500 if isinstance(e, QuadratureError) else 422
    raise HTTPException(status_code=status, detail=f"{what} failed: {str(e)}")


def _params(Gamma_tau: float, gamma_tau: float, phi: float, tau: float) -> SystemParams:
    return SystemParams.from_dimensionless(Gamma_tau, gamma_tau, phi, tau=tau)


@app.get("/")
async def root():
    """Root endpoint with basic API information"""
    return {
        "message": "Feedback Noise Curves API",
        "version": VERSION,
        "endpoints": {
            "/analytic": "Closed-form populations at t",
            "/moments": "Noise averages <N>, <NN*>, <M>, <N*M>, <MM*> at t",
            "/ou-kernel": "O-U kernel value at a lag",
            "/ensemble": "Monte Carlo population mean at t (POST)",
            "/health": "Health check",
            "/docs": "API documentation"
        }
    }


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {
        "status": "healthy",
        "timestamp": time.time()
    }


@app.get("/analytic")
def analytic(t_over_tau: float, Gamma_tau: float = 0.5, gamma_tau: float = 2.0, phi: float = 3.3,
             tau: float = 1.0) -> Dict[str, Any]:
    """
    Closed-form curves at t = t_over_tau·τ

    Formulas outside their validity window are returned as null.
    """
    try:
        p = _params(Gamma_tau, gamma_tau, phi, tau)
        t = t_over_tau * tau
        in_second = tau <= t <= 2.0 * tau
        return {
            "t": t,
            "params": p.as_dict(),
            "wigner_weisskopf": wigner_weisskopf_population(t, p),
            "feedback_no_noise": abs(series_amplitude_no_noise(t, p)) ** 2,
            "population_2tau_paper": population_2tau_paper(t, p) if in_second else None,
            "population_2tau_with_cross": population_2tau_with_cross(t, p) if in_second else None,
            "population_3tau": population_3tau(t, p) if t <= 3.0 * tau else None,
        }
    except FeedbackSimError as e:
        _raise_http("analytic evaluation", e)


@app.get("/moments")
def moments(t_over_tau: float, gamma_tau: float = 2.0, tau: float = 1.0) -> Dict[str, Any]:
    """Noise averages at t = t_over_tau·τ (independent of Γ and φ)"""
    try:
        p = _params(0.0, gamma_tau, 0.0, tau)
        return noise_moments(t_over_tau * tau, p).as_dict()
    except FeedbackSimError as e:
        _raise_http("moment evaluation", e)


@app.get("/ou-kernel")
def kernel(delta_over_tau: float, Gamma_tau: float = 0.5, gamma_tau: float = 2.0,
           tau: float = 1.0) -> Dict[str, Any]:
    try:
        p = _params(Gamma_tau, gamma_tau, 0.0, tau)
        return {"delta": delta_over_tau * tau, "kernel": ou_kernel(delta_over_tau * tau, p)}
    except FeedbackSimError as e:
        _raise_http("kernel evaluation", e)


@app.post("/ensemble")
def ensemble(request: EnsembleRequest) -> Dict[str, Any]:
    """
    Ensemble mean of |P|² at t = t_over_tau·τ

    The number of paths is capped by FEEDBACK_SIM_MAX_PATHS.
    """
    cap = max_paths()
    if request.n_paths > cap:
        raise HTTPException(status_code=422, detail=f"n_paths={request.n_paths} exceeds the limit of {cap}")
    try:
        p = _params(request.Gamma_tau, request.gamma_tau, request.phi, request.tau)
        dt = request.tau / request.dt_divisor
        index = grid_index(round(request.t_over_tau * request.dt_divisor) * dt, dt, "t")
        stats = run_ensemble(p, request.n_paths, request.master_seed, dt, t_max=max(index, 1) * dt)
        return {
            "t": index * dt,
            "mean": float(stats.mean[index]),
            "stderr": float(stats.stderr[index]),
            "n": stats.n,
            "no_noise": float(np.abs(series_amplitude_no_noise(index * dt, p)) ** 2),
        }
    except FeedbackSimError as e:
        _raise_http("ensemble", e)


def main():
    """Main entry point for the FastAPI server"""
    port = int(os.environ.get("PORT", 8080))
    host = os.environ.get("HOST", "0.0.0.0")

    logger.info(f"Starting FastAPI server on {host}:{port}")

    uvicorn.run(
        "curve_server:app",
        host=host,
        port=port,
        log_level="info",
        access_log=True
    )


if __name__ == "__main__":
    main()
