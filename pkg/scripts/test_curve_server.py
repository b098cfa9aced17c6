#!/usr/bin/env python3
"""
Tests for the HTTP endpoints of the curve server.
"""

import math
import os
import sys

import pytest
from fastapi.testclient import TestClient

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from curve_server import MAX_PATHS_ENV, app

client = TestClient(app)


class TestInfoEndpoints:
    def test_root_lists_endpoints(self):
        response = client.get("/")
        assert response.status_code == 200
        assert set(response.json()["endpoints"]) >= {"/analytic", "/moments", "/ou-kernel", "/ensemble", "/health"}

    def test_health(self):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "healthy"


class TestAnalyticEndpoint:
    def test_second_window(self):
        data = client.get("/analytic", params={"t_over_tau": 1.5}).json()
        assert data["wigner_weisskopf"] == pytest.approx(math.exp(-1.5))
        assert data["population_2tau_with_cross"] is not None
        assert data["population_3tau"] == pytest.approx(data["population_2tau_with_cross"], rel=1e-4)

    def test_formulas_outside_window_are_null(self):
        data = client.get("/analytic", params={"t_over_tau": 2.5}).json()
        assert data["population_2tau_paper"] is None
        assert data["population_3tau"] is not None
        data = client.get("/analytic", params={"t_over_tau": 3.5}).json()
        assert data["population_3tau"] is None
        assert data["feedback_no_noise"] > 0

    def test_invalid_parameters(self):
        response = client.get("/analytic", params={"t_over_tau": 1.0, "tau": 0.0})
        assert response.status_code == 422
        assert client.get("/analytic", params={"t_over_tau": -1.0}).status_code == 422


class TestMomentsEndpoint:
    def test_below_delay(self):
        data = client.get("/moments", params={"t_over_tau": 0.5}).json()
        assert data["mean_N"] == 0.0 and data["MMstar"] == 0.0

    def test_noiseless_values(self):
        data = client.get("/moments", params={"t_over_tau": 2.0, "gamma_tau": 0.0}).json()
        assert data["mean_N"] == pytest.approx(1.0)
        assert data["NNstar"] == pytest.approx(1.0, rel=1e-6)

    def test_beyond_third_window(self):
        assert client.get("/moments", params={"t_over_tau": 3.5}).status_code == 422


class TestKernelEndpoint:
    def test_zero_lag(self):
        data = client.get("/ou-kernel", params={"delta_over_tau": 0.0, "Gamma_tau": 0.5}).json()
        assert data["kernel"] == pytest.approx(0.25 * math.e)

    def test_decay(self):
        data = client.get("/ou-kernel", params={"delta_over_tau": 0.5, "gamma_tau": 2.0}).json()
        assert data["kernel"] == pytest.approx(0.25 * math.e * math.exp(-1.0))


class TestEnsembleEndpoint:
    def test_first_window_mean(self):
        response = client.post("/ensemble", json={"n_paths": 50, "dt_divisor": 20, "t_over_tau": 0.5})
        assert response.status_code == 200
        data = response.json()
        assert data["n"] == 50
        assert data["mean"] == pytest.approx(math.exp(-0.5), rel=1e-12)
        assert data["stderr"] == pytest.approx(0.0, abs=1e-12)
        assert data["no_noise"] == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_path_cap(self, monkeypatch):
        monkeypatch.setenv(MAX_PATHS_ENV, "10")
        response = client.post("/ensemble", json={"n_paths": 50})
        assert response.status_code == 422
        assert "exceeds" in response.json()["detail"]

    def test_request_validation(self):
        assert client.post("/ensemble", json={"n_paths": 1}).status_code == 422
        assert client.post("/ensemble", json={"tau": 0.0}).status_code == 422

    def test_non_decimal_step(self):
        response = client.post("/ensemble", json={"n_paths": 4, "tau": 1.0, "dt_divisor": 3, "t_over_tau": 1.0})
        assert response.status_code == 200
        assert response.json()["t"] == pytest.approx(1.0)
