import math

import numpy as np
import pytest

from schiffer_lab.curve_geometry import FourierCurve, enclosed_area, normal_perturbation
from schiffer_lab.errors import ConfigError, StepFailure
from schiffer_lab.flow import FlowConfig, initial_state, perturbed_disk, run, step
from schiffer_lab.riemannian import Functional, MetricSpec, riemannian_gradient


@pytest.fixture(scope="module")
def perturbed_run():
    return run(perturbed_disk(np.random.default_rng(0)), FlowConfig())


def test_config_validation():
    with pytest.raises(ConfigError):
        FlowConfig(s0=0.0)
    with pytest.raises(ConfigError):
        FlowConfig(area=-1.0)
    with pytest.raises(ConfigError):
        FlowConfig(variant="other")
    assert FlowConfig(metric={"kind": "GA", "A": 1.0}).metric == MetricSpec("GA", 1.0)


def test_default_gammas():
    assert FlowConfig().gamma_value == pytest.approx(0.5 * 1.3567775299013788**2)
    assert FlowConfig(functional=Functional.J2).gamma_value == pytest.approx(-1 / math.pi)
    assert FlowConfig(gamma=0.3).gamma_value == 0.3


def test_perturbed_disk_shape():
    c = perturbed_disk(np.random.default_rng(1))
    assert enclosed_area(c) == pytest.approx(math.pi, rel=1e-12)
    r = np.hypot(*(c.samples(512) - c.samples(512).mean(axis=0)).T)
    assert 0.02 < np.ptp(r) / 2 < 0.08
    assert c.harmonics_max == 5


def test_critical_disk_is_fixed_point():
    config = FlowConfig(variant="half", tol=1e-2)
    state = initial_state(FourierCurve.circle(), config)
    assert state.grad_norm <= config.tol
    again = step(state, config)
    assert again is state
    states, verdict = run(FourierCurve.circle(), config)
    assert verdict.converged and verdict.iterations == 0
    assert verdict.disk_defect < 1e-3


def test_first_step_decreases():
    config = FlowConfig()
    state = initial_state(perturbed_disk(np.random.default_rng(0)), config)
    nxt = step(state, config)
    assert nxt.value < state.value
    assert nxt.iteration == 1


def test_step_failure_on_huge_step():
    config = FlowConfig(s0=1e6, metric=MetricSpec("GA", 1.0))
    state = initial_state(FourierCurve.ellipse(3.0, 1 / 3.0), config)
    with pytest.raises(StepFailure):
        step(state, config)


def test_zero_iterations():
    states, verdict = run(perturbed_disk(np.random.default_rng(0)), FlowConfig(max_iter=0))
    assert len(states) == 1
    assert verdict.status == "not converged"
    assert not verdict.converged


def test_flow_converges_to_disk(perturbed_run):
    states, verdict = perturbed_run
    assert verdict.converged
    assert verdict.disk_defect < 1e-2
    assert verdict.conj5_residual < 0.05
    assert not verdict.left_convexity


def test_monotone_descent_and_area(perturbed_run):
    states, _ = perturbed_run
    values = [s.value for s in states]
    assert all(b < a for a, b in zip(values, values[1:]))
    for s in states:
        assert abs(enclosed_area(s.curve) - math.pi) < 1e-8
        assert np.isfinite(s.grad_norm)


@pytest.mark.parametrize("spec", [MetricSpec("GA", 1.0), MetricSpec("G0", 0.0)])
def test_other_metrics_converge(spec):
    states, verdict = run(perturbed_disk(np.random.default_rng(0)), FlowConfig(metric=spec))
    assert verdict.status == "converged"
    assert verdict.disk_defect < 1e-2


def test_high_harmonics_damped_by_sobolev_metric():
    rng = np.random.default_rng(3)
    theta = 2 * np.pi * np.arange(256) / 256
    curve = normal_perturbation(FourierCurve.circle(), 0.01 * np.cos(8 * theta) + 0.01 * np.cos(theta), 1.0)
    density = np.cos(theta) + np.cos(8 * theta) + 0.1 * rng.standard_normal(256)

    def ratio(A):
        grad = riemannian_gradient(MetricSpec("SobolevH1", A), curve, density)
        spec = np.abs(np.fft.rfft(grad)) ** 2
        return spec[8] / spec[1]

    assert ratio(1.0) < 0.1 * ratio(0.0)

