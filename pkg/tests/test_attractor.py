import json
import math

import numpy as np
import pytest

from fbm_bipolar.attractor import (
    PullbackExperiment,
    beta_zeta_4,
    cocycle_evaluate,
    condition_check,
    condition_threshold_C1,
    deepest_t0,
    default_r2,
    linearized_decay_rate,
    pullback_run,
    stationary_z,
    write_report,
)
from fbm_bipolar.fbm import DomainError
from fbm_bipolar.fluid import FluidParams
from fbm_bipolar.solver import EnergyConstants, SolveConfig
from fbm_bipolar.spectral import SpectralVelocityField
from fbm_bipolar.stoch_conv import NoiseRealization

M = 4


def test_condition_threshold_value():
    v = condition_check(1.0, 0.1)
    assert v.threshold == pytest.approx(0.9342671450031579, abs=1e-12)
    assert v.passed and v.c2_window_nonempty
    assert not condition_check(1.0, 1.0).passed
    assert condition_threshold_C1(1.0) ** 2 * beta_zeta_4() == pytest.approx(1.0)


def test_noise_off_pullback_rate():
    cfg = SolveConfig(M=M, dt=2 ** -9)
    ics = [SpectralVelocityField.random(M, np.random.default_rng([0, i]), norm=0.5) for i in range(3)]
    rep = pullback_run(PullbackExperiment([-0.5, -1.0, -1.5], ics, None, cfg))
    assert rep.monotone
    rates = [math.log(a / b) / 0.5 for a, b in zip(rep.diameters, rep.diameters[1:])]
    assert rates == pytest.approx([linearized_decay_rate(FluidParams())] * 2, rel=0.01)


def test_linearized_rate_formula():
    assert linearized_decay_rate(FluidParams()) == pytest.approx(4.0 + 2.0 * 2.0 ** -0.25 * 2.0)


def test_pullback_t0_validation():
    with pytest.raises(DomainError):
        PullbackExperiment([-1.0, -0.5], [], None)


@pytest.fixture(scope="module")
def noise():
    return NoiseRealization.sample(M, 0.35, 1.0, master_seed=31, points_per_unit=256, t_start=-6.0)


def test_stationary_z_needs_burn_in(noise):
    with pytest.raises(DomainError):
        stationary_z(noise, -2.0, 0.0, 2 ** -8)
    Z = stationary_z(noise, -1.0, 0.0, 2 ** -8)
    assert Z.shape == (257, M, M)


def test_cocycle_property(noise):
    cfg = SolveConfig(M=M, dt=2 ** -8)
    u0 = SpectralVelocityField.random(M, np.random.default_rng(3), norm=1.0)
    s, t = 0.25, 0.5
    direct = cocycle_evaluate(s + t, noise, u0, cfg)
    mid = cocycle_evaluate(s, noise, u0, cfg)
    composed = cocycle_evaluate(t, noise.shift(s), mid, cfg)
    assert np.max(np.abs(direct.coeffs - composed.coeffs)) < 1e-12
    assert cocycle_evaluate(0.0, noise, u0, cfg).coeffs.tolist() == u0.coeffs.tolist()


def test_radius_helpers():
    k = EnergyConstants.choose(0.15)
    assert default_r2(k, 0.0) == 1.0
    with pytest.raises(DomainError):
        default_r2(k, 1e6)
    t0 = deepest_t0(0.5, 1.0, 1e-8)
    assert math.exp(0.5 * (1 + t0)) * 1.0 == pytest.approx(1e-8)


def test_write_report_handles_numpy(tmp_path):
    p = write_report({"a": np.float64(1.5), "b": np.arange(3)}, tmp_path / "r.json")
    assert json.loads(p.read_text()) == {"a": 1.5, "b": [0, 1, 2]}


def test_rho_H_tail_beyond_T_w_10():
    from fbm_bipolar.attractor import absorbing_radius_estimate
    from fbm_bipolar.fluid import estimate_C1
    from fbm_bipolar.spectral import mode_eigenvalues

    Mf, dt = 8, 2 ** -10
    k = EnergyConstants.choose(estimate_C1(1000, Mf).value)
    noise = NoiseRealization.sample(Mf, 0.35, 0.0, 0, t_start=-25.0)
    Z = stationary_z(noise, -20.0, 0.0, dt)
    zh = float(np.einsum("mn,kmn->k", np.sqrt(mode_eigenvalues(Mf)), Z * Z).mean())
    r2 = default_r2(k, zh)
    rho = [absorbing_radius_estimate(noise, r2, k, FluidParams(), T_w, dt).rho_H for T_w in (5.0, 10.0, 20.0)]
    assert rho[0] <= rho[1] <= rho[2]
    # expected red: with r2 at half the margin the tail decays like exp(-r2 T_w), r2 ~ 0.7
    assert rho[2] - rho[1] < 1e-6, f"rho_H at T_w = 5/10/20: {rho}"
