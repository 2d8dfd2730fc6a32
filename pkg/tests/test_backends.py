import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbm_bipolar import kernels
from fbm_bipolar._backend import HAS_NUMBA

_PROBE = """
import json, numpy as np
from fbm_bipolar import BACKEND
from fbm_bipolar.fbm import SampledFunction, kstar_eval, uniform_grid
from fbm_bipolar.special import lattice_sum
from fbm_bipolar.stoch_conv import NoiseRealization, convolution_trajectories
g = uniform_grid(1.0, 128)
phi = SampledFunction(g, np.sin(3 * g))
z = convolution_trajectories(NoiseRealization.sample(3, 0.35, 0.5, 1, 256), 0.0, 0.5)
print(json.dumps({"backend": BACKEND, "kstar": kstar_eval(phi, [0.2, 0.7], 1.0, 0.3).tolist(),
                  "lattice": lattice_sum(1.0, 300), "z": z[..., -1].ravel().tolist()}))
"""


def _probe(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("FBM_BIPOLAR_DISABLE_NUMBA", None)
    if disable:
        env["FBM_BIPOLAR_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_env_flag_switches_backend_and_results_agree():
    fast, plain = _probe(False), _probe(True)
    assert plain["backend"] == "numpy"
    assert fast["backend"] == ("numba" if HAS_NUMBA else "numpy")
    assert np.allclose(fast["kstar"], plain["kstar"], rtol=1e-12)
    assert fast["lattice"] == pytest.approx(plain["lattice"], rel=1e-13)
    assert np.allclose(fast["z"], plain["z"], rtol=1e-12, atol=1e-15)


@settings(max_examples=15, deadline=None)
@given(s=st.floats(0.3, 3.0), M=st.integers(1, 200))
def test_lattice_variants_agree(s, M):
    assert kernels.lattice_sum_numba(s, M) == pytest.approx(kernels.lattice_sum_numpy(s, M), rel=1e-13)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), H=st.floats(0.26, 0.49))
def test_singular_variants_agree(seed, H):
    rng = np.random.default_rng(seed)
    grid = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 40)]))
    phi = rng.standard_normal(grid.size)
    s = rng.uniform(0.01, 0.99, 12)
    a = kernels.singular_integral_numpy(s, grid, phi, 1.0, H)
    b = kernels.singular_integral_numba(s, grid, phi, 1.0, H)
    # random grids contain micro-cells where the moment differences cancel; 1e-8 covers that rounding
    assert np.allclose(a, b, rtol=1e-8, atol=1e-10)


def test_singular_integral_of_linear_function():
    # phi(r) = r, t = 1: int_s^1 (r - s)^{H-1/2} (s/r)^{1/2-H} dr, checked by quadrature
    from scipy import integrate

    H, s = 0.35, 0.3
    ref = integrate.quad(lambda r: (s / r) ** (0.5 - H), s, 1.0, weight="alg", wvar=(H - 0.5, 0.0),
                         epsrel=1e-12)[0]
    # (s/r)^{1/2-H} is interpolated linearly per cell, so the error falls like the cell width squared
    errs = []
    for n in (64, 128):
        grid = np.linspace(0, 1, n + 1)
        vals = [fn(np.array([s]), grid, grid.copy(), 1.0, H)[0]
                for fn in (kernels.singular_integral_numpy, kernels.singular_integral_numba)]
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)
        errs.append(abs(vals[0] - ref))
    assert errs[1] < 1e-4 * ref
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
