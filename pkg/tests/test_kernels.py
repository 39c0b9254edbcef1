"""The compiled kernels must agree with the plain-numpy reference path."""

import os
import subprocess
import sys

import numpy as np
import pytest

from gllod import kernels
from gllod.forms import QUAD_RULES
from gllod.mesh import build_uniform

SEED = 77


def _inputs(n=8, seed=SEED):
    mesh = build_uniform(n)
    rng = np.random.default_rng(seed)
    nv = mesh.num_vertices
    return mesh, rng.standard_normal((4, nv)), rng


@pytest.mark.parametrize("rule", ["midpoint3", "dunavant4"])
def test_paths_agree(rule):
    mesh, (vre, vim, dre, dim_), rng = _inputs()
    tri, area = mesh.triangles, mesh.triangle_area
    bary, w = QUAD_RULES[rule]

    assert np.allclose(
        kernels.quartic_integral(tri, vre, vim, bary, w, area),
        kernels.quartic_integral_numpy(tri, vre, vim, bary, w, area),
        rtol=1e-13,
    )
    assert np.allclose(
        kernels.line_coeffs(tri, vre, vim, dre, dim_, bary, w, area),
        kernels.line_coeffs_numpy(tri, vre, vim, dre, dim_, bary, w, area),
        rtol=1e-12,
        atol=1e-13,
    )
    got = kernels.cubic_load(tri, vre, vim, bary, w, area, mesh.num_vertices)
    ref = kernels.cubic_load_numpy(tri, vre, vim, bary, w, area, mesh.num_vertices)
    assert np.allclose(got[0], ref[0], atol=1e-14) and np.allclose(got[1], ref[1], atol=1e-14)

    weight = np.abs(rng.standard_normal((tri.shape[0], bary.shape[0])))
    assert np.allclose(
        kernels.weighted_mass_local(weight, bary, w, area),
        kernels.weighted_mass_local_numpy(weight, bary, w, area),
        rtol=1e-13,
    )
    assert np.allclose(
        kernels.density_quad_values(tri, vre, vim, bary),
        kernels.density_quad_values_numpy(tri, vre, vim, bary),
        rtol=1e-13,
    )


def test_line_coeffs_match_energy_polynomial():
    # phi(t) built from the coefficients must equal the quartic integral of u+t*d
    mesh, (ure, uim, dre, dim_), _ = _inputs(6, SEED + 1)
    tri, area = mesh.triangles, mesh.triangle_area
    bary, w = QUAD_RULES["dunavant4"]
    coeffs = kernels.line_coeffs(tri, ure, uim, dre, dim_, bary, w, area)
    for t in (0.0, 0.3, 1.7, -2.0):
        direct = kernels.quartic_integral(
            tri, ure + t * dre, uim + t * dim_, bary, w, area
        )
        poly = float(np.polyval(coeffs[::-1], t))
        assert abs(poly - direct) < 1e-11 * max(1.0, abs(direct))


def test_env_flag_disables_numba():
    env = dict(os.environ, GLLOD_NUMBA="0")
    code = "import gllod.kernels as k; raise SystemExit(0 if not k.using_numba() else 1)"
    proc = subprocess.run([sys.executable, "-c", code], env=env)
    assert proc.returncode == 0
