"""Assembly and derivative checks against independent oracles.

Oracles: closed-form monomial integrals on the reference triangle,
pointwise quadrature evaluation of the energy integrand (no matrices),
and central finite differences for first and second derivatives.
"""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from gllod import forms
from gllod.forms import (
    Field,
    Params,
    QUAD_RULES,
    default_potential,
    deinterleave,
    energy,
    experiment_params,
    gradient,
    interleave,
    pair,
    zero_potential,
)
from gllod.mesh import build_uniform

SEED = 20260815


def rand_field(mesh, rng, scale=1.0):
    n = mesh.num_vertices
    return Field(mesh, scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))


def reference_triangle_integral(a, b):
    # int_T x^a y^b over {x,y>=0, x+y<=1} = a! b! / (a+b+2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("rule,degree", [("midpoint3", 2), ("dunavant4", 4)])
def test_quadrature_exactness(rule, degree):
    bary, w = QUAD_RULES[rule]
    assert abs(w.sum() - 1.0) < 1e-14
    # barycentric point -> (x, y) on the reference triangle (v1=(1,0), v2=(0,1))
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * float(w @ (x**a * y**b))
            exact = reference_triangle_integral(a, b)
            assert abs(approx - exact) < 1e-15, (rule, a, b)


def test_stiffness_mass_analytic():
    mesh = build_uniform(8)
    x = mesh.vertices[:, 0].astype(complex)
    K = forms.scalar_stiffness(mesh)
    M = forms.scalar_mass(mesh)
    # grad x = (1,0): int |grad x|^2 = 1; int x^2 = 1/3 (P1-exact, x is P1)
    assert abs(np.vdot(x, K @ x).real - 1.0) < 1e-13
    assert abs(np.vdot(x, M @ x).real - 1.0 / 3.0) < 1e-13
    ones = np.ones(mesh.num_vertices)
    assert np.max(np.abs(K @ ones)) < 1e-13
    assert abs((M @ ones).sum() - 1.0) < 1e-13  # partition of unity, unit area


def test_potential_square_integral():
    # int |A|^2 = int (2 sin^2 pi x cos^2 pi y + 2 cos^2 pi x sin^2 pi y) = 1,
    # and the composite midpoint rule hits it exactly on the uniform mesh
    mesh = build_uniform(16)
    p = experiment_params(10.0)
    m_aa = forms.potential_sq_mass(mesh, p)
    ones = np.ones(mesh.num_vertices, complex)
    assert abs(m_aa.quad_form(ones) - 1.0) < 1e-13


def test_energy_reference_values():
    mesh = build_uniform(32)
    p = experiment_params(10.0)
    n = mesh.num_vertices
    assert abs(energy(Field(mesh, np.zeros(n, complex)), p) - 0.25) < 1e-10
    assert abs(energy(Field(mesh, np.ones(n, complex)), p) - 0.5) < 1e-10
    p0 = Params(kappa=10.0, potential=zero_potential())
    assert abs(energy(Field(mesh, np.ones(n, complex)), p0)) < 1e-14


@pytest.mark.parametrize("n", [8, 9])
def test_energy_direct_quadrature_oracle(n):
    # re-evaluate the integrand pointwise at quadrature points, no assembly
    mesh = build_uniform(n)
    p = experiment_params(3.0)
    rng = np.random.default_rng(SEED + n)
    v = rand_field(mesh, rng)
    z = v.values

    md = forms._mesh_data(mesh)
    tri = mesh.triangles
    bary3, w3 = QUAD_RULES["midpoint3"]
    pts = md.quad_points("midpoint3")
    ax, ay = p.potential(pts[..., 0], pts[..., 1])
    vq = z[tri] @ bary3.T
    gx = np.einsum("ep,epd->ed", z[tri], md.grads)
    jx = (1j / p.kappa) * gx[:, None, 0] + ax * vq
    jy = (1j / p.kappa) * gx[:, None, 1] + ay * vq
    apart = md.area * float(((np.abs(jx) ** 2 + np.abs(jy) ** 2) @ w3).sum())
    bary6, w6 = QUAD_RULES["dunavant4"]
    vq6 = z[tri] @ bary6.T
    quart = md.area * float((((1.0 - np.abs(vq6) ** 2) ** 2) @ w6).sum())
    oracle = 0.5 * apart + 0.25 * quart

    assert abs(energy(v, p) - oracle) < 1e-12 * max(1.0, abs(oracle))


def _fd_pair_ok(err_coarse, err_fine, ratio, floor=1e-9):
    # second-order until the central-difference roundoff floor takes over
    if err_coarse <= floor and err_fine <= floor:
        return True
    order = np.log(err_coarse / err_fine) / np.log(ratio)
    return order >= 1.8 or err_fine <= floor


def test_gradient_finite_differences():
    mesh = build_uniform(12)
    p = experiment_params(5.0)
    rng = np.random.default_rng(SEED)
    u = rand_field(mesh, rng)
    d = rand_field(mesh, rng)
    exact = pair(d, gradient(u, p))
    errs = []
    for eps in (1e-3, 1e-4, 1e-5):
        ep = energy(Field(mesh, u.values + eps * d.values), p)
        em = energy(Field(mesh, u.values - eps * d.values), p)
        errs.append(abs((ep - em) / (2 * eps) - exact) / abs(exact))
    assert _fd_pair_ok(errs[0], errs[1], 10.0)
    assert _fd_pair_ok(errs[1], errs[2], 10.0)
    assert errs[1] < 1e-8


def test_hessian_finite_differences():
    mesh = build_uniform(10)
    p = experiment_params(5.0)
    rng = np.random.default_rng(SEED + 1)
    u = rand_field(mesh, rng)
    d = rand_field(mesh, rng)
    w = rand_field(mesh, rng)
    exact = pair(w, forms.hessian_apply(u, d, p))
    errs = []
    for eps in (1e-3, 1e-4):
        gp = gradient(Field(mesh, u.values + eps * d.values), p)
        gm = gradient(Field(mesh, u.values - eps * d.values), p)
        errs.append(abs(pair(w, (gp - gm) / (2 * eps)) - exact) / abs(exact))
    assert _fd_pair_ok(errs[0], errs[1], 10.0)
    assert errs[1] < 1e-8


def test_hessian_exactly_symmetric():
    mesh = build_uniform(8)
    p = experiment_params(7.0)
    rng = np.random.default_rng(SEED + 2)
    u = rand_field(mesh, rng)
    R = forms.hessian_operator(u, p).real_matrix
    asym = sp.csr_matrix(R - R.T)
    scale = np.max(np.abs(R.data))
    err = np.max(np.abs(asym.data)) if asym.nnz else 0.0
    assert err <= 1e-12 * scale
    A = forms.assemble_magnetic(mesh, p).real_matrix
    asym_a = sp.csr_matrix(A - A.T)
    err_a = np.max(np.abs(asym_a.data)) if asym_a.nnz else 0.0
    assert err_a <= 1e-12


def test_gauge_invariance():
    mesh = build_uniform(8)
    p = experiment_params(6.0)
    rng = np.random.default_rng(SEED + 3)
    u = rand_field(mesh, rng)
    w = rand_field(mesh, rng)
    a = forms.assemble_magnetic(mesh, p)
    e0 = energy(u, p)
    a0 = a.bilinear(u.values, w.values)
    for theta in np.linspace(0.0, 2 * np.pi, 16, endpoint=False):
        ph = np.exp(1j * theta)
        assert abs(energy(Field(mesh, ph * u.values), p) - e0) <= 1e-12 * abs(e0)
        assert abs(a.bilinear(ph * u.values, ph * w.values) - a0) <= 1e-12 * max(1, abs(a0))


def test_phase_rotation_zero_mode_identity():
    # gauge invariance forces E'(e^{i t} u) = e^{i t} E'(u); its t-derivative
    # gives E''(u)[iu] = i E'(u) exactly, also for the discrete forms
    mesh = build_uniform(9)
    p = experiment_params(4.0)
    rng = np.random.default_rng(SEED + 4)
    u = rand_field(mesh, rng)
    g = gradient(u, p)
    hv = forms.hessian_apply(u, Field(mesh, 1j * u.values), p)
    assert np.max(np.abs(hv - 1j * g)) <= 1e-12 * max(1.0, np.max(np.abs(g)))


def test_magnetic_form_positive_semidefinite():
    mesh = build_uniform(8)
    p = experiment_params(2.0)
    a = forms.assemble_magnetic(mesh, p)
    rng = np.random.default_rng(SEED + 5)
    for _ in range(20):
        z = rng.standard_normal(mesh.num_vertices) + 1j * rng.standard_normal(mesh.num_vertices)
        assert a.quad_form(z) >= -1e-12 * np.vdot(z, z).real


def test_operator_real_and_complex_paths_agree():
    mesh = build_uniform(7)
    p = experiment_params(3.0)
    a = forms.assemble_magnetic(mesh, p)
    rng = np.random.default_rng(SEED + 6)
    z = rng.standard_normal(mesh.num_vertices) + 1j * rng.standard_normal(mesh.num_vertices)
    via_real = deinterleave(a.real_matrix @ interleave(z))
    assert np.max(np.abs(via_real - a.apply(z))) < 1e-13 * np.max(np.abs(a.apply(z)))
    w = rng.standard_normal(mesh.num_vertices) + 1j * rng.standard_normal(mesh.num_vertices)
    assert abs(a.bilinear(z, w) - float(interleave(z) @ (a.real_matrix @ interleave(w)))) < 1e-12


def test_operator_addition():
    mesh = build_uniform(5)
    p = experiment_params(2.0)
    a = forms.assemble_magnetic(mesh, p)
    m = forms.assemble_mass(mesh)
    rng = np.random.default_rng(SEED + 7)
    z = rng.standard_normal(mesh.num_vertices) + 1j * rng.standard_normal(mesh.num_vertices)
    s = a + m
    assert abs(s.quad_form(z) - (a.quad_form(z) + m.quad_form(z))) < 1e-12 * abs(s.quad_form(z))
    assert s.dimension == 2 * mesh.num_vertices


def test_weighted_mass_validation():
    mesh = build_uniform(4)
    with pytest.raises(ValueError, match="negative weight"):
        forms.assemble_weighted_mass(mesh, lambda x, y: x - 10.0)
    with pytest.raises(ValueError, match="shape"):
        forms.assemble_weighted_mass(mesh, np.ones((3, 3)))
    # constant weight 1 reproduces the mass form
    w1 = forms.assemble_weighted_mass(mesh, lambda x, y: np.ones_like(x))
    m = forms.assemble_mass(mesh)
    rng = np.random.default_rng(SEED + 8)
    z = rng.standard_normal(mesh.num_vertices) + 1j * rng.standard_normal(mesh.num_vertices)
    assert abs(w1.quad_form(z) - m.quad_form(z)) < 1e-12 * abs(m.quad_form(z))


def test_field_and_params_validation():
    mesh = build_uniform(3)
    with pytest.raises(ValueError, match="does not match"):
        Field(mesh, np.zeros(5, complex))
    bad = np.zeros(mesh.num_vertices, complex)
    bad[0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        Field(mesh, bad)
    with pytest.raises(ValueError, match="kappa"):
        Params(kappa=0.0, potential=default_potential())
    with pytest.raises(ValueError, match="quadrature"):
        Params(kappa=1.0, potential=default_potential(), quad_linear="midpoint99")


def test_norms():
    mesh = build_uniform(8)
    ones = Field(mesh, np.ones(mesh.num_vertices, complex))
    vx = Field(mesh, mesh.vertices[:, 0].astype(complex))
    assert abs(forms.l2_norm(ones) - 1.0) < 1e-13
    kappa = 5.0
    assert abs(forms.h1kappa_norm(ones, kappa) - 1.0) < 1e-13
    expect = np.sqrt(1.0 / kappa**2 + 1.0 / 3.0)
    assert abs(forms.h1kappa_norm(vx, kappa) - expect) < 1e-13
