"""Multiscale basis construction checks.

Oracles: the fine-space Galerkin solve (for the projection identity),
brute-force detail vectors w - prolong(l2_project(w)), and explicit
patch membership for support checks.
"""

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from gllod import forms, lod
from gllod.forms import Field, Params, experiment_params, zero_potential
from gllod.mesh import build_uniform, refine

SEED = 4451


def saturated(hier):
    return 2 * hier.coarse.n


def rand_complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def detail_vectors(hier, rng, count):
    nf = hier.fine.num_vertices
    return [lod.detail_component(hier, rand_complex(rng, nf)) for _ in range(count)]


@pytest.fixture(scope="module")
def small_hier():
    return refine(build_uniform(4), 2)  # coarse n=4, fine n=16


@pytest.fixture(scope="module")
def small_basis(small_hier):
    return lod.build_lod_basis(small_hier, experiment_params(10.0), saturated(small_hier))


def test_l2_project_identity_on_coarse_range(small_hier):
    rng = np.random.default_rng(SEED)
    x = rand_complex(rng, small_hier.coarse.num_vertices)
    back = lod.l2_project(small_hier, lod.prolong(small_hier, x))
    assert np.max(np.abs(back - x)) < 1e-12

    const = np.full(small_hier.fine.num_vertices, 2.5 - 1.0j)
    px = lod.l2_project(small_hier, const)
    assert np.max(np.abs(px - (2.5 - 1.0j))) < 1e-12

    # idempotence through the fine space
    z = rand_complex(rng, small_hier.fine.num_vertices)
    p1 = lod.l2_project(small_hier, z)
    p2 = lod.l2_project(small_hier, lod.prolong(small_hier, p1))
    assert np.max(np.abs(p2 - p1)) < 1e-12


def test_detail_component_in_kernel(small_hier):
    rng = np.random.default_rng(SEED + 1)
    for w in detail_vectors(small_hier, rng, 5):
        assert np.max(np.abs(lod.l2_project(small_hier, w))) < 1e-12


def test_corrector_constraint_residuals(small_basis):
    hier = small_basis.hierarchy
    b = small_basis.basis
    nh = hier.coarse.num_vertices
    eye = np.eye(nh)
    proj = np.column_stack(
        [lod.l2_project(hier, np.asarray(b[:, j].todense()).ravel()) for j in range(nh)]
    )
    assert np.max(np.abs(proj - eye)) < 1e-10


def test_saturated_a_orthogonality(small_basis):
    hier = small_basis.hierarchy
    a = forms.assemble_magnetic(hier.fine, small_basis.params)
    rng = np.random.default_rng(SEED + 2)
    col_norms = np.array(
        [forms.h1kappa_norm(small_basis.column(j), small_basis.kappa)
         for j in range(hier.coarse.num_vertices)]
    )
    for w in detail_vectors(hier, rng, 50):
        wn = forms.h1kappa_norm(Field(hier.fine, w), small_basis.kappa)
        # complex pairing bounds the real form for both w and iw
        vals = np.abs(small_basis.basis.conj().T @ a.apply(w))
        assert np.max(vals / (col_norms * wn)) < 1e-8


def test_column_support_inside_patch():
    hier = refine(build_uniform(8), 1)
    params = experiment_params(5.0)
    layers = 1
    basis = lod.build_lod_basis(hier, params, layers)
    for j in range(hier.coarse.num_vertices):
        patch = hier.vertex_patch(j, layers)
        allowed = np.zeros(hier.fine.num_vertices, bool)
        allowed[hier.fine.triangles[patch.fine_elements].ravel()] = True
        col = basis.basis[:, j]
        assert allowed[col.indices].all(), f"column {j} leaks outside its patch"


def test_decompose_is_projection(small_basis):
    hier = small_basis.hierarchy
    rng = np.random.default_rng(SEED + 3)
    x = rand_complex(rng, hier.coarse.num_vertices)
    v = small_basis.basis @ x
    assert np.max(np.abs(lod.lod_decompose(small_basis, v) - v)) < 1e-10
    # linearity
    z1 = rand_complex(rng, hier.fine.num_vertices)
    z2 = rand_complex(rng, hier.fine.num_vertices)
    lin = lod.lod_decompose(small_basis, 2.0 * z1 + 1j * z2)
    sep = 2.0 * lod.lod_decompose(small_basis, z1) + 1j * lod.lod_decompose(small_basis, z2)
    assert np.max(np.abs(lin - sep)) < 1e-11
    # P_h of the decomposition recovers P_h of the input
    ph = lod.l2_project(hier, z1)
    assert np.max(np.abs(lod.l2_project(hier, lod.lod_decompose(small_basis, z1)) - ph)) < 1e-11


def test_detail_space_coercivity():
    # kappa-weighted Garding-type bound a(w,w) >= 1/4 |w|_{H1_kappa}^2 on W
    hier = refine(build_uniform(8), 2)  # coarse 8, fine 32
    kappa = 10.0
    a = forms.assemble_magnetic(hier.fine, experiment_params(kappa))
    rng = np.random.default_rng(SEED + 4)
    for w in detail_vectors(hier, rng, 100):
        lhs = a.quad_form(w)
        rhs = 0.25 * forms.h1kappa_norm(Field(hier.fine, w), kappa) ** 2
        assert lhs >= rhs - 1e-10


def test_compress_agreement_and_errors(small_basis):
    hier = small_basis.hierarchy
    rng = np.random.default_rng(SEED + 5)
    x = rand_complex(rng, hier.coarse.num_vertices)
    bx = small_basis.basis @ x

    m = forms.assemble_mass(hier.fine)
    mx = lod.compress(m, small_basis)
    assert abs(mx.quad_form(x) - m.quad_form(bx)) < 1e-12 * abs(m.quad_form(bx))
    assert np.all(mx.hermitian.diagonal().real > 0)

    u = Field(hier.fine, rand_complex(rng, hier.fine.num_vertices))
    hess = forms.hessian_operator(u, small_basis.params)
    hx = lod.compress(hess, small_basis)
    assert abs(hx.quad_form(x) - hess.quad_form(bx)) < 1e-10 * max(1.0, abs(hess.quad_form(bx)))

    # dense basis path
    dense = small_basis.basis.toarray()
    mx2 = lod.compress(m, dense)
    assert abs(mx2.quad_form(x) - m.quad_form(bx)) < 1e-12 * abs(m.quad_form(bx))

    small_mesh_op = forms.assemble_mass(hier.coarse)
    with pytest.raises(ValueError, match="dimension"):
        lod.compress(small_mesh_op, small_basis)


def test_compressed_magnetic_psd(small_basis):
    hx = lod.compress(
        forms.assemble_magnetic(small_basis.hierarchy.fine, small_basis.params),
        small_basis,
    )
    vals = np.linalg.eigvalsh(hx.hermitian.toarray())
    assert vals.min() >= -1e-10


def test_galerkin_projection_identity_magnetic():
    # with a definite form, the multiscale Galerkin solution equals
    # P_h^LOD of the fine Galerkin solution (a-orthogonal splitting)
    hier = refine(build_uniform(4), 2)
    params = experiment_params(1.0)
    basis = lod.build_lod_basis(hier, params, saturated(hier))
    h = forms.assemble_magnetic(hier.fine, params).hermitian.tocsc()
    f = forms.scalar_mass(hier.fine) @ np.ones(hier.fine.num_vertices)
    u_fine = spla.splu(h).solve(f.astype(complex))
    hx = lod.compress(forms.assemble_magnetic(hier.fine, params), basis)
    x = np.linalg.solve(hx.hermitian.toarray(), basis.basis.conj().T @ f)
    diff = basis.basis @ x - lod.lod_decompose(basis, u_fine)
    assert np.max(np.abs(diff)) < 1e-10 * np.max(np.abs(u_fine))


def test_galerkin_projection_identity_neumann():
    # pure-Neumann Laplacian: solutions live modulo constants, so use a
    # zero-mean load and compare after removing the mass-weighted mean
    hier = refine(build_uniform(4), 2)
    params = Params(kappa=1.0, potential=zero_potential())
    basis = lod.build_lod_basis(hier, params, saturated(hier))
    fine = hier.fine
    nf = fine.num_vertices
    k = forms.scalar_stiffness(fine)
    m = forms.scalar_mass(fine)
    ones = np.ones(nf)
    f = m @ (fine.vertices[:, 0] - 0.5)  # zero-mean load
    import scipy.sparse as sp

    aug = sp.bmat([[k, (m @ ones)[:, None]], [(m @ ones)[None, :], None]], format="csc")
    u_fine = spla.splu(aug).solve(np.concatenate([f, [0.0]]))[:nf]

    hx = lod.compress(forms.assemble_magnetic(fine, params), basis).hermitian.toarray()
    mx_ones = basis.basis.conj().T @ (m @ ones)
    nh = hier.coarse.num_vertices
    aug_x = np.zeros((nh + 1, nh + 1), complex)
    aug_x[:nh, :nh] = hx
    aug_x[:nh, nh] = mx_ones
    aug_x[nh, :nh] = mx_ones.conj()
    x = np.linalg.solve(aug_x, np.concatenate([basis.basis.conj().T @ f, [0.0]]))[:nh]

    def demean(v):
        return v - (m @ v).sum() / (m @ ones).sum()

    diff = demean(basis.basis @ x) - demean(lod.lod_decompose(basis, u_fine))
    assert np.max(np.abs(diff)) < 1e-9 * max(1.0, np.max(np.abs(u_fine)))


def test_localization_decay():
    hier = refine(build_uniform(8), 3)  # coarse 8, fine 64
    params = experiment_params(10.0)
    full = lod.build_lod_basis(hier, params, saturated(hier))
    j = hier.coarse.num_vertices // 2  # interior vertex
    errs = []
    for ell in (1, 2, 3):
        loc = lod.build_lod_basis(hier, params, ell)
        d = Field(hier.fine, np.asarray((loc.basis[:, j] - full.basis[:, j]).todense()).ravel())
        errs.append(forms.h1kappa_norm(d, params.kappa))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.5 * errs[0]


def test_build_validation_and_zero_layers():
    hier = refine(build_uniform(4), 1)
    params = experiment_params(3.0)
    with pytest.raises(ValueError, match="layers"):
        lod.build_lod_basis(hier, params, -1)
    # ratio-2 hierarchy at ell=0 has no interior fine dofs: basis falls
    # back to the plain nodal embedding
    basis = lod.build_lod_basis(hier, params, 0)
    diff = (basis.basis - hier.prolongation.astype(complex)).tocsr()
    assert np.max(np.abs(diff.data)) if diff.nnz else 0.0 == 0.0


def test_threaded_build_matches_serial():
    hier = refine(build_uniform(4), 2)
    params = experiment_params(7.0)
    b1 = lod.build_lod_basis(hier, params, 2, jobs=1)
    b2 = lod.build_lod_basis(hier, params, 2, jobs=4)
    diff = (b1.basis - b2.basis).tocsr()
    err = np.max(np.abs(diff.data)) if diff.nnz else 0.0
    assert err == 0.0


def test_basis_cache_roundtrip(tmp_path, small_basis):
    path = tmp_path / "basis.bin"
    lod.save_basis(path, small_basis)
    hier = small_basis.hierarchy
    loaded = lod.load_basis(path, hier, small_basis.params, small_basis.layers)
    diff = (loaded.basis - small_basis.basis).tocsr()
    err = np.max(np.abs(diff.data)) if diff.nnz else 0.0
    assert err == 0.0

    with pytest.raises(ValueError, match="kappa"):
        lod.load_basis(path, hier, experiment_params(11.0), small_basis.layers)
    with pytest.raises(ValueError, match="layers"):
        lod.load_basis(path, hier, small_basis.params, small_basis.layers + 1)
    other = refine(build_uniform(2), 2)
    with pytest.raises(ValueError, match="coarse n"):
        lod.load_basis(path, other, small_basis.params, small_basis.layers)

    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTGL v1 4 16 8 10.0\n")
    with pytest.raises(ValueError, match="not a basis cache"):
        lod.load_basis(bad, hier, small_basis.params, small_basis.layers)

    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(path.read_bytes()[:-40])
    with pytest.raises(ValueError, match="truncated|trailing|corrupt"):
        lod.load_basis(trunc, hier, small_basis.params, small_basis.layers)
