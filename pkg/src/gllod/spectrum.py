"""Second-derivative spectrum checks at descent endpoints.

Minimizers are only ever quasi-isolated: the phase rotations e^{it}u
form a curve of equal energy, so the Hessian carries one structural
zero mode iu.  A converged iterate is certified by the generalized
eigenvalue problem E''(u) v = lambda M v having lambda_1 ~ 0 with
eigenvector aligned to iu and lambda_2 bounded away from zero; the
second eigenvalue doubles as the coercivity proxy on (iu)^perp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from gllod import forms

DEFAULT_K = 6
GAP_MIN = 1e-6
ALIGNMENT_MIN = 0.99
_DENSE_CUTOFF = 3000

CLASS_MINIMIZER = "quasi_isolated_minimizer"
CLASS_SADDLE = "saddle_or_negative"
CLASS_INCONCLUSIVE = "inconclusive"


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: list
    zero_mode_alignment: float
    gap: float
    classification: str
    tol0: float
    residuals: np.ndarray

    def as_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "zero_mode_alignment": float(self.zero_mode_alignment),
            "gap": float(self.gap),
            "classification": self.classification,
        }


def _real_pair(mat, a, b):
    return float(a @ (mat @ b))


def hessian_spectrum(space, x, k=DEFAULT_K) -> SpectrumReport:
    """Lowest eigenpairs of E''(u) v = lambda M v on the space at u."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (space.dim,):
        raise ValueError(f"coefficients have shape {x.shape}, expected ({space.dim},)")
    k = int(k)
    if k < 2:
        raise ValueError("need at least two eigenpairs to classify")
    k = min(k, 2 * space.dim - 1)

    hess = space.compress(forms.hessian_operator(space.fine_field(x), space.params))
    h = hess.real_matrix
    m = space.mass_op.real_matrix
    dim2 = h.shape[0]

    h_dense = h.toarray() if sp.issparse(h) else np.asarray(h)
    m_dense = m.toarray() if sp.issparse(m) else np.asarray(m)
    scale = float(np.max(np.abs(np.diag(h_dense)) / np.diag(m_dense)))

    if dim2 <= _DENSE_CUTOFF:
        vals, vecs = scipy.linalg.eigh(h_dense, m_dense, subset_by_index=[0, k - 1])
    else:
        # shift-invert just below zero: the targets cluster at the low end
        sigma = -1e-3 * scale
        vals, vecs = spla.eigsh(
            sp.csc_matrix(h), k=k, M=sp.csc_matrix(m), sigma=sigma, which="LM"
        )
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    residuals = np.empty(k)
    hnorm = float(np.abs(h_dense).sum(axis=1).max())
    for i in range(k):
        v = vecs[:, i]
        r = h_dense @ v - vals[i] * (m_dense @ v)
        residuals[i] = np.linalg.norm(r) / (hnorm * np.linalg.norm(v))

    tol0 = 1e-8 * scale
    iu = forms.interleave(1j * x)
    iu_norm = math.sqrt(max(_real_pair(m_dense, iu, iu), 0.0))
    v1 = vecs[:, 0]
    v1_norm = math.sqrt(max(_real_pair(m_dense, v1, v1), 0.0))
    if iu_norm > 0.0 and v1_norm > 0.0:
        alignment = abs(_real_pair(m_dense, v1, iu)) / (iu_norm * v1_norm)
    else:
        alignment = 0.0

    gap = float(vals[1] - max(vals[0], 0.0))
    if vals[0] < -tol0:
        classification = CLASS_SADDLE
    elif abs(vals[0]) <= tol0 and vals[1] >= GAP_MIN and alignment >= ALIGNMENT_MIN:
        classification = CLASS_MINIMIZER
    else:
        classification = CLASS_INCONCLUSIVE

    return SpectrumReport(
        eigenvalues=np.asarray(vals, dtype=float),
        eigenvectors=[forms.deinterleave(vecs[:, i]) for i in range(k)],
        zero_mode_alignment=float(alignment),
        gap=gap,
        classification=classification,
        tol0=tol0,
        residuals=residuals,
    )


def coercivity_proxy(report: SpectrumReport) -> float:
    """Second-smallest eigenvalue, the numerical stand-in for the
    coercivity constant on the phase-orthogonal complement."""
    if report.classification != CLASS_MINIMIZER:
        raise ValueError(
            f"coercivity proxy requires a certified minimizer, got {report.classification}"
        )
    return float(report.eigenvalues[1])
