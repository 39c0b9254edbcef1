"""Nonlinear conjugate Sobolev gradient descent.

One step: solve (delta, w)_{X,u} = ((1+|A|^2)u, w) in the iterate-
adapted metric, form the Sobolev gradient g = u - delta, combine with
the previous direction through a nonnegative Polak-Ribiere parameter,
and take the golden-section-optimal step of E(u + tau d) on [0.1, 30].

The line-search objective is a quartic polynomial in tau; its five
coefficients are assembled once per search, so probes cost nothing.
Descent stops when the energy decrease falls below tol; two
consecutive lower-bound steps with increasing energy terminate the run
as stalled (the divergence signature of hard kappa/initial pairs), and
a vanishing direction terminates it as a critical point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gllod import forms, kernels

GOLDEN_INTERVAL = (0.1, 30.0)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

DEFAULT_TOL = 1e-15
DEFAULT_MAX_ITER = 20000
ZERO_DIRECTION_NORM = 1e-14


@dataclass
class DescentState:
    """Traces of one run; energies, steps and betas in iteration order."""

    energy_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    beta_trace: list = field(default_factory=list)


@dataclass
class MinimizeRun:
    final: forms.Field
    coefficients: np.ndarray
    iterations: int
    termination: str
    final_energy: float
    state: DescentState

    @property
    def converged(self):
        return self.termination == "converged"


def line_energy(space, x, d):
    """Quartic polynomial tau -> E(u + tau d), coefficients ascending."""
    a_op = space.magnetic_op
    qa0 = a_op.quad_form(x)
    qa1 = 2.0 * a_op.bilinear(x, d)
    qa2 = a_op.quad_form(d)
    u_fine = space.to_fine(x)
    d_fine = space.to_fine(d)
    bary, w = forms.QUAD_RULES[space.params.quad_quartic]
    quart = kernels.line_coeffs(
        space.mesh.triangles,
        np.ascontiguousarray(u_fine.real),
        np.ascontiguousarray(u_fine.imag),
        np.ascontiguousarray(d_fine.real),
        np.ascontiguousarray(d_fine.imag),
        bary,
        w,
        space.mesh.triangle_area,
    )
    coeffs = 0.25 * quart
    coeffs[0] += 0.5 * qa0
    coeffs[1] += 0.5 * qa1
    coeffs[2] += 0.5 * qa2
    return np.polynomial.Polynomial(coeffs)


def golden_section(phi, interval=GOLDEN_INTERVAL, tol=None):
    """Minimize phi on the interval; returns (tau, at_lower_bound).

    tau equals interval[0] exactly when the search collapses onto the
    lower bound, the stall signature the caller watches for.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("empty line-search interval")
    if tol is None:
        tol = 1e-6 * (hi - lo)
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = phi(d)
    if a == lo:
        return lo, True
    return 0.5 * (a + b), False


def polak_ribiere(g_n, g_prev, metric_n, metric_prev):
    """Nonnegative conjugation parameter from successive Sobolev gradients."""
    den = metric_prev.quad_form(g_prev)
    if den <= 0.0:
        raise ValueError("previous gradient has zero metric norm; descent converged")
    num = metric_n.bilinear(g_n, np.asarray(g_n) - np.asarray(g_prev))
    return max(0.0, num / den)


def sobolev_gradient(space, x, context=None):
    """Sobolev gradient g = u - delta and the metric solve delta."""
    ctx = space.metric_context(x) if context is None else context
    delta = ctx.solve(space.mplus @ x)
    return x - delta, delta


def csg_minimize(
    space,
    x0,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    log=None,
) -> MinimizeRun:
    """Minimize the energy over the space from the coefficients x0.

    Parameters
    ----------
    space : DiscreteSpace
    x0 : complex coefficients in the space; must be nonzero
    tol : energy-decrease termination threshold
    max_iter : iteration cap
    log : optional text sink; one tab-separated line per step
          (iteration, energy, step, beta, metric gradient norm)
    """
    x = np.asarray(x0, dtype=complex).copy()
    if x.shape != (space.dim,):
        raise ValueError(f"initial coefficients have shape {x.shape}, expected ({space.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("initial coefficients contain non-finite entries")
    if np.linalg.norm(x) == 0.0:
        raise ValueError("initial iterate is zero, a critical point; supply u0 != 0")

    state = DescentState()
    energy = space.energy(x)
    termination = "max_iterations"
    iterations = 0
    d_prev = None
    g_prev = None
    gnorm2_prev = 0.0
    delta_warm = None
    stall = 0

    for n in range(max_iter):
        ctx = space.metric_context(x)
        delta = ctx.solve(space.mplus @ x, x0=delta_warm)
        delta_warm = delta
        g = x - delta
        gnorm2 = ctx.quad_form(g)

        if d_prev is None:
            beta = 0.0
            d = delta - x
        else:
            if gnorm2_prev <= 0.0:
                termination = "converged"
                break
            beta = max(0.0, ctx.bilinear(g, g - g_prev) / gnorm2_prev)
            d = delta - x + beta * d_prev

        if math.sqrt(max(ctx.quad_form(d), 0.0)) <= ZERO_DIRECTION_NORM:
            termination = "zero_direction"
            break

        phi = line_energy(space, x, d)
        tau, at_lower = golden_section(phi)
        new_energy = float(phi(tau))
        x = x + tau * d
        iterations = n + 1
        decrease = energy - new_energy
        increased = new_energy > energy + 1e-12 * (1.0 + abs(energy))

        state.energy_trace.append(new_energy)
        state.step_trace.append(tau)
        state.beta_trace.append(beta)
        if log is not None:
            log.write(
                f"{n}\t{new_energy:.16e}\t{tau:.10g}\t{beta:.10g}\t"
                f"{math.sqrt(max(gnorm2, 0.0)):.10g}\n"
            )

        g_prev, gnorm2_prev, d_prev, energy = g, gnorm2, d, new_energy

        stall = stall + 1 if (at_lower and increased) else 0
        if stall >= 2:
            termination = "stalled_at_lower_bound"
            break
        if not increased and decrease < tol:
            termination = "converged"
            break

    return MinimizeRun(
        final=space.fine_field(x),
        coefficients=x,
        iterations=iterations,
        termination=termination,
        final_energy=energy,
        state=state,
    )


def restart_with_perturbation(space, run: MinimizeRun, report, scale=1e-2):
    """New initial coefficients nudged along an offending Hessian direction.

    Requires the spectrum report to expose a nonpositive eigenvalue whose
    eigenvector is not the gauge mode iu; refuses otherwise.  The
    perturbation is metric-normalized and sized relative to the iterate.
    """
    x = run.coefficients
    mass = space.mass_op
    iu = 1j * x
    iu_norm2 = mass.quad_form(iu)
    candidates = []
    for lam, vec in zip(report.eigenvalues, report.eigenvectors):
        if lam > report.tol0:
            continue
        if iu_norm2 > 0.0:
            align = abs(np.vdot(iu, mass.hermitian @ vec)) / math.sqrt(
                max(iu_norm2 * mass.quad_form(vec), 1e-300)
            )
            if align >= 0.99:
                continue  # the gauge mode is expected, not offending
        candidates.append(vec)
    if not candidates:
        raise ValueError(
            "spectrum shows no nonpositive eigenvalue beyond the gauge mode; "
            "no restart direction available"
        )
    vec = candidates[0].astype(complex)
    if iu_norm2 > 0.0:
        vec = vec - (np.vdot(iu, mass.hermitian @ vec) / iu_norm2) * iu
    ctx = space.metric_context(x)
    vnorm = math.sqrt(max(ctx.quad_form(vec), 0.0))
    if vnorm == 0.0:
        raise ValueError("offending eigenvector collapsed onto the gauge mode")
    vec = vec / vnorm
    unorm = math.sqrt(max(ctx.quad_form(x), 0.0))
    eps = scale * unorm if unorm > 0.0 else scale
    return x + eps * vec
