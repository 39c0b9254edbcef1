"""Vortex-lattice experiment harness.

Ten standard initial guesses on (-1,1)^2 pulled to the unit square,
table runs over kappa grids, phase-aligned convergence-rate ladders
against a fine reference minimizer, energy-gap studies, vortex
counting, and the field CSV interchange format.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from gllod import forms, lod, mesh, minimize, spaces

ALPHA = (1.0 + 1.0j) / math.sqrt(2.0)

VORTEX_THRESHOLD = 0.2

SPACE_KINDS = ("lod", "standard_p1")

TABLE_HEADER = ("initial", "kappa", "energy", "iterations", "termination")
FIELD_HEADER = ("x", "y", "re", "im")


# ----------------------------------------------------------------------
# initial values
# ----------------------------------------------------------------------

def _psi6(x, y):
    return ALPHA * (x + 1j * y) * np.exp(-10j * (x * x + y * y))


def _psi(j, x, y):
    r2 = x * x + y * y
    if j == 1:
        return ALPHA * np.exp(-r2)
    if j == 2:
        return ALPHA * (x + 1j * y) * np.exp(-r2)
    if j == 3:
        return 1.0 - ALPHA * np.exp(-5.0 * r2)
    if j == 4:
        return (1.0 / math.sqrt(math.pi)) * ((2.0 / 3.0) * (x + 1j * y) + 0.5) * np.exp(-r2)
    if j == 5:
        return ALPHA * np.exp(-10j * r2)
    if j == 6:
        return _psi6(x, y)
    if j == 7:
        return 1.0 - ALPHA * np.sin(4.0 * np.pi * x) ** 2 * np.sin(4.0 * np.pi * y) ** 2
    if j == 8:
        return _psi6(x - 0.5, y - 0.5)
    if j == 9:
        return ALPHA * (x - 0.5 + 1j) * np.ones_like(x)
    if j == 10:
        return ALPHA * np.ones_like(x, dtype=complex)
    raise ValueError(f"initial value index must be in 1..10, got {j}")


def initial_value(j, fine_mesh) -> forms.Field:
    """Nodal interpolation of psi_j pulled back to the unit square.

    The template functions live on (-1,1)^2 and are composed with the
    affine map (x,y) -> (2x-1, 2y-1).
    """
    m = fine_mesh.fine if hasattr(fine_mesh, "fine") else fine_mesh
    x = 2.0 * m.vertices[:, 0] - 1.0
    y = 2.0 * m.vertices[:, 1] - 1.0
    vals = np.asarray(_psi(int(j), x, y), dtype=complex)
    return forms.Field(m, vals)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    kappa: float
    coarse_n: int
    fine_n: int
    layers: int
    space: str = "lod"
    initial: object = 10  # 1..10 or a field CSV path
    tol: float = 1e-15
    max_iter: int = minimize.DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.space not in SPACE_KINDS:
            raise ValueError(f"space must be one of {SPACE_KINDS}, got {self.space!r}")
        if self.coarse_n < 1 or self.fine_n % self.coarse_n != 0:
            raise ValueError(
                f"fine_n={self.fine_n} must be a multiple of coarse_n={self.coarse_n}"
            )
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if isinstance(self.initial, bool) or not isinstance(self.initial, (int, str)):
            raise ValueError("initial must be an index 1..10 or a CSV path")
        if isinstance(self.initial, int) and not 1 <= self.initial <= 10:
            raise ValueError(f"initial value index must be in 1..10, got {self.initial}")


_CONFIG_REQUIRED = ("kappa", "coarse_n", "fine_n", "layers")
_CONFIG_OPTIONAL = ("space", "initial", "tol", "max_iter")


def config_from_dict(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    unknown = sorted(set(data) - set(_CONFIG_REQUIRED) - set(_CONFIG_OPTIONAL))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in _CONFIG_REQUIRED if k not in data]
    if missing:
        raise ValueError(f"missing config keys: {', '.join(missing)}")
    kwargs = {}
    for key in ("kappa", "tol"):
        if key in data:
            kwargs[key] = float(data[key])
    for key in ("coarse_n", "fine_n", "layers", "max_iter"):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("space", "initial"):
        if key in data:
            kwargs[key] = data[key]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "kappa": config.kappa,
        "coarse_n": config.coarse_n,
        "fine_n": config.fine_n,
        "layers": config.layers,
        "space": config.space,
        "initial": config.initial,
        "tol": config.tol,
        "max_iter": config.max_iter,
    }


# ----------------------------------------------------------------------
# space assembly
# ----------------------------------------------------------------------

def _cache_name(config: ExperimentConfig) -> str:
    return (
        f"lod_c{config.coarse_n}_f{config.fine_n}"
        f"_l{config.layers}_k{config.kappa!r}.basis"
    )


def build_hierarchy(config: ExperimentConfig) -> mesh.Hierarchy:
    ratio = config.fine_n // config.coarse_n
    levels = ratio.bit_length() - 1
    if 2**levels != ratio:
        raise ValueError(
            f"fine_n/coarse_n must be a power of two, got {config.fine_n}/{config.coarse_n}"
        )
    return mesh.refine(mesh.build_uniform(config.coarse_n), levels)


def build_space(config: ExperimentConfig, cache_dir=None, dense=None, jobs=1):
    """Discrete space for a config; LOD bases are disk-cached if a dir is given.

    dense=None picks the dense-basis representation automatically for
    saturated patches, whose columns have global support anyway.
    """
    hier = build_hierarchy(config)
    params = forms.experiment_params(config.kappa)
    if config.space == "standard_p1":
        return spaces.standard_p1_space(hier, params)
    if dense is None:
        dense = config.layers >= 2 * config.coarse_n
    basis = None
    cache_path = None
    # saturated bases are dense and large; recomputing beats caching them
    if cache_dir is not None and not dense:
        import os

        cache_path = os.path.join(str(cache_dir), _cache_name(config))
        if os.path.exists(cache_path):
            try:
                basis = lod.load_basis(cache_path, hier, params, config.layers)
            except ValueError as exc:
                warnings.warn(f"rebuilding basis cache: {exc}", stacklevel=2)
    if basis is None:
        basis = lod.build_lod_basis(
            hier, params, config.layers, jobs=jobs, dense=dense
        )
        if cache_path is not None:
            lod.save_basis(cache_path, basis)
    return spaces.lod_space(basis, dense=dense)


def load_initial(config: ExperimentConfig, fine_mesh) -> forms.Field:
    if isinstance(config.initial, int):
        return initial_value(config.initial, fine_mesh)
    fld = import_field(config.initial)
    if fld.mesh.n != fine_mesh.n:
        raise ValueError(
            f"initial field is on a mesh with n={fld.mesh.n}, expected {fine_mesh.n}"
        )
    return forms.Field(fine_mesh, fld.values)


def run_cell(config: ExperimentConfig, space=None, cache_dir=None, log=None):
    """Minimize one configuration; returns the MinimizeRun."""
    if space is None:
        space = build_space(config, cache_dir=cache_dir)
    u0 = load_initial(config, space.mesh)
    x0 = space.project_initial(u0)
    return minimize.csg_minimize(
        space, x0, tol=config.tol, max_iter=config.max_iter, log=log
    )


# ----------------------------------------------------------------------
# run table
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    initial: object
    kappa: float
    energy: float
    iterations: int
    termination: str


def run_table(base: ExperimentConfig, kappas, initials, cache_dir=None, jobs=1):
    """Energy table over initials (rows) and kappas (columns).

    Returns TableRow entries in fixed initial-major order; failed runs
    are rows like any other, flagged by their termination value.
    """
    kappas = list(kappas)
    initials = list(initials)
    space_for = {}
    for kappa in kappas:
        cfg = replace(base, kappa=kappa)
        space = build_space(cfg, cache_dir=cache_dir, jobs=jobs)
        # touch cached operators so concurrent cells never race the builds
        _ = space.mplus, space.magnetic_op
        if space._dense:
            space.metric_context(np.zeros(space.dim, dtype=complex))
        space_for[kappa] = space

    cells = [(j, kappa) for j in initials for kappa in kappas]

    def solve(cell):
        j, kappa = cell
        cfg = replace(base, kappa=kappa, initial=j)
        run = run_cell(cfg, space=space_for[kappa])
        return TableRow(j, kappa, run.final_energy, run.iterations, run.termination)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(solve, cells))
    else:
        rows = [solve(cell) for cell in cells]
    return rows


def write_table(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for row in rows:
        writer.writerow(
            [row.initial, repr(float(row.kappa)), repr(float(row.energy)),
             row.iterations, row.termination]
        )


# ----------------------------------------------------------------------
# phase alignment and error measures
# ----------------------------------------------------------------------

def align_phase(u: forms.Field, v: forms.Field) -> float:
    """Angle theta in [0, 2pi) minimizing the L2 distance of u and e^{i theta} v."""
    m = forms.assemble_mass(u.mesh).hermitian
    pairing = np.vdot(v.values, m @ u.values)  # integral of u * conj(v)
    norm_u = math.sqrt(max(np.vdot(u.values, m @ u.values).real, 0.0))
    norm_v = math.sqrt(max(np.vdot(v.values, m @ v.values).real, 0.0))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("phase alignment needs two nonzero fields")
    if abs(pairing) <= 1e-14 * norm_u * norm_v:
        warnings.warn("fields are phase-orthogonal; returning theta=0", stacklevel=2)
        return 0.0
    return float(np.angle(pairing) % (2.0 * np.pi))


def aligned_difference(u: forms.Field, v: forms.Field) -> forms.Field:
    theta = align_phase(u, v)
    return forms.Field(u.mesh, u.values - np.exp(1j * theta) * v.values)


# ----------------------------------------------------------------------
# convergence-rate ladder
# ----------------------------------------------------------------------

@dataclass
class LevelResult:
    n: int
    h: float
    energy: float
    iterations: int
    termination: str
    h1_error: float
    l2_error: float
    excluded: bool = False
    reason: str = ""


@dataclass
class RateStudy:
    kappa: float
    coarse_levels: list
    reference: forms.Field
    reference_energy: float
    levels: list
    h1_slope: float
    l2_slope: float


@dataclass
class GapStudy:
    gaps: list
    slope: float
    flags: list


def _slope(hs, errs):
    """Least-squares log-log slope over all points with positive error."""
    pts = [(h, e) for h, e in zip(hs, errs) if e > 0.0]
    if len(pts) < 2:
        return float("nan")
    lh = np.log([p[0] for p in pts])
    le = np.log([p[1] for p in pts])
    return float(np.polyfit(lh, le, 1)[0])


def rate_study(
    base: ExperimentConfig,
    coarse_levels,
    level_spacing=None,
    cache_dir=None,
    log=None,
) -> RateStudy:
    """Phase-aligned errors of ladder minimizers against a fine reference.

    The reference is the fine-mesh P1 minimizer started from the same
    initial value.  LOD ladders run with saturated patches, so the study
    isolates the ideal-space rate from localization error.  level_spacing,
    when given, is the energy distance to the nearest other local level;
    a ladder minimizer closer to another level than to the reference
    (farther than half the spacing) landed in a different basin and is
    excluded from the fit.  Within half the spacing the offset is ordinary
    discretization error, which at coarse resolution can dwarf any fixed
    small radius.
    """
    params = forms.experiment_params(base.kappa)
    fine = mesh.build_uniform(base.fine_n)
    ref_space = spaces.fine_space(fine, params)
    u0 = load_initial(base, fine)
    if log is not None:
        log.write(f"reference: fine n={base.fine_n}, initial {base.initial}\n")
    ref_run = minimize.csg_minimize(
        ref_space, ref_space.project_initial(u0), tol=base.tol, max_iter=base.max_iter
    )
    if ref_run.termination != "converged":
        raise RuntimeError(f"reference run terminated with {ref_run.termination}")
    reference = ref_run.final
    if log is not None:
        log.write(
            f"reference energy {ref_run.final_energy:.12f} "
            f"after {ref_run.iterations} iterations\n"
        )

    levels = []
    for n in coarse_levels:
        cfg = replace(base, coarse_n=n)
        if base.space == "lod":
            cfg = replace(cfg, layers=2 * n)
        space = build_space(cfg, cache_dir=cache_dir)
        run = run_cell(cfg, space=space)
        diff = aligned_difference(reference, run.final)
        res = LevelResult(
            n=n,
            h=1.0 / n,
            energy=run.final_energy,
            iterations=run.iterations,
            termination=run.termination,
            h1_error=forms.h1kappa_norm(diff, params.kappa),
            l2_error=forms.l2_norm(diff),
        )
        if run.termination != "converged":
            res.excluded = True
            res.reason = f"terminated with {run.termination}"
        elif level_spacing is not None and abs(
            run.final_energy - ref_run.final_energy
        ) > 0.5 * level_spacing:
            res.excluded = True
            res.reason = "energy level differs from reference (basin mismatch)"
        levels.append(res)
        if log is not None:
            log.write(
                f"n={n} E={res.energy:.12f} its={res.iterations} {res.termination} "
                f"H1k={res.h1_error:.4e} L2={res.l2_error:.4e}"
                + (f" EXCLUDED: {res.reason}\n" if res.excluded else "\n")
            )
        del space

    kept = [r for r in levels if not r.excluded]
    return RateStudy(
        kappa=base.kappa,
        coarse_levels=list(coarse_levels),
        reference=reference,
        reference_energy=ref_run.final_energy,
        levels=levels,
        h1_slope=_slope([r.h for r in kept], [r.h1_error for r in kept]),
        l2_slope=_slope([r.h for r in kept], [r.l2_error for r in kept]),
    )


def energy_gap_study(study: RateStudy) -> GapStudy:
    """Per-level energy gaps to the reference minimum and their decay rate.

    Gaps are nonnegative for subspace minimization; one below -1e-10
    flags the reference as not converged.
    """
    flags = []
    kept = [r for r in study.levels if not r.excluded]
    gaps = [r.energy - study.reference_energy for r in kept]
    for r, gap in zip(kept, gaps):
        if gap < -1e-10:
            flags.append(f"reference-not-converged (gap {gap:.3e} at n={r.n})")
    slope = _slope([r.h for r in kept], [max(g, 0.0) for g in gaps])
    return GapStudy(gaps=gaps, slope=slope, flags=flags)


# ----------------------------------------------------------------------
# vortex counting
# ----------------------------------------------------------------------

def count_vortices(u: forms.Field, threshold=VORTEX_THRESHOLD) -> int:
    """Connected low-density regions not touching the boundary.

    Components of {vertex: |u| < threshold} under mesh-edge adjacency;
    components containing a boundary vertex are excluded.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    mask = np.abs(u.values) < threshold
    if not mask.any():
        return 0
    tri = u.mesh.triangles
    heads = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    tails = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    keep = mask[heads] & mask[tails]
    nv = u.mesh.num_vertices
    adj = sp.coo_matrix(
        (np.ones(keep.sum(), dtype=np.int8), (heads[keep], tails[keep])),
        shape=(nv, nv),
    ).tocsr()
    _, labels = csgraph.connected_components(adj, directed=False)
    boundary = u.mesh.boundary_vertex_mask()
    low = np.unique(labels[mask])
    touching = np.unique(labels[mask & boundary])
    return int(len(np.setdiff1d(low, touching, assume_unique=True)))


# ----------------------------------------------------------------------
# field CSV interchange
# ----------------------------------------------------------------------

def export_field(u: forms.Field, fh):
    """CSV x,y,re,im, one row per vertex in index order; exact roundtrip."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FIELD_HEADER)
    verts = u.mesh.vertices
    vals = u.values
    for k in range(u.mesh.num_vertices):
        writer.writerow(
            [
                repr(float(verts[k, 0])),
                repr(float(verts[k, 1])),
                repr(float(vals[k].real)),
                repr(float(vals[k].imag)),
            ]
        )


def import_field(path) -> forms.Field:
    """Read a field CSV back onto its structured mesh; strict validation."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty field file") from None
        if tuple(h.strip() for h in header) != FIELD_HEADER:
            raise ValueError(f"{path}, line 1: header must be x,y,re,im")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}, line {lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ValueError(f"{path}, line {lineno}: non-numeric entry") from None
    count = len(rows)
    n = math.isqrt(count) - 1
    if n < 1 or (n + 1) ** 2 != count:
        raise ValueError(f"{path}: {count} rows do not form a square vertex grid")
    data = np.asarray(rows)
    m = mesh.build_uniform(n)
    if not (
        np.array_equal(data[:, 0], m.vertices[:, 0])
        and np.array_equal(data[:, 1], m.vertices[:, 1])
    ):
        bad = np.flatnonzero(
            (data[:, 0] != m.vertices[:, 0]) | (data[:, 1] != m.vertices[:, 1])
        )[0]
        raise ValueError(
            f"{path}, line {int(bad) + 2}: coordinates do not match the "
            f"structured grid for n={n}"
        )
    return forms.Field(m, data[:, 2] + 1j * data[:, 3])
