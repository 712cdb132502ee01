"""Forward experiment drivers: from a configuration to a measurement set.

Builds the two source families the reconstruction consumes:

* a geometric ladder of triangular pulses with a fixed mean-zero smooth
  spatial part (time-order stage), measured up to each pulse's own horizon;
* a basis of spatial sources with compact temporal pulses of two widths
  (Laplace stage). The spatial basis is either the one-hot nodal basis of
  W1 (exact residue-operator comparisons) or an orthonormalized batch of
  random smooth fields (cheaper, spans enough directions for rank counts).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import MeasurementRecord, MeasurementSet
from .forward import ExponentPair, SourceSpec, TimeGrid, solve_field
from .manifolds import ModelManifold, RegionPatch, SpectrumTable, enumerate_spectrum

__all__ = ["ExperimentDesign", "build_measurement_set", "smooth_basis"]


@dataclass
class ExperimentDesign:
    """Everything cmd_forward needs; true exponents stay in `exponents` and
    are written only to the sealed section of the dataset."""

    manifold_kind: str
    resolution: tuple
    w1_bounds: tuple
    w2_bounds: tuple
    exponents: ExponentPair
    lam_max: float
    # pulse ladder (time-order stage)
    ladder_t0: float = 200.0
    ladder_count: int = 6
    ladder_points: int = 3072
    # Laplace stage
    bump_widths: tuple = (0.6, 0.42)
    bump_horizon: float = 60.0
    bump_points: int = 12001
    source_mode: str = "nodal"          # "nodal" | "random"
    n_random_sources: int = 32
    mean_zero_sources: bool = False     # pole-stage sources; when False the
                                        # k=0 mode appears as a pole at mu=0
    seed: int = 0
    payload_dtype: str = "complex128"

    def manifold(self) -> ModelManifold:
        return ModelManifold(self.manifold_kind, tuple(self.resolution))


def smooth_basis(patch: RegionPatch, n: int, seed: int = 0,
                 mean_zero: bool = True) -> np.ndarray:
    """Orthonormalized random smooth fields on the patch nodes (n columns).

    Columns are weighted-orthonormal: Xi^T diag(w) Xi = I.
    """
    rng = np.random.default_rng(seed)
    x = patch.nodes
    lo = np.array([b[0] for b in patch.bounds])
    span = np.array([(b[1] - b[0]) % (2.0 * np.pi) or (b[1] - b[0]) for b in patch.bounds])
    u = (x - lo[None, :]) % (2.0 * np.pi) / span[None, :]
    # half-period sine modes vanish at the patch boundary: smooth extensions
    cols = []
    k = 1
    while len(cols) < max(3 * n, 12):
        for combo in _mode_combos(patch.nodes.shape[1], k):
            cols.append(np.prod(np.sin(np.pi * u * np.array(combo)[None, :]), axis=1))
            if len(cols) >= max(3 * n, 12):
                break
        k += 1
    basis = np.stack(cols, axis=1)
    mix = rng.standard_normal((basis.shape[1], n))
    xi = basis @ mix
    if mean_zero:
        xi = xi - (patch.weights @ xi)[None, :] / np.sum(patch.weights)
    # weighted Gram-Schmidt via Cholesky of the Gram matrix
    g = xi.T @ (patch.weights[:, None] * xi)
    L = np.linalg.cholesky(g + 1e-12 * np.trace(g) / n * np.eye(n))
    return xi @ np.linalg.inv(L).T


def _mode_combos(dim: int, k: int):
    if dim == 1:
        return [(k,)]
    if dim == 2:
        return [(k, j) for j in range(1, k + 1)] + [(j, k) for j in range(1, k)]
    return [(k, 1, 1), (1, k, 1), (1, 1, k), (k, k, 1), (k, 1, k), (1, k, k)]


def alpha_stage_xi(patch: RegionPatch) -> np.ndarray:
    """Fixed mean-zero smooth spatial part for the pulse ladder: difference
    of two displaced bumps, projected to exact quadrature mean zero."""
    x = patch.nodes
    lo = np.array([b[0] for b in patch.bounds])
    span = np.array([(b[1] - b[0]) % (2.0 * np.pi) or (b[1] - b[0]) for b in patch.bounds])
    u = ((x - lo[None, :]) % (2.0 * np.pi)) / span[None, :]
    g1 = np.exp(-0.5 * np.sum(((u - 0.35) / 0.16) ** 2, axis=1))
    g2 = np.exp(-0.5 * np.sum(((u - 0.65) / 0.16) ** 2, axis=1))
    xi = g1 - 0.8 * g2
    xi = xi - np.sum(patch.weights * xi) / np.sum(patch.weights)
    return xi


def build_measurement_set(design: ExperimentDesign,
                          table: SpectrumTable | None = None):
    """Run the forward solver for every tagged source; returns
    (MeasurementSet, sealed_dict, SpectrumTable)."""
    manifold = design.manifold()
    if table is None:
        table = enumerate_spectrum(manifold, design.lam_max)
    w1 = RegionPatch.from_bounds(manifold, design.w1_bounds)
    w2 = RegionPatch.from_bounds(manifold, design.w2_bounds)
    if not w1.is_disjoint_from(w2):
        raise ValueError("W1 and W2 must be disjoint with separated closures")
    exps = design.exponents
    records = []
    kernel_cache: dict = {}

    # --- pulse ladder ---
    xi_a = alpha_stage_xi(w1)
    for j in range(design.ladder_count):
        t_r = design.ladder_t0 * 2.0**j
        grid = TimeGrid(t_r, design.ladder_points)
        src = SourceSpec(xi_a, "triangle", t_r, patch=w1, mean_zero=True)
        sol = solve_field(src, table, exps, grid, w2, kernel_cache=kernel_cache)
        records.append(
            MeasurementRecord("triangle", t_r, xi_a.copy(), sol.w2_series,
                              grid.horizon, grid.n)
        )

    # --- Laplace-stage basis ---
    if design.source_mode == "nodal":
        basis = np.eye(w1.node_idx.size)
    else:
        basis = smooth_basis(w1, design.n_random_sources, seed=design.seed)
    grid_b = TimeGrid(design.bump_horizon, design.bump_points)
    for width in design.bump_widths:
        for jcol in range(basis.shape[1]):
            xi = basis[:, jcol].astype(complex)
            if design.mean_zero_sources:
                xi = xi - np.sum(w1.weights * xi) / np.sum(w1.weights)
            src = SourceSpec(xi, "bspline", width, patch=w1,
                             mean_zero=design.mean_zero_sources)
            sol = solve_field(src, table, exps, grid_b, w2,
                              kernel_cache=kernel_cache)
            records.append(
                MeasurementRecord("bspline", width, xi, sol.w2_series,
                                  grid_b.horizon, grid_b.n)
            )

    ms = MeasurementSet(
        manifold_kind=design.manifold_kind,
        resolution=tuple(design.resolution),
        w1_bounds=tuple(tuple(b) for b in design.w1_bounds),
        w2_bounds=tuple(tuple(b) for b in design.w2_bounds),
        records=records,
        flags={
            "dim": manifold.dim,
            "dim_below_paper_assumption": manifold.dim < 2,
            "source_mode": design.source_mode,
        },
    )
    sealed = {"alpha": exps.alpha, "beta": exps.beta, "lam_max": design.lam_max}
    return ms, sealed, table
