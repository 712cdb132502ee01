"""Model closed manifolds with explicitly known Laplace-Beltrami spectra.

Catalogue: flat tori T^1, T^2, T^3 (side 2*pi) and the unit sphere S^2.
Tori use tensor trapezoidal quadrature on uniform grids, where
trigonometric orthonormality is exact by discrete orthogonality as long
as the grid clears the Nyquist margin; S^2 uses Gauss-Legendre in
colatitude times a uniform longitude grid. Degenerate eigenvalues are
grouped by integer arithmetic (|m|^2 on tori, l(l+1) on the sphere),
never by floating-point comparison.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "ModelManifold",
    "OutOfRangeError",
    "ProjectorData",
    "RegionPatch",
    "ResolutionError",
    "ShapeMismatchError",
    "SpectrumEntry",
    "SpectrumTable",
    "enumerate_spectrum",
    "inner_product",
    "restricted_projector",
    "spectral_mass_report",
    "weyl_count",
    "weyl_slope",
    "zero_extension",
]

_TORI = {"t1": 1, "t2": 2, "t3": 3}


class ResolutionError(ValueError):
    """Grid cannot resolve the requested eigenfunctions."""


class ShapeMismatchError(ValueError):
    """Field samples do not match the manifold grid."""


class OutOfRangeError(ValueError):
    """Query above the table truncation."""


@dataclass(frozen=True)
class ModelManifold:
    """A catalogue manifold with its grid resolution per coordinate."""

    kind: str
    resolution: tuple[int, ...]

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind in _TORI:
            d = _TORI[kind]
            if len(self.resolution) != d:
                raise ValueError(f"{kind} needs {d} resolution entries")
        elif kind == "s2":
            if len(self.resolution) != 2:
                raise ValueError("s2 needs (n_theta, n_phi)")
        else:
            raise ValueError(f"unknown manifold kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return _TORI.get(self.kind, 2)

    @property
    def volume(self) -> float:
        if self.kind in _TORI:
            return (2.0 * np.pi) ** _TORI[self.kind]
        return 4.0 * np.pi

    def grid(self):
        """(nodes, weights): nodes (n, dim) coordinates, weights (n,)."""
        if self.kind in _TORI:
            axes = [np.arange(n) * (2.0 * np.pi / n) for n in self.resolution]
            mesh = np.meshgrid(*axes, indexing="ij")
            nodes = np.stack([m.ravel() for m in mesh], axis=1)
            w = np.full(nodes.shape[0], np.prod([2.0 * np.pi / n for n in self.resolution]))
            return nodes, w
        n_t, n_p = self.resolution
        x, gw = leggauss(n_t)
        theta = np.arccos(x)
        phi = np.arange(n_p) * (2.0 * np.pi / n_p)
        Th, Ph = np.meshgrid(theta, phi, indexing="ij")
        nodes = np.stack([Th.ravel(), Ph.ravel()], axis=1)
        w = np.repeat(gw, n_p) * (2.0 * np.pi / n_p)
        return nodes, w

    def quadrature_volume(self) -> float:
        _, w = self.grid()
        return float(np.sum(w))


@dataclass(frozen=True)
class SpectrumEntry:
    """One distinct eigenvalue with multiplicity and mode labels."""

    lam: float
    mult: int
    labels: tuple


@dataclass
class SpectrumTable:
    """Distinct eigenvalues <= lam_max with orthonormal eigenfunction samples.

    values[:, offsets[k]:offsets[k]+mult_k] holds the samples of the k-th
    eigenspace basis on the manifold grid.
    """

    manifold: ModelManifold
    lam_max: float
    entries: list[SpectrumEntry]
    values: np.ndarray
    nodes: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)

    @property
    def offsets(self) -> np.ndarray:
        mults = np.array([e.mult for e in self.entries])
        return np.concatenate([[0], np.cumsum(mults)])

    @property
    def n_modes(self) -> int:
        return int(sum(e.mult for e in self.entries))

    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    def block(self, k: int) -> np.ndarray:
        off = self.offsets
        return self.values[:, off[k]:off[k + 1]]

    def mode_eigenvalues(self) -> np.ndarray:
        """Eigenvalue per basis column (repeated by multiplicity)."""
        return np.repeat(self.eigenvalues(), [e.mult for e in self.entries])

    def gram_matrix(self) -> np.ndarray:
        return (self.values * self.weights[:, None]).T @ self.values

    def export_rows(self):
        return [(k, e.lam, e.mult) for k, e in enumerate(self.entries)]


def _torus_entries(d: int, lam_max: float):
    mmax = int(np.floor(np.sqrt(lam_max)))
    groups: dict[int, list[tuple]] = {}
    for m in itertools.product(range(-mmax, mmax + 1), repeat=d):
        q = sum(c * c for c in m)
        if q <= lam_max:
            groups.setdefault(q, []).append(m)
    return groups


def _canonical_half(vectors):
    """One representative of each +-m pair (first nonzero component > 0)."""
    reps = []
    for m in vectors:
        nz = next((c for c in m if c != 0), 0)
        if nz > 0:
            reps.append(m)
    return reps


def enumerate_spectrum(manifold: ModelManifold, lam_max: float) -> SpectrumTable:
    """All distinct Laplace-Beltrami eigenvalues <= lam_max with full
    multiplicity and orthonormal real eigenfunctions sampled on the grid."""
    if lam_max < 0:
        raise ValueError("lam_max must be nonnegative")
    nodes, w = manifold.grid()
    if manifold.kind in _TORI:
        d = _TORI[manifold.kind]
        mmax = int(np.floor(np.sqrt(lam_max)))
        for n in manifold.resolution:
            if n < 2 * mmax + 2:
                raise ResolutionError(
                    f"grid {manifold.resolution} cannot resolve |m| <= {mmax}; "
                    f"need at least {2 * mmax + 2} points per axis"
                )
        groups = _torus_entries(d, lam_max)
        entries = []
        cols = []
        norm0 = (2.0 * np.pi) ** (-d / 2.0)
        normt = np.sqrt(2.0) * norm0
        for q in sorted(groups):
            vecs = groups[q]
            if q == 0:
                entries.append(SpectrumEntry(0.0, 1, (("const",),)))
                cols.append(np.full(nodes.shape[0], norm0))
                continue
            reps = _canonical_half(vecs)
            labels = []
            for m in reps:
                phase = nodes @ np.asarray(m, dtype=float)
                cols.append(np.cos(phase) * normt)
                cols.append(np.sin(phase) * normt)
                labels.append(("cos", m))
                labels.append(("sin", m))
            entries.append(SpectrumEntry(float(q), 2 * len(reps), tuple(labels)))
        values = np.stack(cols, axis=1)
    else:
        lmax = int(np.floor((-1.0 + np.sqrt(1.0 + 4.0 * lam_max)) / 2.0))
        n_t, n_p = manifold.resolution
        if n_t < lmax + 1 or n_p < 2 * lmax + 2:
            raise ResolutionError(
                f"sphere grid {manifold.resolution} cannot resolve l <= {lmax}"
            )
        theta = nodes[:, 0]
        phi = nodes[:, 1]
        entries = []
        cols = []
        for el in range(lmax + 1):
            labels = []
            for m in range(-el, el + 1):
                cols.append(_real_sph_harm(el, m, theta, phi))
                labels.append(("ylm", el, m))
            entries.append(SpectrumEntry(float(el * (el + 1)), 2 * el + 1, tuple(labels)))
        values = np.stack(cols, axis=1)
    return SpectrumTable(manifold, float(lam_max), entries, values, nodes, w)


def _real_sph_harm(el: int, m: int, theta, phi):
    from scipy.special import sph_harm_y

    if m == 0:
        return np.real(sph_harm_y(el, 0, theta, phi))
    y = sph_harm_y(el, abs(m), theta, phi)
    if m > 0:
        return np.sqrt(2.0) * (-1.0) ** m * np.real(y)
    return np.sqrt(2.0) * (-1.0) ** m * np.imag(y)


@dataclass(frozen=True)
class RegionPatch:
    """An open patch realized as the quadrature nodes it contains."""

    manifold: ModelManifold
    bounds: tuple
    node_idx: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_bounds(cls, manifold: ModelManifold, bounds) -> "RegionPatch":
        """bounds: per-coordinate (lo, hi); torus coordinates in [0, 2*pi),
        sphere (theta, phi) boxes."""
        nodes, w = manifold.grid()
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bounds) != nodes.shape[1]:
            raise ValueError("bounds rank does not match manifold dimension")
        mask = np.ones(nodes.shape[0], dtype=bool)
        for j, (lo, hi) in enumerate(bounds):
            if manifold.kind in _TORI or (manifold.kind == "s2" and j == 1):
                x = np.mod(nodes[:, j], 2.0 * np.pi)
                lo_m, hi_m = np.mod(lo, 2.0 * np.pi), np.mod(hi, 2.0 * np.pi)
                if lo_m <= hi_m:
                    mask &= (x > lo_m) & (x < hi_m)
                else:
                    mask &= (x > lo_m) | (x < hi_m)
            else:
                mask &= (nodes[:, j] > lo) & (nodes[:, j] < hi)
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            raise ValueError("patch contains no quadrature nodes")
        return cls(manifold, bounds, idx, nodes[idx], w[idx])

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def separation_from(self, other: "RegionPatch") -> float:
        """Per-coordinate gap between the two closed boxes (periodic-aware);
        positive means disjoint closures with that margin."""
        gaps = []
        for j, ((lo1, hi1), (lo2, hi2)) in enumerate(zip(self.bounds, other.bounds)):
            periodic = self.manifold.kind in _TORI or (self.manifold.kind == "s2" and j == 1)
            if periodic:
                period = 2.0 * np.pi
                g1 = np.mod(lo2 - hi1, period)
                g2 = np.mod(lo1 - hi2, period)
                len1 = np.mod(hi1 - lo1, period)
                len2 = np.mod(hi2 - lo2, period)
                if g1 + g2 + len1 + len2 > period + 1e-12:
                    gaps.append(-1.0)
                else:
                    gaps.append(min(g1, g2))
            else:
                gaps.append(max(lo2 - hi1, lo1 - hi2))
        return float(np.max(gaps))

    def is_disjoint_from(self, other: "RegionPatch", margin: float = 0.0) -> bool:
        no_shared = len(np.intersect1d(self.node_idx, other.node_idx)) == 0
        return no_shared and self.separation_from(other) > margin


def inner_product(u, v, region: RegionPatch | None = None, *,
                  weights=None) -> complex:
    """Quadrature L^2 pairing <u, v> = integral of u * conj(v).

    With a region, u and v are sampled on the patch nodes (or on the full
    grid, in which case they are restricted); weights may be supplied for
    the full-manifold case.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if region is not None:
        if u.shape[0] != region.node_idx.size:
            u = u[region.node_idx]
        if v.shape[0] != region.node_idx.size:
            v = v[region.node_idx]
        w = region.weights
    else:
        if weights is None:
            raise ValueError("full-manifold inner product needs weights")
        w = np.asarray(weights)
    if u.shape[0] != w.shape[0] or v.shape[0] != w.shape[0]:
        raise ShapeMismatchError(f"sample shapes {u.shape}, {v.shape} vs weights {w.shape}")
    return complex(np.sum(w * u * np.conj(v)))


def zero_extension(xi, patch: RegionPatch, n_total: int | None = None):
    """Field equal to xi on the patch nodes and 0 elsewhere."""
    xi = np.asarray(xi)
    if xi.shape[0] != patch.node_idx.size:
        raise ShapeMismatchError("coefficients do not match patch node count")
    if n_total is None:
        n_total = patch.manifold.grid()[0].shape[0]
    out = np.zeros((n_total,) + xi.shape[1:], dtype=xi.dtype)
    out[patch.node_idx] = xi
    return out


@dataclass(frozen=True)
class ProjectorData:
    """Matrix of P_{W1,W2,k} on the nodal sample bases, with numerical rank."""

    k: int
    lam: float
    matrix: np.ndarray
    rank: int
    singular_values: np.ndarray


def restricted_projector(table: SpectrumTable, k: int, w1: RegionPatch,
                         w2: RegionPatch, rank_rtol: float = 1e-8) -> ProjectorData:
    """Zero-extend from W1, project on the k-th eigenspace, restrict to W2.

    matrix[x2, x1] = sum_p phi_p(x2) * phi_p(x1) * w1_weight(x1); its rank
    equals the eigenvalue multiplicity for generic patches.
    """
    if not 0 <= k < len(table.entries):
        raise OutOfRangeError(f"eigenvalue index {k} outside the table")
    block = table.block(k)
    f1 = block[w1.node_idx, :] * w1.weights[:, None]
    f2 = block[w2.node_idx, :]
    mat = f2 @ f1.T
    sv = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(sv >= rank_rtol * sv[0])) if sv.size and sv[0] > 0 else 0
    return ProjectorData(k, table.entries[k].lam, mat, rank, sv)


def weyl_count(table: SpectrumTable, lam: float) -> int:
    """N(lam): eigenvalues <= lam counted with multiplicity."""
    if lam > table.lam_max:
        raise OutOfRangeError(f"lam={lam} above table truncation {table.lam_max}")
    return int(sum(e.mult for e in table.entries if e.lam <= lam))


def weyl_slope(table: SpectrumTable) -> float:
    """log-log slope of the counting function over the upper half of the
    table; approaches dim(M)/2 by Weyl's law."""
    lams = table.eigenvalues()
    counts = np.cumsum([e.mult for e in table.entries])
    pos = lams > 0
    lams, counts = lams[pos], counts[pos]
    lo = len(lams) // 2
    A = np.vstack([np.log(lams[lo:]), np.ones(len(lams) - lo)]).T
    slope, _ = np.linalg.lstsq(A, np.log(counts[lo:]), rcond=None)[0]
    return float(slope)


def spectral_mass_report(table: SpectrumTable, patch: RegionPatch) -> dict:
    """min/max L^2(W) mass over the listed eigenfunctions; the reciprocal of
    the min is an empirical handle on the patch's spectral bound constant."""
    sub = table.values[patch.node_idx, :]
    mass = np.sqrt(np.maximum(np.sum(patch.weights[:, None] * sub**2, axis=0), 0.0))
    return {
        "min_mass": float(np.min(mass)),
        "max_mass": float(np.max(mass)),
        "argmin_mode": int(np.argmin(mass)),
        "empirical_C0": float(1.0 / max(np.min(mass), 1e-300)),
    }
