"""Nodal lines of a harmonic field inside a polar cap and on the whole sphere.

Zero sets are traced by marching squares on a tensor grid in colatitude and
longitude.  The last grid row sits exactly on the cap boundary, so no
clipping is needed, and the longitude direction is periodic, so the full
sphere is covered without seams.  Each segment joins two zero crossings
found by linear interpolation along cell edges and is measured as a great
circle arc.  Lengths from the grid and from the grid with every other
row and column dropped are combined by Richardson extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
import math
import warnings

import numpy as np

from .field import HarmonicField, SphericalPoint, field_at_rows, field_on_grid, gradient_on_grid
from .legendre import DomainError

__all__ = [
    "CapDomain",
    "NodalResult",
    "DiscretizationWarning",
    "nodal_length_cap",
    "nodal_length_global",
    "boundary_trace",
    "default_cap_grid",
    "default_global_grid",
    "kac_rice_mean",
]

MIN_CAP_GRID = 32
MIN_GLOBAL_GRID = 64
# Warn when the Richardson error estimate exceeds this share of the mean.
WARN_FRACTION = 0.01


class DiscretizationWarning(UserWarning):
    pass


def kac_rice_mean(ell: int, area: float) -> float:
    """Expected nodal length in a region of the given area."""
    return math.sqrt(ell * (ell + 1) / 2.0) * area / 2.0


def default_cap_grid(ell: int, radius: float) -> int:
    """Cells across the cap diameter: about 24 per wavelength, multiple of 8."""
    n = max(MIN_CAP_GRID, math.ceil(24 * radius * ell / math.pi))
    return 8 * math.ceil(n / 8)


def default_global_grid(ell: int) -> int:
    """Cells along a meridian from pole to pole: about 12 per wavelength."""
    n = max(MIN_GLOBAL_GRID, math.ceil(6 * (ell + 0.5)))
    return 2 * math.ceil(n / 2)


@dataclass(frozen=True)
class CapDomain:
    """Geodesic ball of radius ``radius`` about the north pole.

    ``grid_n`` is the number of grid cells across the cap diameter; the
    colatitude step is 2 radius / grid_n.  ``None`` selects a default tied
    to the degree of the field.
    """

    radius: float
    grid_n: int | None = None

    def __post_init__(self):
        if not (0.0 < self.radius < math.pi):
            raise DomainError("radius must lie in (0, π)")
        if self.grid_n is not None and self.grid_n < MIN_CAP_GRID:
            raise DomainError(f"grid_n must be at least {MIN_CAP_GRID}")

    @property
    def area(self) -> float:
        return 2.0 * math.pi * (1.0 - math.cos(self.radius))

    def grid_for(self, ell: int) -> int:
        n = self.grid_n if self.grid_n is not None else default_cap_grid(ell, self.radius)
        return 8 * math.ceil(n / 8)


@dataclass
class NodalResult:
    """Nodal length with its discretization diagnostics.

    ``total_length`` is the Richardson-extrapolated length; ``fine_length``
    and ``coarse_length`` are the raw polyline lengths on the grid and on
    the half-resolution grid, and ``error_estimate`` bounds the error of
    ``fine_length``.  Polylines are assembled only when ``segments`` is
    first accessed.
    """

    total_length: float
    fine_length: float
    coarse_length: float
    error_estimate: float
    grid_n_used: int
    _pieces: object = dc_field(default=None, repr=False)
    _segments: list | None = dc_field(default=None, repr=False)

    @property
    def segments(self) -> list[list[SphericalPoint]]:
        if self._segments is None:
            self._segments = _assemble_polylines(self._pieces) if self._pieces else []
        return self._segments


@dataclass
class _Pieces:
    # segment endpoints as (theta, phi) pairs and the edge ids they sit on
    start: np.ndarray
    end: np.ndarray
    start_id: np.ndarray
    end_id: np.ndarray


def _to_xyz(theta, phi):
    # points on edges without a crossing are NaN and never used
    with np.errstate(invalid="ignore"):
        return _xyz(theta, phi)


def _xyz(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def _arc(p, q):
    chord = np.linalg.norm(p - q, axis=-1)
    return 2.0 * np.arcsin(np.minimum(chord / 2.0, 1.0))


def _march(values, theta, phi, center_value, keep_pieces=False):
    """Length of the zero set of a periodic-in-phi grid function.

    ``values`` has shape (len(theta), len(phi)); column ``j+1`` of the last
    column wraps to column 0.  ``center_value(theta, phi)`` evaluates the
    field at saddle-cell centres to choose the connectivity; it receives the
    cell row indices and the centre longitudes.
    """
    n_r, n_c = values.shape
    dphi = 2.0 * math.pi / n_c
    # exact zeros count as positive, a deterministic measure-zero choice
    pos = values >= 0.0
    right = np.roll(values, -1, axis=1)
    row_cross = pos != np.roll(pos, -1, axis=1)
    col_cross = pos[:-1] != pos[1:]

    e0 = row_cross[:-1]
    e2 = row_cross[1:]
    e3 = col_cross
    e1 = np.roll(col_cross, -1, axis=1)
    count = e0.astype(np.int8) + e1 + e2 + e3
    ii, jj = np.nonzero(count)
    if ii.size == 0:
        return 0.0, None
    jn = (jj + 1) % n_c

    def row_point(i, j):
        v0, v1 = values[i, j], right[i, j]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = v0 / (v0 - v1)
        return theta[i], phi[j] + t * dphi

    def col_point(i, j):
        v0, v1 = values[i, j], values[i + 1, j]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = v0 / (v0 - v1)
        return theta[i] + t * (theta[i + 1] - theta[i]), phi[j]

    tp = [row_point(ii, jj), col_point(ii, jn), row_point(ii + 1, jj), col_point(ii, jj)]
    xyz = [_to_xyz(*p) for p in tp]
    flags = [e0[ii, jj], e1[ii, jj], e2[ii, jj], e3[ii, jj]]
    cnt = count[ii, jj]

    pairs = []
    two = cnt == 2
    for a in range(4):
        for b in range(a + 1, 4):
            pairs.append((a, b, two & flags[a] & flags[b]))
    four = np.nonzero(cnt == 4)[0]
    if four.size:
        pc = phi[jj[four]] + 0.5 * dphi
        center_pos = center_value(ii[four], pc) >= 0.0
        corner_pos = pos[ii[four], jj[four]]
        joined = np.zeros(cnt.shape, dtype=bool)
        joined[four] = center_pos == corner_pos
        split = np.zeros(cnt.shape, dtype=bool)
        split[four] = ~joined[four]
        # corners (i,j) and (i+1,j+1) joined through the centre: cut off the
        # other two corners; otherwise cut off these two
        pairs += [(0, 1, joined), (2, 3, joined), (0, 3, split), (1, 2, split)]

    total = 0.0
    pieces = []
    for a, b, mask in pairs:
        if mask.any():
            total += float(np.sum(_arc(xyz[a][mask], xyz[b][mask])))
            if keep_pieces:
                pieces.append((a, b, mask))
    if not keep_pieces:
        return total, None

    # global edge ids: row edges first, then column edges
    n_row_edges = n_r * n_c

    def edge_id(e, idx):
        i, j = ii[idx], jj[idx]
        return {0: i * n_c + j, 2: (i + 1) * n_c + j,
                3: n_row_edges + i * n_c + j, 1: n_row_edges + i * n_c + (j + 1) % n_c}[e]

    starts, ends, sid, eid = [], [], [], []
    for a, b, mask in pieces:
        idx = np.nonzero(mask)[0]
        starts.append(np.stack([tp[a][0][idx], tp[a][1][idx]], axis=1))
        ends.append(np.stack([tp[b][0][idx], tp[b][1][idx]], axis=1))
        sid.append(edge_id(a, idx))
        eid.append(edge_id(b, idx))
    return total, _Pieces(np.concatenate(starts), np.concatenate(ends),
                          np.concatenate(sid), np.concatenate(eid))


def _assemble_polylines(pieces: _Pieces) -> list[list[SphericalPoint]]:
    """Chain segments sharing an edge crossing into polylines."""
    n = len(pieces.start_id)
    at_edge: dict[int, list[int]] = {}
    for k in range(n):
        at_edge.setdefault(int(pieces.start_id[k]), []).append(k)
        at_edge.setdefault(int(pieces.end_id[k]), []).append(k)
    used = np.zeros(n, dtype=bool)

    def endpoint(k, side):
        return (pieces.start if side == 0 else pieces.end)[k], int(
            (pieces.start_id if side == 0 else pieces.end_id)[k])

    def walk(k, side):
        # follow the chain leaving segment k through its endpoint `side`
        out = []
        while True:
            pt, eid = endpoint(k, side)
            out.append(pt)
            nxt = [q for q in at_edge[eid] if not used[q]]
            if not nxt:
                return out
            k = nxt[0]
            used[k] = True
            side = 1 if int(pieces.start_id[k]) == eid else 0

    lines = []
    for k in range(n):
        if used[k]:
            continue
        used[k] = True
        forward = walk(k, 1)
        backward = walk(k, 0)
        pts = backward[::-1] + forward
        lines.append([SphericalPoint(float(min(max(t, 0.0), math.pi)), float(p % (2 * math.pi)))
                      for t, p in pts])
    return lines


def _polar_length(f: HarmonicField, theta, n_phi, keep_pieces):
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    values = field_on_grid(f, theta, phi)

    mid_fine = 0.5 * (theta[:-1] + theta[1:])
    mid_coarse = 0.5 * (theta[:-2:2] + theta[2::2])

    def center_fine(rows, pc):
        return field_at_rows(f, mid_fine, rows, pc)

    def center_coarse(rows, pc):
        return field_at_rows(f, mid_coarse, rows, pc)

    fine, pieces = _march(values, theta, phi, center_fine, keep_pieces)
    coarse, _ = _march(values[::2, ::2], theta[::2], phi[::2], center_coarse)
    return fine, coarse, pieces


def _result(f, fine, coarse, pieces, grid_n, mean):
    extrapolated = (4.0 * fine - coarse) / 3.0
    err = abs(fine - coarse) / 3.0
    if mean > 0 and err > WARN_FRACTION * mean:
        warnings.warn(
            f"estimated discretization error {err:.3g} exceeds {WARN_FRACTION:.0%} of the "
            f"expected length {mean:.3g}; increase grid_n (now {grid_n})",
            DiscretizationWarning, stacklevel=3)
    return NodalResult(extrapolated, fine, coarse, err, grid_n, pieces)


def _n_phi(h: float, max_sin: float) -> int:
    n = max(8, math.ceil(2.0 * math.pi * max_sin / h))
    return 4 * math.ceil(n / 4)


def nodal_length_cap(f: HarmonicField, cap: CapDomain, keep_segments: bool = False) -> NodalResult:
    """Length of {T = 0} inside the cap ``cap``."""
    ell = f.degree
    if cap.radius * ell < 1:
        warnings.warn("cap radius times degree is below 1; the cap holds less than a "
                      "wavelength", DiscretizationWarning, stacklevel=2)
    grid_n = cap.grid_for(ell)
    n_rows = grid_n // 2
    theta = cap.radius * np.arange(n_rows + 1) / n_rows
    theta[-1] = cap.radius
    h = cap.radius / n_rows
    # longitude count is a fixed even multiple of n_rows / 4, so grids for
    # grid_n and 2 grid_n are nested
    ratio = 2 * math.ceil(4.0 * math.pi * math.sin(min(cap.radius, math.pi / 2)) / cap.radius)
    n_phi = max(8, ratio * (n_rows // 4))
    fine, coarse, pieces = _polar_length(f, theta, n_phi, keep_segments)
    return _result(f, fine, coarse, pieces, grid_n, kac_rice_mean(ell, cap.area))


def nodal_length_global(f: HarmonicField, grid_n: int | None = None,
                        keep_segments: bool = False) -> NodalResult:
    """Length of {T = 0} on the whole sphere.

    ``grid_n`` counts grid cells along a meridian from pole to pole.
    """
    ell = f.degree
    if grid_n is None:
        grid_n = default_global_grid(ell)
    if grid_n < MIN_GLOBAL_GRID:
        raise DomainError(f"grid_n must be at least {MIN_GLOBAL_GRID}")
    grid_n = 2 * math.ceil(grid_n / 2)
    theta = math.pi * np.arange(grid_n + 1) / grid_n
    theta[-1] = math.pi
    n_phi = _n_phi(math.pi / grid_n, 1.0)
    fine, coarse, pieces = _polar_length(f, theta, n_phi, keep_segments)
    return _result(f, fine, coarse, pieces, grid_n, kac_rice_mean(ell, 4.0 * math.pi))


@dataclass(frozen=True)
class BoundaryNode:
    point: SphericalPoint
    value: float
    gradient: np.ndarray


def boundary_trace(f: HarmonicField, cap: CapDomain, n_nodes: int = 128) -> list[BoundaryNode]:
    """Field values and gradients at equispaced nodes of the cap boundary."""
    if n_nodes < 64:
        raise DomainError("n_nodes must be at least 64")
    phi, values, g_theta, g_phi = boundary_arrays(f, cap.radius, n_nodes)
    return [BoundaryNode(SphericalPoint(cap.radius, float(p)), float(v), np.array([gt, gp]))
            for p, v, gt, gp in zip(phi, values, g_theta, g_phi)]


def boundary_arrays(f: HarmonicField, radius: float, n_nodes: int):
    """Array form of :func:`boundary_trace`: phi, T, dT/dtheta, (1/sin) dT/dphi."""
    phi = 2.0 * math.pi * np.arange(n_nodes) / n_nodes
    values = field_on_grid(f, [radius], phi)[0]
    g_theta, g_phi = gradient_on_grid(f, [radius], phi)
    return phi, values, g_theta[0], g_phi[0]
