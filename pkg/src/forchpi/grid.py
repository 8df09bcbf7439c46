"""Cell-centred finite-volume grids for the well-reservoir domain.

Two geometries are supported: an axisymmetric radial annulus
``r_i <= r <= r_e`` and a rectangular reservoir with a rectangular well
cut out of its interior.  In both cases the well boundary ``Gamma_i`` is a
Dirichlet-type boundary of the finite-volume scheme and the exterior
boundary ``Gamma_e`` carries no flux.

Normals ``N`` point out of the domain on both boundaries.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError

__all__ = [
    "Grid",
    "ScalarField",
    "Region",
    "build_radial",
    "build_annulus2d",
    "integrate",
    "average",
    "lp_norm_gradient",
]

_CELL, _WELL, _OUTER = 0, 1, 2


class Region(str, Enum):
    VOLUME = "volume"
    WELL = "well"
    OUTER = "outer"


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable finite-volume mesh.

    Interior faces connect ``f_left -> f_right`` along axis ``f_axis``; the
    right cell always has the larger coordinate.  Boundary faces belong to a
    single cell and carry the sign of the outward normal along their axis.
    ``*_trans`` are the geometric two-point transmissibilities (face measure
    over centre distance, or the exact logarithmic form on radial grids).
    """

    kind: str
    dim: int
    centers: np.ndarray
    volumes: np.ndarray
    f_left: np.ndarray
    f_right: np.ndarray
    f_area: np.ndarray
    f_dist: np.ndarray
    f_axis: np.ndarray
    f_trans: np.ndarray
    w_cell: np.ndarray
    w_area: np.ndarray
    w_dist: np.ndarray
    w_axis: np.ndarray
    w_sign: np.ndarray
    w_trans: np.ndarray
    w_coord: np.ndarray
    w_center: np.ndarray
    o_cell: np.ndarray
    o_area: np.ndarray
    o_dist: np.ndarray
    o_axis: np.ndarray
    o_sign: np.ndarray
    o_center: np.ndarray
    # per axis, per cell: neighbour kind / index / face coordinate on each side
    nb_lo_kind: np.ndarray
    nb_lo_idx: np.ndarray
    nb_lo_pos: np.ndarray
    nb_hi_kind: np.ndarray
    nb_hi_idx: np.ndarray
    nb_hi_pos: np.ndarray
    params: dict

    @property
    def n_cells(self):
        return self.volumes.size

    @property
    def volume(self):
        return float(np.sum(self.volumes))

    @property
    def well_measure(self):
        return float(np.sum(self.w_area))

    @property
    def outer_measure(self):
        return float(np.sum(self.o_area))

    @property
    def spacing(self):
        """Largest cell extent, the ``h`` of convergence studies."""
        return float(np.max(self.nb_hi_pos - self.nb_lo_pos))

    @property
    def radius(self):
        if self.kind != "radial":
            raise AttributeError("radius is only defined on radial grids")
        return self.centers[:, 0]

    # -- reconstruction ---------------------------------------------------

    def _face_value(self, values, kind, idx, pos, cell, opp_kind, opp_idx, axis, well_trace):
        """Value on one side of each cell along ``axis``."""
        x_c = self.centers[cell, axis]
        out = np.empty(cell.size)
        is_cell = kind == _CELL
        nb = idx[is_cell]
        x_nb = self.centers[nb, axis]
        lam = (pos[is_cell] - x_c[is_cell]) / (x_nb - x_c[is_cell])
        out[is_cell] = values[cell[is_cell]] + lam * (values[nb] - values[cell[is_cell]])

        bnd = ~is_cell
        if well_trace is not None:
            use = kind == _WELL
            out[use] = well_trace[idx[use]]
            bnd = bnd & ~use
        # linear extrapolation through the opposite neighbour where one exists
        ext = bnd & (opp_kind == _CELL)
        opp = opp_idx[ext]
        x_opp = self.centers[opp, axis]
        slope = (values[cell[ext]] - values[opp]) / (x_c[ext] - x_opp)
        out[ext] = values[cell[ext]] + slope * (pos[ext] - x_c[ext])
        flat = bnd & (opp_kind != _CELL)
        out[flat] = values[cell[flat]]
        return out

    def cell_gradient(self, values, well_trace=None):
        """Per-cell gradient, exact for fields linear along each axis."""
        values = np.asarray(values, dtype=float)
        cells = np.arange(self.n_cells)
        grad = np.empty((self.n_cells, self.dim))
        for k in range(self.dim):
            lo = self._face_value(
                values, self.nb_lo_kind[k], self.nb_lo_idx[k], self.nb_lo_pos[k], cells,
                self.nb_hi_kind[k], self.nb_hi_idx[k], k, well_trace,
            )
            hi = self._face_value(
                values, self.nb_hi_kind[k], self.nb_hi_idx[k], self.nb_hi_pos[k], cells,
                self.nb_lo_kind[k], self.nb_lo_idx[k], k, well_trace,
            )
            grad[:, k] = (hi - lo) / (self.nb_hi_pos[k] - self.nb_lo_pos[k])
        return grad

    def face_gradients(self, values, well_values):
        """Gradient magnitudes on interior and well faces.

        The normal component is the two-point difference; on 2-D grids the
        tangential component is averaged from the adjacent cell gradients.
        Returns ``(interior_mag, well_mag)``.
        """
        values = np.asarray(values, dtype=float)
        dn = (values[self.f_right] - values[self.f_left]) / self.f_dist
        dn_w = self.w_sign * (well_values - values[self.w_cell]) / self.w_dist
        if self.dim == 1:
            return np.abs(dn), np.abs(dn_w)
        g = self.cell_gradient(values, well_trace=well_values)
        tang = 1 - self.f_axis
        gt = 0.5 * (g[self.f_left, tang] + g[self.f_right, tang])
        gt_w = g[self.w_cell, 1 - self.w_axis]
        return np.hypot(dn, gt), np.hypot(dn_w, gt_w)

    def divergence(self, face_flux, well_flux, outer_flux=None):
        """Cell divergence of a face flux field.

        ``face_flux`` is oriented left -> right; boundary fluxes are outward.
        All fluxes are integrated over their face.
        """
        div = np.zeros(self.n_cells)
        np.add.at(div, self.f_left, face_flux)
        np.add.at(div, self.f_right, -face_flux)
        np.add.at(div, self.w_cell, well_flux)
        if outer_flux is not None:
            np.add.at(div, self.o_cell, outer_flux)
        return div / self.volumes

    def dump(self, path):
        """Plain-text listing of cells and boundary faces, for debugging."""
        with open(path, "w") as fh:
            fh.write(f"# kind {self.kind} dim {self.dim} cells {self.n_cells}\n")
            fh.write(f"# volume {self.volume!r} well_measure {self.well_measure!r}\n")
            for i, (c, v) in enumerate(zip(self.centers, self.volumes)):
                fh.write("cell %d %s %r\n" % (i, " ".join(repr(float(x)) for x in c), float(v)))
            for j in range(self.w_cell.size):
                fh.write("well %d cell %d area %r s %r\n" % (j, self.w_cell[j], float(self.w_area[j]), float(self.w_coord[j])))
            for j in range(self.o_cell.size):
                fh.write("outer %d cell %d area %r\n" % (j, self.o_cell[j], float(self.o_area[j])))


@dataclass(eq=False)
class ScalarField:
    """Cell values on a grid, optionally with a trace on the well boundary."""

    grid: Grid
    values: np.ndarray
    well_trace: np.ndarray = None
    time: float = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.well_trace is not None:
            self.well_trace = np.broadcast_to(
                np.asarray(self.well_trace, dtype=float), self.grid.w_cell.shape
            ).copy()

    def gradient(self):
        return self.grid.cell_gradient(self.values, self.well_trace)

    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            trace = None
            if self.well_trace is not None and other.well_trace is not None:
                trace = op(self.well_trace, other.well_trace)
            return ScalarField(self.grid, op(self.values, other.values), trace, self.time)
        trace = None if self.well_trace is None else op(self.well_trace, other)
        return ScalarField(self.grid, op(self.values, other), trace, self.time)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__


def integrate(field, region=Region.VOLUME):
    """Quadrature of a field over the domain or one of its boundaries."""
    grid = field.grid
    region = Region(region)
    if region is Region.VOLUME:
        return float(np.dot(grid.volumes, field.values))
    if region is Region.WELL:
        vals = field.well_trace if field.well_trace is not None else field.values[grid.w_cell]
        return float(np.dot(grid.w_area, vals))
    # exterior traces are reconstructed from the interior
    k = grid.o_axis
    cells = grid.o_cell
    g = grid.cell_gradient(field.values, field.well_trace)
    x_face = grid.o_center[np.arange(cells.size), k]
    vals = field.values[cells] + g[cells, k] * (x_face - grid.centers[cells, k])
    return float(np.dot(grid.o_area, vals))


def average(field, region=Region.VOLUME):
    region = Region(region)
    measure = {
        Region.VOLUME: field.grid.volume,
        Region.WELL: field.grid.well_measure,
        Region.OUTER: field.grid.outer_measure,
    }[region]
    return integrate(field, region) / measure


def lp_norm_gradient(field, p_exp):
    """``(int_U |grad f|^p dx)^(1/p)`` with per-cell gradient reconstruction."""
    if p_exp <= 0:
        raise ValueError("p_exp must be positive")
    g = np.linalg.norm(field.gradient(), axis=1)
    return float(np.dot(field.grid.volumes, g**p_exp) ** (1.0 / p_exp))


def build_radial(r_i, r_e, n, ratio=1.05, n_ref=64, log_trans=True):
    """Axisymmetric annulus ``r_i <= r <= r_e`` with ``n`` cells.

    Cell widths grow geometrically away from the well.  ``ratio`` is the
    width ratio of consecutive cells at the reference resolution ``n_ref``;
    other resolutions use ``ratio**(n_ref/n)`` so that meshes of different
    ``n`` belong to one smooth refinement family.  Measures are per unit
    thickness: ``|U| = pi (r_e^2 - r_i^2)`` and ``|Gamma_i| = 2 pi r_i``.
    """
    r_i, r_e = float(r_i), float(r_e)
    if not (np.isfinite(r_i) and np.isfinite(r_e)) or r_i <= 0 or r_e <= r_i:
        raise ConfigError(f"radial grid needs 0 < r_i < r_e, got r_i={r_i}, r_e={r_e}")
    if int(n) != n or n < 8:
        raise ConfigError(f"radial grid needs n >= 8 cells, got {n}")
    if ratio < 1.0:
        raise ConfigError("grading ratio must be >= 1")
    n = int(n)
    q = ratio ** (n_ref / n)
    widths = q ** np.arange(n)
    faces = r_i + (r_e - r_i) * np.concatenate([[0.0], np.cumsum(widths)]) / widths.sum()
    faces[-1] = r_e
    rc = 0.5 * (faces[:-1] + faces[1:])
    volumes = np.pi * (faces[1:] ** 2 - faces[:-1] ** 2)

    rf = faces[1:-1]
    f_area = 2.0 * np.pi * rf
    f_dist = rc[1:] - rc[:-1]
    w_dist = np.array([rc[0] - r_i])
    if log_trans:
        f_trans = 2.0 * np.pi / np.log(rc[1:] / rc[:-1])
        w_trans = np.array([2.0 * np.pi / np.log(rc[0] / r_i)])
    else:
        f_trans = f_area / f_dist
        w_trans = np.array([2.0 * np.pi * r_i]) / w_dist

    cells = np.arange(n)
    lo_kind = np.where(cells == 0, _WELL, _CELL)
    lo_idx = np.where(cells == 0, 0, cells - 1)
    hi_kind = np.where(cells == n - 1, _OUTER, _CELL)
    hi_idx = np.where(cells == n - 1, 0, cells + 1)

    return Grid(
        kind="radial",
        dim=1,
        centers=rc[:, None],
        volumes=volumes,
        f_left=cells[:-1],
        f_right=cells[1:],
        f_area=f_area,
        f_dist=f_dist,
        f_axis=np.zeros(n - 1, dtype=int),
        f_trans=f_trans,
        w_cell=np.array([0]),
        w_area=np.array([2.0 * np.pi * r_i]),
        w_dist=w_dist,
        w_axis=np.array([0]),
        w_sign=np.array([-1.0]),
        w_trans=w_trans,
        w_coord=np.array([0.0]),
        w_center=np.array([[r_i]]),
        o_cell=np.array([n - 1]),
        o_area=np.array([2.0 * np.pi * r_e]),
        o_dist=np.array([r_e - rc[-1]]),
        o_axis=np.array([0]),
        o_sign=np.array([1.0]),
        o_center=np.array([[r_e]]),
        nb_lo_kind=lo_kind[None, :],
        nb_lo_idx=lo_idx[None, :],
        nb_lo_pos=faces[:-1][None, :],
        nb_hi_kind=hi_kind[None, :],
        nb_hi_idx=hi_idx[None, :],
        nb_hi_pos=faces[1:][None, :],
        params={"kind": "radial", "r_i": r_i, "r_e": r_e, "n": n, "ratio": ratio, "n_ref": n_ref},
    )


def _aligned(x, h, tol=1e-9):
    k = round(x / h)
    return abs(x - k * h) <= tol * max(h, 1.0), int(k)


def build_annulus2d(outer, inner, n, center=None):
    """Rectangle ``[0, Lx] x [0, Ly]`` minus an interior rectangular well.

    ``outer = (Lx, Ly)``, ``inner = (w, h)`` (centred unless ``center`` is
    given) and ``n`` is the number of square cells across ``Lx``.  The well
    edges must fall on grid lines and leave at least one cell of reservoir
    on every side.
    """
    lx, ly = (float(v) for v in outer)
    wi, hi_ = (float(v) for v in inner)
    if min(lx, ly, wi, hi_) <= 0:
        raise ConfigError("rectangle dimensions must be positive")
    if int(n) != n or n < 4:
        raise ConfigError(f"annulus grid needs an integer resolution n >= 4, got {n}")
    n = int(n)
    cx, cy = (lx / 2, ly / 2) if center is None else (float(center[0]), float(center[1]))
    x0, x1, y0, y1 = cx - wi / 2, cx + wi / 2, cy - hi_ / 2, cy + hi_ / 2
    if not (0 < x0 and x1 < lx and 0 < y0 and y1 < ly):
        raise ConfigError("the well rectangle must lie strictly inside the reservoir")
    h = lx / n
    ok_y, ny = _aligned(ly, h)
    idx = [_aligned(v, h) for v in (x0, x1, y0, y1)]
    if not ok_y or not all(ok for ok, _ in idx):
        raise ConfigError(f"well edges and Ly must align with the cell size h={h}")
    i0, i1, j0, j1 = (k for _, k in idx)
    if i0 < 1 or j0 < 1 or i1 > n - 1 or j1 > ny - 1:
        raise ConfigError("the well must leave at least one cell of reservoir on each side")

    ii, jj = np.meshgrid(np.arange(n), np.arange(ny), indexing="ij")
    hole = (ii >= i0) & (ii < i1) & (jj >= j0) & (jj < j1)
    active = ~hole
    number = -np.ones((n, ny), dtype=int)
    number[active] = np.arange(active.sum())
    ai, aj = ii[active], jj[active]
    centers = np.column_stack([(ai + 0.5) * h, (aj + 0.5) * h])
    ncell = ai.size
    volumes = np.full(ncell, h * h)

    f_l, f_r, f_ax = [], [], []
    w_c, w_ax, w_sg, w_ctr = [], [], [], []
    o_c, o_ax, o_sg, o_ctr = [], [], [], []
    lo_kind = np.zeros((2, ncell), dtype=int)
    hi_kind = np.zeros((2, ncell), dtype=int)
    lo_idx = np.zeros((2, ncell), dtype=int)
    hi_idx = np.zeros((2, ncell), dtype=int)
    lo_pos = np.zeros((2, ncell))
    hi_pos = np.zeros((2, ncell))

    for c in range(ncell):
        i, j = ai[c], aj[c]
        for axis, (di, dj) in enumerate(((1, 0), (0, 1))):
            pos_c = (i if axis == 0 else j) * h
            lo_pos[axis, c] = pos_c
            hi_pos[axis, c] = pos_c + h
            for side in (-1, 1):
                ni, nj = i + side * di, j + side * dj
                face_ctr = centers[c].copy()
                face_ctr[axis] += side * 0.5 * h
                if 0 <= ni < n and 0 <= nj < ny and active[ni, nj]:
                    other = number[ni, nj]
                    kind, ref = _CELL, other
                    if side == 1:
                        f_l.append(c)
                        f_r.append(other)
                        f_ax.append(axis)
                elif 0 <= ni < n and 0 <= nj < ny:
                    kind, ref = _WELL, len(w_c)
                    w_c.append(c)
                    w_ax.append(axis)
                    w_sg.append(float(side))
                    w_ctr.append(face_ctr)
                else:
                    kind, ref = _OUTER, len(o_c)
                    o_c.append(c)
                    o_ax.append(axis)
                    o_sg.append(float(side))
                    o_ctr.append(face_ctr)
                if side == -1:
                    lo_kind[axis, c], lo_idx[axis, c] = kind, ref
                else:
                    hi_kind[axis, c], hi_idx[axis, c] = kind, ref

    w_ctr = np.array(w_ctr)
    f_l, f_r = np.array(f_l), np.array(f_r)
    nf, nw, no = f_l.size, len(w_c), len(o_c)
    return Grid(
        kind="annulus2d",
        dim=2,
        centers=centers,
        volumes=volumes,
        f_left=f_l,
        f_right=f_r,
        f_area=np.full(nf, h),
        f_dist=np.full(nf, h),
        f_axis=np.array(f_ax),
        f_trans=np.ones(nf),
        w_cell=np.array(w_c),
        w_area=np.full(nw, h),
        w_dist=np.full(nw, 0.5 * h),
        w_axis=np.array(w_ax),
        w_sign=np.array(w_sg),
        w_trans=np.full(nw, 2.0),
        w_coord=_perimeter_coordinate(w_ctr, x0, x1, y0, y1),
        w_center=w_ctr,
        o_cell=np.array(o_c),
        o_area=np.full(no, h),
        o_dist=np.full(no, 0.5 * h),
        o_axis=np.array(o_ax),
        o_sign=np.array(o_sg),
        o_center=np.array(o_ctr),
        nb_lo_kind=lo_kind,
        nb_lo_idx=lo_idx,
        nb_lo_pos=lo_pos,
        nb_hi_kind=hi_kind,
        nb_hi_idx=hi_idx,
        nb_hi_pos=hi_pos,
        params={
            "kind": "annulus2d",
            "outer": [lx, ly],
            "inner": [wi, hi_],
            "center": [cx, cy],
            "n": n,
        },
    )


def _perimeter_coordinate(pts, x0, x1, y0, y1):
    """Arc length along the well perimeter, counter-clockwise from ``(x0, y0)``."""
    w, h = x1 - x0, y1 - y0
    s = np.empty(len(pts))
    for k, (x, y) in enumerate(pts):
        if abs(y - y0) < 1e-12 * max(w, h):
            s[k] = x - x0
        elif abs(x - x1) < 1e-12 * max(w, h):
            s[k] = w + (y - y0)
        elif abs(y - y1) < 1e-12 * max(w, h):
            s[k] = w + h + (x1 - x)
        else:
            s[k] = 2 * w + h + (y1 - y)
    return s
