"""Structured Cartesian grids with caprock leakage paths.

The flow domain is a box: a lower aquifer, an optional caprock slab, and
an upper aquifer above it (both aquifers share one height). Caprock cells
are inactive (perfect seal) except where a tilted leak slab crosses the
caprock; those cells become active with the leak permeability. Leaks are
rasterized stair-step: a cell belongs to the leak iff its center lies in
the slab, tested with the signed perpendicular distance s of the center
from the leak centerline plane, -a/2 <= s < a/2 (half-open so that a slab
boundary that falls exactly on a row of cell centers counts them once).

Flux discretization is cell-centered two-point flux approximation; the
face transmissibility is T = A / (d1/K1 + d2/K2) with center-to-face
distances d and cell permeabilities K.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DomainError, EmptyDomainError, GeometryError
from .params import RockLaw

logger = logging.getLogger(__name__)

SIDES = ("x-", "x+", "y-", "y+")


class Region(IntEnum):
    LOWER_AQUIFER = 1
    CAPROCK = 2
    UPPER_AQUIFER = 3
    LEAK = 4


AQUIFER_REGIONS = (Region.LOWER_AQUIFER, Region.UPPER_AQUIFER)


@dataclass(frozen=True)
class DomainSpec:
    """Cell counts and sizes of the structured box, plus gravity."""

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    @property
    def lx(self) -> float:
        return self.nx * self.dx

    @property
    def ly(self) -> float:
        return self.ny * self.dy

    @property
    def lz(self) -> float:
        return self.nz * self.dz

    def validate(self) -> None:
        if min(self.nx, self.ny, self.nz) < 1:
            raise DomainError("cell counts must be >= 1")
        if min(self.dx, self.dy, self.dz) <= 0.0:
            raise DomainError("cell sizes must be > 0")
        if self.gravity[2] > 0.0:
            raise DomainError("gravity must point downward (gz <= 0)")


@dataclass(frozen=True)
class LeakSpec:
    """Geometry and permeability of one leakage path through the caprock.

    ``anchor_x`` is the horizontal offset of the leak's lower end from the
    injection well; when omitted it defaults to gap_lower + gap_leak. The
    tilt angle is measured from the horizontal, so 90 deg is a vertical
    slab and angles in (90, 180) lean back over the well with height.
    """

    aperture: float = 1.0  # a, m
    width: float = 6.0  # w, extent along y, m
    tilt_deg: float = 135.0  # theta
    perm: float = 2e-14  # K_L, m^2
    gap_lower: float = 15.0  # g_l, m
    gap_upper: float = 5.0  # g_u, m
    gap_leak: float = 15.0  # l, m
    anchor_x: float | None = None

    def resolved_anchor(self) -> float:
        return self.gap_lower + self.gap_leak if self.anchor_x is None else self.anchor_x

    def validate(self, domain_width: float) -> None:
        if not self.aperture > 0.0:
            raise DomainError("leak aperture must be > 0")
        if not 0.0 < self.width <= domain_width * (1.0 + 1e-12):
            raise DomainError("leak width must satisfy 0 < w <= W")
        if not (self.tilt_deg == 90.0 or 90.0 < self.tilt_deg < 180.0):
            raise DomainError("tilt angle must be 90 deg or in (90, 180) deg")
        if not self.perm > 0.0:
            raise DomainError("leak permeability must be > 0")


@dataclass(frozen=True)
class ReservoirSpec:
    """Layering, aquifer permeability, well location and open boundaries.

    ``caprock_height`` of zero builds a single open aquifer (the 1D
    verification layout). ``well_y`` of None completes the well across the
    full width; otherwise in the single column containing that y. The
    injection well is always completed over the full lower-aquifer height.
    """

    perm_aquifer: float = 1e-14  # K_A, m^2
    aquifer_height: float = 5.0  # H (both aquifers), m
    caprock_height: float = 20.0  # h, m
    well_x: float = 0.5
    well_y: float | None = None
    outflow_sides: tuple[str, ...] = ("x+",)

    def validate(self) -> None:
        if not self.perm_aquifer > 0.0:
            raise DomainError("aquifer permeability must be > 0")
        if self.aquifer_height < 0.0 or self.caprock_height < 0.0:
            raise DomainError("layer heights must be >= 0")
        if self.caprock_height == 0.0 and not self.aquifer_height > 0.0:
            raise DomainError("a caprock-free domain needs aquifer_height > 0")
        for side in self.outflow_sides:
            if side not in SIDES:
                raise DomainError(f"unknown boundary side {side!r}; use one of {SIDES}")


class Grid:
    """Immutable cell/face arrays of the active flow domain.

    Interior faces are oriented from the lower-index cell ``a`` to the
    higher-index cell ``b`` along their axis, so positive face flux points
    in +x/+y/+z. Built once by :func:`build_domain`; never mutated.
    """

    def __init__(self, domain, leak, reservoir, shape_region, active_index,
                 cell_ijk, centers, volumes, region, perm0, poro0,
                 iface_cells, iface_axis, iface_area, iface_d,
                 bface_cell, bface_area, bface_d, bface_z, bface_side,
                 well_cells, gravity_accel):
        self.domain = domain
        self.leak = leak
        self.reservoir = reservoir
        self.shape_region = shape_region  # full-lattice region codes
        self.active_index = active_index  # (nx, ny, nz), -1 where inactive
        self.cell_ijk = cell_ijk
        self.centers = centers
        self.volumes = volumes
        self.region = region
        self.perm0 = perm0
        self.poro0 = poro0
        self.iface_cells = iface_cells  # (nf, 2)
        self.iface_axis = iface_axis
        self.iface_area = iface_area
        self.iface_d = iface_d  # (nf, 2) center-to-face distances
        self.bface_cell = bface_cell
        self.bface_area = bface_area
        self.bface_d = bface_d
        self.bface_z = bface_z
        self.bface_side = bface_side
        self.well_cells = well_cells
        self.gravity_accel = gravity_accel  # positive magnitude, m/s^2

    @property
    def n_active(self) -> int:
        return self.centers.shape[0]

    @property
    def n_ifaces(self) -> int:
        return self.iface_cells.shape[0]

    @property
    def leak_cells(self) -> np.ndarray:
        return np.flatnonzero(self.region == Region.LEAK)

    @property
    def well_volume(self) -> float:
        return float(self.volumes[self.well_cells].sum())

    def full_field(self, values: np.ndarray, fill=0.0) -> np.ndarray:
        """Scatter an active-cell array onto the full (nx, ny, nz) lattice."""
        out = np.full(self.active_index.shape, fill, dtype=float)
        out[self.active_index >= 0] = np.asarray(values)[
            self.active_index[self.active_index >= 0]]
        return out


def _leak_signed_distance(leak: LeakSpec, foot_x: float, foot_z: float,
                          x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Signed perpendicular distance of points from the leak centerline."""
    theta = math.radians(leak.tilt_deg)
    return (x - foot_x) * math.sin(theta) - (z - foot_z) * math.cos(theta)


def build_domain(domain: DomainSpec, leak: LeakSpec | None,
                 reservoir: ReservoirSpec, rock: RockLaw) -> Grid:
    """Build the active grid with region tags, wells and open boundaries."""
    domain.validate()
    reservoir.validate()
    rock.validate()
    if leak is not None:
        leak.validate(domain.ly)

    H = reservoir.aquifer_height
    h_cap = reservoir.caprock_height
    expected_lz = 2 * H + h_cap if h_cap > 0.0 else H
    if abs(domain.lz - expected_lz) > 1e-9 * max(domain.lz, expected_lz):
        raise GeometryError(
            f"nz*dz = {domain.lz} does not match the layer stack "
            f"(2*{H} + {h_cap} = {expected_lz})" if h_cap > 0.0 else
            f"nz*dz = {domain.lz} does not match aquifer_height = {H}")

    nx, ny, nz = domain.nx, domain.ny, domain.nz
    xs = (np.arange(nx) + 0.5) * domain.dx
    ys = (np.arange(ny) + 0.5) * domain.dy
    zs = (np.arange(nz) + 0.5) * domain.dz
    cx, cy, cz = np.meshgrid(xs, ys, zs, indexing="ij")

    region = np.full((nx, ny, nz), Region.LOWER_AQUIFER, dtype=np.int8)
    if h_cap > 0.0:
        region[cz >= H] = Region.CAPROCK
        region[cz >= H + h_cap] = Region.UPPER_AQUIFER

    if leak is not None:
        foot_x = reservoir.well_x + leak.resolved_anchor()
        foot_z = H if h_cap > 0.0 else 0.0
        _check_leak_fits(domain, leak, foot_x, foot_z, h_cap)
        s = _leak_signed_distance(leak, foot_x, foot_z, cx, cz)
        half = 0.5 * leak.aperture
        in_slab = (s >= -half) & (s < half)
        y_lo = 0.5 * domain.ly - 0.5 * leak.width
        in_slab &= (cy >= y_lo) & (cy < y_lo + leak.width)
        if h_cap > 0.0:
            in_slab &= region == Region.CAPROCK
        region[in_slab] = Region.LEAK

    active = region != Region.CAPROCK
    n_active = int(active.sum())
    if n_active == 0:
        raise EmptyDomainError("grid has zero active cells")

    active_index = np.full((nx, ny, nz), -1, dtype=np.int64)
    active_index[active] = np.arange(n_active)
    ijk = np.argwhere(active)
    centers = np.column_stack([cx[active], cy[active], cz[active]])
    cell_volume = domain.dx * domain.dy * domain.dz
    volumes = np.full(n_active, cell_volume)
    region_a = region[active]
    perm0 = np.where(region_a == Region.LEAK,
                     leak.perm if leak is not None else reservoir.perm_aquifer,
                     reservoir.perm_aquifer)
    poro0 = np.full(n_active, rock.phi0)

    iface_cells, iface_axis, iface_area, iface_d = _interior_faces(domain, active_index)
    bface = _boundary_faces(domain, reservoir, active_index, region, centers)

    well_cells = _well_cells(domain, reservoir, active_index, h_cap)
    if well_cells.size == 0:
        raise GeometryError("injection well column contains no active cells")

    grid = Grid(domain, leak, reservoir, region, active_index, ijk, centers,
                volumes, region_a, perm0, poro0,
                iface_cells, iface_axis, iface_area, iface_d,
                *bface, well_cells, abs(domain.gravity[2]))

    if leak is not None and h_cap > 0.0 and not leak_connects_aquifers(grid):
        logger.warning(
            "rasterized leak does not form a face-connected path between the "
            "aquifers at this resolution (aperture %.3g m vs cell %.3g x %.3g m)",
            leak.aperture, domain.dx, domain.dz)
    return grid


def _check_leak_fits(domain, leak, foot_x, foot_z, h_cap):
    theta = math.radians(leak.tilt_deg)
    span = h_cap if h_cap > 0.0 else domain.lz
    x_top = foot_x + span * math.cos(theta) / math.sin(theta)
    half_horizontal = 0.5 * leak.aperture / math.sin(theta)
    lo = min(foot_x, x_top) - half_horizontal
    hi = max(foot_x, x_top) + half_horizontal
    if lo < -1e-9 or hi > domain.lx + 1e-9:
        raise GeometryError(
            f"leak slab spans x in [{lo:.3g}, {hi:.3g}] m, outside the "
            f"domain [0, {domain.lx:g}] m")


def _interior_faces(domain, active_index):
    cells, axes, areas, dists = [], [], [], []
    sizes = (domain.dx, domain.dy, domain.dz)
    face_area = (domain.dy * domain.dz, domain.dx * domain.dz, domain.dx * domain.dy)
    for axis in range(3):
        lo = active_index[_slab(axis, slice(None, -1))]
        hi = active_index[_slab(axis, slice(1, None))]
        mask = (lo >= 0) & (hi >= 0)
        a = lo[mask]
        b = hi[mask]
        cells.append(np.column_stack([a, b]))
        axes.append(np.full(a.size, axis, dtype=np.int8))
        areas.append(np.full(a.size, face_area[axis]))
        dists.append(np.full((a.size, 2), 0.5 * sizes[axis]))
    return (np.concatenate(cells) if cells else np.empty((0, 2), dtype=np.int64),
            np.concatenate(axes), np.concatenate(areas), np.concatenate(dists))


def _slab(axis, sl):
    idx = [slice(None)] * 3
    idx[axis] = sl
    return tuple(idx)


def _boundary_faces(domain, reservoir, active_index, region, centers):
    cell, area, dist, side_names = [], [], [], []
    specs = {
        "x-": (active_index[0, :, :], region[0, :, :], domain.dy * domain.dz, 0.5 * domain.dx),
        "x+": (active_index[-1, :, :], region[-1, :, :], domain.dy * domain.dz, 0.5 * domain.dx),
        "y-": (active_index[:, 0, :], region[:, 0, :], domain.dx * domain.dz, 0.5 * domain.dy),
        "y+": (active_index[:, -1, :], region[:, -1, :], domain.dx * domain.dz, 0.5 * domain.dy),
    }
    for side in reservoir.outflow_sides:
        idx, reg, a, d = specs[side]
        mask = (idx >= 0) & np.isin(reg, AQUIFER_REGIONS)
        chosen = idx[mask]
        cell.append(chosen)
        area.append(np.full(chosen.size, a))
        dist.append(np.full(chosen.size, d))
        side_names.extend([side] * chosen.size)
    bcell = np.concatenate(cell) if cell else np.empty(0, dtype=np.int64)
    barea = np.concatenate(area) if area else np.empty(0)
    bdist = np.concatenate(dist) if dist else np.empty(0)
    bz = centers[bcell, 2] if bcell.size else np.empty(0)
    return bcell, barea, bdist, bz, np.array(side_names)


def _well_cells(domain, reservoir, active_index, h_cap):
    i = min(int(reservoir.well_x / domain.dx), domain.nx - 1)
    if reservoir.well_y is None:
        j_list = range(domain.ny)
    else:
        j_list = [min(int(reservoir.well_y / domain.dy), domain.ny - 1)]
    if h_cap > 0.0:
        k_list = [k for k in range(domain.nz)
                  if (k + 0.5) * domain.dz < reservoir.aquifer_height]
        if not k_list:
            k_list = [0]
    else:
        k_list = list(range(domain.nz))
    cells = [active_index[i, j, k] for j in j_list for k in k_list]
    return np.array(sorted(c for c in cells if c >= 0), dtype=np.int64)


def face_transmissibility(grid: Grid, perm_field, face: int) -> float:
    """TPFA transmissibility of one interior face, m^3.

    T = A / (d1/K1 + d2/K2); symmetric in the two cells and linear in the
    face area.
    """
    perm = np.asarray(perm_field, dtype=float)
    a, b = grid.iface_cells[face]
    if perm[a] <= 0.0 or perm[b] <= 0.0:
        raise DomainError("permeability must be > 0 on both sides of a face")
    da, db = grid.iface_d[face]
    return float(grid.iface_area[face] / (da / perm[a] + db / perm[b]))


def interior_transmissibilities(grid: Grid, perm_field) -> np.ndarray:
    """Vectorized TPFA transmissibilities of all interior faces."""
    perm = np.asarray(perm_field, dtype=float)
    if np.any(perm <= 0.0):
        raise DomainError("permeability must be > 0 everywhere")
    a = grid.iface_cells[:, 0]
    b = grid.iface_cells[:, 1]
    return grid.iface_area / (grid.iface_d[:, 0] / perm[a] + grid.iface_d[:, 1] / perm[b])


def boundary_transmissibilities(grid: Grid, perm_field) -> np.ndarray:
    """Half-cell transmissibilities of the constant-pressure boundary faces."""
    perm = np.asarray(perm_field, dtype=float)
    return grid.bface_area * perm[grid.bface_cell] / grid.bface_d


def leak_connects_aquifers(grid: Grid) -> bool:
    """True if leak cells form a face-connected bridge between the aquifers.

    Flood-fills the leak-cell subgraph from every leak cell that touches
    the lower aquifer and checks whether any reached cell touches the
    upper one. Useful as a sanity check before running flow on coarse
    grids, where a thin tilted slab can rasterize into diagonal stripes
    that share no faces.
    """
    leak_set = set(grid.leak_cells.tolist())
    if not leak_set:
        return False
    neighbors: dict[int, list[int]] = {c: [] for c in leak_set}
    touches_lower = set()
    touches_upper = set()
    for a, b in grid.iface_cells:
        a, b = int(a), int(b)
        a_leak, b_leak = a in leak_set, b in leak_set
        if a_leak and b_leak:
            neighbors[a].append(b)
            neighbors[b].append(a)
        elif a_leak or b_leak:
            leak_c, other = (a, b) if a_leak else (b, a)
            if grid.region[other] == Region.LOWER_AQUIFER:
                touches_lower.add(leak_c)
            elif grid.region[other] == Region.UPPER_AQUIFER:
                touches_upper.add(leak_c)
    stack = list(touches_lower)
    seen = set(stack)
    while stack:
        c = stack.pop()
        if c in touches_upper:
            return True
        for nb in neighbors[c]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return False
