"""Immiscible two-phase CO2/water solver for leakage assessment.

Runs on a frozen porosity/permeability field (the state the sealing
treatment left behind, or the untreated rock). Per cell the unknowns are
(p, s) with s the CO2 saturation; relative permeabilities are linear
(k_r = s_alpha), capillary pressure is zero so both phases share one
pressure. Each phase is upwinded by the sign of its own potential
difference, which keeps saturations in [0, 1] and lets gravity segregate
the phases. Discretization and Newton machinery mirror the reactive
solver: TPFA, backward Euler, analytic Jacobian, constant-pressure
hydrostatic boundary (pure water beyond the boundary), pressure pin on
closed domains.

The headline diagnostic is the normalized leakage flux: the upward CO2
volumetric flux through a horizontal plane restricted to leak-tagged
cells, divided by the injection rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, DomainError, GeometryError
from .grid import Grid, Region
from .micp import SolverSettings
from .params import TwoPhaseParams
from .schedule import DEFAULT_BOUNDARY_PRESSURE

JP, JS = 0, 1
NV2 = 2


@dataclass
class TwoPhaseState:
    p: np.ndarray  # Pa (shared by both phases)
    s: np.ndarray  # CO2 saturation

    def copy(self) -> "TwoPhaseState":
        return TwoPhaseState(self.p.copy(), self.s.copy())


def make_initial_twophase_state(grid: Grid, params: TwoPhaseParams,
                                p_datum: float) -> TwoPhaseState:
    """Fully water-saturated, hydrostatic against the boundary datum."""
    p = p_datum - params.rho_w * grid.gravity_accel * grid.centers[:, 2]
    return TwoPhaseState(p=p, s=np.zeros(grid.n_active))


class _TwoPhaseSystem:
    def __init__(self, grid: Grid, perm_field, poro_field, params: TwoPhaseParams):
        perm = np.asarray(perm_field, dtype=float)
        poro = np.asarray(poro_field, dtype=float)
        if perm.shape != (grid.n_active,) or poro.shape != (grid.n_active,):
            raise DomainError("perm/poro fields must have one value per active cell")
        if np.any(perm <= 0.0) or np.any(poro <= 0.0):
            raise DomainError("perm and poro must be > 0 in active cells")
        self.grid = grid
        self.params = params
        self.n = grid.n_active
        self.V = grid.volumes
        self.phi = poro
        self.fa = grid.iface_cells[:, 0]
        self.fb = grid.iface_cells[:, 1]
        self.f_dz = grid.centers[self.fb, 2] - grid.centers[self.fa, 2]
        da = grid.iface_d[:, 0]
        db = grid.iface_d[:, 1]
        self.T = grid.iface_area / (da / perm[self.fa] + db / perm[self.fb])
        self.bc = grid.bface_cell
        self.Tb = grid.bface_area * perm[self.bc] / grid.bface_d
        self.b_z = grid.bface_z
        self.z = grid.centers[:, 2]
        self.g = grid.gravity_accel
        self.closed = self.bc.size == 0
        self.well = grid.well_cells
        self.well_frac = grid.volumes[self.well] / grid.well_volume


def _phase_potentials(sys, p):
    """Interior and boundary potential differences for both phases."""
    pr = sys.params
    dw = (p[sys.fa] - p[sys.fb]) - pr.rho_w * sys.g * sys.f_dz
    dc = (p[sys.fa] - p[sys.fb]) - pr.rho_co2 * sys.g * sys.f_dz
    return dw, dc


def _boundary_potentials(sys, p, p_bdry):
    pr = sys.params
    # ghost water column: p_ghost(z) = p_bdry - rho_w g z
    dw = p[sys.bc] + pr.rho_w * sys.g * sys.z[sys.bc] - p_bdry
    dc = (p[sys.bc] + pr.rho_co2 * sys.g * sys.z[sys.bc]
          - (p_bdry - (pr.rho_w - pr.rho_co2) * sys.g * sys.b_z))
    return dw, dc


def _eval_twophase(sys, x, old: TwoPhaseState, dt, rate, p_bdry,
                   want_jacobian=True):
    pr = sys.params
    n = sys.n
    p = x[JP::NV2]
    s = x[JS::NV2]
    se = np.clip(s, 0.0, 1.0)
    V = sys.V

    dw, dc = _phase_potentials(sys, p)
    up_w = np.where(dw >= 0.0, sys.fa, sys.fb)
    up_c = np.where(dc >= 0.0, sys.fa, sys.fb)
    lam_w = (1.0 - se[up_w]) / pr.mu_w
    lam_c = se[up_c] / pr.mu_co2
    Fw = sys.T * lam_w * dw
    Fc = sys.T * lam_c * dc

    if sys.bc.size:
        bdw, bdc = _boundary_potentials(sys, p, p_bdry)
        out_w = bdw >= 0.0
        out_c = bdc >= 0.0
        blam_w = np.where(out_w, (1.0 - se[sys.bc]) / pr.mu_w, 1.0 / pr.mu_w)
        blam_c = np.where(out_c, se[sys.bc] / pr.mu_co2, 0.0)
        Fbw = sys.Tb * blam_w * bdw
        Fbc = sys.Tb * blam_c * bdc
    else:
        bdw = bdc = Fbw = Fbc = np.empty(0)
        out_w = out_c = np.empty(0, dtype=bool)

    q_c = np.zeros(n)
    if rate != 0.0:
        q_c[sys.well] = rate * sys.well_frac

    resid = np.zeros(NV2 * n)
    div_w = (np.bincount(sys.fa, weights=Fw, minlength=n)
             - np.bincount(sys.fb, weights=Fw, minlength=n)
             + np.bincount(sys.bc, weights=Fbw, minlength=n))
    div_c = (np.bincount(sys.fa, weights=Fc, minlength=n)
             - np.bincount(sys.fb, weights=Fc, minlength=n)
             + np.bincount(sys.bc, weights=Fbc, minlength=n))
    resid[JP::NV2] = -sys.phi * (s - old.s) * V / dt + div_w
    resid[JS::NV2] = sys.phi * (s - old.s) * V / dt + div_c - q_c

    pin_scale = None
    if sys.closed:
        pin_scale = sys.phi[0] * V[0] / (dt * 1e5)
        resid[JP] = (p[0] - p_bdry) * pin_scale

    aux = {"Fc": Fc, "Fw": Fw, "Fbc": Fbc, "Fbw": Fbw}
    if not want_jacobian:
        return resid, None, aux

    rows, cols, vals = [], [], []

    def add(row_cells, row_var, col_cells, col_var, values):
        rows.append(NV2 * np.asarray(row_cells) + row_var)
        cols.append(NV2 * np.asarray(col_cells) + col_var)
        vals.append(np.asarray(values, dtype=float))

    cells = np.arange(n)
    add(cells, JP, cells, JS, -sys.phi * V / dt)
    add(cells, JS, cells, JS, sys.phi * V / dt)

    in_bounds = (s >= 0.0) & (s <= 1.0)
    dlam_w = np.where(in_bounds[up_w], -1.0 / pr.mu_w, 0.0)
    dlam_c = np.where(in_bounds[up_c], 1.0 / pr.mu_co2, 0.0)
    for row_var, F_T_lam, dpot, upwind, dlam in (
            (JP, sys.T * lam_w, dw, up_w, dlam_w),
            (JS, sys.T * lam_c, dc, up_c, dlam_c)):
        add(sys.fa, row_var, sys.fa, JP, F_T_lam)
        add(sys.fb, row_var, sys.fa, JP, -F_T_lam)
        add(sys.fa, row_var, sys.fb, JP, -F_T_lam)
        add(sys.fb, row_var, sys.fb, JP, F_T_lam)
        dF_ds = sys.T * dlam * dpot
        add(sys.fa, row_var, upwind, JS, dF_ds)
        add(sys.fb, row_var, upwind, JS, -dF_ds)

    if sys.bc.size:
        sb_in = in_bounds[sys.bc]
        add(sys.bc, JP, sys.bc, JP, sys.Tb * blam_w)
        add(sys.bc, JS, sys.bc, JP, sys.Tb * blam_c)
        add(sys.bc, JP, sys.bc, JS,
            np.where(out_w & sb_in, -sys.Tb / pr.mu_w * bdw, 0.0))
        add(sys.bc, JS, sys.bc, JS,
            np.where(out_c & sb_in, sys.Tb / pr.mu_co2 * bdc, 0.0))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if sys.closed:
        keep = rows != JP
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        rows = np.append(rows, JP)
        cols = np.append(cols, JP)
        vals = np.append(vals, pin_scale)
    J = sparse.coo_matrix((vals, (rows, cols)), shape=(NV2 * n, NV2 * n)).tocsc()
    return resid, J, aux


def solve_twophase_step(grid: Grid, perm_field, state_old: TwoPhaseState,
                        dt: float, rate: float, settings: SolverSettings,
                        params: TwoPhaseParams,
                        p_bdry: float = DEFAULT_BOUNDARY_PRESSURE,
                        poro_field=None, _sys=None):
    """One implicit step; returns (state_new, report namedtuple-ish dict)."""
    if not dt > 0.0:
        raise DomainError("dt must be > 0")
    sys = _sys if _sys is not None else _TwoPhaseSystem(
        grid, perm_field, grid.poro0 if poro_field is None else poro_field, params)
    escale = np.repeat(sys.phi * sys.V / dt, NV2)
    if sys.closed:
        escale[JP] = sys.phi[0] * sys.V[0] / dt

    x = np.empty(NV2 * sys.n)
    x[JP::NV2] = state_old.p
    x[JS::NV2] = state_old.s
    resid, J, aux = _eval_twophase(sys, x, state_old, dt, rate, p_bdry)
    rnorm = float(np.max(np.abs(resid / escale)))
    iters = 0
    while rnorm >= settings.newton_rel_tol:
        if iters >= settings.newton_max_iter or not np.isfinite(rnorm):
            return state_old, _StepReport(False, iters, rnorm)
        delta = splu(J).solve(-resid)
        ds_max = float(np.max(np.abs(delta[JS::NV2]), initial=0.0))
        if ds_max > 0.5:
            delta *= 0.5 / ds_max
        x = x + delta
        iters += 1
        resid, J, aux = _eval_twophase(sys, x, state_old, dt, rate, p_bdry)
        rnorm = float(np.max(np.abs(resid / escale)))

    s = x[JS::NV2]
    if np.any(s < -1e-6) or np.any(s > 1.0 + 1e-6):
        return state_old, _StepReport(False, iters, rnorm)
    state = TwoPhaseState(p=x[JP::NV2].copy(), s=np.clip(s, 0.0, 1.0))
    co2_out = float(np.sum(np.maximum(aux["Fbc"], 0.0))) * dt if sys.bc.size else 0.0
    return state, _StepReport(True, iters, rnorm, co2_out=co2_out)


@dataclass
class _StepReport:
    converged: bool
    iterations: int
    resid_norm: float
    co2_out: float = 0.0


def co2_face_fluxes(grid: Grid, perm_field, state: TwoPhaseState,
                    params: TwoPhaseParams, poro_field=None) -> np.ndarray:
    """CO2 volumetric flux (m^3/s) on every interior face, oriented a->b."""
    sys = _TwoPhaseSystem(grid, perm_field,
                          grid.poro0 if poro_field is None else poro_field, params)
    _, dc = _phase_potentials(sys, state.p)
    up_c = np.where(dc >= 0.0, sys.fa, sys.fb)
    lam_c = np.clip(state.s, 0.0, 1.0)[up_c] / params.mu_co2
    return sys.T * lam_c * dc


def leakage_flux(grid: Grid, state: TwoPhaseState, plane_z: float,
                 normalize_by: float, perm_field, params: TwoPhaseParams,
                 poro_field=None) -> float:
    """Upward CO2 flux through plane_z inside the leak footprint, normalized.

    Sums the positive (upward) CO2 volumetric flux over the vertical faces
    the plane cuts whose upper or lower cell is leak-tagged, and divides by
    ``normalize_by`` (conventionally the CO2 injection rate).
    """
    if not normalize_by > 0.0:
        raise DomainError("normalize_by must be > 0")
    if not 0.0 < plane_z < grid.domain.lz:
        raise GeometryError(f"plane z = {plane_z} m outside the domain")
    faces = _plane_leak_faces(grid, plane_z)
    Fc = co2_face_fluxes(grid, perm_field, state, params, poro_field)
    return float(np.sum(np.maximum(Fc[faces], 0.0))) / normalize_by


def _plane_leak_faces(grid: Grid, plane_z: float) -> np.ndarray:
    fa = grid.iface_cells[:, 0]
    fb = grid.iface_cells[:, 1]
    face_z = 0.5 * (grid.centers[fa, 2] + grid.centers[fb, 2])
    on_plane = (grid.iface_axis == 2) & (np.abs(face_z - plane_z) < 1e-6 * grid.domain.dz)
    leak_touch = (grid.region[fa] == Region.LEAK) | (grid.region[fb] == Region.LEAK)
    faces = np.flatnonzero(on_plane & leak_touch)
    if faces.size == 0:
        raise GeometryError(
            f"plane z = {plane_z} m does not cut any leak-tagged face; "
            "pick a layer interface crossed by the leak")
    return faces


@dataclass
class Co2Report:
    series: list  # (t, normalized upward leak flux)
    final_state: TwoPhaseState
    injected_volume: float
    produced_volume: float
    in_place_volume: float
    steps: int
    newton_iterations: int
    dt_failures: int
    wall_time: float

    @property
    def volume_closure_error(self) -> float:
        scale = max(self.injected_volume, self.in_place_volume, 1e-30)
        return abs(self.injected_volume - self.produced_volume
                   - self.in_place_volume) / scale

    @property
    def peak_flux(self) -> float:
        return max((v for _, v in self.series), default=0.0)


def simulate_co2(grid: Grid, perm_field, rate: float, duration: float,
                 settings: SolverSettings, params: TwoPhaseParams,
                 plane_z: float | None = None,
                 p_bdry: float = DEFAULT_BOUNDARY_PRESSURE,
                 poro_field=None, initial_state: TwoPhaseState | None = None,
                 on_snapshot=None, snapshot_cadence: float | None = None) -> Co2Report:
    """Inject CO2 at the well for ``duration`` and track the leak flux.

    ``plane_z`` defaults to the lower-aquifer/caprock interface. Returns
    the (t, normalized flux) series sampled at every accepted step.
    """
    settings.validate()
    t_start = time.perf_counter()
    poro = grid.poro0 if poro_field is None else np.asarray(poro_field, dtype=float)
    sys = _TwoPhaseSystem(grid, perm_field, poro, params)
    if sys.closed and rate > 0.0:
        raise DomainError("cannot inject into a domain with no open boundary")
    plane_given = plane_z is not None
    if plane_z is None:
        plane_z = grid.reservoir.aquifer_height
    has_leak = grid.leak_cells.size > 0
    if has_leak:
        try:
            _plane_leak_faces(grid, plane_z)
        except GeometryError:
            if plane_given:
                raise
            # no vertical leak faces (e.g. a horizontal 1D layout):
            # run the assessment without the leak-flux series
            has_leak = False

    state = (initial_state.copy() if initial_state is not None
             else make_initial_twophase_state(grid, params, p_bdry))
    series: list[tuple[float, float]] = []
    produced = 0.0
    t = 0.0
    steps = 0
    newton_total = 0
    failures = 0
    next_snap = snapshot_cadence
    eps = 1e-9
    dt_cur = min(settings.dt_init, settings.dt_max)
    while duration - t > eps * max(1.0, duration):
        dt = min(dt_cur, duration - t)
        new_state, rep = solve_twophase_step(grid, perm_field, state, dt, rate,
                                             settings, params, p_bdry, poro,
                                             _sys=sys)
        if not rep.converged:
            failures += 1
            dt_cur = dt * settings.dt_cut
            if dt_cur < settings.dt_min:
                raise ConvergenceError(
                    f"two-phase Newton failed at t = {t:.6g} s",
                    last_good_state=state, last_good_time=t)
            continue
        state = new_state
        t += dt
        steps += 1
        newton_total += rep.iterations
        produced += rep.co2_out
        if rep.iterations <= settings.grow_iter_threshold:
            dt_cur = min(dt_cur * settings.dt_grow, settings.dt_max)
        if has_leak:
            series.append((t, leakage_flux(grid, state, plane_z,
                                           rate if rate > 0.0 else 1.0,
                                           perm_field, params, poro)))
        if (on_snapshot is not None and next_snap is not None
                and t >= next_snap - eps):
            on_snapshot(t, state)
            while next_snap <= t + eps:
                next_snap += snapshot_cadence

    in_place = float(np.sum(poro * state.s * grid.volumes))
    return Co2Report(series=series, final_state=state,
                     injected_volume=rate * t, produced_volume=produced,
                     in_place_volume=in_place, steps=steps,
                     newton_iterations=newton_total, dt_failures=failures,
                     wall_time=time.perf_counter() - t_start)
