"""Fully implicit solver for coupled water flow, solute transport and
immobile-phase growth on a structured grid.

Per active cell the unknowns are (p_w, c_m, c_o, c_u, phi_b, phi_c). One
backward-Euler step solves the coupled residual

    water:    (phi^{n+1} - phi^n) V/dt + sum_f F_w - q V             = 0
    solute x: ((c_x phi)^{n+1} - (c_x phi)^n) V/dt + sum_f c_up F_w
              - c_inj q V - R_x V                                    = 0
    immobile: rho_x (phi_x^{n+1} - phi_x^n) V/dt - R_x V             = 0

with TPFA face fluxes F_w = T/mu_w (Phi_a - Phi_b), Phi = p + rho_w g z,
first-order upwinding of the solutes, and every nonlinearity (porosity,
permeability, reactions, upwind directions) evaluated at n+1. Newton uses
an analytic Jacobian; the only dropped coupling is the dependence of the
shear norm on the pressure field (the residual keeps it, so the converged
state is fully implicit).

Constant-pressure production boundaries are half-cell transmissibility
faces against a hydrostatic ghost with datum potential p_bdry; inflow
from the boundary carries zero concentrations, outflow carries resident
ones. A grid with no boundary faces gets the water equation of cell 0
replaced by a pressure pin, which turns a shut-in single cell into the
plain backward-Euler form of the batch reaction ODEs.

One simulation advances one state; separate instances share nothing but
the immutable grid and parameter objects and may run in parallel.
Assembly is single-threaded and deterministic: identical inputs produce
identical results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, DomainError
from .grid import Grid
from .kinetics import _rate_jacobian, _rates, permeability, permeability_derivative
from .params import KineticParams, RockLaw
from .schedule import Schedule, WellControl, control_at

# unknown ordering within one cell
IP, IM, IO, IU, IB, IC = range(6)
NVAR = 6

SPECIES = ("m", "o", "u")
_CONC_FLOOR = {"m": 1e-3, "o": 1e-3, "u": 1e-1}  # kg/m^3, convergence scales

_SIDE_AXIS_SIGN = {"x-": (0, -1.0), "x+": (0, 1.0), "y-": (1, -1.0), "y+": (1, 1.0)}


@dataclass
class SolverSettings:
    newton_rel_tol: float = 1e-6
    newton_max_iter: int = 15
    dt_init: float = 600.0  # s
    dt_min: float = 1e-2  # s
    dt_max: float = 7200.0  # s
    dt_grow: float = 2.0
    dt_cut: float = 0.5
    grow_iter_threshold: int = 5  # grow dt after converging this fast

    def validate(self) -> None:
        if not 0.0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise DomainError("need 0 < dt_min <= dt_init <= dt_max")
        if not self.newton_rel_tol > 0.0:
            raise DomainError("newton_rel_tol must be > 0")


@dataclass
class MicpState:
    """Struct-of-arrays state over the active cells."""

    p: np.ndarray
    c_m: np.ndarray
    c_o: np.ndarray
    c_u: np.ndarray
    phi_b: np.ndarray
    phi_c: np.ndarray

    def copy(self) -> "MicpState":
        return MicpState(*(getattr(self, f).copy() for f in
                           ("p", "c_m", "c_o", "c_u", "phi_b", "phi_c")))

    def to_vector(self) -> np.ndarray:
        n = self.p.size
        x = np.empty(NVAR * n)
        for idx, name in ((IP, "p"), (IM, "c_m"), (IO, "c_o"), (IU, "c_u"),
                          (IB, "phi_b"), (IC, "phi_c")):
            x[idx::NVAR] = getattr(self, name)
        return x

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "MicpState":
        return cls(p=x[IP::NVAR].copy(), c_m=x[IM::NVAR].copy(),
                   c_o=x[IO::NVAR].copy(), c_u=x[IU::NVAR].copy(),
                   phi_b=x[IB::NVAR].copy(), phi_c=x[IC::NVAR].copy())


def make_initial_state(grid: Grid, params: KineticParams, p_datum: float) -> MicpState:
    """Water-filled reservoir in hydrostatic equilibrium with the boundary."""
    n = grid.n_active
    p = p_datum - params.rho_w * grid.gravity_accel * grid.centers[:, 2]
    zeros = np.zeros(n)
    return MicpState(p=p, c_m=zeros.copy(), c_o=zeros.copy(), c_u=zeros.copy(),
                     phi_b=zeros.copy(), phi_c=zeros.copy())


def porosity_field(grid: Grid, state: MicpState) -> np.ndarray:
    return grid.poro0 - state.phi_b - state.phi_c


def permeability_field(grid: Grid, rock: RockLaw, state: MicpState) -> np.ndarray:
    phi = np.clip(porosity_field(grid, state), 0.0, grid.poro0)
    return permeability(rock, phi, K0=grid.perm0)


class _System:
    """Precomputed immutable assembly data for one (grid, params, rock)."""

    def __init__(self, grid: Grid, params: KineticParams, rock: RockLaw):
        self.grid = grid
        self.params = params
        self.rock = rock
        self.n = grid.n_active
        self.V = grid.volumes
        self.phi0 = grid.poro0
        self.K0 = grid.perm0
        self.z = grid.centers[:, 2]
        self.g = grid.gravity_accel
        self.fa = grid.iface_cells[:, 0]
        self.fb = grid.iface_cells[:, 1]
        self.f_area = grid.iface_area
        self.f_da = grid.iface_d[:, 0]
        self.f_db = grid.iface_d[:, 1]
        self.f_dz = self.z[self.fb] - self.z[self.fa]
        self.f_axis = grid.iface_axis
        self.bc = grid.bface_cell
        self.b_area = grid.bface_area
        self.b_d = grid.bface_d
        self.b_z = grid.bface_z
        self.b_axis = np.array([_SIDE_AXIS_SIGN[s][0] for s in grid.bface_side],
                               dtype=np.int8)
        self.b_sign = np.array([_SIDE_AXIS_SIGN[s][1] for s in grid.bface_side])
        self.closed = self.bc.size == 0
        self.well = grid.well_cells
        self.well_frac = grid.volumes[self.well] / grid.well_volume

    def conc_scales(self, state: MicpState, controls) -> dict[str, float]:
        scales = {}
        for name in SPECIES:
            inj = max((getattr(c, f"c_{name}") for c in controls), default=0.0)
            resident = float(np.max(getattr(state, f"c_{name}"), initial=0.0))
            scales[name] = max(inj, resident, _CONC_FLOOR[name])
        return scales


def _eval_system(sys: _System, x, old: MicpState, dt, control: WellControl,
                 want_jacobian=True):
    """Residual, optional Jacobian triplets and flux/rate diagnostics at x."""
    n = sys.n
    p = x[IP::NVAR]
    m = x[IM::NVAR]
    o = x[IO::NVAR]
    u = x[IU::NVAR]
    b = x[IB::NVAR]
    c = x[IC::NVAR]

    V = sys.V
    mu_w = sys.params.mu_w
    rho_w = sys.params.rho_w
    g = sys.g

    phi = sys.phi0 - b - c
    phi_old = sys.phi0 - old.phi_b - old.phi_c
    phi_k = np.clip(phi, 0.0, sys.phi0)
    K = np.asarray(permeability(sys.rock, phi_k, K0=sys.K0))
    dK = np.asarray(permeability_derivative(sys.rock, phi_k, K0=sys.K0))

    # interior face fluxes
    T = sys.f_area / (sys.f_da / K[sys.fa] + sys.f_db / K[sys.fb])
    dpot = (p[sys.fa] - p[sys.fb]) - rho_w * g * sys.f_dz
    F = T / mu_w * dpot
    up_is_a = F >= 0.0
    upw = np.where(up_is_a, sys.fa, sys.fb)

    # boundary face fluxes (positive = out of the domain)
    Tb = sys.b_area * K[sys.bc] / sys.b_d
    dpot_b = p[sys.bc] + rho_w * g * sys.b_z - control.p_bdry
    Fb = Tb / mu_w * dpot_b
    out_mask = Fb >= 0.0

    # cell-average Darcy velocity -> shear norm ||grad p - rho g|| = |v| mu / K
    v2 = np.zeros(n)
    for axis in range(3):
        fmask = sys.f_axis == axis
        vel = np.zeros(n)
        fluxa = F[fmask] / sys.f_area[fmask]
        vel += np.bincount(sys.fa[fmask], weights=fluxa, minlength=n)
        vel += np.bincount(sys.fb[fmask], weights=fluxa, minlength=n)
        bmask = sys.b_axis == axis
        if np.any(bmask):
            vel += np.bincount(sys.bc[bmask],
                               weights=(sys.b_sign[bmask] * Fb[bmask]
                                        / sys.b_area[bmask]), minlength=n)
        v2 += (0.5 * vel) ** 2
    shear = np.sqrt(v2) * mu_w / K

    # reactions at the clipped (physical) state
    mc = np.maximum(m, 0.0)
    oc = np.maximum(o, 0.0)
    uc = np.maximum(u, 0.0)
    bcl = np.clip(b, 0.0, sys.phi0)
    ccl = np.clip(c, 0.0, sys.phi0 - bcl)
    R_m, R_o, R_u, R_b, R_c = _rates(mc, oc, uc, bcl, ccl, shear,
                                     sys.params, sys.rock)

    q = np.zeros(n)  # volumetric source, m^3/s per cell
    if control.rate != 0.0:
        q[sys.well] = control.rate * sys.well_frac

    resid = np.zeros(NVAR * n)
    flux_div = (np.bincount(sys.fa, weights=F, minlength=n)
                - np.bincount(sys.fb, weights=F, minlength=n)
                + np.bincount(sys.bc, weights=Fb, minlength=n))
    resid[IP::NVAR] = (phi - phi_old) * V / dt + flux_div - q

    conc = {"m": (m, old.c_m, control.c_m, IM, R_m),
            "o": (o, old.c_o, control.c_o, IO, R_o),
            "u": (u, old.c_u, control.c_u, IU, R_u)}
    for name, (cv, cv_old, c_inj, ivar, R) in conc.items():
        adv = (np.bincount(sys.fa, weights=cv[upw] * F, minlength=n)
               - np.bincount(sys.fb, weights=cv[upw] * F, minlength=n)
               + np.bincount(sys.bc, weights=np.where(out_mask, cv[sys.bc], 0.0) * Fb,
                             minlength=n))
        resid[ivar::NVAR] = ((cv * phi - cv_old * phi_old) * V / dt
                             + adv - c_inj * q - R * V)

    resid[IB::NVAR] = sys.params.rho_b * (b - old.phi_b) * V / dt - R_b * V
    resid[IC::NVAR] = sys.params.rho_c * (c - old.phi_c) * V / dt - R_c * V

    pin_scale = None
    if sys.closed:
        pin_scale = V[0] * sys.phi0[0] / (dt * 1e5)
        resid[IP] = (p[0] - control.p_bdry) * pin_scale

    aux = {"F": F, "Fb": Fb, "out_mask": out_mask, "upw": upw, "shear": shear,
           "K": K, "q": q,
           "rates": {"m": R_m, "o": R_o, "u": R_u, "b": R_b, "c": R_c}}
    if not want_jacobian:
        return resid, None, aux

    rows, cols, vals = [], [], []

    def add(row_cells, row_var, col_cells, col_var, values):
        rows.append(NVAR * np.asarray(row_cells) + row_var)
        cols.append(NVAR * np.asarray(col_cells) + col_var)
        vals.append(np.asarray(values, dtype=float))

    cells = np.arange(n)
    jac = _rate_jacobian(mc, oc, uc, bcl, ccl, shear, sys.params, sys.rock)

    def jentry(rate, var):
        val = jac.get((rate, var))
        return np.zeros(n) if val is None else np.broadcast_to(val, (n,))

    # storage + reaction blocks
    add(cells, IP, cells, IB, -V / dt)
    add(cells, IP, cells, IC, -V / dt)
    svars = ((IM, "m", m, "R_m"), (IO, "o", o, "R_o"), (IU, "u", u, "R_u"))
    for ivar, vname, cv, rname in svars:
        add(cells, ivar, cells, ivar, phi * V / dt - jentry(rname, vname) * V)
        for jvar, jname in ((IM, "m"), (IO, "o"), (IU, "u")):
            if jvar != ivar:
                add(cells, ivar, cells, jvar, -jentry(rname, jname) * V)
        add(cells, ivar, cells, IB, -cv * V / dt - jentry(rname, "b") * V)
        add(cells, ivar, cells, IC, -cv * V / dt - jentry(rname, "c") * V)
    for jvar, jname in ((IM, "m"), (IO, "o"), (IU, "u"), (IC, "c")):
        add(cells, IB, cells, jvar, -jentry("R_b", jname) * V)
    add(cells, IB, cells, IB, sys.params.rho_b * V / dt - jentry("R_b", "b") * V)
    for jvar, jname in ((IU, "u"), (IB, "b")):
        add(cells, IC, cells, jvar, -jentry("R_c", jname) * V)
    add(cells, IC, cells, IC, np.full(n, sys.params.rho_c) * V / dt)

    # interior face flux derivatives
    dF_dpa = T / mu_w
    dT_dKa = T * T * sys.f_da / (sys.f_area * K[sys.fa] ** 2)
    dT_dKb = T * T * sys.f_db / (sys.f_area * K[sys.fb] ** 2)
    dF_dba = dpot / mu_w * dT_dKa * (-dK[sys.fa])
    dF_dbb = dpot / mu_w * dT_dKb * (-dK[sys.fb])
    flux_cols = ((sys.fa, IP, dF_dpa), (sys.fb, IP, -dF_dpa),
                 (sys.fa, IB, dF_dba), (sys.fa, IC, dF_dba),
                 (sys.fb, IB, dF_dbb), (sys.fb, IC, dF_dbb))
    for col_cells, col_var, dF in flux_cols:
        add(sys.fa, IP, col_cells, col_var, dF)
        add(sys.fb, IP, col_cells, col_var, -dF)
    for name, (cv, _, _, ivar, _) in conc.items():
        c_up = cv[upw]
        for col_cells, col_var, dF in flux_cols:
            add(sys.fa, ivar, col_cells, col_var, c_up * dF)
            add(sys.fb, ivar, col_cells, col_var, -c_up * dF)
        add(sys.fa, ivar, upw, ivar, F)
        add(sys.fb, ivar, upw, ivar, -F)

    # boundary face derivatives
    if sys.bc.size:
        dFb_dp = Tb / mu_w
        dFb_db = dpot_b / mu_w * sys.b_area / sys.b_d * (-dK[sys.bc])
        bcols = ((IP, dFb_dp), (IB, dFb_db), (IC, dFb_db))
        for col_var, dFb in bcols:
            add(sys.bc, IP, sys.bc, col_var, dFb)
        for name, (cv, _, _, ivar, _) in conc.items():
            cb = np.where(out_mask, cv[sys.bc], 0.0)
            for col_var, dFb in bcols:
                add(sys.bc, ivar, sys.bc, col_var, cb * dFb)
            add(sys.bc, ivar, sys.bc, ivar, np.where(out_mask, Fb, 0.0))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if sys.closed:
        keep = rows != IP  # drop the water row of cell 0, then pin p there
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        rows = np.append(rows, IP)
        cols = np.append(cols, IP)
        vals = np.append(vals, pin_scale)
    J = sparse.coo_matrix((vals, (rows, cols)), shape=(NVAR * n, NVAR * n)).tocsc()
    return resid, J, aux


def _error_scales(sys: _System, dt, conc_scales) -> np.ndarray:
    base = sys.V * sys.phi0 / dt
    e = np.empty(NVAR * sys.n)
    e[IP::NVAR] = base
    e[IM::NVAR] = base * conc_scales["m"]
    e[IO::NVAR] = base * conc_scales["o"]
    e[IU::NVAR] = base * conc_scales["u"]
    e[IB::NVAR] = base * sys.params.rho_b
    e[IC::NVAR] = base * sys.params.rho_c
    if sys.closed:
        e[IP] = sys.V[0] * sys.phi0[0] / dt  # pin row: |p0 - p_bdry| / 1e5 Pa
    return e


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    resid_norm: float
    clamped: dict = field(default_factory=dict)
    injected: dict = field(default_factory=dict)
    produced: dict = field(default_factory=dict)
    reacted: dict = field(default_factory=dict)
    water_out: float = 0.0
    water_in: float = 0.0


def assemble_residual(grid: Grid, state_new: MicpState, state_old: MicpState,
                      dt: float, control: WellControl, params: KineticParams,
                      rock: RockLaw):
    """Public assembly: residual vector and sparse Jacobian at state_new."""
    if not dt > 0.0:
        raise DomainError("dt must be > 0")
    sys = _System(grid, params, rock)
    resid, J, _ = _eval_system(sys, state_new.to_vector(), state_old, dt, control)
    return resid, J


def shear_norm_field(grid: Grid, state: MicpState, params: KineticParams,
                     rock: RockLaw, p_bdry: float | None = None) -> np.ndarray:
    """||grad p_w - rho_w g|| per cell, from reconstructed Darcy velocities."""
    sys = _System(grid, params, rock)
    control = WellControl() if p_bdry is None else WellControl(p_bdry=p_bdry)
    _, _, aux = _eval_system(sys, state.to_vector(), state, 1.0, control,
                             want_jacobian=False)
    return aux["shear"]


def solve_timestep(grid: Grid, state_old: MicpState, dt: float,
                   control: WellControl, settings: SolverSettings,
                   params: KineticParams, rock: RockLaw,
                   conc_scales: dict | None = None,
                   _sys: _System | None = None):
    """One backward-Euler step via Newton; returns (state_new, report).

    ``report.converged`` is False on Newton failure; the caller decides
    whether to cut dt and retry.
    """
    settings.validate()
    sys = _sys if _sys is not None else _System(grid, params, rock)
    if conc_scales is None:
        conc_scales = sys.conc_scales(state_old, [control])
    escale = _error_scales(sys, dt, conc_scales)

    x = state_old.to_vector()
    resid, J, aux = _eval_system(sys, x, state_old, dt, control)
    rnorm = float(np.max(np.abs(resid / escale)))
    iters = 0
    while rnorm >= settings.newton_rel_tol:
        if iters >= settings.newton_max_iter or not np.isfinite(rnorm):
            return state_old, NewtonReport(False, iters, rnorm)
        delta = splu(J).solve(-resid)
        # keep volume-fraction updates physically small per iteration
        dmax = np.max(np.abs(np.concatenate([delta[IB::NVAR], delta[IC::NVAR]])),
                      initial=0.0)
        if dmax > 0.5 * float(np.min(sys.phi0)):
            delta *= 0.5 * float(np.min(sys.phi0)) / dmax
        x = x + delta
        iters += 1
        resid, J, aux = _eval_system(sys, x, state_old, dt, control)
        rnorm = float(np.max(np.abs(resid / escale)))

    state = MicpState.from_vector(x)
    phi_conv = np.maximum(sys.phi0 - state.phi_b - state.phi_c, 0.0)

    clamped = {}
    for name in SPECIES:
        arr = getattr(state, f"c_{name}")
        neg = arr < 0.0
        clamped[name] = float(np.sum(-arr[neg] * phi_conv[neg] * sys.V[neg]))
        arr[neg] = 0.0
    b_raw = state.phi_b.copy()
    c_raw = state.phi_c.copy()
    b_new = np.clip(b_raw, 0.0, sys.phi0)
    c_new = np.clip(c_raw, 0.0, sys.phi0)
    c_new -= np.maximum(b_new + c_new - sys.phi0, 0.0)
    clamped["b"] = float(np.sum(np.abs(b_raw - b_new) * sys.V) * sys.params.rho_b)
    clamped["c"] = float(np.sum(np.abs(c_raw - c_new) * sys.V) * sys.params.rho_c)
    state.phi_b[:] = b_new
    state.phi_c[:] = c_new

    report = NewtonReport(True, iters, rnorm, clamped=clamped)
    Fb, out_mask = aux["Fb"], aux["out_mask"]
    conc_vectors = {"m": x[IM::NVAR], "o": x[IO::NVAR], "u": x[IU::NVAR]}
    for name in SPECIES:
        cv = conc_vectors[name]
        outflow = float(np.sum(np.where(out_mask, cv[sys.bc], 0.0) * Fb)) if sys.bc.size else 0.0
        report.produced[name] = outflow * dt
        report.injected[name] = getattr(control, f"c_{name}") * control.rate * dt
        report.reacted[name] = float(np.sum(aux["rates"][name] * sys.V)) * dt
    for name in ("b", "c"):
        report.reacted[name] = float(np.sum(aux["rates"][name] * sys.V)) * dt
    if sys.bc.size:
        report.water_out = float(np.sum(np.maximum(Fb, 0.0))) * dt
        report.water_in = float(np.sum(np.maximum(-Fb, 0.0))) * dt
    return state, report


@dataclass
class SpeciesLedger:
    injected: float = 0.0
    produced: float = 0.0
    reacted: float = 0.0
    initial_mass: float = 0.0
    final_mass: float = 0.0

    @property
    def closure_error(self) -> float:
        return (self.final_mass - self.initial_mass
                - self.injected + self.produced - self.reacted)

    @property
    def relative_closure_error(self) -> float:
        scale = max(abs(self.injected), abs(self.initial_mass),
                    abs(self.final_mass), abs(self.reacted), 1e-30)
        return abs(self.closure_error) / scale


@dataclass
class OutputHooks:
    """Optional sinks invoked during a run."""

    snapshot_cadence: float | None = None  # s of simulated time
    on_snapshot: object = None  # fn(t, MicpState)
    on_diagnostics: object = None  # fn(t, dict)


@dataclass
class RunReport:
    final_state: MicpState
    t_end: float
    species: dict
    immobile_produced: dict
    clamped: dict
    water_injected: float
    water_produced_net: float
    steps: int
    newton_iterations: int
    dt_failures: int
    wall_time: float

    def min_perm_ratio(self, grid: Grid, rock: RockLaw) -> float:
        """min over leak cells of K/K0 (over all cells when no leak)."""
        K = permeability_field(grid, rock, self.final_state)
        cells = grid.leak_cells
        if cells.size == 0:
            cells = np.arange(grid.n_active)
        return float(np.min(K[cells] / grid.perm0[cells]))


def _solute_mass(sys: _System, state: MicpState) -> dict[str, float]:
    phi = sys.phi0 - state.phi_b - state.phi_c
    return {name: float(np.sum(getattr(state, f"c_{name}") * phi * sys.V))
            for name in SPECIES}


def simulate_micp(grid: Grid, schedule: Schedule, params: KineticParams,
                  rock: RockLaw, settings: SolverSettings,
                  sinks: OutputHooks | None = None,
                  initial_state: MicpState | None = None) -> RunReport:
    """Advance the coupled system across every schedule period.

    Adaptive stepping never crosses a period boundary; on Newton failure
    the step is retried with dt * dt_cut until dt_min, then a
    ConvergenceError carrying the last good state is raised.
    """
    settings.validate()
    t_start = time.perf_counter()
    sys = _System(grid, params, rock)
    state = (initial_state.copy() if initial_state is not None
             else make_initial_state(grid, params, schedule.p_bdry))
    if sys.closed and any(p.rate > 0.0 for p in schedule.periods):
        raise DomainError("cannot inject into a domain with no open boundary")
    controls = [control_at(schedule, p.end_time) for p in schedule.periods]
    conc_scales = sys.conc_scales(state, controls)

    ledgers = {name: SpeciesLedger(**{"initial_mass": m})
               for name, m in _solute_mass(sys, state).items()}
    immobile = {"b": 0.0, "c": 0.0}
    clamped = {k: 0.0 for k in ("m", "o", "u", "b", "c")}
    water_in = 0.0
    water_out_net = 0.0
    steps = 0
    newton_total = 0
    failures = 0

    t = 0.0
    eps = 1e-9
    if sinks and sinks.on_snapshot:
        sinks.on_snapshot(t, state)
    next_snap = (sinks.snapshot_cadence if sinks and sinks.snapshot_cadence
                 else None)

    grow_cooldown = 0
    for period in schedule.periods:
        control = control_at(schedule, period.end_time)
        dt_cur = min(settings.dt_init, settings.dt_max)
        while period.end_time - t > eps * max(1.0, period.end_time):
            dt = min(dt_cur, period.end_time - t)
            new_state, rep = solve_timestep(grid, state, dt, control, settings,
                                            params, rock, conc_scales, _sys=sys)
            if not rep.converged:
                failures += 1
                grow_cooldown = 3  # hold dt a few steps, avoid cut/grow cycles
                dt_cur = dt * settings.dt_cut
                if dt_cur < settings.dt_min:
                    raise ConvergenceError(
                        f"Newton failed at t = {t:.6g} s with dt below dt_min",
                        last_good_state=state, last_good_time=t)
                continue
            state = new_state
            t += dt
            steps += 1
            newton_total += rep.iterations
            for name in SPECIES:
                ledgers[name].injected += rep.injected[name]
                ledgers[name].produced += rep.produced[name]
                ledgers[name].reacted += rep.reacted[name]
            for name in ("b", "c"):
                immobile[name] += rep.reacted[name]
            for name, v in rep.clamped.items():
                clamped[name] += v
            water_in += control.rate * dt
            water_out_net += rep.water_out - rep.water_in
            if grow_cooldown > 0:
                grow_cooldown -= 1
            elif rep.iterations <= settings.grow_iter_threshold:
                dt_cur = min(dt_cur * settings.dt_grow, settings.dt_max)
            if sinks:
                if sinks.on_diagnostics:
                    sinks.on_diagnostics(t, {
                        "dt": dt, "newton_iterations": rep.iterations,
                        "residual": rep.resid_norm,
                        "max_phi_c": float(state.phi_c.max(initial=0.0)),
                        "max_phi_b": float(state.phi_b.max(initial=0.0)),
                    })
                if (next_snap is not None and sinks.on_snapshot
                        and t >= next_snap - eps):
                    sinks.on_snapshot(t, state)
                    while next_snap <= t + eps:
                        next_snap += sinks.snapshot_cadence
        t = period.end_time

    if schedule.periods and sinks and sinks.on_snapshot:
        sinks.on_snapshot(t, state)
    final_mass = _solute_mass(sys, state)
    for name in SPECIES:
        ledgers[name].final_mass = final_mass[name]
    return RunReport(final_state=state, t_end=t if schedule.periods else 0.0,
                     species=ledgers, immobile_produced=immobile,
                     clamped=clamped, water_injected=water_in,
                     water_produced_net=water_out_net, steps=steps,
                     newton_iterations=newton_total, dt_failures=failures,
                     wall_time=time.perf_counter() - t_start)
