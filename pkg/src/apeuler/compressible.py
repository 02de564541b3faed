"""Semi-implicit velocity-stabilized scheme for the compressible barotropic
Euler system with pressure law p(rho) = rho^gamma and Mach number eps.

One step advances (rho^n, u^n) -> (rho^{n+1}, u^{n+1}):

1.  the density solves the implicit upwind balance
    rho^{n+1} + dt * div_up(rho^{n+1}, w^n) = rho^n, where the advective
    velocity w^n = u^n - du^{n+1} is stabilized by the pressure-gradient
    correction du^{n+1} = (eta dt / eps^2) grad p(rho^{n+1}); the nonlinear
    coupling is resolved by Picard iteration on frozen split velocities;
2.  the momentum update is explicit, with the upwind flux carrying the
    product rho^{n+1} u^n of the donor cell and the stiff pressure gradient
    scaled by 1/eps^2.

Under the sufficient time-step bound (evaluated explicitly at t^n) the total
energy and its entropy variant are non-increasing; both are tracked per step
together with the stabilization dissipation entering the global bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .fields import CellScalar, CellVector
from .linsolve import LinearOperator, SolveReport, solve_transport
from .mesh import Mesh
from .operators import (
    EdgeSplit,
    _laplace_symbol,
    div_upwind_values,
    edge_normal_values,
    grad_values,
    project,
    project_vector,
    split_advective_velocity,
)

log = logging.getLogger(__name__)

__all__ = [
    "CompConfig",
    "CompState",
    "StepDiagnostics",
    "Trajectory",
    "eos",
    "psi",
    "pi_gamma",
    "init_comp",
    "stabilization",
    "eta_rule",
    "comp_dt",
    "density_picard",
    "velocity_update",
    "comp_step",
    "run_comp",
    "total_energy",
    "total_entropy",
    "default_output_times",
]


@dataclass(frozen=True)
class CompConfig:
    """Scheme parameters for one compressible run."""

    gamma: float = 2.0
    eps: float = 1.0
    eta_margin: float = 1.01
    cfl_fraction: float = 0.9
    t_final: float = 0.02
    dt_max: float | None = None          # default: t_final / 50
    picard_tol: float = 1e-11
    picard_max_iter: int = 50
    rho_lo: float = 1e-6
    rho_hi: float = 1e6
    transport_tol: float = 1e-12
    transport_max_iter: int = 400

    def __post_init__(self) -> None:
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not 0.0 < self.cfl_fraction <= 1.0:
            raise ValueError(f"cfl_fraction must lie in (0,1], got {self.cfl_fraction}")
        if not self.eta_margin >= 1.0:
            raise ValueError(f"eta_margin must be >= 1, got {self.eta_margin}")
        if not 0.0 < self.rho_lo < self.rho_hi:
            raise ValueError("density window must satisfy 0 < rho_lo < rho_hi")
        if self.picard_max_iter < 1 or self.transport_max_iter < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.dt_max is None:
            object.__setattr__(self, "dt_max", self.t_final / 50.0)


@dataclass
class CompState:
    """Discrete solution at one time level."""

    t: float
    rho: CellScalar
    u: CellVector
    step: int = 0

    def __post_init__(self) -> None:
        if np.any(self.rho.values <= 0.0):
            raise ValueError("density must be positive everywhere")

    @property
    def mesh(self) -> Mesh:
        return self.rho.mesh


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step scalars; the CSV columns plus in-memory extras."""

    step: int
    t: float
    dt: float
    picard_iters: int
    energy: float
    entropy_pi: float
    mass: float
    rho_min: float
    rho_max: float
    stab_dissipation: float
    energy_ok: bool
    # not part of the CSV schema:
    dt_bound: float = math.nan       # CFL value before any output-time clipping
    eta: float = math.nan
    transport_iters: int = 0
    transport_residual: float = 0.0


@dataclass
class Trajectory:
    """States recorded at output times plus the full diagnostics series."""

    mesh: Mesh
    times: list
    states: list
    diagnostics: list


@dataclass(frozen=True)
class PicardReport(SolveReport):
    """Transport-solve report of the accepting sweep, plus the sweep count."""

    sweeps: int = 0


# ---------------------------------------------------------------------------
# equation of state and energies
# ---------------------------------------------------------------------------

def _check_positive(rho: np.ndarray) -> None:
    if np.any(rho <= 0.0):
        raise ValueError("non-positive density")


def eos_values(rho: np.ndarray, gamma: float) -> np.ndarray:
    _check_positive(rho)
    return rho ** gamma


def psi_values(rho: np.ndarray, gamma: float) -> np.ndarray:
    _check_positive(rho)
    return rho ** gamma / (gamma - 1.0)


def pi_gamma_values(rho: np.ndarray, gamma: float) -> np.ndarray:
    _check_positive(rho)
    # psi(rho) - psi(1) - psi'(1)(rho - 1) with psi'(1) = gamma/(gamma-1)
    return (rho ** gamma - 1.0 - gamma * (rho - 1.0)) / (gamma - 1.0)


def eos(rho: CellScalar, gamma: float) -> CellScalar:
    """Pressure p = rho^gamma."""
    return CellScalar(rho.mesh, eos_values(rho.values, gamma))


def psi(rho: CellScalar, gamma: float) -> CellScalar:
    """Pressure potential (internal energy density) rho^gamma/(gamma-1)."""
    return CellScalar(rho.mesh, psi_values(rho.values, gamma))


def pi_gamma(rho: CellScalar, gamma: float) -> CellScalar:
    """Relative internal energy: psi minus its affine part at rho = 1."""
    return CellScalar(rho.mesh, pi_gamma_values(rho.values, gamma))


def total_energy(rho: CellScalar, u: CellVector, eps: float, gamma: float) -> float:
    """E = sum |K| (rho |u|^2 / 2 + psi(rho)/eps^2)."""
    vol = rho.mesh.cell_vol
    ke = 0.5 * rho.values * np.einsum("kc,kc->k", u.values, u.values)
    return float(np.dot(vol, ke + psi_values(rho.values, gamma) / eps**2))


def total_entropy(rho: CellScalar, u: CellVector, eps: float, gamma: float) -> float:
    """Entropy variant with the relative internal energy Pi_gamma."""
    vol = rho.mesh.cell_vol
    ke = 0.5 * rho.values * np.einsum("kc,kc->k", u.values, u.values)
    return float(np.dot(vol, ke + pi_gamma_values(rho.values, gamma) / eps**2))


# ---------------------------------------------------------------------------
# scheme building blocks
# ---------------------------------------------------------------------------

def init_comp(rho0, u0, mesh: Mesh, eps: float, gamma: float = 2.0,
              order: int = 3) -> CompState:
    """Project pointwise initial data (rho0, u0) onto the mesh.

    ``u0`` is a pair of pointwise component functions.  The initial total
    energy (bounded uniformly in eps for well-prepared data) is logged.
    """
    rho = project(rho0, mesh, order)
    if np.any(rho.values <= 0.0):
        raise ValueError("projected initial density is not positive")
    u = project_vector(u0[0], u0[1], mesh, order)
    state = CompState(t=0.0, rho=rho, u=u, step=0)
    log.info("initial data on %dx%d: energy %.12e (eps=%g), max|rho-1|=%.3e",
             mesh.nx, mesh.ny, total_energy(rho, u, eps, gamma), eps,
             float(np.abs(rho.values - 1.0).max()))
    return state


def eta_rule(rho_n: CellScalar, eta_margin: float = 1.01) -> float:
    """Stabilization coefficient eta = margin * 3 / (2 min_K rho^n_K)."""
    rho_min = float(rho_n.values.min())
    if rho_min <= 0.0:
        raise ValueError("non-positive density")
    return eta_margin * 1.5 / rho_min


def stabilization(rho_new: CellScalar, dt: float, eta: float, eps: float,
                  gamma: float = 2.0) -> CellVector:
    """Velocity correction du = (eta dt / eps^2) grad p(rho)."""
    mesh = rho_new.mesh
    gp = grad_values(mesh, eos_values(rho_new.values, gamma))
    return CellVector(mesh, (eta * dt / eps**2) * gp)


def comp_dt(state: CompState, grad_p_prev: CellVector, config: CompConfig) -> float:
    """Largest admissible dt from the sufficient per-face bound at t^n.

    Per face sigma = K|L the bound reads
    dt * max(|bd K|/|K|, |bd L|/|L|) * (|{{u}}| + sqrt((eta/eps^2)|{{grad p}}|))
    <= min(1, min(rho_K, rho_L) / (3 max(rho_K, rho_L))),
    with all densities taken explicitly at t^n.  The result is scaled by
    cfl_fraction and capped at dt_max.
    """
    mesh = state.mesh
    eta = eta_rule(state.rho, config.eta_margin)
    K, L = mesh.edge_K, mesh.edge_L

    bnd = mesh.cell_bnd / mesh.cell_vol
    geo = np.maximum(bnd[K], bnd[L])

    uavg = 0.5 * (state.u.values[K] + state.u.values[L])
    gavg = 0.5 * (grad_p_prev.values[K] + grad_p_prev.values[L])
    speed = np.hypot(uavg[:, 0], uavg[:, 1]) + np.sqrt(
        (eta / config.eps**2) * np.hypot(gavg[:, 0], gavg[:, 1]))

    rho = state.rho.values
    ratio = np.minimum(rho[K], rho[L]) / np.maximum(rho[K], rho[L])
    rhs = np.minimum(1.0, ratio / 3.0)

    denom = geo * speed
    active = denom > 0.0
    if not np.any(active):
        return float(config.dt_max)
    bound = float((rhs[active] / denom[active]).min())
    return float(min(config.cfl_fraction * bound, config.dt_max))


def _spectral_inverse(mesh: Mesh, beta: float):
    """Apply (I - beta * div grad)^{-1} through the real FFT.

    The composed central Laplacian is translation invariant on the periodic
    uniform grid, so the shifted operator inverts exactly in rfft2 space.
    Used as a right preconditioner; beta >= 0 keeps it positive definite.
    """
    denom = 1.0 + beta * _laplace_symbol(mesh)

    def apply(q: np.ndarray) -> np.ndarray:
        spec = np.fft.rfft2(q.reshape(mesh.ny, mesh.nx)) / denom
        return np.fft.irfft2(spec, s=(mesh.ny, mesh.nx)).reshape(-1)

    return apply


def _stab_flux_div(mesh: Mesh, c_edge: np.ndarray):
    """Divergence-style gather of the stabilization flux direction:
    G[q] = (1/|K|) sum_sigma +- |sigma| c_sigma {{grad q}}_sigma . nu."""
    ce = mesh.cell_edges
    lc = mesh.edge_len * c_edge

    def apply(q: np.ndarray) -> np.ndarray:
        t = lc * edge_normal_values(mesh, grad_values(mesh, q))
        out = t[ce[:, 0]] - t[ce[:, 1]] + t[ce[:, 2]] - t[ce[:, 3]]
        return out / mesh.cell_vol

    return apply


def density_picard(rho_n: CellScalar, u_n: CellVector, dt: float,
                   config: CompConfig) -> tuple[CellScalar, EdgeSplit, float, SolveReport]:
    """Solve the implicit mass balance by a stabilized Picard iteration.

    Each sweep freezes the upwind split at the current density iterate and
    solves a linear system for the next one.  The pressure-gradient shift is
    kept *inside* that linear system — linearized through p'(rho) at the
    iterate, with the upwind coefficient and sign pattern frozen — because a
    sweep that treats the shift explicitly contracts only for time steps of
    order eps*h, defeating the Mach-uniform step bound.  The linearization
    changes nothing about the fixed point: on convergence the density, the
    returned split, and the mass balance are those of the original scheme.
    Sweeps stop when consecutive iterates agree to picard_tol in the max
    norm.  Returns the converged density, the final frozen split (so the
    momentum update reuses the identical flux), the eta used, and the last
    linear solve report.
    """
    mesh = rho_n.mesh
    eta = eta_rule(rho_n, config.eta_margin)
    rho_l = rho_n.values.copy()
    coef = eta * dt * dt / config.eps**2

    split = None
    report = None
    for it in range(1, config.picard_max_iter + 1):
        _check_positive(rho_l)
        du = stabilization(CellScalar(mesh, rho_l), dt, eta, config.eps,
                           config.gamma)
        split = split_advective_velocity(u_n, du)
        wplus, wminus = split.wplus, split.wminus

        # upwind coefficient of the shift flux, frozen at this iterate:
        # the donor density attached to the active half of du per face
        du_edge = edge_normal_values(mesh, du.values)
        rk, rl = rho_l[mesh.edge_K], rho_l[mesh.edge_L]
        c_edge = np.where(du_edge > 0.0, rl,
                          np.where(du_edge < 0.0, rk, 0.5 * (rk + rl)))
        stab_div = _stab_flux_div(mesh, c_edge)
        pp = config.gamma * rho_l ** (config.gamma - 1.0)

        def apply(x: np.ndarray, _wp=wplus, _wm=wminus, _sd=stab_div,
                  _pp=pp) -> np.ndarray:
            return (x + dt * div_upwind_values(mesh, x, _wp, _wm)
                    - coef * _sd(_pp * x))

        b = rho_n.values - coef * stab_div(pp * rho_l)

        # solve for the correction off the current iterate: the Krylov loop
        # then only has to shrink the (small) sweep residual down to the
        # tolerance of the full system, which stays reachable in float64
        # even when the shift terms carry h^-2/eps^2 scales
        target = config.transport_tol * float(np.linalg.norm(b))
        r0 = b - apply(rho_l)
        r0_norm = float(np.linalg.norm(r0))
        if r0_norm <= target:
            rho_next, report = rho_l, SolveReport(0, r0_norm, True)
        else:
            rho_bar = float(np.dot(mesh.cell_vol, rho_l)) / mesh.domain_vol
            beta = coef * config.gamma * rho_bar ** config.gamma
            minv = _spectral_inverse(mesh, beta)
            A = LinearOperator(lambda y, _a=apply, _m=minv: _a(_m(y)),
                               mesh.ncells)
            y, report = solve_transport(A, r0, tol=target / r0_norm,
                                        max_iter=config.transport_max_iter)
            if not report.converged:
                raise RuntimeError(
                    f"transport solve failed in Picard sweep {it}: "
                    f"residual {report.residual:.3e}")
            rho_next = rho_l + minv(y)
        if np.any(rho_next <= 0.0):
            raise RuntimeError(f"density lost positivity in Picard sweep {it}")

        delta = float(np.abs(rho_next - rho_l).max())
        scale = float(np.abs(rho_l).max())
        rho_l = rho_next
        if delta <= config.picard_tol * scale:
            break
    else:
        raise RuntimeError(
            f"Picard iteration did not converge in {config.picard_max_iter} "
            f"sweeps (last update {delta:.3e})")

    lo, hi = float(rho_l.min()), float(rho_l.max())
    if lo < config.rho_lo or hi > config.rho_hi:
        raise RuntimeError(
            f"density [{lo:.3e}, {hi:.3e}] left the admissible window "
            f"[{config.rho_lo:g}, {config.rho_hi:g}]")
    report = PicardReport(iterations=report.iterations,
                          residual=report.residual,
                          converged=report.converged, sweeps=it)
    return CellScalar(mesh, rho_l), split, eta, report


def velocity_update(rho_n: CellScalar, u_n: CellVector, rho_new: CellScalar,
                    split_w: EdgeSplit, dt: float, eps: float,
                    gamma: float = 2.0) -> CellVector:
    """Explicit momentum balance, then division by the new density.

    The upwind flux transports the donor-cell product rho^{n+1} u^n with the
    same frozen split the density solve used, so the pair satisfies the
    discrete mass/momentum balances with one common flux.
    """
    mesh = rho_n.mesh
    gp = grad_values(mesh, eos_values(rho_new.values, gamma))
    m_new = np.empty((mesh.ncells, 2))
    for c in range(2):
        q = rho_new.values * u_n.values[:, c]
        conv = div_upwind_values(mesh, q, split_w.wplus, split_w.wminus)
        m_new[:, c] = (rho_n.values * u_n.values[:, c]
                       - dt * conv - (dt / eps**2) * gp[:, c])
    return CellVector(mesh, m_new / rho_new.values[:, None])


def comp_step(state: CompState, config: CompConfig,
              dt_cap: float | None = None) -> tuple[CompState, StepDiagnostics]:
    """Advance one step; never aborts on an energy-inequality violation."""
    mesh = state.mesh
    eps, gamma = config.eps, config.gamma

    grad_p_n = CellVector(mesh, grad_values(mesh, eos_values(state.rho.values, gamma)))
    dt_bound = comp_dt(state, grad_p_n, config)
    dt = dt_bound if dt_cap is None else min(dt_bound, dt_cap)

    e_prev = total_energy(state.rho, state.u, eps, gamma)
    rho_new, split, eta, report = density_picard(state.rho, state.u, dt, config)
    u_new = velocity_update(state.rho, state.u, rho_new, split, dt, eps, gamma)

    energy = total_energy(rho_new, u_new, eps, gamma)
    entropy = total_entropy(rho_new, u_new, eps, gamma)
    gp_new = grad_values(mesh, eos_values(rho_new.values, gamma))
    gp_sq = np.einsum("kc,kc->k", gp_new, gp_new)
    stab = (dt**2 / eps**4) * float(
        np.dot(mesh.cell_vol, (eta - 1.0 / rho_new.values) * gp_sq))
    energy_ok = bool(energy <= e_prev * (1.0 + 1e-10))
    if not energy_ok:
        log.warning("energy inequality violated at step %d: %.15e -> %.15e",
                    state.step, e_prev, energy)

    new_state = CompState(t=state.t + dt, rho=rho_new, u=u_new,
                          step=state.step + 1)
    diag = StepDiagnostics(
        step=new_state.step, t=new_state.t, dt=dt,
        picard_iters=getattr(report, "sweeps", 0),
        energy=energy, entropy_pi=entropy,
        mass=float(np.dot(mesh.cell_vol, rho_new.values)),
        rho_min=float(rho_new.values.min()),
        rho_max=float(rho_new.values.max()),
        stab_dissipation=stab, energy_ok=energy_ok,
        dt_bound=dt_bound, eta=eta,
        transport_iters=report.iterations,
        transport_residual=report.residual,
    )
    return new_state, diag


def default_output_times(t_final: float, count: int = 10) -> np.ndarray:
    """Initial and final time plus equispaced intermediates."""
    if t_final == 0.0 or count < 2:
        return np.array([0.0])
    return np.linspace(0.0, t_final, count)


def run_comp(config: CompConfig, mesh: Mesh, ic: CompState,
             output_times=None) -> Trajectory:
    """March the scheme to t_final, landing exactly on each output time."""
    if output_times is None:
        output_times = default_output_times(config.t_final)
    output_times = np.asarray(output_times, dtype=np.float64)

    state = ic
    times = [state.t]
    states = [state]
    diagnostics: list[StepDiagnostics] = []
    tiny = 1e-12 * max(config.t_final, 1.0)

    for t_out in output_times[1:]:
        while state.t < t_out - tiny:
            state, diag = comp_step(state, config, dt_cap=float(t_out - state.t))
            diagnostics.append(diag)
        state = replace(state, t=float(t_out))
        times.append(state.t)
        states.append(state)
    return Trajectory(mesh=mesh, times=times, states=states,
                      diagnostics=diagnostics)
