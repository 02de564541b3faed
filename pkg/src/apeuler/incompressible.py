"""Semi-implicit limit scheme for the incompressible Euler system on the
collocated periodic grid.

Each step enforces the stabilized divergence constraint through a pressure
Poisson system, eta dt (div grad) pi^{n+1} = div v^n, then updates the
velocity explicitly with the upwind flux of the corrected advective field
w = v^n - dv^{n+1}, dv^{n+1} = eta dt grad pi^{n+1}:

    v^{n+1} = v^n - dt div_up(v^n, split(w)) - dt grad pi^{n+1}.

The composed central-difference Laplacian decouples the four point parities
of an even periodic grid, so its kernel contains the three checkerboard modes
besides the constants; all four are deflated in the CG solve and the returned
pressure is orthogonal to them.  Kinetic energy is non-increasing under the
sufficient time-step bound (beta = 1/8 in 2-D), which is evaluated
explicitly at t^n with the previous step's pressure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .compressible import Trajectory, default_output_times
from .fields import CellScalar, CellVector
from .linsolve import LinearOperator, SolveReport, solve_deflated_spd
from .mesh import Mesh
from .operators import (
    _laplace_symbol,
    div_upwind_values,
    div_values,
    grad_values,
    laplace_values,
    mean,
    project_vector,
    split_advective_velocity,
)

log = logging.getLogger(__name__)

__all__ = [
    "IncompConfig",
    "IncompState",
    "IncompStepDiagnostics",
    "BETA_2D",
    "BETA_3D",
    "init_incomp",
    "pressure_kernel_basis",
    "pressure_solve",
    "incomp_dt",
    "incomp_step",
    "run_incomp",
    "kinetic_energy",
]

#: sufficient time-step constants of the energy bound (the 3-D value is
#: exposed for completeness; nothing in this package exercises d = 3).
BETA_2D = 1.0 / 8.0
BETA_3D = 1.0 / 12.0


@dataclass(frozen=True)
class IncompConfig:
    """Scheme parameters for one incompressible run."""

    eta: float = 1.515
    cfl_fraction: float = 0.9
    t_final: float = 0.02
    dt_max: float | None = None          # default: t_final / 50
    pressure_tol: float = 1e-10
    pressure_max_iter: int | None = None  # default: solver picks 2n

    def __post_init__(self) -> None:
        if not self.eta > 1.0:
            raise ValueError(f"eta must exceed 1, got {self.eta}")
        if not 0.0 < self.cfl_fraction <= 1.0:
            raise ValueError(f"cfl_fraction must lie in (0,1], got {self.cfl_fraction}")
        if self.dt_max is None:
            object.__setattr__(self, "dt_max", self.t_final / 50.0)


@dataclass
class IncompState:
    """Velocity and mean-zero pressure at one time level."""

    t: float
    v: CellVector
    pi: CellScalar
    step: int = 0

    @property
    def mesh(self) -> Mesh:
        return self.v.mesh


@dataclass(frozen=True)
class IncompStepDiagnostics:
    """Per-step scalars; CSV columns plus in-memory extras."""

    step: int
    t: float
    dt: float
    kinetic_energy: float
    div_residual: float
    pressure_iters: int
    energy_ok: bool
    # not part of the CSV schema:
    dt_bound: float = math.nan
    stab_dissipation: float = 0.0
    pi_linf: float = 0.0


def kinetic_energy(v: CellVector) -> float:
    """(1/2) sum |K| |v_K|^2."""
    sq = np.einsum("kc,kc->k", v.values, v.values)
    return 0.5 * float(np.dot(v.mesh.cell_vol, sq))


def init_incomp(v0, mesh: Mesh, order: int = 3) -> IncompState:
    """Project pointwise initial velocity; pressure starts at zero.

    The projection is not re-projected onto the discrete constraint — the
    first pressure solve absorbs whatever divergence it carries.
    """
    v = project_vector(v0[0], v0[1], mesh, order)
    pi = CellScalar(mesh, np.zeros(mesh.ncells))
    return IncompState(t=0.0, v=v, pi=pi, step=0)


def pressure_kernel_basis(mesh: Mesh) -> np.ndarray:
    """Orthonormal kernel of the composed Laplacian: constants plus the
    checkerboard modes the long-stencil differences cannot see."""
    i = np.tile(np.arange(mesh.nx), mesh.ny)
    j = np.repeat(np.arange(mesh.ny), mesh.nx)
    cols = [np.ones(mesh.ncells)]
    if mesh.nx % 2 == 0:
        cols.append(np.where(i % 2 == 0, 1.0, -1.0))
    if mesh.ny % 2 == 0:
        cols.append(np.where(j % 2 == 0, 1.0, -1.0))
    if mesh.nx % 2 == 0 and mesh.ny % 2 == 0:
        cols.append(np.where((i + j) % 2 == 0, 1.0, -1.0))
    basis = np.column_stack(cols)
    return basis / math.sqrt(mesh.ncells)


def _pressure_preconditioner(mesh: Mesh, coeff: float):
    """Fourier pseudo-inverse of coeff * (-div grad).

    The operator is translation invariant on the uniform periodic grid, so
    its pseudo-inverse is a multiplier in rfft2 space; kernel modes (zero
    symbol) map to zero, which matches the deflation basis exactly.  Used
    as the CG preconditioner: nearly the true inverse, so the iteration
    only mops up FFT roundoff.
    """
    s = coeff * _laplace_symbol(mesh)
    mult = np.zeros_like(s)
    np.divide(1.0, s, out=mult, where=s > 0.0)

    def apply(q: np.ndarray) -> np.ndarray:
        spec = np.fft.rfft2(q.reshape(mesh.ny, mesh.nx)) * mult
        return np.fft.irfft2(spec, s=(mesh.ny, mesh.nx)).reshape(-1)

    return apply


def pressure_solve(v_n: CellVector, eta: float, dt: float,
                   tol: float = 1e-10, max_iter: int | None = None,
                   x0: np.ndarray | None = None) -> tuple[CellScalar, SolveReport]:
    """Solve eta dt (div grad) pi = div v^n with kernel deflation.

    The returned pressure has zero mean and zero checkerboard components;
    its deflected divergence residual matches the CG report's residual.
    """
    if not (eta > 0.0 and dt > 0.0):
        raise ValueError("eta and dt must be positive")
    mesh = v_n.mesh
    coeff = eta * dt

    def apply(q: np.ndarray) -> np.ndarray:
        return -coeff * laplace_values(mesh, q)

    A = LinearOperator(apply, mesh.ncells)
    b = -div_values(mesh, v_n.values)
    basis = pressure_kernel_basis(mesh)
    x, report = solve_deflated_spd(A, b, basis, tol=tol, max_iter=max_iter,
                                   x0=x0,
                                   precond=_pressure_preconditioner(mesh, coeff))
    if not report.converged:
        raise RuntimeError(
            f"pressure solve did not converge: residual {report.residual:.3e} "
            f"after {report.iterations} iterations")
    return CellScalar(mesh, x), report


def incomp_dt(state: IncompState, pi_n: CellScalar, config: IncompConfig,
              beta: float = BETA_2D) -> float:
    """Largest dt with the per-face bound
    dt * max(|bd K|/|K|, |bd L|/|L|) * (|{{v}}| + sqrt(eta |{{grad pi}}|)) <= beta,
    evaluated at t^n, scaled by cfl_fraction and capped at dt_max."""
    mesh = state.mesh
    K, L = mesh.edge_K, mesh.edge_L
    bnd = mesh.cell_bnd / mesh.cell_vol
    geo = np.maximum(bnd[K], bnd[L])

    vavg = 0.5 * (state.v.values[K] + state.v.values[L])
    gpi = grad_values(mesh, pi_n.values)
    gavg = 0.5 * (gpi[K] + gpi[L])
    speed = np.hypot(vavg[:, 0], vavg[:, 1]) + np.sqrt(
        config.eta * np.hypot(gavg[:, 0], gavg[:, 1]))

    denom = geo * speed
    if not np.any(denom > 0.0):
        return float(config.dt_max)
    bound = beta / float(denom.max())
    return float(min(config.cfl_fraction * bound, config.dt_max))


def incomp_step(state: IncompState, config: IncompConfig,
                dt_cap: float | None = None) -> tuple[IncompState, IncompStepDiagnostics]:
    """Advance one step: pressure solve, then explicit upwind momentum update."""
    mesh = state.mesh
    dt_bound = incomp_dt(state, state.pi, config)
    dt = dt_bound if dt_cap is None else min(dt_bound, dt_cap)

    ke_prev = kinetic_energy(state.v)
    pi_new, report = pressure_solve(
        state.v, config.eta, dt, tol=config.pressure_tol,
        max_iter=config.pressure_max_iter, x0=state.pi.values)

    gpi = grad_values(mesh, pi_new.values)
    dv = CellVector(mesh, (config.eta * dt) * gpi)
    split = split_advective_velocity(state.v, dv)

    v_new = np.empty((mesh.ncells, 2))
    for c in range(2):
        conv = div_upwind_values(mesh, state.v.values[:, c],
                                 split.wplus, split.wminus)
        v_new[:, c] = state.v.values[:, c] - dt * conv - dt * gpi[:, c]
    v_new = CellVector(mesh, v_new)

    constrained = state.v.values - dv.values
    resid_cells = div_values(mesh, constrained)
    div_residual = float(np.sqrt(np.dot(mesh.cell_vol, resid_cells**2)))

    ke = kinetic_energy(v_new)
    energy_ok = bool(ke <= ke_prev * (1.0 + 1e-10))
    if not energy_ok:
        log.warning("kinetic energy grew at step %d: %.15e -> %.15e",
                    state.step, ke_prev, ke)

    gpi_sq = np.einsum("kc,kc->k", gpi, gpi)
    stab = (config.eta - 1.0) * dt**2 * float(np.dot(mesh.cell_vol, gpi_sq))

    new_state = IncompState(t=state.t + dt, v=v_new, pi=pi_new,
                            step=state.step + 1)
    diag = IncompStepDiagnostics(
        step=new_state.step, t=new_state.t, dt=dt,
        kinetic_energy=ke, div_residual=div_residual,
        pressure_iters=report.iterations, energy_ok=energy_ok,
        dt_bound=dt_bound, stab_dissipation=stab,
        pi_linf=float(np.abs(pi_new.values).max()),
    )
    return new_state, diag


def run_incomp(config: IncompConfig, mesh: Mesh, ic: IncompState,
               output_times=None) -> Trajectory:
    """March to t_final, landing exactly on each output time."""
    if output_times is None:
        output_times = default_output_times(config.t_final)
    output_times = np.asarray(output_times, dtype=np.float64)

    state = ic
    times = [state.t]
    states = [state]
    diagnostics: list[IncompStepDiagnostics] = []
    tiny = 1e-12 * max(config.t_final, 1.0)

    for t_out in output_times[1:]:
        while state.t < t_out - tiny:
            state, diag = incomp_step(state, config, dt_cap=float(t_out - state.t))
            diagnostics.append(diag)
        state = replace(state, t=float(t_out))
        times.append(state.t)
        states.append(state)
    return Trajectory(mesh=mesh, times=times, states=states,
                      diagnostics=diagnostics)
