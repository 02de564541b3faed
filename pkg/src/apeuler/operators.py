"""Discrete differential operators, upwind fluxes, projections and norms on
uniform periodic meshes.

All cell-based operators are assembled as gathers over ``mesh.cell_edges``
(fixed face order +x, -x, +y, -y), so they are deterministic and allocation
patterns do not depend on the data.  Per-edge quantities follow the stored
K -> L orientation; seen from the neighbour cell the sign conventions flip,
which the gathers account for explicitly.

The sign-split pair carried by :class:`EdgeSplit` is the stabilized advective
normal velocity split into nonnegative/nonpositive halves per face.  The two
halves are split *separately* for the transporting velocity and the
stabilization correction and recombined crosswise, which is what makes the
upwind transport operator an M-matrix regardless of the correction's sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .fields import CellScalar, CellVector, DualScalar, DualVector
from .mesh import Mesh

__all__ = [
    "EdgeSplit",
    "project",
    "project_vector",
    "edge_average",
    "grad_primal",
    "div_primal",
    "grad_dual",
    "reconstruct_dual",
    "upwind_mass_flux",
    "div_upwind",
    "split_advective_velocity",
    "mean",
    "lp_norm",
]


# ---------------------------------------------------------------------------
# array kernels (shared by the public wrappers and the time steppers)
# ---------------------------------------------------------------------------

def grad_values(mesh: Mesh, q: np.ndarray) -> np.ndarray:
    """Central cell gradient of per-cell values ``q``; (ncells, 2)."""
    g = mesh.edge_len * (0.5 * (q[mesh.edge_L] - q[mesh.edge_K]))
    ce = mesh.cell_edges
    out = np.empty((mesh.ncells, 2))
    # The half-difference toward the neighbour enters with + sign on both
    # sides of a face: the (q_L - q_K) flip and the normal flip cancel.
    out[:, 0] = g[ce[:, 0]] + g[ce[:, 1]]
    out[:, 1] = g[ce[:, 2]] + g[ce[:, 3]]
    out /= mesh.cell_vol[:, None]
    return out


def div_values(mesh: Mesh, w: np.ndarray) -> np.ndarray:
    """Divergence of per-cell vectors ``w`` (ncells, 2) from face averages."""
    wn = 0.5 * (w[mesh.edge_K, mesh.edge_axis] + w[mesh.edge_L, mesh.edge_axis])
    s = mesh.edge_len * wn
    ce = mesh.cell_edges
    out = (s[ce[:, 0]] - s[ce[:, 1]] + s[ce[:, 2]] - s[ce[:, 3]])
    out /= mesh.cell_vol
    return out


def div_upwind_values(mesh: Mesh, q: np.ndarray, wplus: np.ndarray,
                      wminus: np.ndarray) -> np.ndarray:
    """Upwind divergence of per-cell values ``q`` for a pre-split velocity."""
    flux = mesh.edge_len * (q[mesh.edge_K] * wplus + q[mesh.edge_L] * wminus)
    ce = mesh.cell_edges
    out = (flux[ce[:, 0]] - flux[ce[:, 1]] + flux[ce[:, 2]] - flux[ce[:, 3]])
    out /= mesh.cell_vol
    return out


def edge_normal_values(mesh: Mesh, w: np.ndarray) -> np.ndarray:
    """Face-averaged normal component of per-cell vectors ``w``."""
    return 0.5 * (w[mesh.edge_K, mesh.edge_axis] + w[mesh.edge_L, mesh.edge_axis])


def laplace_values(mesh: Mesh, q: np.ndarray) -> np.ndarray:
    """div grad composition used by the pressure system."""
    return div_values(mesh, grad_values(mesh, q))


def _laplace_symbol(mesh: Mesh) -> np.ndarray:
    """Fourier symbol of ``-laplace_values`` in the ``rfft2`` half-spectrum.

    The composed central stencil is translation invariant on the periodic
    uniform grid; mode (kx, ky) has eigenvalue
    -(sin^2(2 pi kx/nx)/hx^2 + sin^2(2 pi ky/ny)/hy^2).  The entries where
    the symbol vanishes (constants and the three checkerboards on even
    grids) are zeroed exactly rather than left at sin(pi)^2 roundoff, so
    spectral solvers can recognize the kernel reliably.
    """
    sx = (np.sin(2.0 * np.pi * np.arange(mesh.nx // 2 + 1) / mesh.nx)
          / mesh.hx) ** 2
    sy = (np.sin(2.0 * np.pi * np.arange(mesh.ny) / mesh.ny) / mesh.hy) ** 2
    if mesh.nx % 2 == 0:
        sx[mesh.nx // 2] = 0.0
    if mesh.ny % 2 == 0:
        sy[mesh.ny // 2] = 0.0
    return sy[:, None] + sx[None, :]


# ---------------------------------------------------------------------------
# split advective velocities
# ---------------------------------------------------------------------------

@dataclass
class EdgeSplit:
    """Per-face sign-split normal velocity (w+ >= 0, w- <= 0), K -> L oriented."""

    mesh: Mesh
    wplus: np.ndarray
    wminus: np.ndarray

    def __post_init__(self) -> None:
        self.wplus = np.asarray(self.wplus, dtype=np.float64)
        self.wminus = np.asarray(self.wminus, dtype=np.float64)
        n = self.mesh.nedges
        if self.wplus.shape != (n,) or self.wminus.shape != (n,):
            raise ValueError("split parts must be per-edge arrays")
        if np.any(self.wplus < 0.0):
            raise ValueError("positive split part has negative entries")
        if np.any(self.wminus > 0.0):
            raise ValueError("negative split part has positive entries")


def split_advective_velocity(u: CellVector, du: CellVector) -> EdgeSplit:
    """Sign-split of the stabilized advective velocity w = u - du per face.

    The two halves are (u+ - du-, u- - du+) of the face-averaged normal
    components, so w+ >= 0 and w- <= 0 hold by construction and
    w+ + w- equals the face value of u - du.
    """
    mesh = u.mesh
    un = edge_normal_values(mesh, u.values)
    dn = edge_normal_values(mesh, du.values)
    upl = 0.5 * (un + np.abs(un))
    umi = un - upl
    dpl = 0.5 * (dn + np.abs(dn))
    dmi = dn - dpl
    return EdgeSplit(mesh, upl - dmi, umi - dpl)


# ---------------------------------------------------------------------------
# projection and averaging
# ---------------------------------------------------------------------------

def _gauss_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w  # on [0, 1], weights summing to 1


def project(f: Callable, mesh: Mesh, order: int = 3) -> CellScalar:
    """Cell means of a pointwise function by tensor Gauss quadrature.

    The default 3x3 rule is exact for polynomials of degree <= 5 per
    direction.  ``f`` must accept numpy arrays and broadcast.
    """
    xi, wq = _gauss_nodes(order)
    cx = mesh.cell_x[:, 0][:, None, None]
    cy = mesh.cell_x[:, 1][:, None, None]
    px = cx + (xi[None, :, None] - 0.5) * mesh.hx
    py = cy + (xi[None, None, :] - 0.5) * mesh.hy
    vals = np.asarray(f(px, py), dtype=np.float64)
    if vals.shape != (mesh.ncells, order, order):
        vals = np.broadcast_to(vals, (mesh.ncells, order, order))
    wgt = wq[:, None] * wq[None, :]
    return CellScalar(mesh, np.einsum("kab,ab->k", vals, wgt))


def project_vector(fx: Callable, fy: Callable, mesh: Mesh,
                   order: int = 3) -> CellVector:
    """Componentwise projection of a pointwise vector field."""
    out = np.empty((mesh.ncells, 2))
    out[:, 0] = project(fx, mesh, order).values
    out[:, 1] = project(fy, mesh, order).values
    return CellVector(mesh, out)


def edge_average(q, edge: int | None = None):
    """Arithmetic face average (q_K + q_L)/2.

    With ``edge`` given, returns the single float (or 2-vector for a
    :class:`CellVector`); otherwise the full per-face field.
    """
    mesh = q.mesh
    if isinstance(q, CellVector):
        avg = 0.5 * (q.values[mesh.edge_K] + q.values[mesh.edge_L])
        if edge is not None:
            return avg[edge]
        return DualVector(mesh, avg)
    avg = 0.5 * (q.values[mesh.edge_K] + q.values[mesh.edge_L])
    if edge is not None:
        return float(avg[edge])
    return DualScalar(mesh, avg)


# ---------------------------------------------------------------------------
# gradients / divergences
# ---------------------------------------------------------------------------

def grad_primal(q: CellScalar) -> CellVector:
    """Cell gradient built from face averages (central on uniform grids)."""
    return CellVector(q.mesh, grad_values(q.mesh, q.values))


def div_primal(w: CellVector) -> CellScalar:
    """Cell divergence from face-averaged normal components."""
    return CellScalar(w.mesh, div_values(w.mesh, w.values))


def grad_dual(q: CellScalar) -> DualVector:
    """Two-point gradient on the dual cells, (|sigma|/|D_sigma|)(q_L - q_K) nu."""
    mesh = q.mesh
    out = np.zeros((mesh.nedges, 2))
    out[np.arange(mesh.nedges), mesh.edge_axis] = (
        mesh.edge_len * (q.values[mesh.edge_L] - q.values[mesh.edge_K])
        / mesh.edge_dual_vol
    )
    return DualVector(mesh, out)


def reconstruct_dual(q: CellScalar, weights=0.5) -> DualScalar:
    """Convex two-point reconstruction onto dual cells.

    ``weights`` is the per-face coefficient mu of the K-side value (scalar or
    per-face array), required to lie in [0, 1].
    """
    mesh = q.mesh
    mu = np.asarray(weights, dtype=np.float64)
    if mu.ndim == 0:
        mu = np.full(mesh.nedges, float(mu))
    elif mu.shape != (mesh.nedges,):
        raise ValueError("weights must be scalar or per-edge")
    if np.any(mu < 0.0) or np.any(mu > 1.0):
        raise ValueError("reconstruction weights must lie in [0, 1]")
    vals = mu * q.values[mesh.edge_K] + (1.0 - mu) * q.values[mesh.edge_L]
    return DualScalar(mesh, vals)


# ---------------------------------------------------------------------------
# upwind fluxes
# ---------------------------------------------------------------------------

def upwind_mass_flux(q: CellScalar, wpair: tuple[float, float],
                     edge: int) -> float:
    """Upwind flux |sigma| (q_K w+ + q_L w-) through one face."""
    wplus, wminus = wpair
    if wplus < 0.0:
        raise ValueError(f"positive split part is negative: {wplus}")
    if wminus > 0.0:
        raise ValueError(f"negative split part is positive: {wminus}")
    mesh = q.mesh
    return float(
        mesh.edge_len[edge]
        * (q.values[mesh.edge_K[edge]] * wplus + q.values[mesh.edge_L[edge]] * wminus)
    )


def div_upwind(q: CellScalar, split_w: EdgeSplit) -> CellScalar:
    """Upwind divergence (1/|K|) sum over faces of the upwind flux."""
    if split_w.mesh is not q.mesh:
        raise ValueError("field and split live on different meshes")
    return CellScalar(
        q.mesh, div_upwind_values(q.mesh, q.values, split_w.wplus, split_w.wminus)
    )


# ---------------------------------------------------------------------------
# means and norms
# ---------------------------------------------------------------------------

def mean(q: CellScalar) -> float:
    """Volume-weighted mean over the domain."""
    return float(np.dot(q.mesh.cell_vol, q.values) / q.mesh.domain_vol)


def lp_norm(q, p) -> float:
    """Volume-weighted L^p norm, p in {1, 2, inf}.

    Vector fields are measured through their pointwise Euclidean magnitude.
    """
    if isinstance(q, CellVector):
        mag = np.hypot(q.values[:, 0], q.values[:, 1])
    else:
        mag = np.abs(q.values)
    vol = q.mesh.cell_vol
    if p == 1:
        return float(np.dot(vol, mag))
    if p == 2:
        return float(np.sqrt(np.dot(vol, mag * mag)))
    if p == np.inf or p == "inf":
        return float(mag.max()) if mag.size else 0.0
    raise ValueError(f"unsupported norm order {p!r}")
