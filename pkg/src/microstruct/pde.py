"""Auxiliary 2D solves on the perforated cross-section of the cone cell.

The cross-section domain is the unit square (centred at the origin) minus a
central disc of radius 1/8 (boundary Gamma2) and four discs of radius 1/16 at
(+-1/4, +-1/4) (boundary Gamma1); the outer square boundary is Gamma0.

Two problems are solved on a regular staircase grid with Q1 elements:

* scalar Neumann problem:  Delta u = 0,  du/dn = 0 on Gamma0, -1 on Gamma1,
  +2 on Gamma2 (compatible data: the boundary fluxes cancel);
* tensor problem:  div s = grad u with zero boundary traction, realized as
  s = sym-grad(v) for the displacement v of a pure-traction auxiliary
  elasticity solve with body force -grad u (rigid modes deflated).

Both solves are deterministic, mean-zero / rigid-mode-free, and report their
linear residuals, discrete compatibility sums, and an a-posteriori pointwise
boundary indicator used by the cell-level interface checks.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IncompatibleLoad, ParamDomain, PdeNotConverged

DISKS = ((0.0, 0.0, 1.0 / 8.0, 2),       # (cx, cy, radius, gamma label)
         (0.25, 0.25, 1.0 / 16.0, 1),
         (-0.25, 0.25, 1.0 / 16.0, 1),
         (0.25, -0.25, 1.0 / 16.0, 1),
         (-0.25, -0.25, 1.0 / 16.0, 1))
GAMMA_DATA = {0: 0.0, 1: -1.0, 2: 2.0}

_GPTS = ((1.0 - 1.0 / math.sqrt(3.0)) / 2.0, (1.0 + 1.0 / math.sqrt(3.0)) / 2.0)


def _q1_matrices():
    """Reference-cell stiffness matrices (h-independent in 2D):
    scalar Laplace (4x4) and sym-grad elasticity with identity law (8x8,
    dof order [vx0..vx3, vy0..vy3], node order 00,10,11,01)."""
    K_lap = np.zeros((4, 4))
    K_el = np.zeros((8, 8))
    for gx in _GPTS:
        for gy in _GPTS:
            dN = np.array([[-(1 - gy), -(1 - gx)],
                           [(1 - gy), -gx],
                           [gy, gx],
                           [-gy, (1 - gx)]])  # (node, d/dxi)
            K_lap += 0.25 * dN @ dN.T
            B = np.zeros((3, 8))  # rows: exx, eyy, sqrt2*exy
            B[0, 0:4] = dN[:, 0]
            B[1, 4:8] = dN[:, 1]
            B[2, 0:4] = dN[:, 1] / math.sqrt(2.0)
            B[2, 4:8] = dN[:, 0] / math.sqrt(2.0)
            K_el += 0.25 * B.T @ B
    return K_lap, K_el


_K_LAP_REF, _K_EL_REF = _q1_matrices()


class CrossSectionDomain:
    """Staircase discretization of the perforated unit square."""

    def __init__(self, n):
        if n < 128:
            raise ParamDomain("resolution too coarse: need h <= 1/128")
        self.n = int(n)
        self.h = 1.0 / self.n
        xs = -0.5 + (np.arange(self.n) + 0.5) * self.h
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        label = np.zeros((self.n, self.n), dtype=int)  # 0 = fluid/active
        for cx, cy, r, gamma in DISKS:
            inside = (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
            label[inside] = gamma
        self.cell_label = label
        self.active = label == 0
        self.boundary_faces = self._collect_faces()

    def _collect_faces(self):
        """(cell_i, cell_j, direction, gamma) for every staircase boundary
        face of an active cell; direction 0..3 = +x, -x, +y, -y."""
        n = self.n
        act = self.active
        faces = []
        dirs = ((1, 0, 0), (-1, 0, 1), (0, 1, 2), (0, -1, 3))
        for i in range(n):
            for j in range(n):
                if not act[i, j]:
                    continue
                for di, dj, d in dirs:
                    ii, jj = i + di, j + dj
                    if 0 <= ii < n and 0 <= jj < n:
                        if act[ii, jj]:
                            continue
                        gamma = self.cell_label[ii, jj]
                    else:
                        gamma = 0
                    faces.append((i, j, d, gamma))
        return faces

    def cell_nodes(self):
        """Node ids (4, ncells) for active cells, node order 00,10,11,01."""
        n = self.n
        idx = np.argwhere(self.active)
        i, j = idx[:, 0], idx[:, 1]
        stride = n + 1
        n00 = i * stride + j
        return np.stack([n00, n00 + stride, n00 + stride + 1, n00 + 1]), idx


def _assemble(dom, K_ref, dofs_per_node):
    nodes4, _ = dom.cell_nodes()
    ncell = nodes4.shape[1]
    nn = (dom.n + 1) ** 2
    if dofs_per_node == 1:
        loc = nodes4
    else:
        loc = np.vstack([nodes4, nodes4 + nn])
    k = loc.shape[0]
    rows = np.repeat(loc, k, axis=0).reshape(k, k, ncell)
    cols = np.tile(loc, (k, 1)).reshape(k, k, ncell)
    vals = np.broadcast_to(K_ref[:, :, None], (k, k, ncell))
    K = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(dofs_per_node * nn, dofs_per_node * nn)).tocsr()
    used = np.unique(loc.ravel() % nn)
    return K, used


def _deflated_cg(K, b, basis, rtol=1e-12, maxiter=20000, precond=None):
    """CG on a consistent semidefinite system with the kernel basis projected
    out of the right-hand side and of every iterate."""
    if basis is not None:
        Q, _ = np.linalg.qr(basis)

        def project(x):
            return x - Q @ (Q.T @ x)
    else:
        def project(x):
            return x

    b = project(b)
    A = spla.LinearOperator(K.shape, matvec=lambda x: project(K @ project(x)),
                            dtype=float)
    M = None
    if precond is not None:
        M = spla.LinearOperator(K.shape,
                                matvec=lambda x: project(precond(project(x))),
                                dtype=float)
    try:
        x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    except TypeError:  # older scipy signature
        x, info = spla.cg(A, b, tol=rtol, atol=0.0, maxiter=maxiter, M=M)
    if info != 0:
        raise PdeNotConverged(f"CG stopped with info={info}")
    return project(x), float(np.max(np.abs(K @ x - b)))


def _amg_preconditioner(K, near_null=None):
    try:
        import pyamg
    except ImportError:
        return None
    try:
        ml = pyamg.smoothed_aggregation_solver(K.tocsr(), B=near_null,
                                               max_coarse=200)
        return ml.aspreconditioner(cycle="V").matvec
    except Exception:
        return None


@dataclass
class ScalarGridField:
    """Harmonic potential with prescribed staircase Neumann fluxes."""
    n: int
    u: np.ndarray                   # nodal, (n+1)^2
    grad: np.ndarray                # cellwise gradient (n, n, 2); zeros off domain
    lap_residual: float             # max-norm linear residual
    flux_imbalance_raw: float       # before the uniform compatibility fix
    energy: float                   # integral of |grad u|^2
    symmetry_defect: float

    @property
    def h(self):
        return 1.0 / self.n


@dataclass
class TensorGridField:
    """Symmetric tensor field s = sym-grad(v) with div s = grad u weakly."""
    n: int
    v: np.ndarray                   # nodal displacements, 2*(n+1)^2
    sigma: np.ndarray               # cellwise (n, n, 2, 2)
    elast_residual: float
    net_force: tuple
    net_torque: float
    energy: float                   # integral of |s|_F^2


def solve_neumann_laplace(dom: CrossSectionDomain, rtol=1e-12):
    n, h = dom.n, dom.h
    K, used = _assemble(dom, _K_LAP_REF, 1)
    nn = (n + 1) ** 2
    b = np.zeros(nn)
    stride = n + 1
    # staircase Neumann data: face between two nodes gets g*h/2 on each
    raw = 0.0
    gamma_faces = []
    for i, j, d, gamma in dom.boundary_faces:
        g = GAMMA_DATA[gamma]
        if d == 0:
            nd = ((i + 1) * stride + j, (i + 1) * stride + j + 1)
        elif d == 1:
            nd = (i * stride + j, i * stride + j + 1)
        elif d == 2:
            nd = (i * stride + j + 1, (i + 1) * stride + j + 1)
        else:
            nd = (i * stride + j, (i + 1) * stride + j)
        if gamma != 0:
            gamma_faces.append((nd, g))
        raw += g * h
    # exact discrete compatibility: spread the raw imbalance uniformly over
    # the disc boundaries
    corr = raw / (len(gamma_faces) * h) if gamma_faces else 0.0
    for nd, g in gamma_faces:
        val = (g - corr) * h / 2.0
        b[nd[0]] += val
        b[nd[1]] += val

    Kuu = K[used][:, used].tocsr()
    bu = b[used]
    ones = np.ones((len(used), 1))
    pre = _amg_preconditioner(Kuu, near_null=ones)
    xu, res = _deflated_cg(Kuu, bu, ones, rtol=rtol, precond=pre)
    u = np.zeros(nn)
    u[used] = xu - xu.mean()

    energy = float(xu @ (Kuu @ xu))
    grad = _cell_gradients(dom, u)
    U = u.reshape(stride, stride)
    sym = float(np.max(np.abs(U - U.T)))
    return ScalarGridField(n=n, u=u, grad=grad, lap_residual=res,
                           flux_imbalance_raw=abs(raw), energy=energy,
                           symmetry_defect=sym)


def _cell_gradients(dom, u_nodal):
    n = dom.n
    stride = n + 1
    U = u_nodal.reshape(stride, stride)
    gx = np.zeros((n, n))
    gy = np.zeros((n, n))
    act = dom.active
    u00 = U[:-1, :-1]
    u10 = U[1:, :-1]
    u11 = U[1:, 1:]
    u01 = U[:-1, 1:]
    gx[act] = ((u10 + u11 - u00 - u01) / (2.0 * dom.h))[act]
    gy[act] = ((u01 + u11 - u00 - u10) / (2.0 * dom.h))[act]
    return np.stack([gx, gy], axis=-1)


def solve_traction_free_divergence(dom: CrossSectionDomain,
                                   scalar: ScalarGridField, rtol=1e-12,
                                   force_tol=1e-9):
    n, h = dom.n, dom.h
    K, used = _assemble(dom, _K_EL_REF, 2)
    nn = (n + 1) ** 2
    stride = n + 1

    # load: - integral grad u . phi, cellwise midpoint (h^2/4 per node)
    F = np.zeros(2 * nn)
    nodes4, idx = dom.cell_nodes()
    gx = scalar.grad[idx[:, 0], idx[:, 1], 0]
    gy = scalar.grad[idx[:, 0], idx[:, 1], 1]
    w = h * h / 4.0
    for k in range(4):
        np.add.at(F, nodes4[k], -gx * w)
        np.add.at(F, nodes4[k] + nn, -gy * w)

    net_force = (float(np.sum(gx) * h * h), float(np.sum(gy) * h * h))
    xs = -0.5 + (idx[:, 0] + 0.5) * h
    ys = -0.5 + (idx[:, 1] + 0.5) * h
    net_torque = float(np.sum(xs * gy - ys * gx) * h * h)
    if max(abs(net_force[0]), abs(net_force[1]), abs(net_torque)) > force_tol:
        raise IncompatibleLoad(
            f"net force {net_force}, torque {net_torque} beyond {force_tol}")

    used2 = np.concatenate([used, used + nn])
    Kuu = K[used2][:, used2].tocsr()
    Fu = F[used2]
    m = len(used)
    X = -0.5 + (used // stride) * h
    Y = -0.5 + (used % stride) * h
    rig = np.zeros((2 * m, 3))
    rig[:m, 0] = 1.0
    rig[m:, 1] = 1.0
    rig[:m, 2] = -Y
    rig[m:, 2] = X
    pre = _amg_preconditioner(Kuu, near_null=rig)
    xu, res = _deflated_cg(Kuu, Fu, rig, rtol=rtol, precond=pre,
                           maxiter=60000)
    v = np.zeros(2 * nn)
    v[used2] = xu
    sigma = _cell_strains(dom, v)
    energy = float(xu @ (Kuu @ xu))
    return TensorGridField(n=n, v=v, sigma=sigma, elast_residual=res,
                           net_force=net_force, net_torque=net_torque,
                           energy=energy)


def _cell_strains(dom, v_nodal):
    n = dom.n
    stride = n + 1
    nn = stride * stride
    VX = v_nodal[:nn].reshape(stride, stride)
    VY = v_nodal[nn:].reshape(stride, stride)

    def grads(U):
        gx = (U[1:, :-1] + U[1:, 1:] - U[:-1, :-1] - U[:-1, 1:]) / (2 * dom.h)
        gy = (U[:-1, 1:] + U[1:, 1:] - U[:-1, :-1] - U[1:, :-1]) / (2 * dom.h)
        return gx, gy

    dxvx, dyvx = grads(VX)
    dxvy, dyvy = grads(VY)
    sig = np.zeros((n, n, 2, 2))
    act = dom.active
    sig[act, 0, 0] = dxvx[act]
    sig[act, 1, 1] = dyvy[act]
    exy = 0.5 * (dyvx + dxvy)
    sig[act, 0, 1] = exy[act]
    sig[act, 1, 0] = exy[act]
    return sig


@dataclass
class ShearSolution:
    """Bundle of both cross-section solves plus evaluators and tolerances."""
    dom: CrossSectionDomain
    scalar: ScalarGridField
    tensor: TensorGridField
    pointwise_bc_indicator: float = field(default=0.0)

    def __post_init__(self):
        self.pointwise_bc_indicator = self._pointwise_indicator()

    @property
    def h(self):
        return self.dom.h

    @property
    def linear_tolerance(self):
        return max(self.scalar.lap_residual, self.tensor.elast_residual)

    def _pointwise_indicator(self):
        """Max pointwise boundary-condition violation on the staircase: the
        tensor traction |sigma . n| and the scalar flux gap |du/dn - g|,
        evaluated from the reconstructed cell fields.  This measures the
        staircase discretization error and scales the cell-level pointwise
        interface tolerances."""
        worst = 0.0
        normals = {0: (1, 0), 1: (-1, 0), 2: (0, 1), 3: (0, -1)}
        for i, j, d, gamma in self.dom.boundary_faces:
            nx, ny = normals[d]
            g = GAMMA_DATA[gamma]
            gu = self.scalar.grad[i, j]
            worst = max(worst, abs(gu[0] * nx + gu[1] * ny - g))
            s = self.tensor.sigma[i, j]
            t = s @ np.array([nx, ny], float)
            worst = max(worst, float(np.linalg.norm(t)))
        return worst

    def _locate(self, pts):
        n = self.dom.n
        ij = np.floor((np.atleast_2d(pts) + 0.5) * n).astype(int)
        ij = np.clip(ij, 0, n - 1)
        return ij

    def grad_u_at(self, pts):
        """Cellwise gradient of u at cross-section points in (-1/2,1/2)^2;
        zero inside the discs (void)."""
        ij = self._locate(pts)
        return self.scalar.grad[ij[:, 0], ij[:, 1]]

    def sigma_at(self, pts):
        ij = self._locate(pts)
        return self.tensor.sigma[ij[:, 0], ij[:, 1]]

    def dump_csv(self, prefix):
        n = self.dom.n
        np.savetxt(f"{prefix}_u.csv",
                   self.scalar.u.reshape(n + 1, n + 1), delimiter=",")
        for tag, comp in (("sxx", (0, 0)), ("syy", (1, 1)), ("sxy", (0, 1))):
            np.savetxt(f"{prefix}_{tag}.csv",
                       self.tensor.sigma[:, :, comp[0], comp[1]],
                       delimiter=",")


@functools.lru_cache(maxsize=4)
def get_shear_solution(n=256):
    """Cached cross-section solve at resolution n (h = 1/n)."""
    dom = CrossSectionDomain(n)
    scalar = solve_neumann_laplace(dom)
    tensor = solve_traction_free_divergence(dom, scalar)
    return ShearSolution(dom=dom, scalar=scalar, tensor=tensor)
