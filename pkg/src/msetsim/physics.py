"""Discrete drift-diffusion physics on a finite-volume mesh.

Internally the electrostatic potential is scaled by the thermal voltage and
carrier densities by the intrinsic density; the public API stays in volts,
cm^-3 and amperes.  Carrier fluxes use the Scharfetter-Gummel exponential
fitting with the Bernoulli weight B(x) = x / (e^x - 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .constants import EPS_0, Q_E

ELECTRON = "electron"
HOLE = "hole"

_B_SWITCH = 1e-2


class BiasError(KeyError):
    pass


def bernoulli(x):
    """Scharfetter-Gummel weight B(x) = x/(e^x - 1).

    Series expansion below |x| = 1e-2, x/expm1(x) otherwise; relative error
    is below 1e-12 everywhere.  Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _B_SWITCH
    xs = np.where(small, x, 0.0)
    series = 1.0 - xs / 2.0 + xs * xs / 12.0 - xs**4 / 720.0 + xs**6 / 30240.0
    with np.errstate(over="ignore", invalid="ignore"):
        closed = np.where(small, 1.0, x) / np.expm1(np.where(small, 1.0, x))
    out = np.where(small, series, closed)
    # guard overflow of e^x for very large x: B -> 0 / B -> -x
    big = x > 700.0
    out = np.where(big, 0.0, out)
    out = np.where(x < -700.0, -x, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def _bernoulli_sym(x):
    """x / (2 sinh(x/2)) = B(x) e^{x/2}; even in x, used for symmetric
    Slotboom edge weights."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < 1e-4
    xs = np.where(small, x, 0.0)
    series = 1.0 - xs * xs / 24.0
    with np.errstate(over="ignore", invalid="ignore"):
        closed = np.where(small, 1.0, x) / (2.0 * np.sinh(np.where(small, 0.5, x) / 2.0))
    out = np.where(small, series, closed)
    return np.where(ax > 1400.0, 0.0, out)


def ohmic_contact_values(net_doping, material):
    """Charge-neutral equilibrium values behind an ohmic contact.

    Returns (psi_offset [V], n [cm^-3], p [cm^-3]) with n - p = net_doping
    and n * p = n_i^2.
    """
    ni = material.n_i
    half = np.asarray(net_doping, dtype=float) / (2.0 * ni)
    # evaluate the majority carrier first to avoid cancellation
    major = np.abs(half) + np.hypot(half, 1.0)
    n_scaled = np.where(half >= 0, major, 1.0 / major)
    p_scaled = np.where(half >= 0, 1.0 / major, major)
    psi_offset = material.thermal_voltage * np.arcsinh(half)
    if np.ndim(net_doping) == 0:
        return float(psi_offset), float(ni * n_scaled), float(ni * p_scaled)
    return psi_offset, ni * n_scaled, ni * p_scaled


@dataclass
class FieldState:
    """Nodal potential and carrier densities.

    Insulator nodes carry psi only (n = p = 0 by convention).  The state is
    owned and mutated by exactly one solver at a time.
    """

    psi: np.ndarray               # V
    n: np.ndarray                 # cm^-3
    p: np.ndarray                 # cm^-3
    thermal_voltage: float
    n_i: float

    def copy(self):
        return FieldState(self.psi.copy(), self.n.copy(), self.p.copy(),
                          self.thermal_voltage, self.n_i)

    @property
    def phi_n(self):
        """Electron quasi-Fermi potential (V); NaN where no carriers live."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.n > 0,
                            self.psi - self.thermal_voltage * np.log(self.n / self.n_i),
                            np.nan)

    @property
    def phi_p(self):
        """Hole quasi-Fermi potential (V); NaN where no carriers live."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.p > 0,
                            self.psi + self.thermal_voltage * np.log(self.p / self.n_i),
                            np.nan)


@dataclass
class LinearSystem:
    """Sparse system in coordinate form with coalesced (row, col) entries."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray
    n: int
    ordering: str = ""

    @classmethod
    def from_coo(cls, rows, cols, vals, rhs, ordering=""):
        n = len(rhs)
        m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        coo = m.tocoo()
        return cls(coo.row.copy(), coo.col.copy(), coo.data.copy(),
                   np.asarray(rhs, dtype=float), n, ordering)

    def matrix(self):
        return sp.csc_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))


# ---------------------------------------------------------------------------
# per-mesh assembly scratch

class _Assembly:
    def __init__(self, mesh):
        mat = mesh.material
        self.vt = mat.thermal_voltage
        self.ni = mat.n_i
        # scaled Poisson charge factor: q n_i (1 um)^2 / (eps0 VT), lengths in um
        self.alpha = Q_E * (mat.n_i * 1e6) * 1e-12 / (EPS_0 * self.vt)
        act = mesh.edge_face_sem > 0.0
        self.ei = mesh.edge_i[act]
        self.ej = mesh.edge_j[act]
        self.c_geo = (mesh.edge_face_sem[act] / mesh.edge_h[act])
        # dielectric operator K: off-diagonals -face_eps/h, diagonal row sums
        k = mesh.edge_face_eps / mesh.edge_h
        i, j = mesh.edge_i, mesh.edge_j
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([-k, -k, k, k])
        self.K = sp.csr_matrix((vals, (rows, cols)),
                               shape=(mesh.n_nodes, mesh.n_nodes))
        self.K.sum_duplicates()

        self.contact_all = np.unique(np.concatenate(list(mesh.contact_nodes.values())))
        interior = np.ones(mesh.n_nodes, dtype=bool)
        interior[self.contact_all] = False
        self.is_interior = interior

        # K with contact rows replaced by identity (Jacobian static part)
        kc = self.K.tocoo()
        keep = interior[kc.row]
        rows = np.concatenate([kc.row[keep], self.contact_all])
        cols = np.concatenate([kc.col[keep], self.contact_all])
        vals = np.concatenate([kc.data[keep], np.ones(len(self.contact_all))])
        self.K_bc = sp.csr_matrix((vals, (rows, cols)),
                                  shape=(mesh.n_nodes, mesh.n_nodes)).tocsc()

        # per-contact Dirichlet data
        self.contact_offset = {}      # name -> psi offsets (scaled by VT)
        self.contact_n = {}           # name -> scaled ohmic carrier values
        self.contact_p = {}
        for name, nodes in mesh.contact_nodes.items():
            off, n, p = ohmic_contact_values(mesh.node_doping[nodes], mat)
            self.contact_offset[name] = off / self.vt
            self.contact_n[name] = n / self.ni
            self.contact_p[name] = p / self.ni

        # carrier nodes without a path to any contact: pinned to equilibrium
        adj = sp.coo_matrix(
            (np.ones(len(self.ei)), (self.ei, self.ej)),
            shape=(mesh.n_nodes, mesh.n_nodes))
        ncomp, labels = connected_components(adj, directed=False)
        contact_labels = set(labels[self.contact_all])
        semi = mesh.node_is_semi
        pinned = np.where(semi & ~np.isin(labels, sorted(contact_labels)))[0]
        # nodes with no carrier edge at all land in singleton components;
        # only flag genuinely semiconductor ones
        self.pinned_nodes = pinned
        if len(pinned):
            warnings.warn(
                f"{len(pinned)} semiconductor node(s) have no conductive path to a "
                f"contact; their carriers are pinned to equilibrium values",
                stacklevel=3)

        self.mesh = mesh
        self._contact_edges = {}

    def contact_edge_view(self, name):
        """Edges crossing a contact: (edge subset indices, sign of i-in-contact)."""
        if name not in self._contact_edges:
            nodes = self.mesh.contact_nodes[name]
            inset = np.zeros(self.mesh.n_nodes, dtype=bool)
            inset[nodes] = True
            sel_i = inset[self.ei] & ~inset[self.ej]
            sel_j = inset[self.ej] & ~inset[self.ei]
            idx = np.concatenate([np.where(sel_i)[0], np.where(sel_j)[0]])
            sign = np.concatenate([np.ones(sel_i.sum()), -np.ones(sel_j.sum())])
            self._contact_edges[name] = (idx, sign)
        return self._contact_edges[name]

    def dirichlet_u(self, bias):
        """Scaled potential boundary values over contact_all, given a bias."""
        u_bc = np.zeros(self.mesh.n_nodes)
        for name, nodes in self.mesh.contact_nodes.items():
            u_bc[nodes] = bias[name] / self.vt + self.contact_offset[name]
        return u_bc[self.contact_all]


def assembly(mesh):
    if "assembly" not in mesh._cache:
        mesh._cache["assembly"] = _Assembly(mesh)
    return mesh._cache["assembly"]


def check_bias(mesh, bias):
    """Raise BiasError unless the bias names exactly the device contacts."""
    have = set(bias)
    want = set(mesh.contact_nodes)
    missing = want - have
    if missing:
        raise BiasError(f"bias missing contact(s): {sorted(missing)}")
    extra = have - want
    if extra:
        raise BiasError(f"bias names unknown contact(s): {sorted(extra)}")


def equilibrium_init(mesh, material=None):
    """Charge-neutral starting state: psi at the local neutral level on
    semiconductor nodes (neighbor-averaged across insulators), carriers at
    Boltzmann values with zero quasi-Fermi potentials."""
    mat = material or mesh.material
    vt = mat.thermal_voltage
    semi = mesh.node_is_semi
    u = np.where(semi, np.arcsinh(mesh.node_doping / (2.0 * mat.n_i)), np.nan)

    # fill insulator nodes by repeated neighbor averaging
    ei, ej = mesh.edge_i, mesh.edge_j
    while np.isnan(u).any():
        acc = np.zeros_like(u)
        cnt = np.zeros_like(u)
        known = ~np.isnan(u)
        m = known[ei] & ~known[ej]
        np.add.at(acc, ej[m], u[ei[m]])
        np.add.at(cnt, ej[m], 1.0)
        m = known[ej] & ~known[ei]
        np.add.at(acc, ei[m], u[ej[m]])
        np.add.at(cnt, ei[m], 1.0)
        fill = (~known) & (cnt > 0)
        if not fill.any():
            u[~known] = 0.0
            break
        u[fill] = acc[fill] / cnt[fill]

    n = np.where(semi, mat.n_i * np.exp(np.where(semi, u, 0.0)), 0.0)
    p = np.where(semi, mat.n_i * np.exp(-np.where(semi, u, 0.0)), 0.0)
    return FieldState(psi=u * vt, n=n, p=p, thermal_voltage=vt, n_i=mat.n_i)


def poisson_residual(mesh, state, bias):
    """Scaled nonlinear Poisson residual (dimensionless charge units)."""
    check_bias(mesh, bias)
    asm = assembly(mesh)
    u = state.psi / asm.vt
    charge = asm.alpha * mesh.sem_areas * (
        state.p / asm.ni - state.n / asm.ni + mesh.node_doping / asm.ni)
    f = asm.K @ u - charge
    f[asm.contact_all] = u[asm.contact_all] - asm.dirichlet_u(bias)
    return f


def assemble_poisson(mesh, state, bias):
    """Linearized Poisson system: Jacobian and right-hand side -F(psi).

    Carriers enter the Jacobian as Boltzmann functions of psi at frozen
    quasi-Fermi potentials; contact rows are Dirichlet at the applied bias
    plus the ohmic offset; insulator rows are purely dielectric.  Unknowns
    are potential updates in thermal-voltage units.
    """
    asm = assembly(mesh)
    f = poisson_residual(mesh, state, bias)
    dq = asm.alpha * mesh.sem_areas * (state.n + state.p) / asm.ni
    dq[asm.contact_all] = 0.0
    jac = asm.K_bc + sp.diags(dq)
    coo = jac.tocoo()
    return LinearSystem.from_coo(
        coo.row, coo.col, coo.data, -f,
        ordering="delta psi in kT/q units, node index = ix*ny + iy")


def _edge_delta(mesh, u):
    asm = assembly(mesh)
    return u[asm.ej] - u[asm.ei]


def assemble_continuity(mesh, state, carrier, bias):
    """Linear continuity system for one carrier at the current potential.

    Scharfetter-Gummel fluxes on semiconductor edges, natural zero flux at
    insulator interfaces and outer boundaries, Dirichlet ohmic values at
    contacts.  Unknowns are densities in units of the intrinsic density.
    """
    if carrier not in (ELECTRON, HOLE):
        raise ValueError(f"carrier must be {ELECTRON!r} or {HOLE!r}")
    check_bias(mesh, bias)
    asm = assembly(mesh)
    u = state.psi / asm.vt
    delta = _edge_delta(mesh, u)
    if carrier == HOLE:
        delta = -delta
    mu = mesh.material.mu_n if carrier == ELECTRON else mesh.material.mu_p
    c = asm.c_geo * mu * asm.vt
    b_fwd = c * bernoulli(delta)        # couples to the far node
    b_bwd = c * bernoulli(-delta)       # couples to the own node

    n_nodes = mesh.n_nodes
    fixed = np.zeros(n_nodes, dtype=bool)
    fixed[asm.contact_all] = True
    fixed[asm.pinned_nodes] = True
    fixed[~mesh.node_is_semi] = True

    free_i = ~fixed[asm.ei]
    free_j = ~fixed[asm.ej]
    rows = np.concatenate([asm.ei[free_i], asm.ei[free_i],
                           asm.ej[free_j], asm.ej[free_j]])
    cols = np.concatenate([asm.ei[free_i], asm.ej[free_i],
                           asm.ej[free_j], asm.ei[free_j]])
    vals = np.concatenate([b_bwd[free_i], -b_fwd[free_i],
                           b_fwd[free_j], -b_bwd[free_j]])
    rows = np.concatenate([rows, np.where(fixed)[0]])
    cols = np.concatenate([cols, np.where(fixed)[0]])
    vals = np.concatenate([vals, np.ones(int(fixed.sum()))])

    rhs = np.zeros(n_nodes)
    values = asm.contact_n if carrier == ELECTRON else asm.contact_p
    for name, nodes in mesh.contact_nodes.items():
        rhs[nodes] = values[name]
    if len(asm.pinned_nodes):
        eq = np.arcsinh(mesh.node_doping[asm.pinned_nodes] / (2.0 * asm.ni))
        rhs[asm.pinned_nodes] = np.exp(eq if carrier == ELECTRON else -eq)

    return LinearSystem.from_coo(
        rows, cols, vals, rhs,
        ordering=f"{carrier} density in units of n_i, node index = ix*ny + iy")


def carrier_w_system(mesh, u, carrier, bias):
    """Symmetric Slotboom form of the continuity system, condensed to the
    free (non-Dirichlet) nodes.

    The unknown is w = n e^{-u} (electrons) or w = p e^{+u} (holes), which
    makes the operator a weighted graph Laplacian and keeps relative accuracy
    in depleted regions.  Dirichlet nodes are eliminated: their known values
    move to the right-hand side, so contact densities are exact by
    construction.  Returns (matrix, rhs, free_index, w_full, exp_factor):
    solve matrix @ w_free = rhs, scatter into w_full at free_index, and the
    carrier density in n_i units is w_full * exp_factor.
    """
    asm = assembly(mesh)
    delta = _edge_delta(mesh, u)
    sgn = 1.0 if carrier == ELECTRON else -1.0
    mu = mesh.material.mu_n if carrier == ELECTRON else mesh.material.mu_p
    ubar = 0.5 * sgn * (u[asm.ei] + u[asm.ej])
    with np.errstate(over="ignore"):
        g = asm.c_geo * mu * asm.vt * _bernoulli_sym(delta) * np.exp(ubar)
    g = np.where(np.isfinite(g), g, 0.0)

    n_nodes = mesh.n_nodes
    fixed = np.zeros(n_nodes, dtype=bool)
    fixed[asm.contact_all] = True
    fixed[asm.pinned_nodes] = True
    fixed[~mesh.node_is_semi] = True

    w_full = np.zeros(n_nodes)
    for name, nodes in mesh.contact_nodes.items():
        w_full[nodes] = np.exp(-sgn * bias[name] / asm.vt)
    if len(asm.pinned_nodes):
        w_full[asm.pinned_nodes] = 1.0

    free_index = np.where(~fixed)[0]
    renum = np.full(n_nodes, -1, dtype=np.int64)
    renum[free_index] = np.arange(len(free_index))

    fi, fj = fixed[asm.ei], fixed[asm.ej]
    both_free = ~fi & ~fj
    rows = np.concatenate([renum[asm.ei[both_free]], renum[asm.ej[both_free]],
                           renum[asm.ei[both_free]], renum[asm.ej[both_free]]])
    cols = np.concatenate([renum[asm.ej[both_free]], renum[asm.ei[both_free]],
                           renum[asm.ei[both_free]], renum[asm.ej[both_free]]])
    gb = g[both_free]
    vals = np.concatenate([-gb, -gb, gb, gb])

    rhs = np.zeros(len(free_index))
    # edges from a free node to a fixed one: diagonal + rhs contribution
    mixed_i = ~fi & fj
    rows = np.concatenate([rows, renum[asm.ei[mixed_i]]])
    cols = np.concatenate([cols, renum[asm.ei[mixed_i]]])
    vals = np.concatenate([vals, g[mixed_i]])
    np.add.at(rhs, renum[asm.ei[mixed_i]], g[mixed_i] * w_full[asm.ej[mixed_i]])
    mixed_j = fi & ~fj
    rows = np.concatenate([rows, renum[asm.ej[mixed_j]]])
    cols = np.concatenate([cols, renum[asm.ej[mixed_j]]])
    vals = np.concatenate([vals, g[mixed_j]])
    np.add.at(rhs, renum[asm.ej[mixed_j]], g[mixed_j] * w_full[asm.ei[mixed_j]])

    nf = len(free_index)
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(nf, nf))
    mat.sum_duplicates()
    # free nodes with no neighbors at all (fully insulated): pin to w=1
    zero_diag = np.where(mat.diagonal() == 0.0)[0]
    if len(zero_diag):
        fix = sp.csc_matrix((np.ones(len(zero_diag)), (zero_diag, zero_diag)),
                            shape=(nf, nf))
        mat = mat + fix
        rhs[zero_diag] = 1.0
    with np.errstate(over="ignore"):
        exp_factor = np.where(mesh.node_is_semi, np.exp(sgn * u), 0.0)
    return mat, rhs, free_index, w_full, exp_factor


def edge_currents(mesh, state):
    """Electron and hole currents (A) on every semiconductor edge, positive
    from edge node i to edge node j.  Evaluated in a cancellation-resistant
    form so equilibrium currents vanish to rounding noise."""
    asm = assembly(mesh)
    mat = mesh.material
    u = state.psi / asm.vt
    nn = (state.n / asm.ni).astype(np.longdouble)
    pp = (state.p / asm.ni).astype(np.longdouble)
    delta = _edge_delta(mesh, u).astype(np.longdouble)
    b = bernoulli(np.asarray(delta, dtype=float)).astype(np.longdouble)
    depth_cm = mesh.depth * 1e-4
    pref = Q_E * asm.vt * asm.ni * depth_cm * asm.c_geo.astype(np.longdouble)
    # I_n(i->j) = pref mu_n [B(d)(n_j - n_i) - d n_i]
    i_n = pref * mat.mu_n * (b * (nn[asm.ej] - nn[asm.ei]) - delta * nn[asm.ei])
    # I_p(i->j) = pref mu_p [B(d)(p_i - p_j) - d p_j]
    i_p = pref * mat.mu_p * (b * (pp[asm.ei] - pp[asm.ej]) - delta * pp[asm.ej])
    return i_n, i_p


def compute_terminal_current(mesh, state, contact, material=None, depth=None):
    """Signed terminal current in amperes, positive flowing out of the
    contact into the device."""
    if contact not in mesh.contact_nodes:
        raise KeyError(f"unknown contact {contact!r}")
    if material is not None and material is not mesh.material:
        raise ValueError("material override must match the mesh material")
    asm = assembly(mesh)
    i_n, i_p = edge_currents(mesh, state)
    idx, sign = asm.contact_edge_view(contact)
    total = np.sum(sign * (i_n[idx] + i_p[idx]), dtype=np.longdouble)
    if depth is not None and depth != mesh.depth:
        total *= depth / mesh.depth
    return float(total)
