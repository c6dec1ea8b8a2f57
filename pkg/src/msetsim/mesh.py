"""Structured tensor-product finite-volume mesh generation.

Grid lines always include every region boundary; spacing is graded finer
(by ``refine_factor``) within one zero-bias depletion width of every
metallurgical (doping sign change) junction line.  Control volumes are the
usual vertex-centered boxes clipped to the device rectangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .device import INSULATOR, SEMICONDUCTOR, zero_bias_depletion_width


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class MeshResolution:
    """Target bulk cell counts per axis plus the junction refinement factor."""

    nx: int = 28
    ny: int = 24
    refine_factor: int = 4

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least 2 cells per axis")
        if self.refine_factor < 1:
            raise ValueError("refine_factor must be >= 1")


class Mesh:
    """Tensor-product mesh with per-node and per-edge assembly data.

    Nodes are indexed ``ix * ny + iy``.  Edge arrays hold, for every pair of
    adjacent nodes: the edge length ``h`` (um), the total interface length of
    the shared control-volume face, the semiconductor-only part of that face
    and the permittivity-weighted face (sum of eps_r times the half-face in
    each adjacent cell).
    """

    def __init__(self, spec, x_lines, y_lines, node_region, node_doping,
                 node_is_semi, control_volumes, sem_areas,
                 edge_i, edge_j, edge_h, edge_face, edge_face_sem,
                 edge_face_eps, contact_nodes):
        self.spec = spec
        self.x_lines = x_lines
        self.y_lines = y_lines
        self.nx = len(x_lines)
        self.ny = len(y_lines)
        self.n_nodes = self.nx * self.ny
        self.node_region = node_region        # region index per node
        self.node_doping = node_doping        # cm^-3
        self.node_is_semi = node_is_semi
        self.control_volumes = control_volumes  # um^2, full box
        self.sem_areas = sem_areas              # um^2, semiconductor part
        self.edge_i = edge_i
        self.edge_j = edge_j
        self.edge_h = edge_h
        self.edge_face = edge_face
        self.edge_face_sem = edge_face_sem
        self.edge_face_eps = edge_face_eps
        self.contact_nodes = contact_nodes    # name -> node index array
        self._cache = {}

    @property
    def material(self):
        return self.spec.material

    @property
    def depth(self):
        return self.spec.depth

    def node_xy(self, idx):
        return self.x_lines[idx // self.ny], self.y_lines[idx % self.ny]

    @property
    def node_x(self):
        return np.repeat(self.x_lines, self.ny)

    @property
    def node_y(self):
        return np.tile(self.y_lines, self.nx)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}      # per-process assembly scratch, rebuilt lazily
        return state


def _junction_bands(spec):
    """Refinement bands around doping sign changes: ([x bands], [y bands])."""
    xb, yb = [], []
    semis = [r for r in spec.regions if r.kind == SEMICONDUCTOR]
    for a in semis:
        for b in semis:
            if a is b or a.net_doping * b.net_doping >= 0.0:
                continue
            light = min(abs(a.net_doping), abs(b.net_doping))
            heavy = max(abs(a.net_doping), abs(b.net_doping))
            w = zero_bias_depletion_width(light, heavy, spec.material)
            # shared vertical edge
            if abs(a.x1 - b.x0) < 1e-12 and min(a.y1, b.y1) - max(a.y0, b.y0) > 1e-12:
                xb.append((a.x1 - w, a.x1 + w))
            # shared horizontal edge
            if abs(a.y1 - b.y0) < 1e-12 and min(a.x1, b.x1) - max(a.x0, b.x0) > 1e-12:
                yb.append((a.y1 - w, a.y1 + w))
    return xb, yb


def _axis_lines(lo, hi, features, bands, n_bulk, refine_factor):
    """Grid coordinates: feature lines plus graded subdivision."""
    h_bulk = (hi - lo) / n_bulk
    pts = set()
    for f in features:
        pts.add(min(max(f, lo), hi))
    for b0, b1 in bands:
        if b1 > lo and b0 < hi:
            pts.add(max(b0, lo))
            pts.add(min(b1, hi))
    pts.update((lo, hi))
    breaks = sorted(pts)
    # collapse nearly coincident break points
    merged = [breaks[0]]
    for p in breaks[1:]:
        if p - merged[-1] > 1e-9:
            merged.append(p)
    lines = [merged[0]]
    for a, b in zip(merged[:-1], merged[1:]):
        mid = 0.5 * (a + b)
        fine = any(b0 - 1e-12 <= mid <= b1 + 1e-12 for b0, b1 in bands)
        h = h_bulk / (refine_factor if fine else 1)
        ncell = max(1, math.ceil((b - a) / h - 1e-9))
        lines.extend(np.linspace(a, b, ncell + 1)[1:].tolist())
    return np.asarray(lines)


def generate_mesh(spec, resolution=None):
    """Build the finite-volume mesh for a valid DeviceSpec.

    Raises MeshError if the nominal bulk cell is wider than some region
    (the region would not be resolved by the requested target counts).
    """
    res = resolution or MeshResolution()
    x0, x1, y0, y1 = spec.bounds
    hx = (x1 - x0) / res.nx
    hy = (y1 - y0) / res.ny
    for r in spec.regions:
        if r.width < hx - 1e-12 or r.height < hy - 1e-12:
            raise MeshError(
                f"region {r.name!r} ({r.width:.4g} x {r.height:.4g} um) is narrower "
                f"than one bulk cell ({hx:.4g} x {hy:.4g} um); increase nx/ny")

    xb, yb = _junction_bands(spec)
    x_feat = sorted({r.x0 for r in spec.regions} | {r.x1 for r in spec.regions})
    y_feat = sorted({r.y0 for r in spec.regions} | {r.y1 for r in spec.regions})
    for c in spec.contacts:
        if c.side in ("bottom", "top"):
            x_feat.extend(c.span)
        else:
            y_feat.extend(c.span)

    xl = _axis_lines(x0, x1, x_feat, xb, res.nx, res.refine_factor)
    yl = _axis_lines(y0, y1, y_feat, yb, res.ny, res.refine_factor)

    nx, ny = len(xl), len(yl)
    dx = np.diff(xl)
    dy = np.diff(yl)

    # cell -> region (cells are homogeneous: all region edges are grid lines)
    cxc = 0.5 * (xl[:-1] + xl[1:])
    cyc = 0.5 * (yl[:-1] + yl[1:])
    cell_region = np.full((nx - 1, ny - 1), -1, dtype=np.int32)
    for ri, r in enumerate(spec.regions):
        mx = (cxc > r.x0) & (cxc < r.x1)
        my = (cyc > r.y0) & (cyc < r.y1)
        cell_region[np.ix_(mx, my)] = ri
    if np.any(cell_region < 0):
        raise MeshError("cells not covered by any region; validate the spec first")

    kinds = np.array([r.kind == SEMICONDUCTOR for r in spec.regions])
    eps_r = np.array([spec.material.epsilon_r_semiconductor if k
                      else spec.material.epsilon_r_insulator for k in kinds])
    cell_semi = kinds[cell_region]
    cell_eps = eps_r[cell_region]

    # node -> owning region: semiconductor regions take precedence on shared
    # boundaries so junction/contact nodes keep their doping
    node_region = np.full((nx, ny), -1, dtype=np.int32)
    gx, gy = np.meshgrid(xl, yl, indexing="ij")
    order = [i for i, k in enumerate(kinds) if k] + [i for i, k in enumerate(kinds) if not k]
    for ri in order:
        r = spec.regions[ri]
        m = (node_region < 0) & (gx >= r.x0 - 1e-12) & (gx <= r.x1 + 1e-12) \
            & (gy >= r.y0 - 1e-12) & (gy <= r.y1 + 1e-12)
        node_region[m] = ri
    dopings = np.array([r.net_doping for r in spec.regions])
    node_doping = dopings[node_region].reshape(-1)
    node_is_semi = kinds[node_region].reshape(-1)
    node_region = node_region.reshape(-1)

    # control volumes (um^2) and their semiconductor part
    wx = np.zeros(nx)
    wx[:-1] += dx / 2.0
    wx[1:] += dx / 2.0
    wy = np.zeros(ny)
    wy[:-1] += dy / 2.0
    wy[1:] += dy / 2.0
    control_volumes = np.outer(wx, wy).reshape(-1)

    quarter = np.zeros((nx, ny))
    qa = np.outer(dx / 2.0, dy / 2.0) * cell_semi   # per-cell quarter area
    quarter[:-1, :-1] += qa
    quarter[1:, :-1] += qa
    quarter[:-1, 1:] += qa
    quarter[1:, 1:] += qa
    sem_areas = quarter.reshape(-1)

    # x-direction edges: (ix,iy)-(ix+1,iy), faces from the two adjacent cells
    def build_edges(axis):
        if axis == 0:
            i0 = (np.arange(nx - 1)[:, None] * ny + np.arange(ny)[None, :])
            jj = i0 + ny
            h = np.broadcast_to(dx[:, None], (nx - 1, ny))
            half_lo = np.zeros((nx - 1, ny))
            half_hi = np.zeros((nx - 1, ny))
            sem_lo = np.zeros((nx - 1, ny), dtype=bool)
            sem_hi = np.zeros((nx - 1, ny), dtype=bool)
            eps_lo = np.zeros((nx - 1, ny))
            eps_hi = np.zeros((nx - 1, ny))
            half_lo[:, 1:] = dy[None, :] / 2.0
            half_hi[:, :-1] = dy[None, :] / 2.0
            sem_lo[:, 1:] = cell_semi
            sem_hi[:, :-1] = cell_semi
            eps_lo[:, 1:] = cell_eps
            eps_hi[:, :-1] = cell_eps
        else:
            i0 = (np.arange(nx)[:, None] * ny + np.arange(ny - 1)[None, :])
            jj = i0 + 1
            h = np.broadcast_to(dy[None, :], (nx, ny - 1))
            half_lo = np.zeros((nx, ny - 1))
            half_hi = np.zeros((nx, ny - 1))
            sem_lo = np.zeros((nx, ny - 1), dtype=bool)
            sem_hi = np.zeros((nx, ny - 1), dtype=bool)
            eps_lo = np.zeros((nx, ny - 1))
            eps_hi = np.zeros((nx, ny - 1))
            half_lo[1:, :] = dx[:, None] / 2.0
            half_hi[:-1, :] = dx[:, None] / 2.0
            sem_lo[1:, :] = cell_semi
            sem_hi[:-1, :] = cell_semi
            eps_lo[1:, :] = cell_eps
            eps_hi[:-1, :] = cell_eps
        face = half_lo + half_hi
        face_sem = half_lo * sem_lo + half_hi * sem_hi
        face_eps = half_lo * eps_lo + half_hi * eps_hi
        return (i0.ravel(), jj.ravel(), h.ravel(), face.ravel(),
                face_sem.ravel(), face_eps.ravel())

    ex = build_edges(0)
    ey = build_edges(1)
    edge_i = np.concatenate([ex[0], ey[0]]).astype(np.int64)
    edge_j = np.concatenate([ex[1], ey[1]]).astype(np.int64)
    edge_h = np.concatenate([ex[2], ey[2]])
    edge_face = np.concatenate([ex[3], ey[3]])
    edge_face_sem = np.concatenate([ex[4], ey[4]])
    edge_face_eps = np.concatenate([ex[5], ey[5]])

    # contact nodes: on the named boundary within the span and owned by the
    # one region the contact touches (corner nodes owned by a neighboring
    # region are excluded, otherwise a junction-corner node would act as an
    # ohmic injector with the wrong doping)
    contact_nodes = {}
    for c in spec.contacts:
        lo, hi = c.span
        mid = 0.5 * (lo + hi)
        if c.side in ("bottom", "top"):
            iy = 0 if c.side == "bottom" else ny - 1
            sel = np.where((xl >= lo - 1e-9) & (xl <= hi + 1e-9))[0]
            nodes = sel * ny + iy
        else:
            ix = 0 if c.side == "left" else nx - 1
            sel = np.where((yl >= lo - 1e-9) & (yl <= hi + 1e-9))[0]
            nodes = ix * ny + sel
        edge_pos = {"bottom": y0, "top": y1, "left": x0, "right": x1}[c.side]
        probe = (mid, edge_pos) if c.side in ("bottom", "top") else (edge_pos, mid)
        owner = next((ri for ri, r in enumerate(spec.regions)
                      if kinds[ri] and r.contains(*probe)), -1)
        nodes = nodes[node_region[nodes] == owner]
        if len(nodes) == 0:
            raise MeshError(f"contact {c.name!r} maps to no semiconductor node")
        contact_nodes[c.name] = nodes.astype(np.int64)

    return Mesh(spec, xl, yl, node_region, node_doping, node_is_semi,
                control_volumes, sem_areas, edge_i, edge_j, edge_h,
                edge_face, edge_face_sem, edge_face_eps, contact_nodes)
