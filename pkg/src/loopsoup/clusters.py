"""Loop-soup clusters, the attached filling, and the exploration process.

All set operations here run on a shared pitch-h grid. Two loops are chained
when their rasterized cell sets come within one cell of each other (Chebyshev
adjacency); a loop touches a region under the same rule. Sub-pitch gaps are
rasterization artifacts. Using one touch predicate for clustering, attachment
and exploration is what makes the exploration limit equal the attached
filling bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import planar
from .bloop import Estimate, HitsBoth, LoopSoup, mass_estimate
from .planar import GridRegion, MarkedDomain

_ADJ8 = np.ones((3, 3), bool)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:
            p[i], i = root, p[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


@dataclass
class ClusterDecomposition:
    partition: np.ndarray                 # loop index -> cluster id (0..k-1)
    cluster_fills: dict = field(default_factory=dict)   # cluster id -> (slice, bits)
    grid: GridRegion | None = None        # shared grid geometry (bits unused)
    loop_cells: list | None = None        # per-loop flat cell indices

    @property
    def n_clusters(self) -> int:
        return int(self.partition.max()) + 1 if len(self.partition) else 0

    def members(self, cid: int) -> np.ndarray:
        return np.nonzero(self.partition == cid)[0]


def soup_grid(soup: LoopSoup, radius: float = 1.0) -> GridRegion:
    h = soup.config.h
    origin, nx, ny = planar.region_window(-radius, radius, -radius, radius, h)
    return GridRegion(h, origin, np.zeros((nx, ny), bool))


def loop_cell_sets(soup: LoopSoup, grid: GridRegion) -> list[np.ndarray]:
    """Flat indices of the cells each loop passes through."""
    h, origin = grid.h, grid.origin
    nx, ny = grid.shape
    out = []
    for lp in soup.loops:
        pts = planar._subsample_segments(lp.closed(), 0.45 * h)
        ix = np.floor((pts.real - origin.real) / h + 0.5).astype(np.int64)
        iy = np.floor((pts.imag - origin.imag) / h + 0.5).astype(np.int64)
        ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out.append(np.unique(ix[ok] * ny + iy[ok]))
    return out


def decompose(soup: LoopSoup, radius: float = 1.0, grid: GridRegion | None = None,
              cell_sets: list | None = None) -> ClusterDecomposition:
    """Union-find over the cell-adjacency intersection graph of the soup.

    Adjacency detection: a cell with index (ix, iy) owns the four corner keys
    (ix+a, iy+b), a,b in {0,1}; two cells are Chebyshev-adjacent iff they
    share a corner key, so consecutive entries in a corner-sorted list give a
    complete set of union edges.
    """
    n = len(soup)
    if grid is None:
        grid = soup_grid(soup, radius)
    if cell_sets is None:
        cell_sets = loop_cell_sets(soup, grid)
    uf = _UnionFind(n)
    if n:
        ny = grid.shape[1]
        counts = np.array([len(c) for c in cell_sets])
        cells = np.concatenate(cell_sets) if counts.sum() else np.empty(0, np.int64)
        ids = np.repeat(np.arange(n), counts)
        cx, cy = cells // ny, cells % ny
        K = ny + 2
        corners = []
        for a in (0, 1):
            for b in (0, 1):
                corners.append((cx + a) * K + (cy + b))
        keys = np.concatenate(corners)
        ids4 = np.tile(ids, 4)
        order = np.argsort(keys, kind="stable")
        k_s, id_s = keys[order], ids4[order]
        same = (k_s[1:] == k_s[:-1]) & (id_s[1:] != id_s[:-1])
        a_ids, b_ids = id_s[:-1][same], id_s[1:][same]
        lo = np.minimum(a_ids, b_ids)
        hi = np.maximum(a_ids, b_ids)
        edges = np.unique(lo * np.int64(n) + hi)
        for e in edges.tolist():
            uf.union(int(e // n), int(e % n))
    roots = np.array([uf.find(i) for i in range(n)], dtype=np.int64)
    _, partition = np.unique(roots, return_inverse=True) if n else (None, np.empty(0, np.int64))
    return ClusterDecomposition(partition, {}, grid, cell_sets)


def cluster_fill(dec: ClusterDecomposition, cid: int):
    """Filling of a cluster's loops on its local sub-window: (slices, bits)."""
    cached = dec.cluster_fills.get(cid)
    if cached is not None:
        return cached
    grid = dec.grid
    nx, ny = grid.shape
    cells = np.concatenate([dec.loop_cells[i] for i in dec.members(cid)])
    cx, cy = cells // ny, cells % ny
    x0, x1 = max(0, cx.min() - 2), min(nx, cx.max() + 3)
    y0, y1 = max(0, cy.min() - 2), min(ny, cy.max() + 3)
    bits = np.zeros((x1 - x0, y1 - y0), bool)
    bits[cx - x0, cy - y0] = True
    filled = ~planar._outside_mask(bits)
    out = ((slice(x0, x1), slice(y0, y1)), filled)
    dec.cluster_fills[cid] = out
    return out


def _align_bits(region: GridRegion, grid: GridRegion) -> np.ndarray:
    """Region bits resampled onto the shared grid frame."""
    if (
        abs(region.h - grid.h) < 1e-12
        and abs(region.origin - grid.origin) < 1e-9 * grid.h
        and region.shape == grid.shape
    ):
        return region.bits.copy()
    bits = np.zeros(grid.shape, bool)
    centers = region.cell_centers()
    if len(centers) == 0:
        return bits
    ix = np.floor((centers.real - grid.origin.real) / grid.h + 0.5).astype(int)
    iy = np.floor((centers.imag - grid.origin.imag) / grid.h + 0.5).astype(int)
    nx, ny = grid.shape
    ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    bits[ix[ok], iy[ok]] = True
    return bits


def attach_and_fill(A: GridRegion, soup: LoopSoup, dec: ClusterDecomposition | None = None,
                    radius: float = 1.0) -> GridRegion:
    """Filling of A together with every cluster whose filling meets A."""
    if dec is None:
        dec = decompose(soup, radius=radius)
    grid = dec.grid
    ny = grid.shape[1]
    a_bits = _align_bits(A, grid)
    out = a_bits.copy()
    a_dil = ndimage.binary_dilation(a_bits, structure=_ADJ8)
    for cid in range(dec.n_clusters):
        slc, fillb = cluster_fill(dec, cid)
        if np.any(fillb & a_dil[slc]):
            for i in dec.members(cid):
                cells = dec.loop_cells[i]
                out[cells // ny, cells % ny] = True
    return planar.fill(GridRegion(grid.h, grid.origin, out))


def explore_step(A_n: GridRegion, soup: LoopSoup, dec: ClusterDecomposition | None = None,
                 radius: float = 1.0) -> GridRegion:
    """One exploration step: fill A_n together with every loop touching it."""
    if dec is None:
        dec = decompose(soup, radius=radius)
    grid = dec.grid
    bits = _align_bits(A_n, grid)
    dil = ndimage.binary_dilation(bits, structure=_ADJ8).reshape(-1)
    for i in range(len(soup)):
        cells = dec.loop_cells[i]
        if dil[cells].any():
            ny = grid.shape[1]
            bits[cells // ny, cells % ny] = True
    return planar.fill(GridRegion(grid.h, grid.origin, bits))


@dataclass
class ExplorationState:
    stages: list
    step_count: int
    stabilized: bool
    d_history: list = field(default_factory=list)

    def trace_json(self) -> str:
        import json

        rows = []
        prev = None
        for k, st in enumerate(self.stages):
            added = int(st.bits.sum() - (prev.bits.sum() if prev is not None else 0))
            rows.append({"step": k, "cells_added": added,
                         "d_to_target": self.d_history[k] if k < len(self.d_history) else None})
            prev = st
        return json.dumps(rows)


def explore_until_stable(A: GridRegion, soup: LoopSoup, max_steps: int | None = None,
                         radius: float = 1.0) -> ExplorationState:
    """Iterate explore_step to bit-for-bit stabilization; track d_H to the
    attached filling."""
    if max_steps is None:
        max_steps = len(soup) + 2
    dec = decompose(soup, radius=radius)
    target = attach_and_fill(A, soup, dec=dec, radius=radius)
    cur = planar.fill(GridRegion(dec.grid.h, dec.grid.origin, _align_bits(A, dec.grid)))
    stages = [cur]
    d_hist = [0.0 if cur.is_empty() or target.is_empty()
              else planar.hausdorff_distance(cur, target)]
    for step in range(max_steps):
        nxt = explore_step(cur, soup, dec=dec, radius=radius)
        if np.array_equal(nxt.bits, cur.bits):
            return ExplorationState(stages, step, True, d_hist)
        cur = nxt
        stages.append(cur)
        d_hist.append(planar.hausdorff_distance(cur, target) if not cur.is_empty() else 0.0)
    raise RuntimeError(f"exploration did not stabilize within {max_steps} steps")


def event_E(A_tilde: GridRegion, domain: MarkedDomain | None = None) -> bool:
    """Are -1 and 1 in the same component of the closed disc minus the set?

    A mark swallowed by the set means the points cannot be joined: the event
    is false (the restriction weight vanishes on such configurations).
    """
    if domain is None:
        domain = MarkedDomain(region=A_tilde, reference="disc")
    else:
        domain = MarkedDomain(region=A_tilde, reference=domain.reference, marks=domain.marks)
    try:
        return planar.same_component(domain, "m1", "p1")
    except ValueError:
        return False


def reaching_probability_check(B: GridRegion, c: float, a: float, trials: int,
                               seed: int, m: int = 192) -> Estimate:
    """P[some soup loop hits both B and the half-radius disc].

    B must be connected and reach from the unit circle to radius 1-a. For a
    Poisson soup the probability is 1 - exp(-(c/2) mass), so a stratified
    estimate of the hitting mass gives it directly (and is monotone in c by
    construction).
    """
    if B.is_empty():
        raise ValueError("B must be nonempty")
    centers = B.cell_centers()
    rad = np.abs(centers)
    if rad.max() < 1.0 - 1.5 * B.h or rad.min() > 1.0 - a:
        raise ValueError("B must touch the unit circle and radius 1-a")
    lab, nlab = ndimage.label(B.bits, structure=_ADJ8)
    if nlab != 1:
        raise ValueError("B must be connected")
    half = planar.disc_region(0.5, B.h)
    event = HitsBoth(half, B, kind="brownian", domain_radius=1.0)
    mass = mass_estimate("brownian", event, trials, seed, m=m)
    p = 1.0 - np.exp(-0.5 * c * mass.mean)
    se = 0.5 * c * np.exp(-0.5 * c * mass.mean) * mass.std_error
    return Estimate(float(p), float(se), mass.n_trials, seed,
                    dict(mass.discretization), {"hit_mass": mass.mean})
