"""Planar geometry kernel: loops, grid regions, fillings, connectivity.

Conventions
-----------
Points are complex numbers. A GridRegion is a boolean occupancy array over a
square lattice of pitch h; ``bits[ix, iy]`` covers the cell centered at
``origin + h*(ix + 1j*iy)``. Windows always pad content by at least 4h so that
flood fill from the window border is well defined.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage import measure as _skmeasure

MAGIC_REGION = b"GRGN"
REGION_VERSION = 1
DEFAULT_PITCH = 0.01
WINDOW_PAD_CELLS = 4


# ---------------------------------------------------------------------------
# core types

@dataclass(frozen=True)
class PolyLoop:
    """Closed planar polyline; the last vertex connects back to the first.

    ``vertices`` never repeats the closing point. Self-intersecting loops are
    allowed (Brownian paths); ``is_simple`` marks loops known to be simple
    (outer boundaries).
    """

    vertices: np.ndarray
    is_simple: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex)
        if v.ndim != 1 or len(v) < 3:
            raise ValueError("a loop needs at least 3 vertices")
        if not np.all(np.isfinite(v.view(float))):
            raise ValueError("loop vertices must be finite")
        if len(np.unique(np.round(v, 14))) < 3:
            raise ValueError("degenerate loop: fewer than 3 distinct vertices")
        object.__setattr__(self, "vertices", v)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax)"""
        v = self.vertices
        return (v.real.min(), v.real.max(), v.imag.min(), v.imag.max())

    @property
    def diameter(self) -> float:
        xmin, xmax, ymin, ymax = self.bbox
        return float(np.hypot(xmax - xmin, ymax - ymin))

    def closed(self) -> np.ndarray:
        """Vertices with the closing point appended."""
        return np.concatenate([self.vertices, self.vertices[:1]])

    def to_json(self) -> str:
        return json.dumps([[float(z.real), float(z.imag)] for z in self.vertices])

    @staticmethod
    def from_json(text: str, is_simple: bool = False) -> "PolyLoop":
        pairs = json.loads(text)
        return PolyLoop(np.array([p[0] + 1j * p[1] for p in pairs]), is_simple=is_simple)


@dataclass(frozen=True)
class GridRegion:
    """Bitmap over a square lattice of pitch h."""

    h: float
    origin: complex
    bits: np.ndarray

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("pitch must be positive")
        b = np.asarray(self.bits, dtype=bool)
        object.__setattr__(self, "bits", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def window(self) -> tuple[float, float, float, float]:
        nx, ny = self.bits.shape
        x0 = self.origin.real - self.h / 2
        y0 = self.origin.imag - self.h / 2
        return (x0, x0 + nx * self.h, y0, y0 + ny * self.h)

    def is_empty(self) -> bool:
        return not self.bits.any()

    def cell_centers(self) -> np.ndarray:
        ix, iy = np.nonzero(self.bits)
        return self.origin + self.h * (ix + 1j * iy)

    def index_of(self, z: complex) -> tuple[int, int]:
        ix = int(np.floor((z.real - self.origin.real) / self.h + 0.5))
        iy = int(np.floor((z.imag - self.origin.imag) / self.h + 0.5))
        return ix, iy

    def contains_point(self, z: complex) -> bool:
        ix, iy = self.index_of(z)
        nx, ny = self.bits.shape
        return 0 <= ix < nx and 0 <= iy < ny and bool(self.bits[ix, iy])

    def area(self) -> float:
        return float(self.bits.sum()) * self.h * self.h

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        nx, ny = self.bits.shape
        head = MAGIC_REGION + struct.pack(
            "<Hddd qq", REGION_VERSION, self.h, self.origin.real, self.origin.imag, nx, ny
        )
        return head + np.packbits(self.bits.reshape(-1)).tobytes()

    @staticmethod
    def from_bytes(blob: bytes) -> "GridRegion":
        if blob[:4] != MAGIC_REGION:
            raise ValueError("not a GridRegion blob")
        ver, h, ore, oim, nx, ny = struct.unpack("<Hddd qq", blob[4 : 4 + 42])
        if ver != REGION_VERSION:
            raise ValueError(f"unsupported GridRegion version {ver}")
        bits = np.unpackbits(np.frombuffer(blob[4 + 42 :], dtype=np.uint8))[: nx * ny]
        return GridRegion(h, ore + 1j * oim, bits.astype(bool).reshape(nx, ny))

    def to_debug_json(self) -> str:
        nx, ny = self.bits.shape
        rows = [np.packbits(self.bits[i]).tobytes().hex() for i in range(nx)]
        return json.dumps(
            {
                "h": self.h,
                "origin": [self.origin.real, self.origin.imag],
                "shape": [nx, ny],
                "rows_hex": rows,
            }
        )

    @staticmethod
    def from_debug_json(text: str) -> "GridRegion":
        d = json.loads(text)
        nx, ny = d["shape"]
        bits = np.zeros((nx, ny), bool)
        for i, hx in enumerate(d["rows_hex"]):
            row = np.unpackbits(np.frombuffer(bytes.fromhex(hx), dtype=np.uint8))[:ny]
            bits[i] = row.astype(bool)
        return GridRegion(d["h"], d["origin"][0] + 1j * d["origin"][1], bits)


@dataclass(frozen=True)
class MarkedDomain:
    """A reference domain (unit disc or plane window) minus a removed region."""

    region: GridRegion | None
    reference: str = "disc"  # "disc" or "plane"
    marks: dict = field(default_factory=lambda: {"m1": -1 + 0j, "p1": 1 + 0j, "w0": 1j})

    def __post_init__(self):
        if self.reference not in ("disc", "plane"):
            raise ValueError("reference must be 'disc' or 'plane'")

    def mark(self, name: str) -> complex:
        return self.marks[name]


# ---------------------------------------------------------------------------
# rasterization

def _subsample_segments(closed_pts: np.ndarray, step: float) -> np.ndarray:
    """Points along a closed polyline at spacing <= step (includes vertices)."""
    a = closed_pts[:-1]
    d = np.diff(closed_pts)
    L = np.abs(d)
    nsub = np.maximum(1, np.ceil(L / step).astype(int))
    reps = np.repeat(np.arange(len(a)), nsub)
    frac = np.concatenate([np.arange(k) / k for k in nsub]) if len(a) else np.empty(0)
    pts = a[reps] + frac * d[reps]
    return np.concatenate([pts, closed_pts[-1:]])


def stamp_polyline(bits: np.ndarray, origin: complex, h: float, closed_pts: np.ndarray):
    """Mark all cells within half a cell of the polyline (conservative cover)."""
    pts = _subsample_segments(closed_pts, 0.45 * h)
    ix = np.floor((pts.real - origin.real) / h + 0.5).astype(int)
    iy = np.floor((pts.imag - origin.imag) / h + 0.5).astype(int)
    nx, ny = bits.shape
    ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    bits[ix[ok], iy[ok]] = True


def region_window(xmin, xmax, ymin, ymax, h, pad_cells=WINDOW_PAD_CELLS):
    """Grid geometry (origin, nx, ny) padding content by pad_cells cells."""
    x0 = xmin - pad_cells * h
    y0 = ymin - pad_cells * h
    nx = int(np.ceil((xmax - xmin) / h)) + 2 * pad_cells + 1
    ny = int(np.ceil((ymax - ymin) / h)) + 2 * pad_cells + 1
    return x0 + 1j * y0, nx, ny


def rasterize_loops(loops, h: float, origin=None, shape=None) -> GridRegion:
    """Occupancy bitmap of a collection of PolyLoops at pitch h."""
    loops = list(loops)
    if origin is None:
        boxes = np.array([lp.bbox for lp in loops])
        if not np.all(np.isfinite(boxes)):
            raise ValueError("unbounded fill")
        origin, nx, ny = region_window(
            boxes[:, 0].min(), boxes[:, 1].max(), boxes[:, 2].min(), boxes[:, 3].max(), h
        )
        shape = (nx, ny)
    bits = np.zeros(shape, bool)
    for lp in loops:
        stamp_polyline(bits, origin, h, lp.closed())
    return GridRegion(h, origin, bits)


# ---------------------------------------------------------------------------
# fillings and connectivity

def _outside_mask(occ: np.ndarray) -> np.ndarray:
    """Cells connected to the array border through unoccupied cells."""
    free = ~occ
    lab, _ = ndimage.label(free)
    border = np.unique(
        np.concatenate([lab[0, :], lab[-1, :], lab[:, 0], lab[:, -1]])
    )
    border = border[border > 0]
    return np.isin(lab, border) & free


def fill(source, h: float | None = None) -> GridRegion:
    """Filling: complement of the unbounded component, rasterized at pitch h.

    ``source`` is a GridRegion, a PolyLoop, or an iterable of PolyLoops.
    """
    if isinstance(source, GridRegion):
        region = source
    else:
        loops = [source] if isinstance(source, PolyLoop) else list(source)
        if h is None:
            raise ValueError("pitch h required when filling loops")
        region = rasterize_loops(loops, h)
    if not np.all(np.isfinite([region.h, region.origin.real, region.origin.imag])):
        raise ValueError("unbounded fill")
    filled = ~_outside_mask(region.bits)
    return GridRegion(region.h, region.origin, filled)


def hausdorff_distance(a: GridRegion, b: GridRegion) -> float:
    """Hausdorff distance between two regions as sets of occupied cell centers."""
    if a.is_empty() or b.is_empty():
        raise ValueError("empty set has no Hausdorff distance")
    if abs(a.h - b.h) > 1e-12 * a.h:
        raise ValueError("regions must share a pitch")
    h = a.h
    # common integer frame
    ax, ay = a.origin.real, a.origin.imag
    bx, by = b.origin.real, b.origin.imag
    sx = int(round((bx - ax) / h))
    sy = int(round((by - ay) / h))
    nx = max(a.shape[0], sx + b.shape[0]) - min(0, sx)
    ny = max(a.shape[1], sy + b.shape[1]) - min(0, sy)
    offax, offay = -min(0, sx), -min(0, sy)
    A = np.zeros((nx, ny), bool)
    B = np.zeros((nx, ny), bool)
    A[offax : offax + a.shape[0], offay : offay + a.shape[1]] = a.bits
    B[offax + sx : offax + sx + b.shape[0], offay + sy : offay + sy + b.shape[1]] = b.bits
    dB = ndimage.distance_transform_edt(~B, sampling=h)
    dA = ndimage.distance_transform_edt(~A, sampling=h)
    return float(max(dB[A].max(), dA[B].max()))


def same_component(domain: MarkedDomain, p: str | complex, q: str | complex) -> bool:
    """Are two marks connected through the reference domain minus the region?"""
    zp = domain.mark(p) if isinstance(p, str) else complex(p)
    zq = domain.mark(q) if isinstance(q, str) else complex(q)
    region = domain.region
    if region is None:
        return True
    h = region.h
    if domain.reference == "disc":
        origin, nx, ny = region_window(-1.0, 1.0, -1.0, 1.0, h)
        free = np.zeros((nx, ny), bool)
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        cz = origin + h * (ix + 1j * iy)
        free = np.abs(cz) <= 1.0 + h / 2  # closed disc
    else:
        origin = region.origin
        nx, ny = region.shape
        free = np.ones((nx, ny), bool)
    # subtract removed region (align grids by nearest cell)
    rx = int(round((region.origin.real - origin.real) / h))
    ry = int(round((region.origin.imag - origin.imag) / h))
    x0, x1 = max(0, rx), min(nx, rx + region.shape[0])
    y0, y1 = max(0, ry), min(ny, ry + region.shape[1])
    sub = region.bits[x0 - rx : x1 - rx, y0 - ry : y1 - ry]
    blocked = np.zeros((nx, ny), bool)
    blocked[x0:x1, y0:y1] = sub
    free = free & ~blocked

    def _cell(z):
        ix = int(np.floor((z.real - origin.real) / h + 0.5))
        iy = int(np.floor((z.imag - origin.imag) / h + 0.5))
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        return ix, iy

    def _nearest_free(z):
        ix, iy = _cell(z)
        if free[ix, iy]:
            return ix, iy
        if blocked[ix, iy]:
            raise ValueError("swallowed mark")
        # mark sits on the reference boundary between cells: snap inward
        for r in (1, 2):
            xs = slice(max(0, ix - r), min(nx, ix + r + 1))
            ys = slice(max(0, iy - r), min(ny, iy + r + 1))
            loc = np.argwhere(free[xs, ys])
            if len(loc):
                return xs.start + loc[0][0], ys.start + loc[0][1]
        raise ValueError("swallowed mark")

    ip = _nearest_free(zp)
    iq = _nearest_free(zq)
    lab, _ = ndimage.label(free)
    return lab[ip] == lab[iq] and lab[ip] > 0


# ---------------------------------------------------------------------------
# loop-loop intersection

def _segment_min_dist(a0, a1, b0, b1):
    """Pairwise min distance between segment batches (broadcast, complex)."""
    da = a1 - a0
    db = b1 - b0
    w = a0 - b0
    A = (da.real ** 2 + da.imag ** 2)
    B = da.real * db.real + da.imag * db.imag
    C = (db.real ** 2 + db.imag ** 2)
    D = da.real * w.real + da.imag * w.imag
    E = db.real * w.real + db.imag * w.imag
    den = A * C - B * B
    den = np.where(den < 1e-30, 1e-30, den)
    s = np.clip((B * E - C * D) / den, 0.0, 1.0)
    # clamped coordinate descent; two sweeps settle the corner cases
    t = np.clip((B * s + E) / np.where(C < 1e-30, 1e-30, C), 0.0, 1.0)
    s = np.clip((B * t - D) / np.where(A < 1e-30, 1e-30, A), 0.0, 1.0)
    t = np.clip((B * s + E) / np.where(C < 1e-30, 1e-30, C), 0.0, 1.0)
    p = a0 + s * da
    q = b0 + t * db
    return np.abs(p - q)


def _segments_cross(a0, a1, b0, b1):
    """Proper or touching crossing test via orientation signs (broadcast)."""
    def cross(o, u, v):
        return (u.real - o.real) * (v.imag - o.imag) - (u.imag - o.imag) * (v.real - o.real)

    d1 = cross(a0, a1, b0)
    d2 = cross(a0, a1, b1)
    d3 = cross(b0, b1, a0)
    d4 = cross(b0, b1, a1)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0)


def loops_intersect(a: PolyLoop, b: PolyLoop, tol: float = 0.0) -> bool:
    """True iff some edge pair crosses or comes within tol."""
    ax0, ax1, ay0, ay1 = a.bbox
    bx0, bx1, by0, by1 = b.bbox
    if ax0 > bx1 + tol or bx0 > ax1 + tol or ay0 > by1 + tol or by0 > ay1 + tol:
        return False
    pa = a.closed()
    pb = b.closed()
    a0, a1 = pa[:-1], pa[1:]
    b0, b1 = pb[:-1], pb[1:]
    # chunk the pair grid to bound memory
    step = max(1, int(4_000_000 / max(1, len(b0))))
    for lo in range(0, len(a0), step):
        aa0 = a0[lo : lo + step, None]
        aa1 = a1[lo : lo + step, None]
        if np.any(_segments_cross(aa0, aa1, b0[None, :], b1[None, :])):
            return True
        if tol > 0 and np.any(_segment_min_dist(aa0, aa1, b0[None, :], b1[None, :]) <= tol):
            return True
    return False


# ---------------------------------------------------------------------------
# boundary tracing and hull helpers

def trace_boundary(region: GridRegion, min_vertices: int = 8) -> PolyLoop:
    """Outer boundary of a region as a simple ccw polyline (subcell accuracy)."""
    if region.is_empty():
        raise ValueError("cannot trace an empty region")
    contours = _skmeasure.find_contours(region.bits.astype(float), 0.5)
    contours = [c for c in contours if len(c) >= min_vertices]
    if not contours:
        raise ValueError("region too small to trace at this pitch")

    def _area(c):
        x, y = c[:, 0], c[:, 1]
        return 0.5 * abs(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))

    c = max(contours, key=_area)
    z = region.origin + region.h * (c[:, 0] + 1j * c[:, 1])
    if np.abs(z[0] - z[-1]) < 1e-12:
        z = z[:-1]
    area = 0.5 * np.sum(np.imag(np.conj(z) * np.roll(z, -1)))
    if area < 0:
        z = z[::-1]
    return PolyLoop(z, is_simple=True)


def _disc_structure(k: int) -> np.ndarray:
    y, x = np.ogrid[-k : k + 1, -k : k + 1]
    return x * x + y * y <= k * k + 0.5


def closing_fill_mask(closed_pts: np.ndarray, r: float, pix_per_r: int = 2):
    """Filled hull of a closed path with fjord mouths narrower than ~2r healed.

    Dilate the rasterized path by r, flood-fill from the window border, erode
    back. Returns (bits, origin, pitch). The closing radius should track the
    inter-sample fluctuation scale of the path.
    """
    hh = r / pix_per_r
    xmin, xmax = closed_pts.real.min(), closed_pts.real.max()
    ymin, ymax = closed_pts.imag.min(), closed_pts.imag.max()
    pad = 3 * r
    origin = (xmin - pad) + 1j * (ymin - pad)
    nx = int(np.ceil((xmax - xmin + 2 * pad) / hh)) + 1
    ny = int(np.ceil((ymax - ymin + 2 * pad) / hh)) + 1
    if nx * ny > 60_000_000:
        raise MemoryError("closing grid too large; reduce path scale or raise r")
    bits = np.zeros((nx, ny), bool)
    stamp_polyline(bits, origin, hh, closed_pts)
    st = _disc_structure(pix_per_r)
    dil = ndimage.binary_dilation(bits, structure=st)
    filled = ~_outside_mask(dil)
    filled = ndimage.binary_erosion(filled, structure=st, border_value=0)
    return filled, origin, hh


def mask_contains(bits: np.ndarray, origin: complex, hh: float, z: complex) -> bool:
    ix = int(np.floor((z.real - origin.real) / hh + 0.5))
    iy = int(np.floor((z.imag - origin.imag) / hh + 0.5))
    nx, ny = bits.shape
    return 0 <= ix < nx and 0 <= iy < ny and bool(bits[ix, iy])


def mask_min_reach(bits: np.ndarray, origin: complex, hh: float, z: complex) -> float:
    """Distance from z to the complement of the filled mask (frontier reach)."""
    ix = int(np.floor((z.real - origin.real) / hh + 0.5))
    iy = int(np.floor((z.imag - origin.imag) / hh + 0.5))
    dt = ndimage.distance_transform_edt(bits)
    return float(dt[ix, iy] * hh)


def disc_region(radius: float = 1.0, h: float = DEFAULT_PITCH, center: complex = 0j) -> GridRegion:
    """Solid disc bitmap."""
    origin, nx, ny = region_window(
        center.real - radius, center.real + radius, center.imag - radius, center.imag + radius, h
    )
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cz = origin + h * (ix + 1j * iy)
    return GridRegion(h, origin, np.abs(cz - center) <= radius)


def annulus_sector_region(
    r_in: float,
    r_out: float,
    ang0: float,
    ang1: float,
    h: float = DEFAULT_PITCH,
    tether: tuple[float, float] | None = None,
) -> GridRegion:
    """Annulus sector {r_in<=|z|<=r_out, ang0<=arg z<=ang1} (angles in radians).

    ``tether=(angle, width)`` adds a radial spur from r_out to the unit circle,
    anchoring the set to the boundary so the complement stays simply connected.
    """
    rmax = max(r_out, 1.0 if tether else r_out)
    origin, nx, ny = region_window(-rmax, rmax, -rmax, rmax, h)
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cz = origin + h * (ix + 1j * iy)
    rad = np.abs(cz)
    ang = np.angle(cz)

    def _in_arc(theta):
        lo, hi = ang0, ang1
        t = np.mod(theta - lo, 2 * np.pi)
        return t <= np.mod(hi - lo, 2 * np.pi)

    bits = (rad >= r_in) & (rad <= r_out) & _in_arc(ang)
    if tether is not None:
        t_ang, t_w = tether
        d_ang = np.abs(np.angle(cz * np.exp(-1j * t_ang)))
        bits |= (rad >= r_out - h) & (rad <= 1.0) & (d_ang * np.maximum(rad, 1e-9) <= t_w / 2)
    return GridRegion(h, origin, bits)
