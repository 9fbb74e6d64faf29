"""Brownian loop measure machinery: soups, Werner boundaries, mass estimators.

Normalization
-------------
The loop measure is realized in rooted form as ``kappa_d / t^2  dt dA(root)``
times the law of a standard Brownian bridge of duration t (per-coordinate
variance s(1 - s/t)). The coefficient ``kappa_d = 1/2`` is pinned by the
requirement that the induced boundary measure reproduce the window constant
lambda = pi/5 for loops surrounding the origin; equivalently, the window mass
equals the expected area of the filled duration-1 loop (= pi/5).

Discrete hulls
--------------
A polygonal bridge leaves open the fjord mouths that the continuum path
pinches shut, so raw flood fill underestimates hulls badly. All hull
functionals therefore use a morphological closing of radius
``CLOSING_BETA * sqrt(t/m)`` before filling (see planar.closing_fill_mask);
the radius tracks the inter-vertex fluctuation scale. CLOSING_BETA = 0.7 was
fixed once from the filled-area convergence study (demos/demo_hull_operator.py)
and is used unchanged by every estimator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from . import planar
from .planar import GridRegion, MarkedDomain, PolyLoop
from .rng import trial_seed

KAPPA_D = 0.5
CLOSING_BETA = 0.7
DIAM_OVER_SQRT_T = 8.0       # P(diam of unit loop > 8) is negligible
SQRT_T_OVER_DIAM = 3.0       # P(diam of unit loop < 1/3) is negligible
DEFAULT_M = 256
DEFAULT_DELTA = 0.02
DEFAULT_R = 8.0
LOOP_BUDGET = 300_000


# ---------------------------------------------------------------------------
# result carrier

@dataclass
class Estimate:
    """Monte Carlo result with pooling support."""

    mean: float
    std_error: float
    n_trials: int
    seed: int
    discretization: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")

    def merge(self, other: "Estimate") -> "Estimate":
        """Count-weighted pooling of independent partial estimates."""
        n = self.n_trials + other.n_trials
        mean = (self.n_trials * self.mean + other.n_trials * other.mean) / n
        var = (
            (self.n_trials * self.std_error) ** 2 + (other.n_trials * other.std_error) ** 2
        ) / n ** 2
        return Estimate(
            mean, float(np.sqrt(var)), n, self.seed, dict(self.discretization), {}
        )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "discretization": self.discretization,
            "extra": _jsonable(self.extra),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


# ---------------------------------------------------------------------------
# soup configuration and loop types

@dataclass(frozen=True)
class SoupConfig:
    c: float
    domain: MarkedDomain | None = None   # None = whole plane window
    delta: float = DEFAULT_DELTA
    R: float = DEFAULT_R
    h: float = planar.DEFAULT_PITCH
    m: int = DEFAULT_M
    seed: int = 0
    loop_budget: int = LOOP_BUDGET

    def __post_init__(self):
        if not 0 <= self.c <= 1:
            raise ValueError("central charge must lie in [0, 1]")
        if self.delta <= 0 or self.R <= 0 or self.m < 16:
            raise ValueError("bad cutoffs")


@dataclass(frozen=True)
class BrownianLoop:
    root: complex
    duration: float
    path: PolyLoop

    def __post_init__(self):
        if len(self.path.vertices) < 16:
            raise ValueError("Brownian loop needs >= 16 sample points")


@dataclass(frozen=True)
class WernerLoop:
    boundary: PolyLoop
    parent_diameter: float

    def __post_init__(self):
        if not self.boundary.is_simple:
            raise ValueError("Werner loop boundary must be simple")


@dataclass
class LoopSoup:
    loops: list
    kind: str                    # "brownian" | "werner"
    config: SoupConfig
    durations: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self):
        return len(self.loops)

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "kind": self.kind,
                "config": {
                    "c": self.config.c,
                    "delta": self.config.delta,
                    "R": self.config.R,
                    "h": self.config.h,
                    "m": self.config.m,
                    "seed": self.config.seed,
                    "domain": None if self.config.domain is None else self.config.domain.reference,
                },
                "durations": [float(t) for t in self.durations],
                "loops": [
                    [[float(z.real), float(z.imag)] for z in lp.vertices] for lp in self.loops
                ],
            }
        )

    def to_bytes(self) -> bytes:
        import struct

        head = b"LSUP" + struct.pack(
            "<HBddddqq",
            1,
            0 if self.kind == "brownian" else 1,
            self.config.c,
            self.config.delta,
            self.config.R,
            self.config.h,
            self.config.m,
            self.config.seed,
        )
        parts = [head, struct.pack("<q", len(self.loops))]
        for lp, t in zip(self.loops, self.durations):
            v = lp.vertices
            parts.append(struct.pack("<qd", len(v), float(t)))
            parts.append(np.ascontiguousarray(v, dtype=complex).tobytes())
        return b"".join(parts)

    @staticmethod
    def from_bytes(blob: bytes) -> "LoopSoup":
        import struct

        if blob[:4] != b"LSUP":
            raise ValueError("not a LoopSoup blob")
        ver, kind_b, c, delta, R, h, m, seed = struct.unpack("<HBddddqq", blob[4:55])
        if ver != 1:
            raise ValueError("unsupported LoopSoup version")
        kind = "brownian" if kind_b == 0 else "werner"
        (count,) = struct.unpack("<q", blob[55:63])
        off = 63
        loops, ts = [], []
        for _ in range(count):
            nv, t = struct.unpack("<qd", blob[off : off + 16])
            off += 16
            v = np.frombuffer(blob[off : off + 16 * nv], dtype=complex)
            off += 16 * nv
            loops.append(PolyLoop(v.copy(), is_simple=(kind == "werner")))
            ts.append(t)
        cfg = SoupConfig(c=c, delta=delta, R=R, h=h, m=int(m), seed=int(seed))
        return LoopSoup(loops, kind, cfg, np.array(ts))


# ---------------------------------------------------------------------------
# bridge sampling

def sample_bridges(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """n closed unit-duration bridges rooted at 0; shape (n, m+1), complex."""
    dW = rng.normal(0.0, np.sqrt(1.0 / m), size=(n, m, 2))
    W = np.cumsum(dW, axis=1)
    s = (np.arange(1, m + 1) / m)[None, :, None]
    B = W - s * W[:, -1:, :]
    z = B[:, :, 0] + 1j * B[:, :, 1]
    out = np.empty((n, m + 1), complex)
    out[:, 0] = 0.0
    out[:, 1:] = z
    out[:, -1] = 0.0
    return out


def dyadic_bands(t_lo: float, t_hi: float):
    """Dyadic duration bands [t0, min(2 t0, t_hi)) covering [t_lo, t_hi)."""
    bands = []
    t0 = t_lo
    while t0 < t_hi:
        t1 = min(2 * t0, t_hi)
        bands.append((t0, t1))
        t0 = t1
    return bands


def band_mass(area: float, t0: float, t1: float) -> float:
    """Loop-measure mass of {root in window, duration in [t0,t1)}."""
    return area * KAPPA_D * (1.0 / t0 - 1.0 / t1)


def sample_band_durations(n, t0, t1, rng):
    """Durations from the normalized 1/t^2 density on [t0, t1)."""
    u = rng.random(n)
    return 1.0 / (1.0 / t0 - u * (1.0 / t0 - 1.0 / t1))


def band_range_for_diams(d_min: float, d_max: float):
    return (d_min / DIAM_OVER_SQRT_T) ** 2, (SQRT_T_OVER_DIAM * d_max) ** 2


# ---------------------------------------------------------------------------
# per-loop hull view

class LoopSample:
    """Lazy hull functionals of one sampled loop (closing-fill semantics)."""

    def __init__(self, path: np.ndarray, duration: float):
        self.path = path
        self.duration = duration
        m = len(path) - 1
        self.closing_r = CLOSING_BETA * np.sqrt(duration / m)
        self._mask = None
        self._interior = None

    # cheap path functionals ------------------------------------------------
    def sup_norm(self) -> float:
        return float(np.abs(self.path).max())

    def diam(self) -> float:
        xy = np.c_[self.path.real, self.path.imag]
        try:
            hull = ConvexHull(xy)
        except QhullError:
            dx = xy[:, 0].max() - xy[:, 0].min()
            dy = xy[:, 1].max() - xy[:, 1].min()
            return float(np.hypot(dx, dy))
        hp = xy[hull.vertices]
        dif = hp[:, None, :] - hp[None, :, :]
        return float(np.sqrt((dif ** 2).sum(-1)).max())

    def winding_nonzero(self, z: complex = 0j) -> bool:
        q = (self.path[1:] - z) / (self.path[:-1] - z)
        return bool(abs(np.angle(q).sum()) > 1.0)

    # hull functionals --------------------------------------------------------
    def mask(self):
        if self._mask is None:
            self._mask = planar.closing_fill_mask(self.path, self.closing_r)
        return self._mask

    def surrounds(self, z: complex = 0j) -> bool:
        x, y = z.real, z.imag
        if not (
            self.path.real.min() < x < self.path.real.max()
            and self.path.imag.min() < y < self.path.imag.max()
        ):
            return False
        if self.winding_nonzero(z):
            return True
        bits, origin, hh = self.mask()
        return planar.mask_contains(bits, origin, hh, z)

    def min_reach(self, z: complex = 0j) -> float:
        bits, origin, hh = self.mask()
        return planar.mask_min_reach(bits, origin, hh, z)

    def frontier(self) -> PolyLoop:
        bits, origin, hh = self.mask()
        return planar.trace_boundary(GridRegion(hh, origin, bits))

    def hull_area(self) -> float:
        bits, _, hh = self.mask()
        return float(bits.sum()) * hh * hh

    def mask_hits_points(self, pts: np.ndarray) -> tuple[bool, bool]:
        """(any point in hull, any point outside interior) for frontier-hit tests."""
        bits, origin, hh = self.mask()
        nx, ny = bits.shape
        ix = np.floor((pts.real - origin.real) / hh + 0.5).astype(int)
        iy = np.floor((pts.imag - origin.imag) / hh + 0.5).astype(int)
        inside_win = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        inb = np.zeros(len(pts), bool)
        inb[inside_win] = bits[ix[inside_win], iy[inside_win]]
        some_in = bool(inb.any())
        if self._interior is None:
            self._interior = ndimage.binary_erosion(bits, border_value=0)
        inb_int = np.zeros(len(pts), bool)
        inb_int[inside_win] = self._interior[ix[inside_win], iy[inside_win]]
        some_out = bool((~inb_int).any())
        return some_in, some_out

    def frontier_hits_points(self, pts: np.ndarray) -> bool:
        some_in, some_out = self.mask_hits_points(pts)
        return some_in and some_out

    def path_hits_region(self, region: GridRegion) -> bool:
        pts = planar._subsample_segments(self.path, 0.45 * region.h)
        ix = np.floor((pts.real - region.origin.real) / region.h + 0.5).astype(int)
        iy = np.floor((pts.imag - region.origin.imag) / region.h + 0.5).astype(int)
        nx, ny = region.shape
        ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        return bool(region.bits[ix[ok], iy[ok]].any())


# ---------------------------------------------------------------------------
# events for mass estimation

def region_sample_points(obj, spacing: float) -> np.ndarray:
    """Points representing a region or curve for frontier-hit tests."""
    if isinstance(obj, GridRegion):
        return obj.cell_centers()
    if isinstance(obj, PolyLoop):
        return planar._subsample_segments(obj.closed(), spacing)
    raise TypeError("expected GridRegion or PolyLoop")


class SurroundsNormWindow:
    """{loop surrounds z0, sup-norm in [a, b)} on Werner boundaries."""

    def __init__(self, a: float, b: float, z0: complex = 0j):
        if not 0 < a < b:
            raise ValueError("need 0 < a < b")
        self.a, self.b, self.z0 = a, b, z0
        self.d_bounds = (a, 2.0 * b)

    def root_radius(self, t: float) -> float:
        return self.b

    def quick(self, paths: np.ndarray, ts: np.ndarray):
        sup = np.abs(paths - self.z0).max(axis=1)
        cand = (sup >= self.a) & (sup < self.b)
        return cand

    def full(self, s: LoopSample) -> float:
        return 1.0 if s.surrounds(self.z0) else 0.0


class SurroundsHitsCircle:
    """{loop surrounds 0, loop intersects the circle of given radius}.

    Scale-invariance reduction: restricted to diam in [rho, 2 rho) with the
    dyadic counting functional #{j >= 0: min_reach <= rho 2^-j <= sup_norm};
    summing dyadic rescalings reproduces the full event mass.
    """

    def __init__(self, rho: float = 1.0):
        self.rho = rho
        self.d_bounds = (rho, 2.0 * rho)

    def root_radius(self, t: float) -> float:
        return 2.0 * self.rho

    def quick(self, paths: np.ndarray, ts: np.ndarray):
        dx = paths.real.max(1) - paths.real.min(1)
        dy = paths.imag.max(1) - paths.imag.min(1)
        return (np.hypot(dx, dy) >= self.rho) & (np.maximum(dx, dy) < 2 * self.rho)

    def full(self, s: LoopSample) -> float:
        d = s.diam()
        if not (self.rho <= d < 2 * self.rho):
            return 0.0
        if not s.surrounds(0j):
            return 0.0
        mx = s.sup_norm()
        mn = max(s.min_reach(0j), 1e-12)
        j_hi = np.floor(np.log2(self.rho / mn))
        j_lo = max(0.0, np.ceil(np.log2(self.rho / mx)))
        return float(max(0.0, j_hi - j_lo + 1.0)) if j_hi >= j_lo else 0.0


class HitsBoth:
    """{loop hits S1 and S2}; Werner kind tests the frontier, Brownian the path.

    S1, S2 are GridRegions or PolyLoops. With ``domain_radius`` set, the event
    additionally requires the loop to stay strictly inside that disc.
    """

    def __init__(self, s1, s2, kind: str, domain_radius: float | None = None,
                 d_cap: float | None = None):
        self.s1, self.s2, self.kind = s1, s2, kind
        self.domain_radius = domain_radius
        spacing = min(getattr(s, "h", 0.01) for s in (s1, s2))
        pts1 = region_sample_points(s1, spacing)
        pts2 = region_sample_points(s2, spacing)
        self.pts1, self.pts2 = pts1, pts2
        d12 = self._set_distance(pts1, pts2)
        if d12 <= 0:
            raise ValueError("sets must be disjoint")
        self.sep = d12
        scale = max(np.abs(pts1).max(), np.abs(pts2).max(), d12)
        d_max = 2 * domain_radius if domain_radius else (d_cap or 128.0 * scale)
        self.d_bounds = (d12, d_max)
        cx = 0.5 * (pts1.mean() + pts2.mean())
        rad = max(np.abs(pts1 - cx).max(), np.abs(pts2 - cx).max())
        self.center, self.cover_radius = cx, rad

    @staticmethod
    def _set_distance(p, q, chunk=4096):
        best = np.inf
        for lo in range(0, len(p), chunk):
            d = np.abs(p[lo : lo + chunk, None] - q[None, :]).min()
            best = min(best, float(d))
        return best

    def root_radius(self, t: float) -> float:
        r = self.cover_radius + DIAM_OVER_SQRT_T * np.sqrt(t)
        if self.domain_radius:
            # roots of in-disc loops also lie in the disc
            r = min(r, abs(self.center) + self.domain_radius)
        return r

    def quick(self, paths: np.ndarray, ts: np.ndarray):
        cand = np.ones(len(paths), bool)
        if self.domain_radius:
            cand &= np.abs(paths - self.center).max(axis=1) < 2 * self.domain_radius
            cand &= np.abs(paths).max(axis=1) < self.domain_radius
        for pts in (self.pts1, self.pts2):
            x0, x1 = pts.real.min(), pts.real.max()
            y0, y1 = pts.imag.min(), pts.imag.max()
            cand &= (
                (paths.real.min(1) <= x1)
                & (paths.real.max(1) >= x0)
                & (paths.imag.min(1) <= y1)
                & (paths.imag.max(1) >= y0)
            )
        return cand

    def full(self, s: LoopSample) -> float:
        if self.domain_radius and s.sup_norm() >= self.domain_radius:
            return 0.0
        if self.kind == "werner":
            return float(
                s.frontier_hits_points(self.pts1) and s.frontier_hits_points(self.pts2)
            )
        return float(self._path_hits(s, self.s1, self.pts1)
                     and self._path_hits(s, self.s2, self.pts2))

    @staticmethod
    def _path_hits(s: LoopSample, obj, pts) -> bool:
        if isinstance(obj, GridRegion):
            return s.path_hits_region(obj)
        tol = 0.005
        sub = planar._subsample_segments(s.path, 4 * tol)
        for lo in range(0, len(sub), 2048):
            if np.abs(sub[lo : lo + 2048, None] - pts[None, :]).min() <= tol:
                return True
        return False


# ---------------------------------------------------------------------------
# the stratified mass estimator

def mass_estimate(
    kind: str,
    event,
    trials: int,
    seed: int,
    m: int = DEFAULT_M,
    pilot_frac: float = 0.25,
    min_per_band: int = 64,
) -> Estimate:
    """Stratified unbiased estimate of a loop-measure mass.

    ``event`` supplies diameter bounds, a per-band root window radius, a
    vectorized candidate filter and the exact per-loop functional. ``trials``
    is the total sample budget; a pilot pass sets a Neyman-style allocation.
    """
    if kind not in ("brownian", "werner"):
        raise ValueError("kind must be brownian or werner")
    d_lo, d_hi = event.d_bounds
    if not (0 < d_lo < d_hi):
        raise ValueError("empty strata")
    t_lo, t_hi = band_range_for_diams(d_lo, d_hi)
    bands = dyadic_bands(t_lo, t_hi)
    # window fixed per band at the band's top duration so it covers every
    # root an event loop in the band can have
    masses = []
    for t0, t1 in bands:
        r_root = event.root_radius(t1)
        masses.append(band_mass(np.pi * r_root ** 2, t0, t1))

    def run_band(bi, n, phase):
        t0, t1 = bands[bi]
        rng = np.random.default_rng(trial_seed(seed, 1000 * phase + bi))
        ts = sample_band_durations(n, t0, t1, rng)
        r_root = event.root_radius(t1)
        roots = r_root * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        paths = sample_bridges(n, m, rng) * np.sqrt(ts)[:, None] + roots[:, None]
        cand = event.quick(paths, ts)
        vals = np.zeros(n)
        for i in np.nonzero(cand)[0]:
            vals[i] = event.full(LoopSample(paths[i], ts[i]))
        return vals

    n_pilot = max(min_per_band, int(pilot_frac * trials / len(bands)))
    band_vals = [run_band(bi, n_pilot, 0) for bi in range(len(bands))]
    # Neyman allocation of the remaining budget
    remaining = max(0, trials - n_pilot * len(bands))
    sds = np.array([masses[bi] * band_vals[bi].std() for bi in range(len(bands))])
    if sds.sum() <= 0:
        alloc = np.zeros(len(bands), int)
    else:
        alloc = np.floor(remaining * sds / sds.sum()).astype(int)
    total, var = 0.0, 0.0
    per_band = []
    for bi in range(len(bands)):
        vals = band_vals[bi]
        if alloc[bi] > 0:
            vals = np.concatenate([vals, run_band(bi, int(alloc[bi]), 1)])
        mu = vals.mean()
        total += masses[bi] * mu
        var += masses[bi] ** 2 * vals.var() / len(vals)
        per_band.append(
            {"t0": bands[bi][0], "t1": bands[bi][1], "mass": masses[bi],
             "p": float(mu), "n": int(len(vals))}
        )
    extra = {"bands": per_band}
    if len(per_band) >= 2:
        extra["tail_octave"] = per_band[-1]["mass"] * per_band[-1]["p"]
    return Estimate(
        float(total),
        float(np.sqrt(var)),
        int(sum(b["n"] for b in per_band)),
        seed,
        {"m": m, "kind": kind},
        extra,
    )


# ---------------------------------------------------------------------------
# spec operations built on the estimator

def lambda_bl(K: GridRegion, A: GridRegion, D: MarkedDomain, trials: int, seed: int,
              m: int = DEFAULT_M) -> Estimate:
    """Mass of Brownian loops inside the unit disc hitting both K and A."""
    if A.is_empty() or K.is_empty():
        return Estimate(0.0, 0.0, 1, seed, {"m": m}, {"empty_operand": True})
    event = HitsBoth(K, A, kind="brownian", domain_radius=1.0)
    return mass_estimate("brownian", event, trials, seed, m=m)


def werner_hitting_mass(S1, S2, trials: int, seed: int, m: int = DEFAULT_M,
                        d_cap: float | None = None) -> Estimate:
    """Mass of Werner loops whose boundary hits both S1 and S2."""
    event = HitsBoth(S1, S2, kind="werner", d_cap=d_cap)
    est = mass_estimate("werner", event, trials, seed, m=m)
    est.extra["separation"] = event.sep
    return est


# ---------------------------------------------------------------------------
# soups

def _expected_count(cfg: SoupConfig, area: float, d_lo: float, d_hi: float) -> float:
    t_lo, t_hi = band_range_for_diams(d_lo, d_hi)
    total = 0.0
    for t0, t1 in dyadic_bands(t_lo, t_hi):
        total += band_mass(area, t0, t1)
    return 0.5 * cfg.c * total


def sample_domain_soup(cfg: SoupConfig, radius: float = 1.0) -> LoopSoup:
    """Brownian loop soup at intensity c/2 in the disc of given radius.

    Loops with diameter below cfg.delta are dropped (the cutoff); every kept
    loop lies strictly inside the disc. Deterministic in cfg.seed.
    """
    d_lo, d_hi = cfg.delta, 2.0 * radius
    rough = _expected_count(cfg, np.pi * radius ** 2, d_lo, d_hi)
    if rough > cfg.loop_budget * 50:
        raise ValueError("cutoff too fine: expected loop count exceeds budget")
    t_lo, t_hi = band_range_for_diams(d_lo, d_hi)
    loops, durations = [], []
    n_total = 0
    for bi, (t0, t1) in enumerate(dyadic_bands(t_lo, t_hi)):
        rng = np.random.default_rng(trial_seed(cfg.seed, bi))
        mass = band_mass(np.pi * radius ** 2, t0, t1)
        n = rng.poisson(0.5 * cfg.c * mass)
        if n == 0:
            continue
        n_total += n
        if n_total > cfg.loop_budget:
            raise ValueError("cutoff too fine: expected loop count exceeds budget")
        ts = sample_band_durations(n, t0, t1, rng)
        roots = radius * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        paths = sample_bridges(n, cfg.m, rng) * np.sqrt(ts)[:, None] + roots[:, None]
        sup = np.abs(paths).max(axis=1)
        dx = paths.real.max(1) - paths.real.min(1)
        dy = paths.imag.max(1) - paths.imag.min(1)
        dia = np.hypot(dx, dy)
        keep = (sup < radius) & (dia >= cfg.delta)
        for i in np.nonzero(keep)[0]:
            loops.append(PolyLoop(paths[i, :-1]))
            durations.append(ts[i])
    return LoopSoup(loops, "brownian", cfg, np.array(durations))


def outer_boundary(bl: BrownianLoop, h: float) -> WernerLoop:
    """Outer boundary of the filled loop, traced as a simple ccw polyline.

    The filling uses the closing-radius hull (sub-sample fjords healed); the
    trace runs at pitch min(h, closing_r / 2).
    """
    path = bl.path.closed()
    dia = bl.path.diameter
    if dia < 2 * h:
        raise ValueError("sub-pitch loop")
    m = len(path) - 1
    r = max(CLOSING_BETA * np.sqrt(bl.duration / m), 2 * h)
    bits, origin, hh = planar.closing_fill_mask(path, r)
    return WernerLoop(
        planar.trace_boundary(GridRegion(hh, origin, bits)), parent_diameter=dia
    )


def sample_whole_plane_werner_soup(cfg: SoupConfig, trace: bool = True) -> LoopSoup:
    """Werner loop soup: boundaries of Brownian loops rooted in the R-window.

    Loops keep diameters in [delta, R/2]; the excluded large-diameter tail is
    recorded in the config contract (reported by estimators that care).
    With ``trace=False`` the raw Brownian paths are returned (kind 'brownian')
    for callers that evaluate hull functionals lazily.
    """
    d_lo, d_hi = cfg.delta, cfg.R / 2
    rough = _expected_count(cfg, np.pi * cfg.R ** 2, d_lo, d_hi)
    if rough > cfg.loop_budget * 50:
        raise ValueError("cutoff too fine: expected loop count exceeds budget")
    t_lo, t_hi = band_range_for_diams(d_lo, d_hi)
    loops, durations = [], []
    n_total = 0
    for bi, (t0, t1) in enumerate(dyadic_bands(t_lo, t_hi)):
        rng = np.random.default_rng(trial_seed(cfg.seed, 7_000_000 + bi))
        mass = band_mass(np.pi * cfg.R ** 2, t0, t1)
        n = rng.poisson(0.5 * cfg.c * mass)
        if n == 0:
            continue
        n_total += n
        if n_total > cfg.loop_budget:
            raise ValueError("cutoff too fine: expected loop count exceeds budget")
        ts = sample_band_durations(n, t0, t1, rng)
        roots = cfg.R * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        paths = sample_bridges(n, cfg.m, rng) * np.sqrt(ts)[:, None] + roots[:, None]
        dx = paths.real.max(1) - paths.real.min(1)
        dy = paths.imag.max(1) - paths.imag.min(1)
        dia = np.hypot(dx, dy)
        keep = (dia >= cfg.delta) & (dia <= cfg.R / 2)
        for i in np.nonzero(keep)[0]:
            if trace:
                wl = outer_boundary(
                    BrownianLoop(roots[i], ts[i], PolyLoop(paths[i, :-1])), h=cfg.h
                )
                loops.append(wl.boundary)
            else:
                loops.append(PolyLoop(paths[i, :-1]))
            durations.append(ts[i])
    return LoopSoup(loops, "werner" if trace else "brownian", cfg, np.array(durations))


# ---------------------------------------------------------------------------
# random-walk loop soup (independent discretization, used as a test oracle)

def rw_band_root_mass(n_lo: int, n_hi: int) -> float:
    """Per-root mass of rooted RW loops with half-length n in [n_lo, n_hi)."""
    from scipy.special import gammaln

    ns = np.arange(n_lo, n_hi)
    logq = 2 * (gammaln(2 * ns + 1) - 2 * gammaln(ns + 1) - 2 * ns * np.log(2.0))
    return float(np.sum(np.exp(logq) / (2 * ns)))


def sample_rw_loops(n_lo: int, n_hi: int, count: int, rng: np.random.Generator,
                    h: float) -> list[np.ndarray]:
    """RW loop paths (complex, closed) with half-length in [n_lo, n_hi).

    A 2D simple-walk bridge splits into two independent 1D +-1 bridges along
    the diagonals; each 1D bridge is a shuffled arrangement of n up / n down
    steps.
    """
    from scipy.special import gammaln

    ns = np.arange(n_lo, n_hi)
    logw = 2 * (gammaln(2 * ns + 1) - 2 * gammaln(ns + 1) - 2 * ns * np.log(2.0)) - np.log(2 * ns)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    picks = rng.choice(ns, size=count, p=w)
    out = []
    for n in picks:
        u = np.concatenate([np.ones(n), -np.ones(n)])
        v = u.copy()
        rng.shuffle(u)
        rng.shuffle(v)
        cu = np.concatenate([[0], np.cumsum(u)])
        cv = np.concatenate([[0], np.cumsum(v)])
        z = h * 0.5 * ((cu + cv) + 1j * (cu - cv))
        out.append(z)
    return out


__all__ = [
    "Estimate",
    "SoupConfig",
    "BrownianLoop",
    "WernerLoop",
    "LoopSoup",
    "LoopSample",
    "sample_bridges",
    "sample_domain_soup",
    "sample_whole_plane_werner_soup",
    "outer_boundary",
    "mass_estimate",
    "lambda_bl",
    "werner_hitting_mass",
    "SurroundsNormWindow",
    "SurroundsHitsCircle",
    "HitsBoth",
    "KAPPA_D",
    "CLOSING_BETA",
]
