"""Analytic rasterization of a genome into a labeled voxel grid.

Every solid is an explicit closed-form membership test evaluated at voxel
centers, so the grid is a pure deterministic function of the genome: no
meshing, no sampling noise, no worker-order dependence.  Frame convention:
x runs nose-to-tail, y spanwise (centerline at y = 0), z up, fuselage axis
at z = 0.  The grid is a cube; the y lattice is symmetric about the
centerline so mirrored parts rasterize to exactly mirrored voxels.

Paint order is fuselage, wing, vertical tail, horizontal tail, engines,
first writer wins: host structure keeps its voxels, so a part's overlap
with its host is readable straight off the labeled grid.

Single-engine designs always rear-mount with the nozzle protruding past
the tail cone; the nozzle is guaranteed at least 2.5 voxels of protrusion
at any resolution so the convention survives coarse rasterization.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .anatomy import AnatomyGenome, EnvelopeSpec, TailTopology, project_envelope

MIN_RESOLUTION = 16
UPSWEEP_DEG = 6.0          # tail-cone centerline rise
YEHUDI_FRACTION = 0.30     # semispan station of the trailing-edge break
FIN_ASPECT = 1.5           # fin height^2 / fin area
FIN_TAPER = 0.6
FIN_THICKNESS_RATIO = 0.10
HTAIL_TAPER = 0.7


class Label(enum.IntEnum):
    EMPTY = 0
    FUSELAGE = 1
    WING = 2
    VTAIL = 3
    HTAIL = 4
    ENGINE = 5


PART_LABELS = (Label.FUSELAGE, Label.WING, Label.VTAIL, Label.HTAIL, Label.ENGINE)


class ConfigError(ValueError):
    pass


@dataclass
class VoxelGrid:
    labels: np.ndarray          # uint8, shape (r, r, r), indexed [ix, iy, iz]
    voxel_pitch: float          # m
    origin: np.ndarray          # world position of the grid corner, m
    part_boxes: dict = field(default_factory=dict)  # label -> (lo_idx, hi_idx) paint region
    # Analytic bounding box of every rasterized solid, by label.  A part
    # painted flush against its host loses the buried voxels to the host
    # (first writer wins), so attachment checks need the solid's true box,
    # not the surviving-voxel box.
    solid_boxes: list = field(default_factory=list)  # (label, lo_idx, hi_idx)

    @property
    def resolution(self) -> int:
        return self.labels.shape[0]

    def centers(self, axis: int) -> np.ndarray:
        r = self.labels.shape[axis]
        return self.origin[axis] + (np.arange(r) + 0.5) * self.voxel_pitch

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.labels))

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=len(Label))


@dataclass
class PartAabb:
    part: Label
    lo: tuple[int, int, int]    # min occupied voxel index, inclusive
    hi: tuple[int, int, int]    # max occupied voxel index, inclusive
    characteristic_size: float  # m; engine diameter / surface thickness
    voxel_count: int
    mount_axis: int             # 0=x, 1=y, 2=z
    hosts: tuple[Label, ...]    # empty tuple: no mount requirement
    box_lo: tuple[int, int, int] | None = None  # analytic bounding volume,
    box_hi: tuple[int, int, int] | None = None  # defaults to occupied box

    @property
    def bounds(self) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
        return (self.box_lo or self.lo, self.box_hi or self.hi)


class EngineMount(enum.Enum):
    REAR = "rear"           # single engine embedded in the tail cone
    WING_POD = "wing_pod"
    SIDE = "side"           # fuselage-flank pods


def engine_mount_mode(genome: AnatomyGenome) -> EngineMount:
    # Mode is derived from existing genes rather than a dedicated one:
    # lone engines always rear-mount; far-aft twins read as flank pods.
    if genome.engine_count == 1:
        return EngineMount.REAR
    if genome.engine_count == 2 and genome.engine_x_pos > 0.75:
        return EngineMount.SIDE
    return EngineMount.WING_POD


# ---------------------------------------------------------------------------
# Derived geometry shared by rasterization, extent sizing, and physics
# ---------------------------------------------------------------------------

@dataclass
class Geometry:
    g: AnatomyGenome
    nose_len: float = 0.0
    tail_len: float = 0.0
    upsweep_slope: float = 0.0
    semispan: float = 0.0
    tip_chord: float = 0.0
    break_y: float = 0.0
    break_chord: float = 0.0
    sweep_slope: float = 0.0
    dihedral_slope: float = 0.0
    wing_z0: float = 0.0
    wing_x_le: float = 0.0
    has_fin: bool = False
    fin_height: float = 0.0
    fin_root_chord: float = 0.0
    fin_x_le: float = 0.0
    fin_z_base: float = 0.0
    fin_sweep_slope: float = 0.0
    fin_cant_rad: float = 0.0
    has_htail: bool = False
    htail_z: float = 0.0
    htail_x_le: float = 0.0
    htail_sweep_slope: float = 0.0

    def __post_init__(self):
        g = self.g
        rf = g.fuselage_radius
        ln = g.nose_fineness * rf
        lt = g.tailcone_fineness * rf
        total = ln + lt
        if total > 0.9 * g.fuselage_length:
            scale = 0.9 * g.fuselage_length / total
            ln *= scale
            lt *= scale
        self.nose_len, self.tail_len = ln, lt
        self.upsweep_slope = math.tan(math.radians(UPSWEEP_DEG))

        self.semispan = 0.5 * g.wing_span
        self.tip_chord = g.wing_taper * g.wing_root_chord
        self.break_y = YEHUDI_FRACTION * self.semispan
        self.sweep_slope = math.tan(math.radians(g.wing_sweep))
        self.dihedral_slope = math.tan(math.radians(g.wing_dihedral))
        self.wing_z0 = g.wing_z_pos * rf
        self.wing_x_le = g.wing_x_pos * g.fuselage_length
        self.break_chord = max(g.wing_root_chord - self.break_y * self.sweep_slope,
                               0.05 * g.wing_root_chord)

        self.has_fin = g.vtail_exists > 0.5 and g.topology is not TailTopology.FLYING_WING
        if self.has_fin:
            self.fin_height = math.sqrt(FIN_ASPECT * g.vtail_size)
            self.fin_root_chord = 2.0 * g.vtail_size / (self.fin_height * (1.0 + FIN_TAPER))
            self.fin_x_le = max(g.fuselage_length - self.fin_root_chord, 0.0)
            self.fin_z_base = self.centerline_z(g.fuselage_length - 0.5 * self.fin_root_chord)
            self.fin_sweep_slope = math.tan(math.radians(g.vtail_sweep))
            self.fin_cant_rad = (math.radians(g.vtail_cant)
                                 if g.topology is TailTopology.V_TAIL else 0.0)

        self.has_htail = (g.htail_exists > 0.5
                          and g.topology not in (TailTopology.V_TAIL, TailTopology.FLYING_WING))
        if self.has_htail:
            span_ref = self.fin_height if self.has_fin else 2.0 * rf
            base = self.fin_z_base if self.has_fin else self.centerline_z(g.fuselage_length - 0.5 * g.htail_chord)
            self.htail_z = base + g.htail_z_pos * span_ref
            self.htail_sweep_slope = math.tan(math.radians(0.6 * g.vtail_sweep))
            if self.has_fin:
                u = g.htail_z_pos * self.fin_height
                self.htail_x_le = self.fin_x_le + u * self.fin_sweep_slope
            else:
                self.htail_x_le = g.fuselage_length - 1.1 * g.htail_chord

    # -- fuselage ----------------------------------------------------------
    def radius_at(self, x):
        """Body radius at absolute station x (vectorized)."""
        g = self.g
        x = np.asarray(x, dtype=float)
        r = np.full_like(x, g.fuselage_radius)
        ln, lt, L = self.nose_len, self.tail_len, g.fuselage_length
        nose = x < ln
        frac = np.clip((ln - x) / max(ln, 1e-9), 0.0, 1.0)
        r = np.where(nose, g.fuselage_radius * np.sqrt(np.clip(1.0 - frac**2, 0.0, 1.0)), r)
        tail = x > L - lt
        r = np.where(tail, g.fuselage_radius * np.clip((L - x) / max(lt, 1e-9), 0.0, 1.0), r)
        outside = (x < 0.0) | (x > L)
        return np.where(outside, 0.0, r)

    def centerline_z(self, x):
        """Tail-cone upsweep: the body axis rises toward the tail."""
        x = np.asarray(x, dtype=float)
        start = self.g.fuselage_length - self.tail_len
        return np.where(x > start, (x - start) * self.upsweep_slope, 0.0)

    # -- wing --------------------------------------------------------------
    def wing_chord(self, y_abs):
        """Chord at spanwise station |y| with the trailing-edge break."""
        g = self.g
        y = np.asarray(y_abs, dtype=float)
        c_in = g.wing_root_chord - y * self.sweep_slope
        out_frac = np.clip((y - self.break_y) / max(self.semispan - self.break_y, 1e-9), 0.0, 1.0)
        c_out = self.break_chord + (self.tip_chord - self.break_chord) * out_frac
        c = np.where(y <= self.break_y, c_in, c_out)
        return np.maximum(c, 0.02 * g.wing_root_chord)

    def wing_le(self, y_abs):
        return self.wing_x_le + np.asarray(y_abs, dtype=float) * self.sweep_slope

    def wing_z(self, y_abs):
        return self.wing_z0 + np.asarray(y_abs, dtype=float) * self.dihedral_slope

    def wing_area(self) -> float:
        """Planform area (both sides), integrating the broken trapezoid."""
        ys = np.linspace(0.0, self.semispan, 257)
        return 2.0 * float(np.trapezoid(self.wing_chord(ys), ys))

    def mean_aero_chord(self) -> float:
        ys = np.linspace(0.0, self.semispan, 257)
        c = self.wing_chord(ys)
        area = np.trapezoid(c, ys)
        return float(np.trapezoid(c**2, ys) / max(area, 1e-9))

    # -- fin / htail -------------------------------------------------------
    def fin_chord(self, u):
        u = np.asarray(u, dtype=float)
        frac = np.clip(u / max(self.fin_height, 1e-9), 0.0, 1.0)
        return self.fin_root_chord * (1.0 - (1.0 - FIN_TAPER) * frac)

    def htail_chord_at(self, y_abs):
        g = self.g
        y = np.asarray(y_abs, dtype=float)
        frac = np.clip(y / max(0.5 * g.htail_span, 1e-9), 0.0, 1.0)
        return g.htail_chord * (1.0 - (1.0 - HTAIL_TAPER) * frac)

    def htail_area(self) -> float:
        if not self.has_htail:
            return 0.0
        return 0.5 * (1.0 + HTAIL_TAPER) * self.g.htail_chord * self.g.htail_span

    # -- engines -----------------------------------------------------------
    def engine_stations(self) -> list[dict]:
        """World placement of every engine pod plus its pylon geometry."""
        g = self.g
        mode = engine_mount_mode(g)
        le, re_ = g.engine_length, 0.5 * g.engine_size
        L = g.fuselage_length
        out = []
        if mode is EngineMount.REAR:
            start = max(L - 0.78 * le, 0.72 * L)
            mid = min(0.5 * (start + start + le), L)
            out.append(dict(mode=mode, y=0.0, z=float(self.centerline_z(mid)),
                            x0=start, x1=start + le, pylon=None))
            return out
        x_c = g.engine_x_pos * L
        x0, x1 = x_c - 0.5 * le, x_c + 0.5 * le
        if mode is EngineMount.SIDE:
            r_loc = float(self.radius_at(np.clip(x_c, 0.0, L)))
            z_e = float(self.centerline_z(np.clip(x_c, 0.0, L))) + 0.25 * g.fuselage_radius
            y_e = r_loc + 1.02 * re_
            pylon = None
            if r_loc > 0.05 * g.fuselage_radius:
                pylon = dict(axis="y", inner=0.55 * r_loc, outer=y_e,
                             x0=x_c - 0.3 * le, x1=x_c + 0.3 * le, at=z_e)
            for s in (1.0, -1.0):
                out.append(dict(mode=mode, y=s * y_e, z=z_e, x0=x0, x1=x1,
                                pylon=None if pylon is None else dict(pylon, side=s)))
            return out
        stations = [g.engine_spanwise * self.semispan]
        if g.engine_count == 4:
            stations.append(0.55 * stations[0])
        for y_s in stations:
            z_w = float(self.wing_z(y_s))
            t_loc = float(self.g.wing_thickness * self.wing_chord(y_s))
            z_e = z_w - 0.5 * t_loc - 1.05 * re_
            pylon = dict(axis="z", inner=z_w + 0.3 * t_loc, outer=z_e,
                         x0=x_c - 0.3 * le, x1=x_c + 0.3 * le, at=y_s)
            for s in (1.0, -1.0):
                out.append(dict(mode=mode, y=s * y_s, z=z_e, x0=x0, x1=x1,
                                pylon=dict(pylon, side=s)))
        return out

    # -- overall extent ----------------------------------------------------
    def extents(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.g
        L, rf = g.fuselage_length, g.fuselage_radius
        zc_tail = float(self.centerline_z(L))
        x_min, x_max = 0.0, L
        y_max = max(self.semispan, rf)
        z_min, z_max = -rf, rf + zc_tail
        z_w_tip = self.wing_z0 + self.semispan * abs(self.dihedral_slope)
        t_root = g.wing_thickness * g.wing_root_chord
        z_min = min(z_min, self.wing_z0 - self.semispan * abs(self.dihedral_slope) - t_root)
        z_max = max(z_max, z_w_tip + t_root)
        x_max = max(x_max, self.wing_x_le + g.wing_root_chord,
                    float(self.wing_le(self.semispan)) + float(self.wing_chord(self.semispan)))
        if self.has_fin:
            th = self.fin_cant_rad
            z_max = max(z_max, self.fin_z_base + self.fin_height * math.cos(th))
            y_max = max(y_max, self.fin_height * math.sin(th) + 0.5 * FIN_THICKNESS_RATIO * self.fin_root_chord)
            x_max = max(x_max, self.fin_x_le + self.fin_height * self.fin_sweep_slope
                        + float(self.fin_chord(self.fin_height)))
        if self.has_htail:
            y_max = max(y_max, 0.5 * g.htail_span)
            z_max = max(z_max, self.htail_z + g.wing_thickness * g.htail_chord)
            x_max = max(x_max, self.htail_x_le + 0.5 * g.htail_span * abs(self.htail_sweep_slope)
                        + g.htail_chord)
        for st in self.engine_stations():
            re_ = 0.5 * g.engine_size
            x_min = min(x_min, st["x0"])
            x_max = max(x_max, st["x1"])
            y_max = max(y_max, abs(st["y"]) + re_)
            z_min = min(z_min, st["z"] - re_)
            z_max = max(z_max, st["z"] + re_)
        lo = np.array([x_min, -y_max, z_min])
        hi = np.array([x_max, y_max, z_max])
        return lo, hi


# ---------------------------------------------------------------------------
# Rasterizer
# ---------------------------------------------------------------------------

def fuselage_radius_profile(x_frac: float, genome: AnatomyGenome) -> float:
    """Body radius at fractional station x_frac in [0, 1]."""
    if not 0.0 <= x_frac <= 1.0:
        raise ValueError(f"x_frac={x_frac} outside [0, 1]")
    geo = Geometry(genome)
    return float(geo.radius_at(np.asarray(x_frac * genome.fuselage_length)))


class _Painter:
    def __init__(self, grid: VoxelGrid):
        self.grid = grid
        self.res = grid.resolution
        self.pitch = grid.voxel_pitch
        self.axes = [grid.centers(a) for a in range(3)]

    def idx_range(self, lo: float, hi: float, axis: int) -> tuple[int, int]:
        p, o = self.pitch, self.grid.origin[axis]
        i0 = int(math.floor((lo - o) / p - 0.5))
        i1 = int(math.ceil((hi - o) / p + 0.5))
        return max(i0, 0), min(i1, self.res - 1)

    def paint(self, label: Label, lo_w, hi_w, membership) -> None:
        """Evaluate membership(x, y, z) on the sub-box and paint empty cells."""
        rngs = [self.idx_range(lo_w[a], hi_w[a], a) for a in range(3)]
        if any(r[0] > r[1] for r in rngs):
            return
        (x0, x1), (y0, y1), (z0, z1) = rngs
        xs = self.axes[0][x0:x1 + 1][:, None, None]
        ys = self.axes[1][y0:y1 + 1][None, :, None]
        zs = self.axes[2][z0:z1 + 1][None, None, :]
        mask = membership(xs, ys, zs)
        if not mask.any():
            return
        region = self.grid.labels[x0:x1 + 1, y0:y1 + 1, z0:z1 + 1]
        np.copyto(region, np.uint8(label), where=mask & (region == 0))
        lo_idx = np.array([x0, y0, z0])
        hi_idx = np.array([x1, y1, z1])
        self.grid.solid_boxes.append((label, tuple(lo_idx), tuple(hi_idx)))
        if label in self.grid.part_boxes:
            plo, phi = self.grid.part_boxes[label]
            lo_idx = np.minimum(lo_idx, plo)
            hi_idx = np.maximum(hi_idx, phi)
        self.grid.part_boxes[label] = (lo_idx, hi_idx)


def voxelize(genome: AnatomyGenome, env: EnvelopeSpec, resolution: int = 96) -> VoxelGrid:
    """Rasterize the genome into a labeled cubic grid (deterministic).

    The envelope projection is applied internally (it is idempotent), so
    the emitted grid always respects the engine caps by construction.
    """
    if resolution < MIN_RESOLUTION:
        raise ConfigError(f"resolution {resolution} below minimum {MIN_RESOLUTION}")
    g = project_envelope(genome, env)
    geo = Geometry(g)
    lo, hi = geo.extents()
    span = float(np.max(hi - lo))
    side = span * (1.04 + 3.0 / resolution)
    pitch = side / resolution
    mid = 0.5 * (lo + hi)
    origin = mid - 0.5 * side
    origin[1] = -0.5 * side  # y lattice symmetric about the centerline

    grid = VoxelGrid(labels=np.zeros((resolution,) * 3, dtype=np.uint8),
                     voxel_pitch=pitch, origin=origin)
    painter = _Painter(grid)
    guard = 0.6 * pitch          # thin sheets stay visible at coarse pitch
    r_guard = 0.75 * pitch       # same for slender cylinders

    # fuselage
    L, rf = g.fuselage_length, g.fuselage_radius
    z_top = rf + float(geo.centerline_z(L))

    def fuselage_member(x, y, z):
        r = geo.radius_at(x)
        # no lattice column passes exactly through the axis, so a very
        # slender body needs the same thin-solid guard as the other parts
        r = np.where(r > 0.0, np.maximum(r, r_guard), 0.0)
        zc = geo.centerline_z(x)
        return y**2 + (z - zc)**2 <= r**2

    painter.paint(Label.FUSELAGE, (0.0, -rf, -rf), (L, rf, z_top), fuselage_member)

    # wing (both sides in one even-in-y test)
    t_root = g.wing_thickness * g.wing_root_chord
    wing_lo = (float(geo.wing_le(0)) - 0.1,
               -geo.semispan,
               geo.wing_z0 - geo.semispan * abs(geo.dihedral_slope) - t_root)
    wing_hi = (max(geo.wing_x_le + g.wing_root_chord,
                   float(geo.wing_le(geo.semispan)) + float(geo.wing_chord(geo.semispan))) + 0.1,
               geo.semispan,
               geo.wing_z0 + geo.semispan * abs(geo.dihedral_slope) + t_root)

    def wing_member(x, y, z):
        ya = np.abs(y)
        inside_span = ya <= geo.semispan
        le = geo.wing_le(ya)
        chord = geo.wing_chord(ya)
        half = np.maximum(0.5 * g.wing_thickness * chord, guard)
        return (inside_span & (x >= le) & (x <= le + chord)
                & (np.abs(z - geo.wing_z(ya)) <= half))

    painter.paint(Label.WING, wing_lo, wing_hi, wing_member)

    # vertical tail (one vertical fin, or two canted surfaces for a V-tail)
    if geo.has_fin:
        th = geo.fin_cant_rad
        sin_t, cos_t = math.sin(th), math.cos(th)
        half_root = max(0.5 * FIN_THICKNESS_RATIO * geo.fin_root_chord, guard)
        fin_lo = (geo.fin_x_le - 0.1,
                  -(geo.fin_height * sin_t + half_root),
                  geo.fin_z_base - 0.05 * geo.fin_height)
        fin_hi = (geo.fin_x_le + geo.fin_height * abs(geo.fin_sweep_slope)
                  + geo.fin_root_chord + 0.1,
                  geo.fin_height * sin_t + half_root,
                  geo.fin_z_base + geo.fin_height * cos_t + half_root)
        sides = (1.0, -1.0) if g.topology is TailTopology.V_TAIL else (1.0,)

        def fin_member(x, y, z):
            dz = z - geo.fin_z_base
            hit = np.zeros(np.broadcast_shapes(x.shape, y.shape, z.shape), dtype=bool)
            for s in sides:
                u = s * sin_t * y + cos_t * dz
                v = s * cos_t * y - sin_t * dz
                chord = geo.fin_chord(u)
                le = geo.fin_x_le + u * geo.fin_sweep_slope
                half = np.maximum(0.5 * FIN_THICKNESS_RATIO * chord, guard)
                hit |= ((u >= 0.0) & (u <= geo.fin_height)
                        & (x >= le) & (x <= le + chord) & (np.abs(v) <= half))
            return hit

        painter.paint(Label.VTAIL, fin_lo, fin_hi, fin_member)

    # horizontal tail
    if geo.has_htail:
        bh = 0.5 * g.htail_span
        t_h = max(0.5 * g.wing_thickness * g.htail_chord, guard)
        ht_lo = (geo.htail_x_le - 0.1, -bh, geo.htail_z - t_h)
        ht_hi = (geo.htail_x_le + bh * abs(geo.htail_sweep_slope) + g.htail_chord + 0.1,
                 bh, geo.htail_z + t_h)

        def htail_member(x, y, z):
            ya = np.abs(y)
            le = geo.htail_x_le + ya * geo.htail_sweep_slope
            chord = geo.htail_chord_at(ya)
            half = np.maximum(0.5 * g.wing_thickness * chord, guard)
            return ((ya <= bh) & (x >= le) & (x <= le + chord)
                    & (np.abs(z - geo.htail_z) <= half))

        painter.paint(Label.HTAIL, ht_lo, ht_hi, htail_member)

    # engines (pod cylinders plus mounting pylons, same label)
    re_eff = max(0.5 * g.engine_size, r_guard)
    for st in geo.engine_stations():
        x0, x1 = st["x0"], st["x1"]
        if st["mode"] is EngineMount.REAR:
            x1 = max(x1, L + 2.5 * pitch)  # nozzle must clear the tail cone
        y_e, z_e = st["y"], st["z"]

        def pod_member(x, y, z, x0=x0, x1=x1, y_e=y_e, z_e=z_e):
            return (x >= x0) & (x <= x1) & ((y - y_e)**2 + (z - z_e)**2 <= re_eff**2)

        painter.paint(Label.ENGINE,
                      (x0, y_e - re_eff, z_e - re_eff),
                      (x1, y_e + re_eff, z_e + re_eff), pod_member)
        py = st.get("pylon")
        if py is not None:
            w = max(0.12 * g.engine_size, guard)
            p0, p1 = sorted((py["inner"], py["outer"]))
            if py["axis"] == "z":
                lo_w = (py["x0"], py["side"] * py["at"] - w, p0)
                hi_w = (py["x1"], py["side"] * py["at"] + w, p1)

                def pylon_member(x, y, z, py=py, w=w, p0=p0, p1=p1):
                    return ((x >= py["x0"]) & (x <= py["x1"])
                            & (np.abs(y - py["side"] * py["at"]) <= w)
                            & (z >= p0) & (z <= p1))
            else:
                q0, q1 = sorted((py["side"] * py["inner"], py["side"] * py["outer"]))
                lo_w = (py["x0"], q0, py["at"] - w)
                hi_w = (py["x1"], q1, py["at"] + w)

                def pylon_member(x, y, z, py=py, w=w, q0=q0, q1=q1):
                    return ((x >= py["x0"]) & (x <= py["x1"])
                            & (y >= q0) & (y <= q1)
                            & (np.abs(z - py["at"]) <= w))

            painter.paint(Label.ENGINE, lo_w, hi_w, pylon_member)

    return grid


# ---------------------------------------------------------------------------
# Part extraction
# ---------------------------------------------------------------------------

_26 = np.ones((3, 3, 3), dtype=bool)


def characteristic_size(label: Label, genome: AnatomyGenome) -> float:
    if label is Label.ENGINE:
        return genome.engine_size
    if label is Label.HTAIL:
        return genome.wing_thickness * genome.htail_chord
    if label is Label.VTAIL:
        geo = Geometry(genome)
        return FIN_THICKNESS_RATIO * max(geo.fin_root_chord, 1e-6)
    if label is Label.WING:
        return genome.wing_thickness * genome.wing_root_chord
    return 2.0 * genome.fuselage_radius


def part_hosts(label: Label, genome: AnatomyGenome) -> tuple[Label, ...]:
    if label is Label.ENGINE:
        return (Label.FUSELAGE, Label.WING)
    if label is Label.HTAIL:
        if genome.topology in (TailTopology.T_TAIL, TailTopology.CRUCIFORM):
            return (Label.VTAIL,)
        return (Label.FUSELAGE,)
    if label is Label.VTAIL:
        return (Label.FUSELAGE,)
    return ()


def part_mount_axis(label: Label, genome: AnatomyGenome) -> int:
    if label is Label.ENGINE:
        return 1 if engine_mount_mode(genome) is EngineMount.SIDE else 0
    return 2  # stabilizers attach along the vertical


def part_bounds(grid: VoxelGrid, genome: AnatomyGenome) -> list[PartAabb]:
    """One AABB per connected component per non-empty label."""
    if grid.occupied_count() == 0:
        raise ValueError("empty grid")
    parts: list[PartAabb] = []
    for label in PART_LABELS:
        if label in grid.part_boxes:
            lo, hi = grid.part_boxes[label]
            sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))
        else:
            lo = np.zeros(3, dtype=int)
            sl = (slice(None),) * 3
        mask = grid.labels[sl] == int(label)
        if not mask.any():
            continue
        comp, n = ndimage.label(mask, structure=_26)
        objects = ndimage.find_objects(comp)
        solids = [(slo, shi) for (slabel, slo, shi) in grid.solid_boxes if slabel == label]
        for i, obj in enumerate(objects):
            count = int(np.count_nonzero(comp[obj] == i + 1))
            lo_idx = tuple(int(s.start + off) for s, off in zip(obj, lo))
            hi_idx = tuple(int(s.stop - 1 + off) for s, off in zip(obj, lo))
            box_lo, box_hi = np.array(lo_idx), np.array(hi_idx)
            for slo, shi in solids:
                touches = all(s0 <= h + 1 and s1 >= l - 1
                              for s0, s1, l, h in zip(slo, shi, lo_idx, hi_idx))
                if touches:
                    box_lo = np.minimum(box_lo, slo)
                    box_hi = np.maximum(box_hi, shi)
            parts.append(PartAabb(
                part=label, lo=lo_idx, hi=hi_idx,
                characteristic_size=characteristic_size(label, genome),
                voxel_count=count,
                mount_axis=part_mount_axis(label, genome),
                hosts=part_hosts(label, genome),
                box_lo=tuple(int(v) for v in box_lo),
                box_hi=tuple(int(v) for v in box_hi),
            ))
    return parts
