"""Shape prior: a voxel VAE whose leading latent axes are the genome.

Trained on a self-generated corpus of (labeled voxel grid, generating
parameters) pairs.  The first 25 of 48 latent dimensions are supervised to
equal the normalized genome that produced the grid, under reduced KL
pressure so they stay near-deterministic; the remaining free dimensions
absorb residual shape variation under the usual annealed KL term.

The encoder front-end is a fixed measurement bank: per-part slab profiles
(widths, chords, leading edges, centroids, in meters) read directly off
the labeled grid, the way a drafter would dimension a three-view drawing.
A desk-scale corpus is a few hundred samples, far too few for a generic
3-D convnet to learn to measure geometry from scratch; handing it the
measurements makes the supervised axes converge within a few epochs.  A
small convolutional tower over the raw occupancy still feeds the latent
so residual shape detail has a path in.

At search time the model is a regularizer only: a candidate vector is
rendered, encoded, and charged the Euclidean distance between itself and
the supervised posterior mean (its projection onto the learned manifold).
Geometry always comes from the analytic rasterizer, never the decoder.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from . import anatomy
from .anatomy import EnvelopeSpec, NormalizedGenome, TOPOLOGIES
from .voxelizer import Label, voxelize

MAGIC = b"AVPM"
FORMAT_VERSION = 2

# Masses representative of the three seeding tiers; the corpus cycles
# through them so the prior sees every scale.
CORPUS_TIER_MASSES = (800.0, 9000.0, 45000.0)

# Generous box so corpus geometry is never envelope-clamped.
CORPUS_ENVELOPE = EnvelopeSpec(box_length=60.0, box_height=40.0, box_width=70.0,
                               engine_max_length=6.0, engine_max_diameter=3.0)


@dataclass
class PriorConfig:
    latent_dim: int = 48
    supervised_dim: int = 25
    alpha: float = 0.05              # KL down-weight on supervised axes
    beta_max: float = 0.5
    beta_anneal_epochs: int = 10
    align_weight: float = 30.0       # supervised alignment loss weight
    grid_resolution: int = 32
    corpus_size: int = 4000
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 2e-3
    grad_clip: float = 5.0
    recon_scale: float = 256.0   # reference voxel count for the BCE mean
    base_channels: int = 4
    hidden: int = 256
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.supervised_dim < self.latent_dim:
            raise ValueError("supervised split must leave free dimensions")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.align_weight <= 0.0:
            raise ValueError("align_weight must be positive")
        if self.grid_resolution % 8:
            raise ValueError("grid resolution must be divisible by 8")


@dataclass
class LossBreakdown:
    recon_bce: float
    kl_supervised: float
    kl_free: float
    alignment: float
    beta: float
    total: float


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


def beta_schedule(epoch: int, cfg: PriorConfig) -> float:
    """Linear KL warm-up: 0 at epoch 0, beta_max from the anneal horizon on."""
    horizon = max(cfg.beta_anneal_epochs, 1)
    return cfg.beta_max * min(1.0, epoch / horizon)


# ---------------------------------------------------------------------------
# Measurement bank
# ---------------------------------------------------------------------------

def _first_last(occupied: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """First/last True index along dim 1 and a presence mask; 0 when absent."""
    present = occupied.any(dim=1)
    first = torch.argmax(occupied.float(), dim=1)
    last = occupied.shape[1] - 1 - torch.argmax(occupied.flip(1).float(), dim=1)
    zero = torch.zeros_like(first)
    return (torch.where(present, first, zero),
            torch.where(present, last, zero), present)


def _line_fit(y: torch.Tensor, x: torch.Tensor, w: torch.Tensor
              ) -> tuple[torch.Tensor, torch.Tensor]:
    """Weighted least-squares slope/intercept per row; zeros when degenerate.

    Single-slab measurements are quantized to the voxel pitch; fitting a
    line across every occupied slab recovers sub-voxel geometry.
    """
    sw = w.sum(dim=1).clamp(min=1e-6)
    mx = (w * x).sum(dim=1) / sw
    my = (w * y).sum(dim=1) / sw
    sxx = (w * (x - mx[:, None]) ** 2).sum(dim=1)
    sxy = (w * (x - mx[:, None]) * (y - my[:, None])).sum(dim=1)
    slope = torch.where(sxx > 1e-9, sxy / sxx.clamp(min=1e-9), torch.zeros_like(sxx))
    return slope, my - slope * mx


def _slab_stats(m: torch.Tensor, keep: int, coord: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-slab (along `keep`) extent, min, and centroid of axis `coord`.

    m is a (B, R, R, R) float mask; returns three (B, R) tensors in index
    units, zeroed where the slab is empty.
    """
    dims = [d for d in (1, 2, 3) if d != keep]
    proj_dims = [d for d in (1, 2, 3) if d not in (keep, coord)]
    flat = m.sum(dim=proj_dims[0])  # (B, a, b) with axes (coord, keep) in order
    if coord > keep:
        flat = flat.transpose(1, 2)  # -> (B, coord, keep)
    occ = flat > 0
    # first/last along coord per keep-slab
    present = occ.any(dim=1)
    first = torch.argmax(occ.float(), dim=1)
    last = occ.shape[1] - 1 - torch.argmax(occ.flip(1).float(), dim=1)
    extent = torch.where(present, (last - first + 1).float(), torch.zeros_like(first, dtype=torch.float32))
    start = torch.where(present, first.float(), torch.zeros_like(extent))
    r = flat.shape[1]
    idx = torch.arange(r, dtype=torch.float32, device=m.device).view(1, r, 1)
    cnt = flat.sum(dim=1)
    centroid = (flat * idx).sum(dim=1) / cnt.clamp(min=1e-6)
    centroid = torch.where(present, centroid, torch.zeros_like(centroid))
    return extent, start, centroid


def _measure_all(labels: torch.Tensor, pitch: torch.Tensor
                 ) -> tuple[torch.Tensor, torch.Tensor]:
    """Dimension the grid like a drafter reading a three-view drawing.

    Returns (features, estimates): a wide bank of profiles and scalars for
    the learned heads, plus one designated direct estimate per genome axis
    in normalized units (clamped), each individually calibrated at train
    time by simple regression.  Axes whose geometry is fundamentally
    sub-voxel at this resolution get a weak estimate and calibrate toward
    the corpus mean, which is exactly the right fallback.
    """
    B, R = labels.shape[0], labels.shape[1]
    p = pitch.view(B, 1)
    feats: list[torch.Tensor] = []

    def scal(v):
        feats.append(v.view(B, 1).float())

    masks = {lab: (labels == int(lab)).float() for lab in
             (Label.FUSELAGE, Label.WING, Label.VTAIL, Label.HTAIL, Label.ENGINE)}

    # fuselage: width and vertical-centerline profiles along x
    mf = masks[Label.FUSELAGE]
    w_ext, _, _ = _slab_stats(mf, keep=1, coord=2)      # y-width per x
    z_ext, _, z_cen = _slab_stats(mf, keep=1, coord=3)  # z per x
    feats += [w_ext * p, z_ext * p, z_cen * p / 10.0]
    fx0, fx1, fpres = _first_last(mf.sum(dim=(2, 3)) > 0)
    length = (fx1 - fx0 + 1).float() * p.squeeze(1) * fpres
    radius = 0.5 * w_ext.amax(dim=1) * p.squeeze(1)
    scal(length)
    scal(radius)
    scal(length / radius.clamp(min=1e-3))
    scal(mf.sum(dim=(1, 2, 3)) * p.squeeze(1) ** 3)
    # nose/tail lengths: stations where the width profile crosses 92% of max
    wide = w_ext >= 0.92 * w_ext.amax(dim=1, keepdim=True).clamp(min=1e-6)
    n0, n1, _ = _first_last(wide)
    scal((n0 - fx0).float() * p.squeeze(1))
    scal((fx1 - n1).float() * p.squeeze(1))
    scal((n0 - fx0).float() / (radius / p.squeeze(1)).clamp(min=1e-3))
    scal((fx1 - n1).float() / (radius / p.squeeze(1)).clamp(min=1e-3))
    # sub-voxel fineness from cross-section deficits over the taper
    # regions only: the body is a cylinder of slab area c_ref except over
    # the nose (quadratic taper, deficit = c_ref*Ln/3) and the tail cone
    # (deficit = 2*c_ref*Lt/3).  Summing the deficit over the constant
    # section would integrate pure rasterization noise.
    cprof = mf.sum(dim=(2, 3))
    idx_x = torch.arange(R, dtype=torch.float32).view(1, R)
    occ_slab = cprof > 0
    wide_f = wide.float()
    c_ref = (cprof * wide_f).sum(dim=1) / wide_f.sum(dim=1).clamp(min=1.0)
    c_ref = c_ref.clamp(min=1e-6)
    front = (occ_slab & (idx_x < n0.view(B, 1))).float()
    rear = (occ_slab & (idx_x > n1.view(B, 1))).float()
    front_def = ((c_ref[:, None] - cprof) * front).sum(dim=1).clamp(min=0.0)
    rear_def = ((c_ref[:, None] - cprof) * rear).sum(dim=1).clamp(min=0.0)
    r_area = torch.sqrt(c_ref / math.pi) * p.squeeze(1)  # radius from slab area
    r_bins = (r_area / p.squeeze(1)).clamp(min=1e-3)
    scal(3.2 * front_def / c_ref / r_bins)   # nose fineness estimate
    scal(1.6 * rear_def / c_ref / r_bins)    # tail-cone fineness estimate
    scal(r_area)
    scal(length / r_area.clamp(min=1e-3))
    w_mean = (w_ext * wide_f).sum(dim=1) / wide_f.sum(dim=1).clamp(min=1.0)
    scal(0.5 * w_mean * p.squeeze(1))
    fus_zmid_prof = z_cen  # index units, per x-slab

    # wing: chord/leading-edge/height profiles along y
    mw = masks[Label.WING]
    chord, le, _ = _slab_stats(mw, keep=2, coord=1)
    _, _, zc = _slab_stats(mw, keep=2, coord=3)
    feats += [chord * p, le * p / 10.0, zc * p / 10.0]
    wy0, wy1, wpres = _first_last(mw.sum(dim=(1, 3)) > 0)
    span = (wy1 - wy0 + 1).float() * p.squeeze(1) * wpres
    scal(span)
    scal(mw.sum(dim=(1, 2, 3)) * p.squeeze(1) ** 3)
    wz_ext, _, _ = _slab_stats(mw, keep=2, coord=3)
    scal(wz_ext.amax(dim=1) * p.squeeze(1))

    # fin: chord/le/lateral-spread profiles along z
    mv = masks[Label.VTAIL]
    vchord, vle, _ = _slab_stats(mv, keep=3, coord=1)
    vy_ext, _, _ = _slab_stats(mv, keep=3, coord=2)
    feats += [vchord * p, vle * p / 10.0, vy_ext * p]
    vz0, vz1, vpres = _first_last(mv.sum(dim=(1, 2)) > 0)
    fin_h = (vz1 - vz0 + 1).float() * p.squeeze(1) * vpres
    scal(vpres.float())
    scal(fin_h)
    scal(mv.sum(dim=(1, 2, 3)) * p.squeeze(1) ** 3)

    # horizontal tail
    mh = masks[Label.HTAIL]
    hchord, hle, _ = _slab_stats(mh, keep=2, coord=1)
    feats += [hchord * p, hle * p / 10.0]
    hy0, hy1, hpres = _first_last(mh.sum(dim=(1, 3)) > 0)
    scal(hpres.float())
    scal((hy1 - hy0 + 1).float() * p.squeeze(1) * hpres)
    _, _, h_zc = _slab_stats(mh, keep=2, coord=3)
    h_z = (mh.sum(dim=(1, 2)) * torch.arange(R, dtype=torch.float32).view(1, R)).sum(1) \
        / mh.sum(dim=(1, 2, 3)).clamp(min=1e-6)
    scal(h_z * p.squeeze(1) / 10.0 * hpres)
    fin_bins = (fin_h / p.squeeze(1)).clamp(min=1e-3)
    scal(((h_z - vz0.float()) / fin_bins).clamp(-0.5, 1.5) * hpres * vpres)
    scal(((vz1.float() - h_z) / fin_bins).clamp(-0.5, 1.5) * hpres * vpres)
    scal((h_z - vz0.float()) * p.squeeze(1) * hpres * vpres)
    scal((vz1.float() - h_z) * p.squeeze(1) * hpres * vpres)
    hz_frac = ((h_z - vz0.float()) / fin_bins).clamp(-0.5, 1.5)
    both = hpres.float() * vpres.float()
    # order statistic: share of fin material below the stabilizer height;
    # voxel counts stay reliable when the fin is only a few slabs tall
    v_zprof = masks[Label.VTAIL].sum(dim=(1, 2))
    below = (v_zprof * (torch.arange(R, dtype=torch.float32).view(1, R)
                        < h_z.view(B, 1)).float()).sum(dim=1)
    fin_below = (below / v_zprof.sum(dim=1).clamp(min=1e-6)) * both
    scal(fin_below)
    # The gene measures height from the fin's structural base on the body
    # centerline; the fin root below the skin is painted as fuselage, so
    # the base must come from the body axis, not the first fin voxel.
    v_xprof = masks[Label.VTAIL].sum(dim=(2, 3))
    fus_xprof = mf.sum(dim=(2, 3))
    wgt = (v_xprof > 0).float() * fus_xprof
    z_base = (z_cen * wgt).sum(dim=1) / wgt.sum(dim=1).clamp(min=1e-6)
    full_h = (vz1.float() - z_base).clamp(min=1e-3)
    hz_full = ((h_z - z_base) / full_h).clamp(-0.3, 1.3) * both
    scal(hz_full)
    scal((h_z - z_base) * p.squeeze(1) * both)
    scal((hz_full < 0.25).float() * both)                         # fuselage-mounted tail
    scal(((hz_full >= 0.25) & (hz_full <= 0.80)).float() * both)  # mid-fin tail
    scal((hz_full > 0.80).float() * both)                         # fin-top tail
    scal(((vz1.float() - h_z) < 1.6).float() * both)              # touching the fin top
    scal(((h_z - z_base) < 1.6).float() * both)                   # sitting on the body
    scal(mh.sum(dim=(1, 2, 3)) * p.squeeze(1) ** 3)

    # engines: station pattern along y, length signature along x
    me = masks[Label.ENGINE]
    ey = me.sum(dim=(1, 3))
    feats += [torch.log1p(ey), torch.log1p(me.sum(dim=(2, 3)))]
    occ_y = ey > 0
    runs = (occ_y[:, 1:] & ~occ_y[:, :-1]).sum(dim=1).float() + occ_y[:, 0].float()
    scal(runs)
    ex0, ex1, epres = _first_last(me.sum(dim=(2, 3)) > 0)
    e_len = (ex1 - ex0 + 1).float() * p.squeeze(1) * epres
    scal(e_len)
    ey0, ey1, _ = _first_last(occ_y)
    ymax = torch.maximum((ey1.float() - 0.5 * (R - 1)).abs(),
                         (ey0.float() - 0.5 * (R - 1)).abs()) * p.squeeze(1)
    scal(ymax)
    scal(2.0 * ymax / span.clamp(min=1e-3))
    e_xc = (me.sum(dim=(2, 3)) * torch.arange(R, dtype=torch.float32).view(1, R)).sum(1) \
        / me.sum(dim=(1, 2, 3)).clamp(min=1e-6)
    scal((e_xc - fx0.float()) / (length / p.squeeze(1)).clamp(min=1e-3) * epres)
    e_vol = me.sum(dim=(1, 2, 3)) * p.squeeze(1) ** 3
    scal(e_vol)
    ez_ext, _, _ = _slab_stats(me, keep=2, coord=3)
    scal(ez_ext.amax(dim=1) * p.squeeze(1))
    # diameter from volume/(count * length): robust to pylon contamination
    d_est = torch.sqrt((e_vol / (runs.clamp(min=1.0) * e_len.clamp(min=1e-3)
                                 * (math.pi / 4.0))).clamp(min=0.0))
    scal(d_est)
    nz = (ez_ext > 0).float()
    scal((ez_ext * nz).sum(1) / nz.sum(1).clamp(min=1.0) * p.squeeze(1))
    ey_ext, _, _ = _slab_stats(me, keep=1, coord=2)
    nzy = (ey_ext > 0).float()
    scal((ey_ext * nzy).sum(1) / nzy.sum(1).clamp(min=1.0) * p.squeeze(1))
    # soft length: partially-filled end slabs count fractionally
    e_xprof = me.sum(dim=(2, 3))
    e_cmax = e_xprof.amax(dim=1).clamp(min=1e-6)
    scal((e_xprof / e_cmax[:, None]).sum(dim=1) * p.squeeze(1))
    # diameter from the typical full-slab cross-section area per pod
    scal(torch.sqrt((4.0 * e_cmax / (math.pi * runs.clamp(min=1.0))).clamp(min=0.0))
         * p.squeeze(1))

    # sub-voxel wing dimensioning: least-squares fits across span slabs.
    # Leading edge and height are linear in y over the whole panel; chord
    # is linear inboard of the trailing-edge break and again outboard.
    def _at(profile, idx):
        return profile.gather(1, idx.view(B, 1).clamp(0, R - 1)).squeeze(1)

    half = torch.div(wy0 + wy1, 2, rounding_mode="floor")
    idx_row = torch.arange(R, dtype=torch.float32).view(1, R)
    cnt_w = mw.sum(dim=(1, 3))
    occ_w = (cnt_w > 0).float()
    y_m = (idx_row - half.float().view(B, 1)) * p  # spanwise meters from centerline
    side = occ_w * (idx_row > half.view(B, 1)).float() * (idx_row < wy1.view(B, 1)).float()
    pos = side * cnt_w
    break_bin = half.float().view(B, 1) + 0.30 * (wy1 - half).float().view(B, 1)
    inb = pos * (idx_row <= break_bin).float()
    outb = pos * (idx_row > break_bin).float()
    sweep_slope, le_root = _line_fit(le * p, y_m, pos)
    _, _, w_xc = _slab_stats(mw, keep=2, coord=1)
    cen_slope_in, _ = _line_fit(w_xc * p, y_m, inb)
    scal(cen_slope_in)
    dihedral_slope, z_root = _line_fit(zc * p, y_m, pos)
    chord_slope_in, chord_root = _line_fit(chord * p, y_m, inb)
    chord_slope_out, chord_out0 = _line_fit(chord * p, y_m, outb)
    semispan_m = (wy1 - half).float() * p.squeeze(1)
    chord_tip = chord_out0 + chord_slope_out * semispan_m
    scal(sweep_slope)
    scal(dihedral_slope)
    scal(chord_root)
    scal(chord_tip)
    scal(chord_tip / chord_root.clamp(min=1e-3))
    plan_area = (chord * (side > 0).float()).sum(dim=1) * p.squeeze(1) ** 2
    mean_chord = plan_area / semispan_m.clamp(min=1e-3)
    scal(mean_chord)
    scal((2.0 * mean_chord / chord_root.clamp(min=1e-3) - 1.0).clamp(-1.0, 3.0))
    scal((le_root - fx0.float() * p.squeeze(1)) / length.clamp(min=1e-3))
    fus_zmid = _at(fus_zmid_prof, torch.div(fx0 + fx1, 2, rounding_mode="floor"))
    scal((z_root - fus_zmid * p.squeeze(1)) / radius.clamp(min=1e-3))
    scal(z_root - fus_zmid * p.squeeze(1))

    # fin dimensioning over height slabs
    occ_v = (mv.sum(dim=(1, 2)) > 0).float()
    z_m = (idx_row - vz0.float().view(B, 1)) * p
    vmask = (occ_v * (idx_row > vz0.view(B, 1)).float()
             * (idx_row < vz1.view(B, 1)).float() * mv.sum(dim=(1, 2)))
    fin_sweep_slope, _ = _line_fit(vle * p, z_m, vmask)
    cant_rate, _ = _line_fit(vy_ext * p, z_m, vmask)
    fin_chord_slope, fin_chord_root = _line_fit(vchord * p, z_m, vmask)
    scal(fin_sweep_slope)
    scal(cant_rate)
    scal(fin_chord_root)
    scal(fin_chord_root * fin_h)  # area proxy
    v_vol = mv.sum(dim=(1, 2, 3)) * p.squeeze(1) ** 3
    scal(v_vol / fin_chord_root.clamp(min=1e-2))  # area from volume/thickness

    # horizontal-tail chord fit
    occ_h = (mh.sum(dim=(1, 3)) > 0).float()
    h_half = torch.div(hy0 + hy1, 2, rounding_mode="floor")
    hy_m = (idx_row - h_half.float().view(B, 1)) * p
    hmask = (occ_h * (idx_row > h_half.view(B, 1)).float()
             * (idx_row < hy1.view(B, 1)).float() * mh.sum(dim=(1, 3)))
    _, h_chord_root = _line_fit(hchord * p, hy_m, hmask)
    scal(h_chord_root)
    h_span_m = (hy1 - hy0 + 1).float() * p.squeeze(1)
    h_area = (hchord * (occ_h > 0).float()).sum(dim=1) * p.squeeze(1) ** 2
    scal(h_area / h_span_m.clamp(min=1e-3))

    scal(p.squeeze(1) * R / 30.0)
    features = torch.cat([f if f.dim() == 2 else f.view(B, -1) for f in feats], dim=1)

    # designated per-axis physical estimates
    ps = p.squeeze(1)
    r_best = 0.5 * (r_area + 0.5 * w_mean * ps)
    wvol = mw.sum(dim=(1, 2, 3)) * ps**3
    d_slab = torch.sqrt((4.0 * e_cmax / (math.pi * runs.clamp(min=1.0))).clamp(min=0.0)) * ps
    e_len_soft = (e_xprof / e_cmax[:, None]).sum(dim=1) * ps
    n_surf = 1.0 + (cant_rate > 0.7).float()
    est_phys = {
        "fuselage_length": length,
        "fuselage_radius": r_best,
        "nose_fineness": 3.2 * front_def / c_ref / r_bins,
        "tailcone_fineness": 1.6 * rear_def / c_ref / r_bins,
        "wing_span": span,
        "wing_root_chord": chord_root,
        "wing_taper": (2.0 * mean_chord / chord_root.clamp(min=1e-3) - 1.0).clamp(0.05, 1.1),
        "wing_sweep": torch.rad2deg(torch.atan((cen_slope_in + 0.5 * sweep_slope).clamp(-0.1, 1.2))),
        "wing_dihedral": torch.rad2deg(torch.atan(dihedral_slope.clamp(-0.3, 0.3))),
        "wing_x_pos": ((le_root - fx0.float() * ps) / length.clamp(min=1e-3)).clamp(0.0, 1.0),
        "wing_z_pos": ((z_root - fus_zmid * ps) / r_best.clamp(min=1e-3)).clamp(-1.5, 1.5),
        "wing_thickness": (wvol / (2.0 * plan_area * mean_chord).clamp(min=1e-3)).clamp(0.0, 0.5),
        "vtail_size": torch.where(vpres, v_vol / (0.08 * fin_chord_root.clamp(min=5e-2)) / n_surf,
                                  torch.full_like(ps, 0.5)),
        "vtail_sweep": torch.where(vpres, torch.rad2deg(torch.atan(fin_sweep_slope.clamp(-0.2, 1.5))),
                                   torch.full_like(ps, 25.0)),
        "vtail_cant": (vpres.float() * (1.0 - hpres.float())
                       * torch.rad2deg(torch.atan((0.5 * cant_rate).clamp(0.0, 3.0)))
                       + (1.0 - vpres.float() * (1.0 - hpres.float())) * 2.0),
        "htail_span": torch.where(hpres, (hy1 - hy0 + 1).float() * ps,
                                  torch.full_like(ps, 13.25)),
        "htail_chord": torch.where(hpres, h_area / h_span_m.clamp(min=1e-3),
                                   torch.full_like(ps, 2.75)),
        "htail_z_pos": torch.where(
            both > 0.5,
            torch.where(hz_full < 0.25, torch.full_like(ps, 0.065),
                        torch.where(hz_full > 0.80, torch.full_like(ps, 0.96),
                                    torch.full_like(ps, 0.5))),
            torch.full_like(ps, 0.5)),
        "htail_exists": hpres.float(),
        "vtail_exists": vpres.float(),
        "engine_length": e_len_soft,
        "engine_size": d_slab,
        "engine_x_pos": torch.where(runs > 1.5,
                                    ((e_xc - fx0.float()) / (length / ps).clamp(min=1e-3)).clamp(0.0, 1.2),
                                    torch.full_like(ps, 0.88)),
        "engine_spanwise": torch.where(runs > 1.5,
                                       ((ymax - 0.5 * d_slab) * 2.0 / span.clamp(min=1e-3)).clamp(0.0, 1.2),
                                       torch.full_like(ps, 0.45)),
    }
    from .anatomy import PARAM_SPECS
    est_cols = []
    for spec in PARAM_SPECS:
        if spec.name == "engine_count":
            est = (torch.log2(runs.clamp(1.0, 4.0)) - 1.0) * (2.0 / 3.0)
        else:
            v = est_phys[spec.name]
            est = 2.0 * (v - spec.lo) / (spec.hi - spec.lo) - 1.0
        est_cols.append(est.clamp(-1.3, 1.3).view(B, 1).float())
    return features, torch.cat(est_cols, dim=1)


def measure(labels: torch.Tensor, pitch: torch.Tensor) -> torch.Tensor:
    return _measure_all(labels, pitch)[0]


def feature_dim(resolution: int) -> int:
    with torch.no_grad():
        dummy = torch.zeros(1, resolution, resolution, resolution, dtype=torch.uint8)
        return measure(dummy, torch.ones(1)).shape[1]


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class PriorVae(nn.Module):
    """Measurement bank + small conv tower in; 3-level conv decoder out."""

    def __init__(self, cfg: PriorConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.base_channels
        r = cfg.grid_resolution // 8
        self.n_feat = feature_dim(cfg.grid_resolution)
        self.register_buffer("feat_mu", torch.zeros(self.n_feat))
        self.register_buffer("feat_sd", torch.ones(self.n_feat))
        self.tower = nn.Sequential(
            nn.Conv3d(1, c, 4, 2, 1), nn.SiLU(),
            nn.Conv3d(c, 2 * c, 4, 2, 1), nn.SiLU(),
            nn.Conv3d(2 * c, 4 * c, 4, 2, 1), nn.SiLU(),
            nn.AdaptiveAvgPool3d(1), nn.Flatten(),
        )
        width = self.n_feat + 4 * c + 1
        self.trunk = nn.Sequential(nn.Linear(width, cfg.hidden), nn.SiLU(),
                                   nn.Linear(cfg.hidden, cfg.hidden), nn.SiLU())
        self.mu_head = nn.Linear(cfg.hidden, cfg.latent_dim)
        self.mu_shortcut = nn.Linear(self.n_feat, cfg.latent_dim)
        # per-axis calibration of the designated direct estimates
        self.est_scale = nn.Parameter(torch.zeros(cfg.supervised_dim))
        self.est_bias = nn.Parameter(torch.zeros(cfg.supervised_dim))
        self.logvar_head = nn.Linear(cfg.hidden, cfg.latent_dim)
        self.dec_head = nn.Sequential(nn.Linear(cfg.latent_dim, cfg.hidden), nn.SiLU(),
                                      nn.Linear(cfg.hidden, r**3 * 4 * c), nn.SiLU())
        self.decoder = nn.Sequential(
            nn.ConvTranspose3d(4 * c, 2 * c, 4, 2, 1), nn.SiLU(),
            nn.ConvTranspose3d(2 * c, c, 4, 2, 1), nn.SiLU(),
            nn.ConvTranspose3d(c, 1, 4, 2, 1),
        )

    def set_feature_stats(self, feats: torch.Tensor) -> None:
        self.feat_mu.copy_(feats.mean(dim=0))
        self.feat_sd.copy_(feats.std(dim=0).clamp(min=1e-3))

    def encode(self, labels: torch.Tensor, pitch: torch.Tensor
               ) -> tuple[torch.Tensor, torch.Tensor]:
        dtype = self.mu_head.weight.dtype
        raw, ests = _measure_all(labels, pitch.float())
        raw, ests = raw.to(dtype), ests.to(dtype)
        feats = ((raw - self.feat_mu) / self.feat_sd).clamp(-8.0, 8.0)
        occ = (labels > 0).unsqueeze(1).to(dtype)
        scale = ((pitch.to(dtype) * self.cfg.grid_resolution).log()
                 - math.log(25.0)).view(-1, 1) / 1.5
        h = self.trunk(torch.cat([feats, self.tower(occ), scale], dim=1))
        mu = self.mu_head(h) + self.mu_shortcut(feats)
        sup = self.cfg.supervised_dim
        cal = self.est_scale * ests[:, :sup] + self.est_bias
        mu = mu + nn.functional.pad(cal, (0, self.cfg.latent_dim - sup))
        return mu, self.logvar_head(h)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        c, r = self.cfg.base_channels, self.cfg.grid_resolution // 8
        h = self.dec_head(z).view(-1, 4 * c, r, r, r)
        return self.decoder(h)


def loss_components(model: PriorVae, labels: torch.Tensor, pitch: torch.Tensor,
                    targets: torch.Tensor, epoch: int, cfg: PriorConfig,
                    noise: torch.Tensor | None = None,
                    ) -> tuple[torch.Tensor, LossBreakdown]:
    """Exact training objective; see the module docstring for the terms.

    `noise` fixes the reparameterization draw (gradient checks need a
    deterministic forward); training leaves it None.
    """
    if labels.shape[0] == 0:
        raise ValueError("empty batch")
    mu, logvar = model.encode(labels, pitch)
    std = torch.exp(0.5 * logvar)
    eps = torch.randn_like(std) if noise is None else noise
    z = mu + eps * std
    logits = model.decode(z)
    occ = (labels > 0).unsqueeze(1).to(logits.dtype)
    n = labels.shape[0]
    # per-voxel mean scaled to a fixed reference volume: reconstruction
    # must neither drown the supervised alignment term at high resolution
    # nor vanish entirely (its noise sensitivity is what keeps the
    # supervised posteriors near-deterministic)
    recon = nn.functional.binary_cross_entropy_with_logits(
        logits, occ, reduction="mean") * cfg.recon_scale
    kl_dim = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar)
    sup = cfg.supervised_dim
    kl_sup = kl_dim[:, :sup].sum() / n
    kl_free = kl_dim[:, sup:].sum() / n
    align = (mu[:, :sup] - targets).pow(2).sum() / n
    beta = beta_schedule(epoch, cfg)
    total = recon + beta * (cfg.alpha * kl_sup + kl_free) + cfg.align_weight * align
    detail = LossBreakdown(recon_bce=recon.item(), kl_supervised=kl_sup.item(),
                           kl_free=kl_free.item(), alignment=align.item(),
                           beta=beta, total=total.item())
    return total, detail


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

@dataclass
class Corpus:
    labels: np.ndarray     # (n, r, r, r) uint8 part labels
    pitches: np.ndarray    # (n,) float32 voxel pitch, m
    targets: np.ndarray    # (n, 25) float32 normalized genomes
    topologies: list = field(default_factory=list)


class _TierMission:
    def __init__(self, mass: float):
        self.mass = mass


def generate_corpus(n: int, rng: np.random.Generator,
                    cfg: PriorConfig | None = None) -> Corpus:
    """Self-generated training pairs: exact (grid, generating vector)."""
    if n < 1:
        raise ValueError("corpus size must be at least 1")
    cfg = cfg or PriorConfig()
    res = cfg.grid_resolution
    labels = np.zeros((n, res, res, res), dtype=np.uint8)
    pitches = np.zeros(n, dtype=np.float32)
    targets = np.zeros((n, anatomy.N_PARAMS), dtype=np.float32)
    topologies = []
    for i in range(n):
        topo = TOPOLOGIES[i % len(TOPOLOGIES)]
        mission = _TierMission(CORPUS_TIER_MASSES[(i // len(TOPOLOGIES)) % len(CORPUS_TIER_MASSES)])
        ng = anatomy.seed_individual(topo, mission, rng)
        genome = anatomy.decode(ng, CORPUS_ENVELOPE)
        grid = voxelize(genome, CORPUS_ENVELOPE, res)
        labels[i] = grid.labels
        pitches[i] = grid.voxel_pitch
        targets[i] = ng.values
        topologies.append(topo)
    return Corpus(labels=labels, pitches=pitches, targets=targets, topologies=topologies)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _ridge_init(model: PriorVae, feats_std: torch.Tensor, ests: torch.Tensor,
                targets: torch.Tensor, lam: float = 8.0) -> None:
    """Closed-form warm start in two stages: calibrate each axis's
    designated estimate by simple per-axis regression (a weak estimate
    calibrates toward the corpus mean, the right fallback), then ridge the
    full measurement bank against what is left."""
    t = targets.double()
    sup = t.shape[1]
    e = ests[:, :sup].double()
    ec = e - e.mean(0)
    tc = t - t.mean(0)
    var = (ec**2).mean(0)
    a_cal = (ec * tc).mean(0) / var.clamp(min=1e-4)
    a_cal = torch.where(var > 1e-6, a_cal, torch.zeros_like(a_cal))
    b_cal = t.mean(0) - a_cal * e.mean(0)

    # Per axis, pick by cross-validation both the ridge strength and
    # whether the designated estimate participates at all: an estimate
    # that is informative across size tiers but noisier than the
    # tier-conditional mean would inject noise the ridge cannot remove.
    f = feats_std.double()
    n, k = f.shape
    lams = (8.0, 40.0, 200.0, 1000.0, 8000.0, 50000.0)
    folds = 5
    fold_idx = torch.arange(n) % folds
    eye = torch.eye(k, dtype=torch.float64)
    resid_est = t - (a_cal * e + b_cal)
    cv = torch.zeros(2, len(lams), sup, dtype=torch.float64)
    for fi in range(folds):
        tr = fold_idx != fi
        va = ~tr
        gram = f[tr].T @ f[tr]
        for mi, target in enumerate((resid_est, t - t.mean(0))):
            rhs = f[tr].T @ target[tr]
            for li, lv in enumerate(lams):
                w_f = torch.linalg.solve(gram + lv * eye, rhs)
                cv[mi, li] += (f[va] @ w_f - target[va]).abs().mean(0)
    est_best, est_lam = cv[0].min(dim=0)
    ridge_best, ridge_lam = cv[1].min(dim=0)
    # prefer the structural prediction (it doubles as the manifold
    # projection off-distribution) unless the estimate is decisively better
    use_est = est_best < 0.9 * ridge_best
    best_lam = torch.where(use_est, est_lam, ridge_lam)
    a = torch.where(use_est, a_cal, torch.zeros_like(a_cal))
    b = torch.where(use_est, b_cal, t.mean(0))
    resid = t - (a * e + b)
    gram = f.T @ f
    w_per = [torch.linalg.solve(gram + lv * eye, f.T @ resid) for lv in lams]
    w = torch.stack([w_per[best_lam[j]][:, j] for j in range(sup)], dim=1)
    with torch.no_grad():
        model.est_scale.copy_(a.float())
        model.est_bias.copy_(b.float())
        model.mu_shortcut.weight.zero_()
        model.mu_shortcut.bias.zero_()
        model.mu_shortcut.weight[:sup] = w.T.float()
        model.mu_shortcut.bias[:sup] = (resid.mean(0) - f.mean(0) @ w).float()
        nn.init.zeros_(model.mu_head.weight)
        nn.init.zeros_(model.mu_head.bias)
        nn.init.zeros_(model.logvar_head.weight)
        model.logvar_head.bias.fill_(-2.0)


def train(corpus: Corpus, cfg: PriorConfig | None = None,
          progress=None) -> tuple[PriorVae, list[LossBreakdown]]:
    """Fit the prior on a corpus; deterministic for a fixed cfg.seed."""
    cfg = cfg or PriorConfig()
    if corpus.labels.shape[0] == 0:
        raise ValueError("empty corpus")
    torch.manual_seed(cfg.seed)
    model = PriorVae(cfg)
    lab_all = torch.from_numpy(corpus.labels)
    p_all = torch.from_numpy(corpus.pitches)
    t_all = torch.from_numpy(corpus.targets[:, :cfg.supervised_dim])
    with torch.no_grad():
        feats, ests = _measure_all(lab_all, p_all)
        model.set_feature_stats(feats)
        feats_std = ((feats - model.feat_mu) / model.feat_sd).clamp(-8.0, 8.0)
    _ridge_init(model, feats_std, ests, t_all)
    # the warm-started readout paths train at a crawl so gradient noise
    # cannot undo the closed-form solution
    slow = {"est_scale", "est_bias"}
    slow_params = [p_ for n_, p_ in model.named_parameters()
                   if n_ in slow or n_.startswith("mu_shortcut")]
    fast_params = [p_ for n_, p_ in model.named_parameters()
                   if not (n_ in slow or n_.startswith("mu_shortcut"))]
    opt = torch.optim.Adam([
        {"params": fast_params, "lr": cfg.learning_rate, "weight_decay": 1e-4},
        {"params": slow_params, "lr": 0.02 * cfg.learning_rate, "weight_decay": 0.0},
    ])
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(cfg.epochs, 1))
    n = lab_all.shape[0]
    gen = torch.Generator().manual_seed(cfg.seed)
    history: list[LossBreakdown] = []
    model.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        sums = np.zeros(5)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            total, detail = loss_components(model, lab_all[idx], p_all[idx],
                                            t_all[idx], epoch, cfg)
            if not torch.isfinite(total):
                raise TrainingDiverged(epoch)
            opt.zero_grad()
            total.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            sums += (detail.recon_bce, detail.kl_supervised, detail.kl_free,
                     detail.alignment, detail.total)
            batches += 1
        sched.step()
        mean = sums / batches
        record = LossBreakdown(recon_bce=mean[0], kl_supervised=mean[1],
                               kl_free=mean[2], alignment=mean[3],
                               beta=beta_schedule(epoch, cfg), total=mean[4])
        history.append(record)
        if progress is not None:
            progress(epoch, record)
    model.eval()
    return model, history


def encode_mu_sigma(model: PriorVae, labels: np.ndarray, pitches: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    model.eval()
    with torch.no_grad():
        mu, logvar = model.encode(torch.from_numpy(labels), torch.from_numpy(pitches))
        return mu.numpy(), torch.exp(0.5 * logvar).numpy()


# ---------------------------------------------------------------------------
# Search-time penalty
# ---------------------------------------------------------------------------

class PriorScorer:
    """Batched manifold-deviation penalty used inside the search loop."""

    def __init__(self, model: PriorVae):
        self.model = model
        self.cfg = model.cfg

    def batch_penalty(self, genomes: list[NormalizedGenome], env: EnvelopeSpec
                      ) -> tuple[list[float], list[np.ndarray]]:
        res = self.cfg.grid_resolution
        n = len(genomes)
        labels = np.zeros((n, res, res, res), dtype=np.uint8)
        pitches = np.zeros(n, dtype=np.float32)
        for i, ng in enumerate(genomes):
            try:
                genome = anatomy.decode(ng, env)
                grid = voxelize(genome, env, res)
                labels[i] = grid.labels
                pitches[i] = grid.voxel_pitch
            except Exception:
                pitches[i] = 1.0  # unrasterizable: scored against an empty grid
        mu, _ = encode_mu_sigma(self.model, labels, pitches)
        penalties, deviations = [], []
        for i, ng in enumerate(genomes):
            dev = ng.values - mu[i, :self.cfg.supervised_dim].astype(float)
            deviations.append(dev)
            penalties.append(float(np.linalg.norm(dev)))
        return penalties, deviations


def prior_penalty(ng: NormalizedGenome, model: PriorVae | None,
                  env: EnvelopeSpec = CORPUS_ENVELOPE) -> float:
    """Distance between a candidate and its manifold projection.

    With the prior disabled (model None) the penalty is identically 0 and
    the rest of the engine runs unchanged.
    """
    if model is None:
        return 0.0
    pen, _ = PriorScorer(model).batch_penalty([ng], env)
    return pen[0]


# ---------------------------------------------------------------------------
# Persistence: versioned flat binary, named float32 tensors
# ---------------------------------------------------------------------------

def save_model(model: PriorVae, path) -> None:
    tensors = []
    blobs = []
    offset = 0
    for name, t in model.state_dict().items():
        arr = t.detach().cpu().numpy().astype(np.float32)
        blob = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"config": asdict(model.cfg), "tensors": tensors}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_model(path) -> PriorVae:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError("not a prior model file")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    header = json.loads(raw[12:12 + hlen].decode())
    cfg = PriorConfig(**header["config"])
    model = PriorVae(cfg)
    body = raw[12 + hlen:]
    state = {}
    for meta in header["tensors"]:
        arr = np.frombuffer(body, dtype=np.float32,
                            count=meta["nbytes"] // 4,
                            offset=meta["offset"]).reshape(meta["shape"])
        state[meta["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    model.eval()
    return model


def default_cache_path() -> str:
    env = os.environ.get("AEROVOLVE_MODEL_CACHE")
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "aerovolve", "prior.avpm")
