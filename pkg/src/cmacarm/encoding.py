"""Sparse coarse coding of joint positions and rate-code modulation.

A :class:`BasisLayout` describes a stack of offset tilings over the joint
workspace.  Encoding a position activates a handful of cells per tiling;
rectangular fields give binary activations, triangular and smooth-product
fields are normalized to a per-tiling partition of unity so that a sum of
modulated activations recovers the modulation variable exactly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FIELD_SHAPES = ("rectangular", "triangular", "smooth-product")
COMBINE_MODES = ("AND-min", "product")


@dataclass(frozen=True)
class SparseActivation:
    """Active cell ids and their (rate-coded) activation levels."""

    indices: np.ndarray
    values: np.ndarray
    size: int           # total cell count p of the producing layout

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        val = np.asarray(self.values, dtype=float)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be equal-length vectors")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def m(self):
        return len(self.indices)

    def dense(self):
        out = np.zeros(self.size)
        out[self.indices] = self.values
        return out


@dataclass(frozen=True)
class BasisLayout:
    """Tiling geometry of the expansion recoding.

    ranges: per-dimension (min, max); offsets: per-tiling fractional shifts
    in units of one cell width (distinct, in [0, 1)).  When offsets is None
    they default to the usual staggered t/tilings schedule.
    """

    ranges: tuple
    tilings: int
    cells_per_dim: tuple
    offsets: tuple = None
    field_shape: str = "rectangular"
    combine: str = "product"

    def __post_init__(self):
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        if any(hi <= lo for lo, hi in ranges):
            raise ValueError("each range must satisfy min < max")
        object.__setattr__(self, "ranges", ranges)
        cpd = self.cells_per_dim
        if np.isscalar(cpd):
            cpd = (int(cpd),) * len(ranges)
        cpd = tuple(int(c) for c in cpd)
        if len(cpd) != len(ranges):
            raise ValueError("cells_per_dim must match number of ranges")
        if any(c < 2 for c in cpd):
            raise ValueError("cells_per_dim must be >= 2")
        object.__setattr__(self, "cells_per_dim", cpd)
        if self.tilings < 1:
            raise ValueError("tilings must be >= 1")
        offs = self.offsets
        if offs is None:
            offs = tuple(t / self.tilings for t in range(self.tilings))
        offs = tuple(float(o) for o in offs)
        if len(offs) != self.tilings or len(set(offs)) != self.tilings:
            raise ValueError("offsets must be distinct, one per tiling")
        object.__setattr__(self, "offsets", offs)
        if self.field_shape not in FIELD_SHAPES:
            raise ValueError(f"field_shape must be one of {FIELD_SHAPES}")
        if self.combine not in COMBINE_MODES:
            raise ValueError(f"combine must be one of {COMBINE_MODES}")

    @property
    def dims(self):
        return len(self.ranges)

    @property
    def cells_per_tiling(self):
        return int(np.prod(self.cells_per_dim))

    @property
    def size(self):
        """Total cell count p across all tilings."""
        return self.tilings * self.cells_per_tiling

    @property
    def widths(self):
        return np.array([(hi - lo) / c
                         for (lo, hi), c in zip(self.ranges, self.cells_per_dim)])

    def to_dict(self):
        return {"ranges": [list(r) for r in self.ranges],
                "tilings": self.tilings,
                "cells_per_dim": list(self.cells_per_dim),
                "offsets": list(self.offsets),
                "field_shape": self.field_shape,
                "combine": self.combine}

    @classmethod
    def from_dict(cls, d):
        return cls(ranges=tuple(tuple(r) for r in d["ranges"]),
                   tilings=int(d["tilings"]),
                   cells_per_dim=tuple(d["cells_per_dim"]),
                   offsets=tuple(d["offsets"]) if d.get("offsets") else None,
                   field_shape=d.get("field_shape", "rectangular"),
                   combine=d.get("combine", "product"))


def _clamp(layout, q):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != (layout.dims,):
        raise ValueError(f"expected {layout.dims}-d input, got shape {q.shape}")
    lo = np.array([r[0] for r in layout.ranges])
    hi = np.array([r[1] for r in layout.ranges])
    clamped = np.clip(q, lo, hi)
    if np.any(clamped != q):
        log.warning("input %s outside layout ranges, clamped to %s", q, clamped)
    return clamped


def _dim_activations(layout, x, dim, tiling):
    """(cell indices, weights) along one dimension of one tiling.

    Weights along a dimension sum to 1 for triangular and smooth-product
    fields (partition of unity after boundary renormalization).
    """
    lo, hi = layout.ranges[dim]
    c = layout.cells_per_dim[dim]
    w = (hi - lo) / c
    off = layout.offsets[tiling]
    # continuous cell coordinate; the grid of tiling t is shifted by off*w
    u = (x - lo) / w + off
    if layout.field_shape == "rectangular":
        i = min(int(np.floor(u)), c - 1)  # boundary ties go to the lower cell
        return np.array([i]), np.array([1.0])
    if layout.field_shape == "triangular":
        # hat functions centered at cell centers, support two cells wide
        v = u - 0.5
        i0 = int(np.floor(v))
        frac = v - i0
        idx = np.array([i0, i0 + 1])
        wts = np.array([1.0 - frac, frac])
    else:  # smooth-product: cosine bump over the three nearest centers
        i0 = int(np.floor(u - 0.5))
        idx = np.arange(i0 - 1, i0 + 3)
        d = np.abs(u - (idx + 0.5)) / 2.0
        wts = np.where(d < 1.0, np.cos(np.pi * d / 2) ** 2, 0.0)
    # fold cells past the range edge onto the boundary cell so offset
    # tilings still cover inputs at the extremes of the range
    idx = np.clip(idx, 0, c - 1)
    idx, inverse = np.unique(idx, return_inverse=True)
    wts = np.bincount(inverse, weights=wts, minlength=len(idx))
    keep = wts > 0
    idx, wts = idx[keep], wts[keep]
    return idx, wts / wts.sum()


def encode_position(layout, q):
    """Expansion-recode a position into a sparse non-negative activation.

    Rectangular fields activate exactly one cell per tiling with value 1;
    other shapes activate a local neighborhood normalized so each tiling's
    activations sum to 1.
    """
    q = _clamp(layout, q)
    strides = np.concatenate(
        [np.cumprod(layout.cells_per_dim[::-1])[-2::-1], [1]]).astype(int)
    per_tiling = layout.cells_per_tiling
    all_idx, all_val = [], []
    for t in range(layout.tilings):
        idx = np.array([0])
        val = np.array([1.0])
        for d in range(layout.dims):
            di, dw = _dim_activations(layout, q[d], d, t)
            if layout.combine == "product" or layout.field_shape == "rectangular":
                val = np.multiply.outer(val, dw).ravel()
            else:  # AND-min
                val = np.minimum.outer(val, dw).ravel()
            idx = (np.add.outer(idx, di * strides[d])).ravel()
        if layout.combine == "AND-min" and layout.field_shape != "rectangular":
            val = val / val.sum()  # keep the per-tiling partition of unity
        all_idx.append(idx + t * per_tiling)
        all_val.append(val)
    indices = np.concatenate(all_idx)
    values = np.concatenate(all_val)
    keep = values > 0
    return SparseActivation(indices[keep], values[keep], layout.size)


def modulate(base, r):
    """Scale every active value by the rate-coded variable r.

    r may be signed; exact linearity in r is the contract the downstream
    approximators rely on.
    """
    return SparseActivation(base.indices, base.values * float(r), base.size)


def modulate_dual_rail(base, r):
    """Non-negative two-channel variant: returns (r_plus, r_minus) copies."""
    r = float(r)
    return modulate(base, max(r, 0.0)), modulate(base, max(-r, 0.0))
