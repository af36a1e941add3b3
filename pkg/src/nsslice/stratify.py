"""Voxel measure stratification of superlevel sets by parallel plane families.

A set of positive measure decomposes into positive-area slices over a
positive-length interval of plane offsets, and conversely; this module checks
the discrete analogue on voxel masks.  Continuous measure is approximated by
voxel counting: a mask voxel spreads its volume uniformly over the offset
interval its projection spans, so slab sums are exact for axis-aligned
families and total volume is conserved for any direction.  Thresholds stand
in for "measure greater than zero", which has no discrete meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fieldio import TimeSeriesField

AXIS_DIRECTIONS = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
)

#: default thresholds, in voxel units: a positive slice must carry at least
#: this many voxel faces of area, a positive interval at least this many
#: slabs, a positive set at least this many voxels of volume.
AREA_TOL_FACES = 4.0
INTERVAL_TOL_SLABS = 2.0
VOLUME_TOL_VOXELS = 8.0


class StratifyInconsistencyError(RuntimeError):
    """Voxel-volume oracle and stratification verdict disagree."""


@dataclass(frozen=True)
class IndicatorGrid:
    """Boolean voxel mask (3D, or 4D with time as the trailing axis)."""

    dims: tuple[int, ...]
    extents: tuple[float, ...]
    mask: np.ndarray
    eps: float

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        extents = tuple(float(e) for e in self.extents)
        if len(dims) not in (3, 4) or len(extents) != len(dims):
            raise ValueError("IndicatorGrid is 3D or 4D (trailing time axis)")
        if any(d < 2 for d in dims):
            raise ValueError(f"dims must be >= 2 per axis, got {dims}")
        if any(e <= 0.0 for e in extents):
            raise ValueError(f"extents must be positive, got {extents}")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != dims:
            raise ValueError(f"mask shape {mask.shape} != dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def voxel_volume(self) -> float:
        return float(np.prod([e / d for e, d in zip(self.extents, self.dims)]))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(e / d for e, d in zip(self.extents, self.dims))

    @property
    def total_volume(self) -> float:
        return float(np.count_nonzero(self.mask)) * self.voxel_volume

    def collapse_time(self, how: str = "any") -> "IndicatorGrid":
        """Reduce a 4D mask over the time axis; no-op for 3D masks."""
        if len(self.dims) == 3:
            return self
        red = np.any(self.mask, axis=-1) if how == "any" else np.all(self.mask, axis=-1)
        return IndicatorGrid(
            dims=self.dims[:3], extents=self.extents[:3], mask=red, eps=self.eps
        )


def mask_from_field(w, eps: float) -> IndicatorGrid:
    """Threshold |w| > eps pointwise (Euclidean norm over components).

    Accepts a single Field (3D mask) or a TimeSeriesField (4D mask with the
    frame times appended as the last axis).
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    if isinstance(w, TimeSeriesField):
        mags = [np.sqrt(np.sum(f.data**2, axis=0)) for f in w.frames]
        mask = np.stack([m > eps for m in mags], axis=-1)
        span = float(w.times[-1] - w.times[0])
        ref = w.frames[0]
        return IndicatorGrid(
            dims=ref.dims + (len(w.frames),),
            extents=ref.extents + (span,),
            mask=mask,
            eps=eps,
        )
    mag = np.sqrt(np.sum(w.data**2, axis=0))
    return IndicatorGrid(dims=w.dims, extents=w.extents, mask=mag > eps, eps=eps)


def _require_3d(mask: IndicatorGrid) -> IndicatorGrid:
    return mask.collapse_time() if len(mask.dims) == 4 else mask


def slice_measures(
    mask: IndicatorGrid, direction, nslices: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-offset slice areas of the mask against a parallel plane family.

    Offsets span the projection range of the whole box onto the unit
    direction, split into nslices slabs; each mask voxel's volume is spread
    uniformly over the offset interval it spans and slab contents are scaled
    by 1/slab-thickness to areas.  Returns (slab midpoints, measures).
    """
    mask = _require_3d(mask)
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit 3-vector")
    if nslices < 2:
        raise ValueError("nslices must be >= 2")
    ext = np.asarray(mask.extents)
    h = np.asarray(mask.spacings)
    beta_min = float(np.sum(np.minimum(0.0, d * ext)))
    beta_max = float(np.sum(np.maximum(0.0, d * ext)))
    dbeta = (beta_max - beta_min) / nslices
    idx = np.argwhere(mask.mask)
    measures = np.zeros(nslices)
    mids = beta_min + dbeta * (np.arange(nslices) + 0.5)
    if idx.shape[0] == 0:
        return mids, measures
    centers = (idx + 0.5) * h
    beta_c = centers @ d
    half_span = 0.5 * float(np.sum(np.abs(d) * h))
    # voxel beta-interval in slab units
    lo = (beta_c - half_span - beta_min) / dbeta
    hi = (beta_c + half_span - beta_min) / dbeta
    # measure contribution of one voxel to one slab:
    #   (voxel volume) * (overlap / full span) / (slab thickness)
    vol_per_len = mask.voxel_volume / (2.0 * half_span)
    j0 = np.maximum(np.floor(lo).astype(int), 0)
    j1 = np.minimum(np.ceil(hi).astype(int), nslices)
    for off in range(int(np.max(j1 - j0))):
        j = j0 + off
        valid = j < j1
        overlap = np.clip(np.minimum(hi, j + 1.0) - np.maximum(lo, j.astype(float)), 0.0, None)
        np.add.at(measures, j[valid], (vol_per_len * overlap)[valid])
    return mids, measures


@dataclass
class DirectionProfile:
    direction: tuple[float, float, float]
    offsets: np.ndarray
    measures: np.ndarray
    area_tol: float
    interval_tol: float
    best_run_slabs: int
    interval_length: float
    positive: bool

    def to_dict(self) -> dict:
        return {
            "direction": list(self.direction),
            "offsets": self.offsets.tolist(),
            "measures": self.measures.tolist(),
            "area_tol": self.area_tol,
            "interval_tol": self.interval_tol,
            "best_run_slabs": self.best_run_slabs,
            "interval_length": self.interval_length,
            "positive": self.positive,
        }


@dataclass
class StratifyVerdict:
    positive: bool
    oracle_positive: bool
    total_volume: float
    volume_tol: float
    profiles: list[DirectionProfile]

    def to_dict(self) -> dict:
        return {
            "positive": self.positive,
            "oracle_positive": self.oracle_positive,
            "total_volume": self.total_volume,
            "volume_tol": self.volume_tol,
            "profiles": [p.to_dict() for p in self.profiles],
        }


def _longest_run(flags: np.ndarray) -> int:
    best = cur = 0
    for f in flags:
        cur = cur + 1 if f else 0
        best = max(best, cur)
    return best


def stratification_verdict(
    mask: IndicatorGrid,
    directions=None,
    nslices: int | None = None,
    area_tol: float | None = None,
    interval_tol: float | None = None,
    volume_tol: float | None = None,
) -> StratifyVerdict:
    """Search plane families for a positive-measure stratification.

    POSITIVE iff some tested direction has a run of consecutive slabs, of
    total offset length >= interval_tol, on which every slice measure clears
    area_tol.  The verdict is cross-checked against the voxel-volume oracle:
    total volume > volume_tol must coincide with a POSITIVE verdict along at
    least one canonical axis, the discrete form of the slicing equivalence;
    disagreement raises StratifyInconsistencyError.

    Only finitely many directions are tested (canonical axes plus the ones
    supplied), so a POSITIVE verdict reports the best family found without
    claiming exhaustiveness.
    """
    mask = _require_3d(mask)
    extra = [tuple(float(v) for v in d) for d in (directions or [])]
    all_dirs = list(AXIS_DIRECTIONS) + [d for d in extra if d not in AXIS_DIRECTIONS]
    h = np.asarray(mask.spacings)
    if volume_tol is None:
        volume_tol = VOLUME_TOL_VOXELS * mask.voxel_volume
    profiles = []
    for d in all_dirs:
        dv = np.asarray(d, dtype=float)
        dv = dv / np.linalg.norm(dv)
        ns = nslices
        if ns is None:
            # one slab per voxel across the projection span
            ns = max(2, int(round(np.sum(np.abs(dv) * np.asarray(mask.dims) * h)
                                  / np.sum(np.abs(dv) * h))))
        at = area_tol
        if at is None:
            at = AREA_TOL_FACES * mask.voxel_volume / float(np.sum(np.abs(dv) * h))
        offsets, measures = slice_measures(mask, tuple(dv), ns)
        dbeta = offsets[1] - offsets[0] if ns > 1 else 1.0
        it = INTERVAL_TOL_SLABS * dbeta if interval_tol is None else interval_tol
        run = _longest_run(measures >= at)
        length = run * dbeta
        profiles.append(
            DirectionProfile(
                direction=tuple(float(v) for v in dv),
                offsets=offsets,
                measures=measures,
                area_tol=float(at),
                interval_tol=float(it),
                best_run_slabs=run,
                interval_length=float(length),
                positive=bool(length >= it - 1e-12 * max(dbeta, 1.0) and run >= 1),
            )
        )
    positive = any(p.positive for p in profiles)
    axis_positive = any(p.positive for p in profiles[:3])
    oracle_positive = mask.total_volume > volume_tol
    if oracle_positive != axis_positive:
        raise StratifyInconsistencyError(
            f"voxel-volume oracle ({oracle_positive}, volume {mask.total_volume:.3e}) "
            f"disagrees with the axis-family verdict ({axis_positive})"
        )
    return StratifyVerdict(
        positive=positive,
        oracle_positive=oracle_positive,
        total_volume=mask.total_volume,
        volume_tol=float(volume_tol),
        profiles=profiles,
    )
