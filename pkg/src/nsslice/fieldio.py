"""Structured-grid field model, NSF1 persistence, and slice restriction.

Fields are vertex-centered: axis ``i`` carries ``dims[i]`` samples at
``x = j * extents[i] / (dims[i] - 1)``, so boundaries are sampled.  Sample
storage is component-major with the first grid axis varying fastest, which is
also the NSF1 payload order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box3, SliceChart, slice_domain


class FieldFormatError(ValueError):
    """Malformed or inconsistent NSF1 content."""


class NonFiniteSampleError(FieldFormatError):
    """A NaN or Inf sample was found on ingest."""


class SliceOutsideDomainError(ValueError):
    """Lifted slice points leave the 3D box (or the slice misses it)."""


@dataclass(frozen=True)
class Field:
    """Sampled vector field on a 2D or 3D structured grid.

    data has shape (ncomp, *dims); data[c, i, j(, k)] is component c at grid
    index (i, j(, k)) counted along the physical axes in order.
    """

    dims: tuple[int, ...]
    extents: tuple[float, ...]
    ncomp: int
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        extents = tuple(float(e) for e in self.extents)
        if len(dims) not in (2, 3) or len(extents) != len(dims):
            raise FieldFormatError(f"dims/extents must both be length 2 or 3, got {dims}, {extents}")
        if any(d < 2 for d in dims):
            raise FieldFormatError(f"all dims must be >= 2, got {dims}")
        if any(e <= 0.0 for e in extents):
            raise FieldFormatError(f"all extents must be positive, got {extents}")
        if self.ncomp not in (1, 3):
            raise FieldFormatError(f"ncomp must be 1 or 3, got {self.ncomp}")
        data = np.asarray(self.data, dtype=float)
        want = (self.ncomp,) + dims
        if data.size != self.ncomp * int(np.prod(dims)):
            raise FieldFormatError(
                f"payload has {data.size} samples, expected {self.ncomp * int(np.prod(dims))}"
            )
        data = data.reshape(want, order="C") if data.shape != want else data
        if not np.all(np.isfinite(data)):
            raise NonFiniteSampleError("field contains non-finite samples")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "ncomp", int(self.ncomp))
        object.__setattr__(self, "data", data)

    @property
    def ndim_grid(self) -> int:
        return len(self.dims)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Vertex coordinates along one grid axis."""
        return np.linspace(0.0, self.extents[axis], self.dims[axis])

    def spacing(self, axis: int) -> float:
        return self.extents[axis] / (self.dims[axis] - 1)

    def flat_samples(self) -> np.ndarray:
        """Component-major, first-axis-fastest flat view (NSF1 payload order)."""
        return np.concatenate([self.data[c].ravel(order="F") for c in range(self.ncomp)])

    @classmethod
    def from_flat(cls, dims, extents, ncomp, flat) -> "Field":
        dims = tuple(int(d) for d in dims)
        npts = int(np.prod(dims))
        flat = np.asarray(flat, dtype=float)
        if flat.size != ncomp * npts:
            raise FieldFormatError(
                f"payload has {flat.size} samples, expected {ncomp * npts}"
            )
        comps = [flat[c * npts:(c + 1) * npts].reshape(dims, order="F") for c in range(ncomp)]
        return cls(dims=dims, extents=tuple(extents), ncomp=ncomp, data=np.stack(comps))

    @classmethod
    def from_function(cls, dims, extents, ncomp, func) -> "Field":
        """Sample ``func(*coords) -> (ncomp, ...) array`` on the vertex grid."""
        axes = [np.linspace(0.0, float(e), int(d)) for d, e in zip(dims, extents)]
        mesh = np.meshgrid(*axes, indexing="ij")
        vals = np.asarray(func(*mesh), dtype=float)
        if vals.shape[0] != ncomp:
            raise FieldFormatError(f"function returned {vals.shape[0]} components, expected {ncomp}")
        return cls(dims=tuple(dims), extents=tuple(extents), ncomp=ncomp, data=vals)


@dataclass(frozen=True)
class TimeSeriesField:
    """Strictly increasing sample times with shape-consistent frames."""

    times: np.ndarray
    frames: tuple[Field, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        frames = tuple(self.frames)
        if t.ndim != 1 or t.size != len(frames):
            raise FieldFormatError("times and frames must have equal length")
        if t.size == 0:
            raise FieldFormatError("time series must be nonempty")
        if np.any(np.diff(t) <= 0.0):
            raise FieldFormatError("times must be strictly increasing")
        ref = frames[0]
        for f in frames[1:]:
            if f.dims != ref.dims or f.ncomp != ref.ncomp or f.extents != ref.extents:
                raise FieldFormatError("all frames must share dims, extents and ncomp")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


# NSF1 on-disk format:
#   line 1: "NSF1 <ndims> <dim1> ... <dimk> <ncomp> <ext1> ... <extk>"
#   line 2: "binary" or "text"
#   payload: ncomp * prod(dims) doubles, component-major, first axis fastest;
#            little-endian IEEE-754 for binary, whitespace-separated decimals
#            for text (printed with %.17g so the round trip is bit exact).

_MAGIC = "NSF1"


def write_field(fld: Field, path, mode: str = "binary") -> None:
    """Write a field to an NSF1 file; mode is 'binary' or 'text'."""
    if mode not in ("binary", "text"):
        raise FieldFormatError(f"unknown payload mode {mode!r}")
    k = len(fld.dims)
    header = " ".join(
        [_MAGIC, str(k)]
        + [str(d) for d in fld.dims]
        + [str(fld.ncomp)]
        + [f"{e:.17g}" for e in fld.extents]
    )
    flat = fld.flat_samples()
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write((mode + "\n").encode("ascii"))
        if mode == "binary":
            fh.write(flat.astype("<f8").tobytes())
        else:
            lines = [" ".join(f"{v:.17g}" for v in flat[i:i + 6]) for i in range(0, flat.size, 6)]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def read_field(path) -> Field:
    """Read an NSF1 file; validates the header, payload size and finiteness."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl1 = raw.find(b"\n")
    if nl1 < 0:
        raise FieldFormatError("missing header line")
    nl2 = raw.find(b"\n", nl1 + 1)
    if nl2 < 0:
        raise FieldFormatError("missing payload-mode line")
    try:
        header = raw[:nl1].decode("ascii").split()
        mode = raw[nl1 + 1:nl2].decode("ascii").strip()
    except UnicodeDecodeError as exc:
        raise FieldFormatError("header is not ASCII") from exc
    if not header or header[0] != _MAGIC:
        raise FieldFormatError(f"bad magic in header: {header[:1]}")
    try:
        k = int(header[1])
        dims = [int(v) for v in header[2:2 + k]]
        ncomp = int(header[2 + k])
        extents = [float(v) for v in header[3 + k:3 + 2 * k]]
    except (IndexError, ValueError) as exc:
        raise FieldFormatError(f"malformed header: {raw[:nl1]!r}") from exc
    if len(dims) != k or len(extents) != k or len(header) != 3 + 2 * k:
        raise FieldFormatError(f"malformed header: {raw[:nl1]!r}")
    nvals = ncomp * int(np.prod(dims))
    payload = raw[nl2 + 1:]
    if mode == "binary":
        if len(payload) < 8 * nvals:
            raise FieldFormatError(
                f"truncated payload: {len(payload)} bytes, expected {8 * nvals}"
            )
        if len(payload) > 8 * nvals:
            raise FieldFormatError(
                f"oversized payload: {len(payload)} bytes, expected {8 * nvals}"
            )
        flat = np.frombuffer(payload, dtype="<f8").astype(float)
    elif mode == "text":
        try:
            flat = np.array(payload.split(), dtype=float)
        except ValueError as exc:
            raise FieldFormatError("unparseable text payload") from exc
        if flat.size < nvals:
            raise FieldFormatError(
                f"truncated payload: {flat.size} values, expected {nvals}"
            )
        if flat.size > nvals:
            raise FieldFormatError(
                f"oversized payload: {flat.size} values, expected {nvals}"
            )
    else:
        raise FieldFormatError(f"unknown payload mode {mode!r}")
    return Field.from_flat(dims, extents, ncomp, flat)


def trilinear_sample(fld: Field, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a 3D field at physical points (n, 3).

    Exact for fields affine in the coordinates.  Points must lie inside the
    field's box up to a relative slack of 1e-9.
    """
    if fld.ndim_grid != 3:
        raise ValueError("trilinear_sample needs a 3D field")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ext = np.asarray(fld.extents)
    dims = np.asarray(fld.dims)
    slack = 1e-9 * ext
    inside = np.all((pts >= -slack) & (pts <= ext + slack), axis=1)
    if not np.all(inside):
        bad = pts[~inside][0]
        raise SliceOutsideDomainError(
            f"point {tuple(bad)} lies outside the box [0, {tuple(ext)}]"
        )
    h = ext / (dims - 1)
    rel = np.clip(pts / h, 0.0, (dims - 1).astype(float))
    i0 = np.minimum(rel.astype(int), dims - 2)
    frac = rel - i0
    out = np.zeros((fld.ncomp, pts.shape[0]))
    for corner in range(8):
        off = np.array([(corner >> b) & 1 for b in range(3)])
        weight = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1)
        idx = i0 + off
        out += fld.data[:, idx[:, 0], idx[:, 1], idx[:, 2]] * weight
    return out


def restrict_to_slice(field3d: Field, chart: SliceChart, slice_dims) -> Field:
    """Restrict a 3D field to the chart's plane by trilinear interpolation.

    The output is a 2D field with the same component count, sampled on a
    ``slice_dims`` vertex grid over the bounding box of the plane's section
    through the field's box.  Lifted sample points falling outside the box
    raise rather than extrapolate, so oblique planes need a section whose
    parameter-plane polygon is its own bounding rectangle.
    """
    if field3d.ndim_grid != 3:
        raise ValueError("restrict_to_slice needs a 3D field")
    n1, n2 = (int(v) for v in slice_dims)
    if n1 < 2 or n2 < 2:
        raise ValueError("slice_dims must both be >= 2")
    box = Box3.from_extents(field3d.extents)
    dom = slice_domain(box, chart)
    if dom.is_empty:
        raise SliceOutsideDomainError("slice misses the field's box")
    (smin, smax), (tmin, tmax) = dom.bounds
    if smax - smin <= 0.0 or tmax - tmin <= 0.0:
        raise SliceOutsideDomainError("slice section is degenerate")
    s = np.linspace(smin, smax, n1)
    t = np.linspace(tmin, tmax, n2)
    ss, tt = np.meshgrid(s, t, indexing="ij")
    pts2 = np.column_stack([ss.ravel(), tt.ravel()])
    pts3 = chart.lift(pts2)
    vals = trilinear_sample(field3d, pts3)
    data = vals.reshape(field3d.ncomp, n1, n2)
    return Field(
        dims=(n1, n2),
        extents=(smax - smin, tmax - tmin),
        ncomp=field3d.ncomp,
        data=data,
    )
