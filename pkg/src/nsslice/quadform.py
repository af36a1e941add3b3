"""Pointwise quadratic-form analysis of velocity-gradient fields.

For a sampled 3D velocity v, the symmetrized gradient a_jk = (D_j v_k +
D_k v_j) / 2 defines at every grid point the quadratic form B(w, w) =
sum_jk a_jk w_j w_k.  Canonicalizing B by Jacobi's minor-ratio formulas,

    b1 = det M1,  b2 = det M2 / det M1,  b3 = det M3 / det M2,

with M_k the leading principal k x k blocks, diagonalizes the form as
sum_j b_j y_j^2 under a unit upper-triangular change of variables; the signs
of (b1, b2, b3) give the inertia (Sylvester's law).  Points whose leading
minors fall under the pivot tolerance fall back to a symmetric eigensolve
for the inertia.  The viscosity criterion compares nu * lambda1^(1/4)
against c^2 * sum_i ||D_i v_j||_2 per component and time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fieldio import Field, TimeSeriesField

DEFAULT_PIVOT_REL_TOL = 1e-8

_ZERO_EIG_REL_TOL = 1e-12


@dataclass(frozen=True)
class StrainMatrixField:
    """Gradient tensor and its symmetric part on a 3D grid.

    grad[i, k] holds D_i v_k; sym[j, k] = 0.5 * (D_j v_k + D_k v_j) is
    symmetric by construction.
    """

    dims: tuple[int, int, int]
    extents: tuple[float, float, float]
    grad: np.ndarray  # (3, 3, nx, ny, nz)
    sym: np.ndarray   # (3, 3, nx, ny, nz)

    @classmethod
    def from_gradients(cls, dims, extents, grad) -> "StrainMatrixField":
        grad = np.asarray(grad, dtype=float)
        sym = 0.5 * (grad + np.swapaxes(grad, 0, 1))
        return cls(
            dims=tuple(int(d) for d in dims),
            extents=tuple(float(e) for e in extents),
            grad=grad,
            sym=sym,
        )

    def matrices(self) -> np.ndarray:
        """Symmetric matrices as an (npoints, 3, 3) stack."""
        return np.moveaxis(self.sym.reshape(3, 3, -1), -1, 0)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.dims))

    def trace_field(self) -> np.ndarray:
        """Pointwise trace of the strain; equals div v up to stencil error."""
        return self.sym[0, 0] + self.sym[1, 1] + self.sym[2, 2]


def strain_field(v: Field) -> StrainMatrixField:
    """Symmetrized gradient of a 3-component 3D field.

    Derivatives use second-order centered differences with second-order
    one-sided stencils at the boundary faces.
    """
    if v.ndim_grid != 3 or v.ncomp != 3:
        raise ValueError("strain_field needs a 3-component 3D field")
    grad = np.empty((3, 3) + v.dims)
    for i in range(3):
        h = v.spacing(i)
        for k in range(3):
            grad[i, k] = np.gradient(v.data[k], h, axis=i, edge_order=2)
    return StrainMatrixField.from_gradients(v.dims, v.extents, grad)


@dataclass(frozen=True)
class QuadFormDecomposition:
    """Pointwise canonical coefficients, change of variables and inertia.

    b[j] and transform hold NaN at pivot-degenerate points (jacobi[point]
    False), where only the eigensolve inertia is available.  inertia rows are
    (n_plus, n_zero, n_minus).
    """

    dims: tuple[int, int, int]
    b: np.ndarray            # (npoints, 3)
    transform: np.ndarray    # (npoints, 3, 3) unit upper triangular
    jacobi: np.ndarray       # (npoints,) bool, True where the minor path ran
    inertia: np.ndarray      # (npoints, 3) ints
    pivot_tol: float

    @property
    def degenerate_fraction(self) -> float:
        return float(1.0 - np.mean(self.jacobi))

    def inertia_histogram(self) -> dict[str, int]:
        keys, counts = np.unique(self.inertia, axis=0, return_counts=True)
        return {
            "+%d0%d-%d" % (k[0], k[1], k[2]): int(c) for k, c in zip(keys, counts)
        }

    def point(self, idx: int) -> tuple[np.ndarray, np.ndarray, bool, np.ndarray]:
        return self.b[idx], self.transform[idx], bool(self.jacobi[idx]), self.inertia[idx]


def default_pivot_tol(strain: StrainMatrixField) -> float:
    return DEFAULT_PIVOT_REL_TOL * max(float(np.max(np.abs(strain.sym))), 1e-300)


def _eig_inertia(mats: np.ndarray, zero_tol: float) -> np.ndarray:
    vals = np.linalg.eigvalsh(mats)
    n_plus = np.sum(vals > zero_tol, axis=1)
    n_minus = np.sum(vals < -zero_tol, axis=1)
    return np.column_stack([n_plus, 3 - n_plus - n_minus, n_minus])


def canonicalize(strain: StrainMatrixField, pivot_tol: float | None = None) -> QuadFormDecomposition:
    """Jacobi minor-ratio canonicalization with an eigensolve fallback.

    Where |det M1| and |det M2| both clear pivot_tol the canonical
    coefficients, the unit-triangular change of variables and the inertia
    come from the minor formulas; elsewhere the coefficients are marked
    degenerate (NaN) and the inertia comes from the eigenvalues.
    """
    if pivot_tol is None:
        pivot_tol = default_pivot_tol(strain)
    if pivot_tol <= 0.0:
        raise ValueError("pivot_tol must be positive")
    mats = strain.matrices()
    npts = mats.shape[0]
    a11 = mats[:, 0, 0]
    a12 = mats[:, 0, 1]
    a13 = mats[:, 0, 2]
    a22 = mats[:, 1, 1]
    a23 = mats[:, 1, 2]
    a33 = mats[:, 2, 2]
    det1 = a11
    det2 = a11 * a22 - a12**2
    det3 = np.linalg.det(mats)
    ok = (np.abs(det1) > pivot_tol) & (np.abs(det2) > pivot_tol)

    b = np.full((npts, 3), np.nan)
    transform = np.full((npts, 3, 3), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = det1
        b2 = det2 / det1
        b3 = det3 / det2
        # Schur complement entry feeding the second elimination step
        s23 = a23 - a12 * a13 / det1
        u12 = a12 / det1
        u13 = a13 / det1
        u23 = s23 / b2
    b[ok, 0] = b1[ok]
    b[ok, 1] = b2[ok]
    b[ok, 2] = b3[ok]
    eye = np.eye(3)
    transform[ok] = eye
    transform[ok, 0, 1] = u12[ok]
    transform[ok, 0, 2] = u13[ok]
    transform[ok, 1, 2] = u23[ok]

    inertia = np.empty((npts, 3), dtype=int)
    zero_tol = _ZERO_EIG_REL_TOL * max(float(np.max(np.abs(mats))), 1e-300)
    if np.any(ok):
        bs = b[ok]
        n_plus = np.sum(bs > zero_tol, axis=1)
        n_minus = np.sum(bs < -zero_tol, axis=1)
        inertia[ok] = np.column_stack([n_plus, 3 - n_plus - n_minus, n_minus])
    if np.any(~ok):
        inertia[~ok] = _eig_inertia(mats[~ok], zero_tol)
    return QuadFormDecomposition(
        dims=strain.dims,
        b=b,
        transform=transform,
        jacobi=ok,
        inertia=inertia,
        pivot_tol=float(pivot_tol),
    )


def quadform_value(matrix, w) -> float:
    """Reference path: w^T A w for one symmetric 3x3 matrix."""
    a = np.asarray(matrix, dtype=float)
    ww = np.asarray(w, dtype=float)
    return float(ww @ a @ ww)


def canonical_value(b, transform, w) -> float:
    """sum_j b_j y_j^2 with y the recorded change of variables applied to w."""
    y = np.asarray(transform, dtype=float) @ np.asarray(w, dtype=float)
    return float(np.sum(np.asarray(b) * y**2))


def box_lambda1(extents) -> float:
    """First Dirichlet Laplacian eigenvalue of a 2D or 3D box, in closed form."""
    ext = [float(e) for e in extents]
    if any(e <= 0.0 for e in ext):
        raise ValueError("extents must be positive")
    return float(np.pi**2 * sum(1.0 / e**2 for e in ext))


def _trapezoid_weights(fld: Field) -> np.ndarray:
    ws = []
    for axis in range(fld.ndim_grid):
        h = fld.spacing(axis)
        w = np.full(fld.dims[axis], h)
        w[0] = w[-1] = 0.5 * h
        ws.append(w)
    out = ws[0]
    for w in ws[1:]:
        out = np.multiply.outer(out, w)
    return out


def gradient_norms(v: Field) -> np.ndarray:
    """norms[i, j] = ||D_i v_j||_2 over the box (trapezoid quadrature)."""
    if v.ncomp != 3 or v.ndim_grid != 3:
        raise ValueError("gradient_norms needs a 3-component 3D field")
    weights = _trapezoid_weights(v)
    out = np.empty((3, 3))
    for i in range(3):
        h = v.spacing(i)
        for j in range(3):
            g = np.gradient(v.data[j], h, axis=i, edge_order=2)
            out[i, j] = np.sqrt(float(np.sum(weights * g * g)))
    return out


@dataclass
class CriterionRow:
    time: float
    rhs_per_component: tuple[float, float, float]  # c^2 sum_i ||D_i v_j||
    lhs: float                                     # nu * lambda1^(1/4)
    satisfied_per_component: tuple[bool, bool, bool]
    satisfied: bool


@dataclass
class CriterionReport:
    nu: float
    lambda1: float
    c_gn: float
    rows: list[CriterionRow]

    @property
    def satisfied(self) -> bool:
        return all(r.satisfied for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "lambda1": self.lambda1,
            "c_gn": self.c_gn,
            "lhs": self.nu * self.lambda1**0.25,
            "satisfied": self.satisfied,
            "rows": [
                {
                    "time": r.time,
                    "rhs_per_component": list(r.rhs_per_component),
                    "satisfied_per_component": list(r.satisfied_per_component),
                    "satisfied": r.satisfied,
                }
                for r in self.rows
            ],
        }


def uniqueness_criterion(v_series, nu: float, lambda1: float, c_gn: float) -> CriterionReport:
    """Closed-inequality viscosity criterion, per time and per component.

    For each frame and each component j the right side is
    c_gn^2 * sum_i ||D_i v_j||_2; the criterion is satisfied at (t, j) when
    nu * lambda1^(1/4) >= rhs.  A frame is satisfied when all three
    components are (the aggregate reading of the per-component condition).
    """
    if lambda1 <= 0.0:
        raise ValueError("lambda1 must be positive")
    if c_gn <= 0.0:
        raise ValueError("c_gn must be positive")
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    if isinstance(v_series, Field):
        v_series = TimeSeriesField(times=np.array([0.0]), frames=(v_series,))
    lhs = nu * lambda1**0.25
    rows = []
    for t, frame in zip(v_series.times, v_series.frames):
        norms = gradient_norms(frame)
        rhs = tuple(float(c_gn**2 * np.sum(norms[:, j])) for j in range(3))
        sat = tuple(bool(lhs >= r) for r in rhs)
        rows.append(
            CriterionRow(
                time=float(t),
                rhs_per_component=rhs,
                lhs=lhs,
                satisfied_per_component=sat,
                satisfied=all(sat),
            )
        )
    return CriterionReport(nu=nu, lambda1=lambda1, c_gn=c_gn, rows=rows)


def signed_integral(strain: StrainMatrixField, w: Field) -> float:
    """int_Omega B(w, w) dx by the midpoint rule over grid cells.

    Cell-center values are the average of the 2^3 corner samples, which makes
    the composite rule identical to tensor-product trapezoid weights on the
    vertex grid.  The integral is signed: a strain that is positive
    semidefinite everywhere gives a nonnegative result, and indefinite strain
    can give either sign.
    """
    if w.ncomp != 3 or w.ndim_grid != 3:
        raise ValueError("signed_integral needs a 3-component 3D field")
    if w.dims != strain.dims:
        raise ValueError(f"shape mismatch: strain {strain.dims} vs w {w.dims}")
    bvals = np.einsum("jk...,j...,k...->...", strain.sym, w.data, w.data)
    weights = _trapezoid_weights(w)
    return float(np.sum(weights * bvals))
