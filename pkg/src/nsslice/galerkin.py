"""Spectral Galerkin solver for the slice-projected flow equations.

The unknown is a 3-component velocity on a rectangle with homogeneous
Dirichlet boundaries, expanded in the tensor-product sine eigenbasis of the
Dirichlet Laplacian.  The slice chart couples the eliminated-axis derivative
into the in-plane ones, which shows up in three places:

* the elliptic operator gains the cross term ``(c1*D1 + c2*D2)**2``,
* the incompressibility constraint reads ``D1 u1 + D2 u2 + (c1*D1 + c2*D2) u3 = 0``,
* the advecting velocity is ``(u1 + c1*u3, u2 + c2*u3)``,

with ``(c1, c2)`` from :func:`nsslice.geometry.projected_gradient_coeffs`.
All operator tensors are assembled by Gauss-Legendre quadrature on the
rectangle.  The advection tensor is stored in skew-symmetrized form, so its
triple contraction with any state vanishes identically: this is the discrete
counterpart of the cancellation that drives the energy identity, and it holds
without assuming the basis itself is solenoidal.  Incompressibility is
enforced weakly (the divergence is tested against the scalar sine modes) by
orthogonal projection onto the constraint null space; a pointwise-exact
discrete divergence would force the advecting velocity to vanish identically
in any finite sine span, so the weak form is the meaningful discrete choice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .fieldio import Field, TimeSeriesField
from .geometry import SliceChart, projected_gradient_coeffs

logger = logging.getLogger(__name__)

#: Largest |R(z)| <= 1 interval of the classical RK4 stability function on
#: the negative real axis; used for the dt rule of thumb dt <= RK4_REAL_LIMIT
#: / (nu * lambda_max).
RK4_REAL_LIMIT = 2.785

_BLOWUP_LIMIT = 1e12
_SPARSE_DROP_TOL = 1e-14


class GalerkinError(RuntimeError):
    """Solver-level failure."""


class BlowUpError(GalerkinError):
    """A coefficient exceeded the blow-up guard; the step size is unstable."""


@dataclass(frozen=True)
class SpectralBasis:
    """Tensor-product Dirichlet sine basis on a rectangle.

    Modes w_{mn}(x, y) = sin(m pi x / L1) * sin(n pi y / L2) for
    1 <= m <= N1, 1 <= n <= N2, ordered by increasing Laplacian eigenvalue
    lambda_{mn} = pi^2 (m^2/L1^2 + n^2/L2^2), ties broken by (m, n).
    """

    nmodes: tuple[int, int]
    extents: tuple[float, float]
    modes: np.ndarray = field(init=False)    # (M, 2) of (m, n), 1-based
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        n1, n2 = (int(v) for v in self.nmodes)
        l1, l2 = (float(v) for v in self.extents)
        if n1 < 1 or n2 < 1:
            raise ValueError("nmodes must both be >= 1")
        if l1 <= 0.0 or l2 <= 0.0:
            raise ValueError("extents must be positive")
        mm, nn = np.meshgrid(np.arange(1, n1 + 1), np.arange(1, n2 + 1), indexing="ij")
        modes = np.column_stack([mm.ravel(), nn.ravel()])
        lam = np.pi**2 * (modes[:, 0] ** 2 / l1**2 + modes[:, 1] ** 2 / l2**2)
        order = np.lexsort((modes[:, 1], modes[:, 0], lam))
        object.__setattr__(self, "nmodes", (n1, n2))
        object.__setattr__(self, "extents", (l1, l2))
        object.__setattr__(self, "modes", modes[order])
        object.__setattr__(self, "eigenvalues", lam[order])

    @property
    def nmodes_total(self) -> int:
        return self.modes.shape[0]

    @property
    def lambda1(self) -> float:
        """First Dirichlet eigenvalue, pi^2 (1/L1^2 + 1/L2^2), in closed form."""
        l1, l2 = self.extents
        return float(np.pi**2 * (1.0 / l1**2 + 1.0 / l2**2))

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def sine_table(self, axis: int, coords: np.ndarray) -> np.ndarray:
        """table[a-1, i] = sin(a pi coords[i] / L_axis) for a = 1..N_axis."""
        n = self.nmodes[axis]
        length = self.extents[axis]
        a = np.arange(1, n + 1)
        return np.sin(np.pi / length * np.outer(a, np.asarray(coords)))

    def scatter(self, coeffs: np.ndarray) -> np.ndarray:
        """Modal vector(s) (..., M) -> dense (..., N1, N2) grid of coefficients."""
        c = np.asarray(coeffs)
        out = np.zeros(c.shape[:-1] + self.nmodes)
        out[..., self.modes[:, 0] - 1, self.modes[:, 1] - 1] = c
        return out

    def gather(self, grid: np.ndarray) -> np.ndarray:
        """Dense (..., N1, N2) coefficient grid -> modal vector(s) (..., M)."""
        g = np.asarray(grid)
        return g[..., self.modes[:, 0] - 1, self.modes[:, 1] - 1]


@dataclass(frozen=True)
class GalerkinState:
    """Time-dependent coefficient vector of the 3-component expansion.

    coeffs is flat of length 3 * M, component-major: coeffs[c * M + p] is the
    coefficient of basis mode p in velocity component c.
    """

    coeffs: np.ndarray
    time: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size % 3 != 0:
            raise ValueError("coeffs must be flat of length 3 * nmodes")
        if not np.all(np.isfinite(c)):
            raise GalerkinError("non-finite Galerkin coefficients")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "time", float(self.time))

    def by_component(self) -> np.ndarray:
        return self.coeffs.reshape(3, -1)


def gauss_rule(length: float, npoints: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, length]."""
    x, w = np.polynomial.legendre.leggauss(int(npoints))
    return 0.5 * length * (x + 1.0), 0.5 * length * w


def default_quadrature_order(basis: SpectralBasis) -> int:
    """Points per direction that integrate triple sine products to round-off.

    Measured requirement for Gauss-Legendre on trig products with total
    frequency 3 * maxmode * pi / L; grows linearly with the mode count.
    """
    return 3 * max(basis.nmodes) + 12


def spec_minimum_quadrature_order(basis: SpectralBasis) -> int:
    """Documented lower bound on the quadrature order; too coarse in practice."""
    return (3 * max(basis.nmodes) + 2) // 2


def _drop_tiny(arr: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 1.0)
    out = arr.copy()
    out[np.abs(out) < _SPARSE_DROP_TOL * scale] = 0.0
    return out


@dataclass(frozen=True)
class TrilinearTensor:
    """Skew-symmetrized advection tensor in per-direction factorized form.

    The full tensor over composite indices I = (component, mode) is

        H[(d, r), (a, p), (e, q)] = delta_{ed} * (g1[a] * T1[p, q, r]
                                                  + g2[a] * T2[p, q, r])

    with g1 = (1, 0, c1), g2 = (0, 1, c2) carrying the chart coupling of the
    third component into the advecting velocity, and the scalar mode tensors
    factorized over directions: T1 = X1 x Y1, T2 = X2 x Y2 (X* over x-modes,
    Y* over y-modes).  X1 and Y2 are antisymmetric in their last two slots,
    which makes every triple contraction H[u, u, u] vanish identically.
    Entries below 1e-14 (relative to the factor's maximum) are stored as
    exact zeros.
    """

    x1: np.ndarray  # (N1, N1, N1) skewed sin*cos'*sin factor, x-direction
    y1: np.ndarray  # (N2, N2, N2) sin*sin*sin factor, y-direction
    x2: np.ndarray  # (N1, N1, N1) sin*sin*sin factor, x-direction
    y2: np.ndarray  # (N2, N2, N2) skewed factor, y-direction
    c1: float
    c2: float
    basis: SpectralBasis

    @property
    def nnz(self) -> int:
        n1 = np.count_nonzero(self.x1) * np.count_nonzero(self.y1)
        n2 = np.count_nonzero(self.x2) * np.count_nonzero(self.y2)
        return 3 * 2 * (n1 + n2)  # components x advecting slots

    def _bicontract(self, a2d, b2d, xtab, ytab) -> np.ndarray:
        # R[m, n] = sum_{a,b,c,d} A[a,b] B[c,d] X[a,c,m] Y[b,d,n], as three GEMMs
        n1 = xtab.shape[0]
        n2 = ytab.shape[0]
        # tmp[a, d, n] = sum_b A[a, b] Y[b, d, n]
        tmp = a2d @ ytab.reshape(n2, n2 * n2)
        # e[a, c, n] = sum_d tmp[a, d, n] B[c, d]
        e = np.einsum("adn,cd->acn", tmp.reshape(n1, n2, n2), b2d)
        # R[m, n] = sum_{a, c} X[a, c, m] e[a, c, n]
        return xtab.reshape(n1 * n1, n1).T @ e.reshape(n1 * n1, n2)

    def apply_pair(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Weak advection vector <B~(u, v), w_(d,r)> as a (3, M) array."""
        u = u.reshape(3, -1)
        v = v.reshape(3, -1)
        adv1 = self.basis.scatter(u[0] + self.c1 * u[2])
        adv2 = self.basis.scatter(u[1] + self.c2 * u[2])
        out = np.empty_like(v)
        for d in range(3):
            vd = self.basis.scatter(v[d])
            r = self._bicontract(adv1, vd, self.x1, self.y1)
            r += self._bicontract(adv2, vd, self.x2, self.y2)
            out[d] = self.basis.gather(r)
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.apply_pair(u, u)

    def contract_triple(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
        """b~(u, v, w): advecting state u, transported v, test w."""
        return float(np.sum(self.apply_pair(u, v) * np.asarray(w).reshape(3, -1)))

    def dense(self) -> np.ndarray:
        """Materialize H as a dense (3M, 3M, 3M) array; only for small bases."""
        m = self.basis.nmodes_total
        if m > 128:
            raise GalerkinError("dense trilinear tensor is only supported for small bases")
        mm = self.basis.modes[:, 0] - 1
        nn = self.basis.modes[:, 1] - 1
        t1 = self.x1[np.ix_(mm, mm, mm)] * self.y1[np.ix_(nn, nn, nn)]
        t2 = self.x2[np.ix_(mm, mm, mm)] * self.y2[np.ix_(nn, nn, nn)]
        g1 = np.array([1.0, 0.0, self.c1])
        g2 = np.array([0.0, 1.0, self.c2])
        h = np.zeros((3, m, 3, m, 3, m))
        for d in range(3):
            for a in range(3):
                # H[(d,r),(a,p),(d,q)] with p the advecting slot
                h[d, :, a, :, d, :] += np.transpose(g1[a] * t1 + g2[a] * t2, (2, 0, 1))
        return h.reshape(3 * m, 3 * m, 3 * m)


@dataclass(frozen=True)
class OperatorTensors:
    """Assembled Galerkin operators for one basis/chart pair.

    mass and stiffness are the scalar-mode matrices (identical blocks per
    velocity component); constraint maps the composite 3M coefficient vector
    to the weak divergence tested against the M scalar modes.  projector is
    the orthogonal (mass-orthogonal, the mass being a multiple of the
    identity) projector onto the constraint null space.
    """

    basis: SpectralBasis
    chart_coeffs: tuple[float, float]
    quadrature_order: int
    mass: np.ndarray            # (M, M), diagonal up to quadrature round-off
    stiffness_A1: np.ndarray    # (M, M), symmetric negative definite weak form
    constraint: np.ndarray      # (M, 3M) weak projected-divergence operator
    trilinear: TrilinearTensor
    grad1: np.ndarray           # (M, M) <D1 w_p, D1 w_q>
    grad2: np.ndarray           # (M, M) <D2 w_p, D2 w_q>
    cross: np.ndarray           # (M, M) <(c1 D1 + c2 D2) w_p, (c1 D1 + c2 D2) w_q>
    projector: np.ndarray       # (3M, 3M)
    null_basis: np.ndarray      # (3M, dim null)
    constraint_rank: int
    rank_deficient: bool

    @property
    def nmodes_total(self) -> int:
        return self.basis.nmodes_total

    @property
    def mass_diag(self) -> np.ndarray:
        return np.diag(self.mass)

    def max_stable_dt(self, nu: float) -> float:
        """RK4 rule of thumb dt <= 2.785 / (nu * lambda_max) for the stiff part."""
        lam_max = float(
            scipy.linalg.eigh(-self.stiffness_A1, self.mass, eigvals_only=True)[-1]
        )
        return RK4_REAL_LIMIT / (nu * lam_max)

    # quadratic functionals, exact Parseval-style sums in coefficient space
    def energy(self, coeffs: np.ndarray) -> float:
        """Kinetic energy 0.5 * ||u||_H^2."""
        u = np.asarray(coeffs).reshape(3, -1)
        return 0.5 * float(np.sum(u * (u @ self.mass)))

    def norm_h(self, coeffs: np.ndarray) -> float:
        return float(np.sqrt(max(0.0, 2.0 * self.energy(coeffs))))

    def dissipation_terms(self, coeffs: np.ndarray) -> tuple[float, float, float]:
        """(||D1 u||^2, ||D2 u||^2, cross-term norm^2) summed over components."""
        u = np.asarray(coeffs).reshape(3, -1)
        d1 = float(np.sum(u * (u @ self.grad1)))
        d2 = float(np.sum(u * (u @ self.grad2)))
        dc = float(np.sum(u * (u @ self.cross)))
        return d1, d2, dc

    def grad_norm_sq(self, coeffs: np.ndarray) -> float:
        d1, d2, _ = self.dissipation_terms(coeffs)
        return d1 + d2

    def inner_h(self, a: np.ndarray, b: np.ndarray) -> float:
        ar = np.asarray(a).reshape(3, -1)
        br = np.asarray(b).reshape(3, -1)
        return float(np.sum(ar * (br @ self.mass)))

    def without_nonlinearity(self) -> "OperatorTensors":
        """Copy with the advection tensor zeroed; linear regression runs."""
        tr = self.trilinear
        zero = replace(
            tr,
            x1=np.zeros_like(tr.x1),
            y1=np.zeros_like(tr.y1),
            x2=np.zeros_like(tr.x2),
            y2=np.zeros_like(tr.y2),
        )
        return replace(self, trilinear=zero)


def assemble(
    basis: SpectralBasis,
    chart: SliceChart | None,
    quadrature_order: int | None = None,
) -> OperatorTensors:
    """Assemble mass, stiffness, constraint and advection tensors.

    chart=None means an axis-aligned slice (no eliminated-derivative
    coupling).  quadrature_order is the Gauss-Legendre point count per
    direction; the default integrates all triple products to round-off.
    """
    if chart is None:
        c1, c2 = 0.0, 0.0
    else:
        c1, c2 = projected_gradient_coeffs(chart)
    n1, n2 = basis.nmodes
    l1, l2 = basis.extents
    if quadrature_order is None:
        quadrature_order = default_quadrature_order(basis)
    q = int(quadrature_order)
    qmin = spec_minimum_quadrature_order(basis)
    if q < qmin:
        raise ValueError(f"quadrature_order {q} below the documented minimum {qmin}")
    if q < default_quadrature_order(basis):
        logger.warning(
            "quadrature_order %d is below the round-off-exact threshold %d; "
            "triple products will carry quadrature error",
            q,
            default_quadrature_order(basis),
        )

    def tables(n, length):
        x, w = gauss_rule(length, q)
        a = np.arange(1, n + 1)
        s = np.sin(np.pi / length * np.outer(a, x))
        c = np.cos(np.pi / length * np.outer(a, x))
        ss = np.einsum("an,n,bn->ab", s, w, s)
        sc = np.einsum("an,n,bn->ab", s, w, c)
        cc = np.einsum("an,n,bn->ab", c, w, c)
        sss = np.einsum("an,bn,cn,n->abc", s, s, s, w)
        scs = np.einsum("an,bn,cn,n->abc", s, c, s, w)
        return ss, sc, cc, sss, scs

    ss1, sc1, cc1, sss1, scs1 = tables(n1, l1)
    ss2, sc2, cc2, sss2, scs2 = tables(n2, l2)

    mm = basis.modes[:, 0]
    nn = basis.modes[:, 1]
    im = mm - 1
    jn = nn - 1
    ix = np.ix_(im, im)
    iy = np.ix_(jn, jn)

    mass = ss1[ix] * ss2[iy]
    # <D1 w_p, D1 w_q> etc.; derivatives bring mode-number factors
    k1 = (np.pi / l1) ** 2 * np.outer(mm, mm) * cc1[ix] * ss2[iy]
    k2 = (np.pi / l2) ** 2 * np.outer(nn, nn) * ss1[ix] * cc2[iy]
    # <D1 w_p, D2 w_q> = (m_p pi/L1)(n_q pi/L2) * int sin_mq cos_mp dx * int sin_np cos_nq dy
    k12 = (np.pi / l1) * (np.pi / l2) * np.outer(mm, nn) * sc1.T[ix] * sc2[iy]
    cross = c1 * c1 * k1 + c2 * c2 * k2 + c1 * c2 * (k12 + k12.T)
    stiffness = -(k1 + k2 + cross)

    # weak derivative pairings <D_i w_q, w_p>
    g1 = (np.pi / l1) * mm[None, :] * sc1[ix] * ss2[iy]
    g2 = (np.pi / l2) * nn[None, :] * ss1[ix] * sc2[iy]
    m = basis.nmodes_total
    constraint = np.zeros((m, 3 * m))
    constraint[:, 0:m] = g1
    constraint[:, m:2 * m] = g2
    constraint[:, 2 * m:3 * m] = c1 * g1 + c2 * g2

    # skewed advective factors; antisymmetric in the last two slots
    bmode1 = np.arange(1, n1 + 1)
    x1 = 0.5 * (np.pi / l1) * (
        bmode1[None, :, None] * scs1 - bmode1[None, None, :] * np.swapaxes(scs1, 1, 2)
    )
    bmode2 = np.arange(1, n2 + 1)
    y2 = 0.5 * (np.pi / l2) * (
        bmode2[None, :, None] * scs2 - bmode2[None, None, :] * np.swapaxes(scs2, 1, 2)
    )
    trilinear = TrilinearTensor(
        x1=_drop_tiny(x1),
        y1=_drop_tiny(sss2),
        x2=_drop_tiny(sss1),
        y2=_drop_tiny(y2),
        c1=c1,
        c2=c2,
        basis=basis,
    )

    # null space of the constraint via SVD; mass ~ identity so the Euclidean
    # orthogonal projector is the mass-orthogonal one.  The tolerance carries
    # an absolute floor at the operator's natural scale so that an
    # all-round-off matrix reads as rank zero.
    svals = scipy.linalg.svdvals(constraint)
    scale_c = np.pi * max(n1, n2) / min(l1, l2) * (l1 * l2 / 4.0)
    tol = max(
        (svals[0] if svals.size else 0.0) * max(constraint.shape) * np.finfo(float).eps,
        1e-12 * scale_c,
    )
    rank = int(np.sum(svals > tol))
    _, _, vt = scipy.linalg.svd(constraint, full_matrices=True)
    null_basis = vt[rank:].T
    projector = null_basis @ null_basis.T
    # odd-by-odd mode counts carry one structural left-null direction of the
    # weak divergence (a spurious-mode pair), so full rank is m minus that
    expected_rank = m - (n1 % 2) * (n2 % 2)
    rank_deficient = rank < expected_rank
    if rank_deficient:
        logger.warning(
            "constraint matrix rank %d below the expected %d; "
            "the divergence-free subspace is larger than usual",
            rank,
            expected_rank,
        )

    return OperatorTensors(
        basis=basis,
        chart_coeffs=(c1, c2),
        quadrature_order=q,
        mass=mass,
        stiffness_A1=stiffness,
        constraint=constraint,
        trilinear=trilinear,
        grad1=k1,
        grad2=k2,
        cross=cross,
        projector=projector,
        null_basis=null_basis,
        constraint_rank=rank,
        rank_deficient=rank_deficient,
    )


def project_divfree(state: GalerkinState, tensors: OperatorTensors) -> GalerkinState:
    """Mass-orthogonal projection onto the weak divergence-free subspace.

    Idempotent and self-adjoint in the mass inner product; states already in
    the subspace are returned unchanged up to round-off.
    """
    return GalerkinState(coeffs=tensors.projector @ state.coeffs, time=state.time)


def divergence_residual(coeffs: np.ndarray, tensors: OperatorTensors) -> float:
    """H-norm of the scalar-mode projection of the discrete divergence."""
    r = tensors.constraint @ np.asarray(coeffs).ravel()
    d = np.abs(np.diag(tensors.mass))
    return float(np.sqrt(np.sum(r * r / np.where(d > 0, d, 1.0))))


def _normalize_forcing(forcing, tensors: OperatorTensors):
    """Return callable t -> (3, M) basis coefficients of the forcing."""
    m = tensors.nmodes_total
    if forcing is None:
        zero = np.zeros((3, m))
        return lambda t: zero
    if callable(forcing):
        def wrapped(t):
            f = np.asarray(forcing(t), dtype=float)
            return f.reshape(3, m)
        return wrapped
    if isinstance(forcing, TimeSeriesField):
        times = forcing.times
        frames = np.stack(
            [project_field_to_basis(fr, tensors.basis) for fr in forcing.frames]
        )

        def interp(t):
            if t <= times[0]:
                return frames[0]
            if t >= times[-1]:
                return frames[-1]
            j = int(np.searchsorted(times, t) - 1)
            s = (t - times[j]) / (times[j + 1] - times[j])
            return (1.0 - s) * frames[j] + s * frames[j + 1]

        return interp
    arr = np.asarray(forcing, dtype=float).reshape(3, m)
    return lambda t: arr


def _rhs(coeffs3m: np.ndarray, t: float, tensors: OperatorTensors, f_of_t, nu: float) -> np.ndarray:
    """Projected coefficient velocity of the Galerkin ODE system."""
    u = coeffs3m.reshape(3, -1)
    weak = nu * (u @ tensors.stiffness_A1)
    weak -= tensors.trilinear.apply(u)
    weak += f_of_t(t) @ tensors.mass
    udot = weak / np.diag(tensors.mass)
    return tensors.projector @ udot.ravel()


def step(
    state: GalerkinState,
    tensors: OperatorTensors,
    f_coeffs,
    nu: float,
    dt: float,
) -> GalerkinState:
    """One explicit RK4 step of the projected Galerkin system, then reprojection.

    f_coeffs gives the forcing in basis coordinates: a constant (3, M) array,
    a callable t -> (3, M), or None.  Raises BlowUpError when any coefficient
    passes 1e12, which signals an unstable dt.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    f_of_t = f_coeffs if callable(f_coeffs) else _normalize_forcing(f_coeffs, tensors)
    u0 = state.coeffs
    t0 = state.time
    k1 = _rhs(u0, t0, tensors, f_of_t, nu)
    k2 = _rhs(u0 + 0.5 * dt * k1, t0 + 0.5 * dt, tensors, f_of_t, nu)
    k3 = _rhs(u0 + 0.5 * dt * k2, t0 + 0.5 * dt, tensors, f_of_t, nu)
    k4 = _rhs(u0 + dt * k3, t0 + dt, tensors, f_of_t, nu)
    u1 = u0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(u1)) or np.max(np.abs(u1)) > _BLOWUP_LIMIT:
        raise BlowUpError(
            f"coefficients exceeded {_BLOWUP_LIMIT:.0e} at t = {t0 + dt:g}; "
            f"reduce dt (rule of thumb: dt <= {RK4_REAL_LIMIT:.3f} / (nu * lambda_max))"
        )
    return project_divfree(GalerkinState(coeffs=u1, time=t0 + dt), tensors)


def project_field_to_basis(fld: Field, basis: SpectralBasis) -> np.ndarray:
    """L2 (mass) projection of a sampled 2D field onto the basis, per component.

    Uses the trapezoid rule on the vertex grid, which by discrete sine
    orthogonality is exact for fields already in the span as long as the grid
    resolves the modes (dims[i] >= N_i + 2).
    """
    if fld.ndim_grid != 2:
        raise ValueError("project_field_to_basis needs a 2D field")
    n1, n2 = basis.nmodes
    if fld.dims[0] < n1 + 2 or fld.dims[1] < n2 + 2:
        raise ValueError(
            f"grid {fld.dims} too coarse for modes {basis.nmodes}; need dims >= N + 2"
        )
    for axis in range(2):
        if abs(fld.extents[axis] - basis.extents[axis]) > 1e-12 * basis.extents[axis]:
            raise ValueError(
                f"field extents {fld.extents} do not match basis extents {basis.extents}"
            )
    j1 = fld.dims[0] - 1
    j2 = fld.dims[1] - 1
    s1 = basis.sine_table(0, fld.axis_coords(0))  # (N1, n1grid)
    s2 = basis.sine_table(1, fld.axis_coords(1))
    grid = np.einsum("mi,cij,nj->cmn", s1, fld.data, s2) * (4.0 / (j1 * j2))
    out = np.empty((fld.ncomp, basis.nmodes_total))
    for c in range(fld.ncomp):
        out[c] = basis.gather(grid[c])
    return out


def synthesize_field(basis: SpectralBasis, coeffs: np.ndarray, dims) -> Field:
    """Evaluate the expansion on a vertex grid of the basis rectangle."""
    n1, n2 = (int(v) for v in dims)
    u = np.asarray(coeffs).reshape(-1, basis.nmodes_total)
    x = np.linspace(0.0, basis.extents[0], n1)
    y = np.linspace(0.0, basis.extents[1], n2)
    s1 = basis.sine_table(0, x)
    s2 = basis.sine_table(1, y)
    grids = basis.scatter(u)
    data = np.einsum("mi,cmn,nj->cij", s1, grids, s2)
    return Field(dims=(n1, n2), extents=basis.extents, ncomp=u.shape[0], data=data)


@dataclass
class Trace:
    """Per-step record of the coefficient trajectory."""

    times: np.ndarray    # (K,)
    coeffs: np.ndarray   # (K, 3M)

    def __len__(self) -> int:
        return self.times.size

    def state(self, k: int) -> GalerkinState:
        return GalerkinState(coeffs=self.coeffs[k], time=float(self.times[k]))


@dataclass
class SolveResult:
    trace: Trace
    frames: TimeSeriesField
    basis: SpectralBasis
    tensors: OperatorTensors
    nu: float
    dt: float
    final_state: GalerkinState


def solve(
    u0: Field,
    forcing,
    chart: SliceChart | None,
    basis: SpectralBasis,
    nu: float,
    dt: float,
    t_end: float,
    tensors: OperatorTensors | None = None,
    record_every: int = 1,
    frame_dims: tuple[int, int] | None = None,
) -> SolveResult:
    """Integrate the projected Galerkin system from sampled initial data.

    The initial field is mass-projected onto the basis and then projected
    onto the divergence-free subspace; forcing may be None, a constant or
    callable in basis coordinates, or a TimeSeriesField restricted to the
    slice grid (linearly interpolated between frames).
    """
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    if tensors is None:
        tensors = assemble(basis, chart)
    coeffs0 = project_field_to_basis(u0, basis)
    state = project_divfree(GalerkinState(coeffs=coeffs0.ravel(), time=0.0), tensors)
    return solve_from_state(
        state,
        forcing,
        tensors,
        nu,
        dt,
        t_end,
        record_every=record_every,
        frame_dims=frame_dims or u0.dims,
    )


def solve_from_state(
    state: GalerkinState,
    forcing,
    tensors: OperatorTensors,
    nu: float,
    dt: float,
    t_end: float,
    record_every: int = 1,
    frame_dims: tuple[int, int] = (33, 33),
) -> SolveResult:
    """solve() without the field-projection front end; state is coefficients."""
    nsteps = int(round(t_end / dt))
    if nsteps < 1 or abs(nsteps * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ValueError(f"t_end {t_end} is not an integer multiple of dt {dt}")
    f_of_t = _normalize_forcing(forcing, tensors)
    times = np.empty(nsteps + 1)
    coeffs = np.empty((nsteps + 1, state.coeffs.size))
    times[0] = state.time
    coeffs[0] = state.coeffs
    cur = state
    for k in range(nsteps):
        cur = step(cur, tensors, f_of_t, nu, dt)
        times[k + 1] = cur.time
        coeffs[k + 1] = cur.coeffs
    trace = Trace(times=times, coeffs=coeffs)
    rec = list(range(0, nsteps + 1, max(1, int(record_every))))
    if rec[-1] != nsteps:
        rec.append(nsteps)
    frames = TimeSeriesField(
        times=times[rec],
        frames=tuple(
            synthesize_field(tensors.basis, coeffs[k], frame_dims) for k in rec
        ),
    )
    return SolveResult(
        trace=trace,
        frames=frames,
        basis=tensors.basis,
        tensors=tensors,
        nu=nu,
        dt=dt,
        final_state=cur,
    )


def rhs_dual_norm(
    coeffs: np.ndarray,
    tensors: OperatorTensors,
    f_coeffs,
    nu: float,
    t: float,
) -> float:
    """Dual (gradient-seminorm) magnitude of the momentum balance right side.

    Diagnostic only: the time-derivative functional nu*A1 u - B~(u, u) + f is
    measured against test functions in the gradient seminorm, i.e.
    sqrt(F^T K^{-1} F) per component with K the (diagonal) gradient Gram
    matrix.  Useful for monitoring how hard the coefficient ODE is being
    driven; no controller consumes it.
    """
    f_of_t = f_coeffs if callable(f_coeffs) else _normalize_forcing(f_coeffs, tensors)
    u = np.asarray(coeffs).reshape(3, -1)
    weak = nu * (u @ tensors.stiffness_A1)
    weak -= tensors.trilinear.apply(u)
    weak += f_of_t(t) @ tensors.mass
    kdiag = np.diag(tensors.grad1) + np.diag(tensors.grad2)
    return float(np.sqrt(np.sum(weak**2 / kdiag)))


def coercivity_check(tensors: OperatorTensors) -> float:
    """Smallest eigenvalue of the negated stiffness on the div-free subspace.

    Mass-normalized (generalized eigenvalue problem); a strictly positive
    value certifies discrete ellipticity of the projected operator.
    """
    z = tensors.null_basis
    m = tensors.nmodes_total
    s3 = np.zeros((3 * m, 3 * m))
    m3 = np.zeros((3 * m, 3 * m))
    for c in range(3):
        sl = slice(c * m, (c + 1) * m)
        s3[sl, sl] = -tensors.stiffness_A1
        m3[sl, sl] = tensors.mass
    a = z.T @ s3 @ z
    b = z.T @ m3 @ z
    vals = scipy.linalg.eigh(a, b, eigvals_only=True)
    return float(vals[0])


@dataclass
class SolveSetup:
    """One fully specified solver run: operators, data and parameters."""

    tensors: OperatorTensors
    u0_coeffs: np.ndarray      # (3M,) or (3, M)
    forcing: object            # None | array | callable in basis coordinates
    nu: float
    dt: float
    t_end: float

    def initial_state(self) -> GalerkinState:
        return project_divfree(
            GalerkinState(coeffs=np.asarray(self.u0_coeffs, dtype=float).ravel(), time=0.0),
            self.tensors,
        )

    def run(self, record_every: int = 1) -> SolveResult:
        return solve_from_state(
            self.initial_state(),
            self.forcing,
            self.tensors,
            self.nu,
            self.dt,
            self.t_end,
            record_every=record_every,
        )
