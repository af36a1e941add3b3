import numpy as np
import pytest

from nsslice.fieldio import Field
from nsslice.galerkin import (
    BlowUpError,
    GalerkinState,
    SpectralBasis,
    assemble,
    coercivity_check,
    divergence_residual,
    default_quadrature_order,
    project_divfree,
    project_field_to_basis,
    solve,
    solve_from_state,
    step,
    synthesize_field,
)
from nsslice.geometry import Hyperplane, make_chart

DIAG_PLANE = Hyperplane((1 / np.sqrt(3.0),) * 3, 0.5)


# closed-form trig integrals on [0, L]: the quadrature-independent oracle
def sc_exact(a, b, length):
    if a == b:
        return 0.0
    return length / np.pi * a * (1.0 - (-1.0) ** (a + b)) / (a**2 - b**2)


def _sig(k):
    if k == 0 or k % 2 == 0:
        return 0.0
    return 2.0 / k


def sss_exact(a, b, c, length):
    return length / (4.0 * np.pi) * (
        _sig(c + a - b) + _sig(c - a + b) - _sig(c + a + b) - _sig(c - a - b)
    )


def scs_exact(a, b, c, length):
    return length / 4.0 * (
        float(b == c - a) + float(b == a - c) - float(b == a + c)
    )


@pytest.fixture(scope="module")
def square_basis():
    return SpectralBasis(nmodes=(4, 4), extents=(1.0, 1.0))


@pytest.fixture(scope="module")
def square_tensors(square_basis):
    return assemble(square_basis, None)


@pytest.fixture(scope="module")
def oblique_tensors(square_basis):
    return assemble(square_basis, make_chart(DIAG_PLANE))


def test_basis_mode_table_sorted():
    basis = SpectralBasis(nmodes=(5, 3), extents=(1.3, 0.7))
    lam = basis.eigenvalues
    assert np.all(np.diff(lam) >= -1e-13)
    assert lam[0] == pytest.approx(basis.lambda1)
    m, n = basis.modes[0]
    assert (m, n) == (1, 1)


def test_lambda1_closed_form():
    basis = SpectralBasis(nmodes=(3, 3), extents=(2.0, 0.5))
    assert basis.lambda1 == pytest.approx(np.pi**2 * (0.25 + 4.0), rel=1e-15)


def test_mass_matrix_diagonal(square_tensors):
    mass = square_tensors.mass
    diag = np.diag(mass)
    assert np.allclose(diag, 0.25, atol=1e-13)
    off = mass - np.diag(diag)
    assert np.max(np.abs(off)) <= 1e-12 * np.max(diag)


def test_stiffness_axis_aligned_is_sine_laplacian(square_basis, square_tensors):
    s = square_tensors.stiffness_A1
    expect = -square_basis.eigenvalues * 0.25
    assert np.allclose(np.diag(s), expect, atol=1e-12)
    assert np.max(np.abs(s - np.diag(np.diag(s)))) < 1e-12


def test_stiffness_symmetric_negative_definite(oblique_tensors):
    s = oblique_tensors.stiffness_A1
    assert np.allclose(s, s.T, atol=1e-12)
    vals = np.linalg.eigvalsh(s)
    assert np.max(vals) < 0.0


def test_assembly_against_closed_form_integrals():
    # rectangular box, oblique chart: every operator entry against the
    # closed-form trig integrals
    basis = SpectralBasis(nmodes=(4, 3), extents=(1.5, 0.8))
    chart = make_chart(Hyperplane.from_vector((0.6, -0.8, 1.0), 0.3))
    tens = assemble(basis, chart)
    c1, c2 = tens.chart_coeffs
    l1, l2 = basis.extents
    modes = basis.modes
    m = basis.nmodes_total

    def dd(a, b):
        return 1.0 if a == b else 0.0

    mass_ref = np.zeros((m, m))
    k1_ref = np.zeros((m, m))
    k2_ref = np.zeros((m, m))
    k12_ref = np.zeros((m, m))
    g1_ref = np.zeros((m, m))
    g2_ref = np.zeros((m, m))
    for p in range(m):
        mp, np_ = modes[p]
        for q in range(m):
            mq, nq = modes[q]
            mass_ref[p, q] = dd(mp, mq) * dd(np_, nq) * (l1 / 2) * (l2 / 2)
            k1_ref[p, q] = (
                (np.pi / l1) ** 2 * mp * mq * dd(mp, mq) * (l1 / 2) * dd(np_, nq) * (l2 / 2)
            )
            k2_ref[p, q] = (
                (np.pi / l2) ** 2 * np_ * nq * dd(mp, mq) * (l1 / 2) * dd(np_, nq) * (l2 / 2)
            )
            k12_ref[p, q] = (
                (np.pi / l1) * (np.pi / l2) * mp * nq
                * sc_exact(mq, mp, l1) * sc_exact(np_, nq, l2)
            )
            g1_ref[p, q] = (np.pi / l1) * mq * sc_exact(mp, mq, l1) * dd(np_, nq) * (l2 / 2)
            g2_ref[p, q] = (np.pi / l2) * nq * dd(mp, mq) * (l1 / 2) * sc_exact(np_, nq, l2)
    assert np.allclose(tens.mass, mass_ref, atol=1e-13)
    assert np.allclose(tens.grad1, k1_ref, atol=1e-12)
    assert np.allclose(tens.grad2, k2_ref, atol=1e-12)
    cross_ref = c1 * c1 * k1_ref + c2 * c2 * k2_ref + c1 * c2 * (k12_ref + k12_ref.T)
    assert np.allclose(tens.cross, cross_ref, atol=1e-12)
    assert np.allclose(tens.stiffness_A1, -(k1_ref + k2_ref + cross_ref), atol=1e-12)
    con_ref = np.hstack([g1_ref, g2_ref, c1 * g1_ref + c2 * g2_ref])
    assert np.allclose(tens.constraint, con_ref, atol=1e-12)


def test_trilinear_factors_against_closed_form():
    basis = SpectralBasis(nmodes=(5, 4), extents=(1.1, 0.9))
    tens = assemble(basis, None)
    tri = tens.trilinear
    l1, l2 = basis.extents
    n1, n2 = basis.nmodes
    for a in range(1, n1 + 1):
        for b in range(1, n1 + 1):
            for c in range(1, n1 + 1):
                x1_ref = 0.5 * (np.pi / l1) * (
                    b * scs_exact(a, b, c, l1) - c * scs_exact(a, c, b, l1)
                )
                assert tri.x1[a - 1, b - 1, c - 1] == pytest.approx(x1_ref, abs=1e-13)
                assert tri.x2[a - 1, b - 1, c - 1] == pytest.approx(
                    sss_exact(a, b, c, l1), abs=1e-13
                )
    for a in range(1, n2 + 1):
        for b in range(1, n2 + 1):
            for c in range(1, n2 + 1):
                assert tri.y1[a - 1, b - 1, c - 1] == pytest.approx(
                    sss_exact(a, b, c, l2), abs=1e-13
                )
                y2_ref = 0.5 * (np.pi / l2) * (
                    b * scs_exact(a, b, c, l2) - c * scs_exact(a, c, b, l2)
                )
                assert tri.y2[a - 1, b - 1, c - 1] == pytest.approx(y2_ref, abs=1e-13)


def test_trilinear_dense_against_quadrature_oracle():
    # brute-force oracle: evaluate the skew-symmetrized advection integral
    # by 2D Gauss quadrature on grids of basis-function values
    basis = SpectralBasis(nmodes=(3, 2), extents=(1.0, 1.2))
    chart = make_chart(Hyperplane.from_vector((0.5, 0.25, 1.0), 0.4))
    tens = assemble(basis, chart)
    c1, c2 = tens.chart_coeffs
    l1, l2 = basis.extents
    q = 40
    from nsslice.galerkin import gauss_rule

    xg, wx = gauss_rule(l1, q)
    yg, wy = gauss_rule(l2, q)
    w2d = wx[:, None] * wy[None, :]

    def wfun(mode, dx=0, dy=0):
        mth, nth = mode
        fx = np.sin(mth * np.pi * xg / l1) if dx == 0 else (
            mth * np.pi / l1 * np.cos(mth * np.pi * xg / l1)
        )
        fy = np.sin(nth * np.pi * yg / l2) if dy == 0 else (
            nth * np.pi / l2 * np.cos(nth * np.pi * yg / l2)
        )
        return fx[:, None] * fy[None, :]

    m = basis.nmodes_total
    g1 = np.array([1.0, 0.0, c1])
    g2 = np.array([0.0, 1.0, c2])

    def b_adv(ai, p, bi, qq, di, r):
        # advective integral for basis triple (component, mode)
        if bi != di:
            return 0.0
        vad1 = g1[ai] * wfun(basis.modes[p])
        vad2 = g2[ai] * wfun(basis.modes[p])
        integ = (
            vad1 * wfun(basis.modes[qq], dx=1) + vad2 * wfun(basis.modes[qq], dy=1)
        ) * wfun(basis.modes[r])
        return float(np.sum(w2d * integ))

    h = tens.trilinear.dense()
    rng = np.random.default_rng(0)
    for _ in range(60):
        ai, bi, di = rng.integers(0, 3, size=3)
        p, qq, r = rng.integers(0, m, size=3)
        skew = 0.5 * (b_adv(ai, p, bi, qq, di, r) - b_adv(ai, p, di, r, bi, qq))
        got = h[di * m + r, ai * m + p, bi * m + qq]
        assert got == pytest.approx(skew, abs=1e-11)


def test_trilinear_apply_against_pseudospectral_oracle():
    # independent route: synthesize fields and analytic derivatives on a fine
    # Gauss grid, form the advective products pointwise, integrate against
    # each test mode, and skew-symmetrize; must match the factorized tensor
    # contraction to round-off
    basis = SpectralBasis(nmodes=(6, 5), extents=(1.4, 0.9))
    chart = make_chart(Hyperplane.from_vector((0.7, -0.4, 1.0), 0.2))
    tens = assemble(basis, chart)
    c1, c2 = tens.chart_coeffs
    l1, l2 = basis.extents
    m = basis.nmodes_total
    rng = np.random.default_rng(6)
    u = rng.standard_normal((3, m))
    v = rng.standard_normal((3, m))

    from nsslice.galerkin import gauss_rule

    xg, wx = gauss_rule(l1, 80)
    yg, wy = gauss_rule(l2, 80)
    modes = basis.modes
    sx = np.sin(np.pi / l1 * np.outer(modes[:, 0], xg))   # (M, qx)
    cx = np.cos(np.pi / l1 * np.outer(modes[:, 0], xg))
    sy = np.sin(np.pi / l2 * np.outer(modes[:, 1], yg))
    cy = np.cos(np.pi / l2 * np.outer(modes[:, 1], yg))
    kx = (np.pi / l1) * modes[:, 0]
    ky = (np.pi / l2) * modes[:, 1]

    def synth(coef):
        return np.einsum("p,pi,pj->ij", coef, sx, sy)

    def synth_dx(coef):
        return np.einsum("p,p,pi,pj->ij", coef, kx, cx, sy)

    def synth_dy(coef):
        return np.einsum("p,p,pi,pj->ij", coef, ky, sx, cy)

    adv1 = synth(u[0] + c1 * u[2])
    adv2 = synth(u[1] + c2 * u[2])
    w2d = wx[:, None] * wy[None, :]
    expect = np.empty((3, m))
    for d in range(3):
        # forward advective term tested against each mode
        a_of_v = adv1 * synth_dx(v[d]) + adv2 * synth_dy(v[d])
        fwd = np.einsum("ij,pi,pj->p", w2d * a_of_v, sx, sy)
        # transposed term: advection applied to the test mode, paired with v_d
        vgrid = synth(v[d])
        for r in range(m):
            grad_wr = adv1 * np.outer(kx[r] * cx[r], sy[r]) + adv2 * np.outer(
                ky[r] * sx[r], cy[r]
            )
            expect[d, r] = 0.5 * (fwd[r] - float(np.sum(w2d * grad_wr * vgrid)))
    got = tens.trilinear.apply_pair(u, v)
    scale = np.max(np.abs(expect))
    assert np.max(np.abs(got - expect)) < 1e-12 * max(scale, 1.0)


def test_energy_matches_grid_quadrature(oblique_tensors):
    # Parseval energy against direct quadrature of |u|^2 / 2 on a fine grid
    from nsslice.galerkin import gauss_rule

    tens = oblique_tensors
    basis = tens.basis
    rng = np.random.default_rng(31)
    coeffs = rng.standard_normal((3, basis.nmodes_total))
    xg, wx = gauss_rule(basis.extents[0], 60)
    yg, wy = gauss_rule(basis.extents[1], 60)
    s1 = basis.sine_table(0, xg)
    s2 = basis.sine_table(1, yg)
    grids = basis.scatter(coeffs)
    synth = np.einsum("mi,cmn,nj->cij", s1, grids, s2)
    direct = 0.5 * float(np.sum(synth**2 * wx[None, :, None] * wy[None, None, :]))
    assert tens.energy(coeffs) == pytest.approx(direct, rel=1e-13)


@pytest.mark.parametrize("which", ["axis", "oblique"])
def test_trilinear_skew_annihilation(square_tensors, oblique_tensors, which):
    tens = square_tensors if which == "axis" else oblique_tensors
    m = tens.nmodes_total
    rng = np.random.default_rng(99)
    for _ in range(100):
        u = tens.projector @ rng.standard_normal(3 * m)
        val = tens.trilinear.contract_triple(u, u, u)
        scale = tens.norm_h(u) ** 3
        assert abs(val) <= 1e-10 * scale


def test_project_divfree_idempotent(square_tensors):
    rng = np.random.default_rng(3)
    m = square_tensors.nmodes_total
    state = GalerkinState(rng.standard_normal(3 * m), 0.0)
    once = project_divfree(state, square_tensors)
    twice = project_divfree(once, square_tensors)
    assert np.max(np.abs(twice.coeffs - once.coeffs)) < 1e-13
    # already divergence-free states are returned unchanged
    assert np.max(np.abs(project_divfree(once, square_tensors).coeffs - once.coeffs)) < 1e-12


def test_project_divfree_rowspace_to_zero(square_tensors):
    rng = np.random.default_rng(4)
    coeffs = square_tensors.constraint.T @ rng.standard_normal(square_tensors.nmodes_total)
    out = project_divfree(GalerkinState(coeffs, 0.0), square_tensors)
    assert divergence_residual(out.coeffs, square_tensors) <= 1e-10
    assert np.max(np.abs(out.coeffs)) < 1e-10 * max(1.0, np.max(np.abs(coeffs)))


def test_project_divfree_matches_kkt_oracle(oblique_tensors):
    # dense KKT solve for min ||x - u||^2  s.t.  C x = 0
    tens = oblique_tensors
    m = tens.nmodes_total
    c = tens.constraint
    rng = np.random.default_rng(11)
    u = rng.standard_normal(3 * m)
    kkt = np.block([
        [np.eye(3 * m), c.T],
        [c, np.zeros((m, m))],
    ])
    rhs = np.concatenate([u, np.zeros(m)])
    x = np.linalg.lstsq(kkt, rhs, rcond=None)[0][: 3 * m]
    proj = project_divfree(GalerkinState(u, 0.0), tens).coeffs
    assert np.max(np.abs(proj - x)) < 1e-9
    assert divergence_residual(proj, tens) <= 1e-10 * np.sqrt(tens.grad_norm_sq(proj))


def test_projector_mass_self_adjoint(square_tensors):
    p = square_tensors.projector
    assert np.allclose(p, p.T, atol=1e-13)
    assert np.allclose(p @ p, p, atol=1e-13)


def test_constraint_expected_rank():
    # even mode counts: full rank; odd-by-odd: one structural deficiency
    even = assemble(SpectralBasis(nmodes=(4, 4), extents=(1.0, 1.0)), None)
    assert even.constraint_rank == even.basis.nmodes_total
    assert not even.rank_deficient
    odd = assemble(SpectralBasis(nmodes=(3, 3), extents=(1.0, 1.0)), None)
    assert odd.constraint_rank == odd.basis.nmodes_total - 1
    assert not odd.rank_deficient
    # single-mode basis: the constraint is vacuous by parity
    tiny = assemble(SpectralBasis(nmodes=(1, 1), extents=(1.0, 1.0)), None)
    assert tiny.constraint_rank == 0
    assert not tiny.rank_deficient


def test_quadrature_order_guard(square_basis):
    with pytest.raises(ValueError):
        assemble(square_basis, None, quadrature_order=3)


def test_step_zero_fixed_point(square_tensors):
    m = square_tensors.nmodes_total
    state = GalerkinState(np.zeros(3 * m), 0.0)
    out = step(state, square_tensors, None, nu=0.5, dt=1e-2)
    assert np.all(out.coeffs == 0.0)
    assert out.time == pytest.approx(1e-2)


def test_step_linear_heat_mode_decay(square_basis, square_tensors):
    # single mode, no forcing, advection zeroed: coefficient follows
    # exp(-nu lambda dt) with O(dt^5) one-step error
    tens = square_tensors.without_nonlinearity()
    m = square_basis.nmodes_total
    for p in (0, 3, 7):
        u = np.zeros((3, m))
        u[2, p] = 1.0  # third component is unconstrained for alpha = 0
        state = GalerkinState(u.ravel(), 0.0)
        nu, dt = 0.3, 2e-3
        lam = square_basis.eigenvalues[p]
        out = step(state, tens, None, nu, dt)
        got = out.coeffs.reshape(3, -1)[2, p]
        assert abs(got - np.exp(-nu * lam * dt)) <= (nu * lam * dt) ** 5 / 120.0 + 1e-14


def test_step_blowup_guard(square_tensors):
    rng = np.random.default_rng(1)
    m = square_tensors.nmodes_total
    state = project_divfree(
        GalerkinState(10.0 * rng.standard_normal(3 * m), 0.0), square_tensors
    )
    with pytest.raises(BlowUpError, match="reduce dt"):
        cur = state
        for _ in range(200):
            cur = step(cur, square_tensors, None, nu=1.0, dt=1.0)


def test_solve_requires_integral_step_count(square_tensors):
    m = square_tensors.nmodes_total
    with pytest.raises(ValueError, match="integer multiple"):
        solve_from_state(
            GalerkinState(np.zeros(3 * m), 0.0), None, square_tensors,
            nu=0.1, dt=3e-3, t_end=0.01,
        )


def test_solve_zero_data_zero_trajectory(square_basis, square_tensors):
    u0 = Field(dims=(9, 9), extents=(1.0, 1.0), ncomp=3, data=np.zeros((3, 9, 9)))
    res = solve(u0, None, None, square_basis, nu=0.1, dt=1e-2, t_end=0.1,
                tensors=square_tensors)
    assert np.max(np.abs(res.trace.coeffs)) == 0.0
    assert all(np.max(np.abs(f.data)) == 0.0 for f in res.frames.frames)


def test_solve_divergence_preserved_and_energy_decay(oblique_tensors):
    rng = np.random.default_rng(8)
    m = oblique_tensors.nmodes_total
    u0 = oblique_tensors.projector @ (
        rng.standard_normal(3 * m) * np.exp(-0.4 * np.tile(np.arange(m), 3))
    )
    res = solve_from_state(
        GalerkinState(u0, 0.0), None, oblique_tensors, nu=0.1, dt=2e-3, t_end=0.2
    )
    grads = [np.sqrt(oblique_tensors.grad_norm_sq(c)) for c in res.trace.coeffs]
    for k in range(len(res.trace)):
        r = divergence_residual(res.trace.coeffs[k], oblique_tensors)
        assert r <= 1e-9
        assert r <= 1e-10 * max(grads[k], 1e-12)
    e = np.array([oblique_tensors.energy(c) for c in res.trace.coeffs])
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_third_component_passive_at_axis_aligned(square_tensors):
    # regression case: for an axis-aligned chart the third component is
    # passively advected, so the in-plane pair evolves independently of it
    rng = np.random.default_rng(23)
    m = square_tensors.nmodes_total
    decay = np.exp(-np.arange(m) / 3.0)
    base = rng.standard_normal((3, m)) * decay
    alt = base.copy()
    alt[2] = rng.standard_normal(m) * decay  # different passive component
    finals = []
    actives = []
    for u0 in (base, alt):
        state = project_divfree(GalerkinState(u0.ravel(), 0.0), square_tensors)
        res = solve_from_state(state, None, square_tensors, 0.1, 1e-3, 0.05)
        finals.append(res.final_state.coeffs.reshape(3, -1))
        actives.append(state.coeffs.reshape(3, -1)[:2])
    # the constraint at alpha = 0 does not couple u3, so the projected
    # in-plane initial data agree and so must their whole trajectories
    assert np.allclose(actives[0], actives[1], atol=1e-13)
    assert np.max(np.abs(finals[0][:2] - finals[1][:2])) < 1e-12
    assert np.max(np.abs(finals[0][2] - finals[1][2])) > 1e-3  # u3 did differ


def test_projection_roundtrip_field(square_basis):
    rng = np.random.default_rng(12)
    coeffs = rng.standard_normal((3, square_basis.nmodes_total))
    fld = synthesize_field(square_basis, coeffs, (33, 33))
    back = project_field_to_basis(fld, square_basis)
    assert np.max(np.abs(back - coeffs)) < 1e-12


def test_projection_grid_too_coarse(square_basis):
    fld = Field(dims=(4, 4), extents=(1.0, 1.0), ncomp=3, data=np.zeros((3, 4, 4)))
    with pytest.raises(ValueError, match="too coarse"):
        project_field_to_basis(fld, square_basis)


def test_coercivity_axis_aligned_exact(square_tensors):
    val = coercivity_check(square_tensors)
    assert val == pytest.approx(2.0 * np.pi**2, abs=1e-10)


def test_coercivity_oblique_dominates_axis(square_tensors, oblique_tensors):
    v_axis = coercivity_check(square_tensors)
    v_obl = coercivity_check(oblique_tensors)
    assert v_obl >= v_axis - 1e-10


def test_coercivity_positive_random_charts():
    rng = np.random.default_rng(17)
    for _ in range(4):
        n1, n2 = rng.integers(2, 9, size=2)
        basis = SpectralBasis(nmodes=(int(n1), int(n2)), extents=(1.0, 1.0))
        normal = rng.standard_normal(3)
        normal[2] = np.sign(normal[2]) * (np.abs(normal).max() + 0.5)
        chart = make_chart(Hyperplane.from_vector(normal, 0.2))
        tens = assemble(basis, chart)
        val = coercivity_check(tens)
        assert val > 0.0
        # independent check: inverse power iteration on the reduced matrix
        z = tens.null_basis
        m = basis.nmodes_total
        s3 = np.kron(np.eye(3), -tens.stiffness_A1)
        m3 = np.kron(np.eye(3), tens.mass)
        a = z.T @ s3 @ z
        b = z.T @ m3 @ z
        x = rng.standard_normal(a.shape[0])
        for _ in range(200):
            x = np.linalg.solve(a, b @ x)
            x /= np.linalg.norm(x)
        rayleigh = float(x @ a @ x) / float(x @ b @ x)
        assert val == pytest.approx(rayleigh, rel=1e-6)


def test_default_quadrature_order_scales(square_basis):
    assert default_quadrature_order(square_basis) == 3 * 4 + 12


def test_axis_aligned_chart_reduces_exactly(square_basis, square_tensors):
    # an axis-aligned chart and "no chart" must produce identical arrays:
    # the cross coupling vanishes exactly, not just to round-off
    chart = make_chart(Hyperplane((0.0, 0.0, 1.0), 0.5))
    tens = assemble(square_basis, chart)
    assert np.array_equal(tens.stiffness_A1, square_tensors.stiffness_A1)
    assert np.array_equal(tens.constraint, square_tensors.constraint)
    assert np.array_equal(tens.cross, np.zeros_like(tens.cross))
    assert tens.chart_coeffs == (0.0, 0.0)


def test_trilinear_factors_store_exact_zeros(square_tensors):
    # entries below the drop threshold are stored as exact zeros: parity
    # says sin*sin*sin integrals with even mode sum vanish
    tri = square_tensors.trilinear
    n1 = tri.x2.shape[0]
    for a in range(n1):
        for b in range(n1):
            for c in range(n1):
                if (a + b + c + 3) % 2 == 0:
                    assert tri.x2[a, b, c] == 0.0


def test_rhs_dual_norm_diagnostic(square_tensors):
    from nsslice.galerkin import rhs_dual_norm

    m = square_tensors.nmodes_total
    zero = np.zeros(3 * m)
    assert rhs_dual_norm(zero, square_tensors, None, 0.1, 0.0) == 0.0
    # one heat mode: the balance right side is nu * A1 u, whose dual norm is
    # nu * lambda * ||w|| / |grad w| = nu * sqrt(lambda) * ||w||
    u = np.zeros((3, m))
    u[2, 0] = 1.0
    lam = square_tensors.basis.eigenvalues[0]
    got = rhs_dual_norm(u.ravel(), square_tensors.without_nonlinearity(), None, 0.1, 0.0)
    assert got == pytest.approx(0.1 * np.sqrt(lam) * 0.5, rel=1e-12)
