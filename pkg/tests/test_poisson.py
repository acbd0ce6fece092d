"""Solver and blend-mode behaviour against a dense direct-solve oracle."""
import numpy as np
import pytest

from hairforge import (
    BinaryMask,
    BlendMode,
    BlendRequest,
    DidNotConverge,
    DimensionMismatch,
    EmptyRegion,
    MaskTouchesBorder,
    RasterImage,
    SolverConfig,
    SolverMethod,
    assemble,
    blend,
    blend_naive,
    blend_poisson,
    blend_two_step,
    solve,
)

from conftest import (
    blob_mask,
    dense_solve,
    dense_system,
    rand_image,
    rand_interior_mask,
    smooth_image,
)

TIGHT = SolverConfig(tolerance=1e-8)
TIGHT_GS = SolverConfig(method=SolverMethod.GAUSS_SEIDEL, tolerance=1e-8)


def make_request(rng, h=16, w=16, mode=BlendMode.GUIDED, solver=None, mask=None):
    return BlendRequest(
        source=rand_image(rng, h, w),
        destination=rand_image(rng, h, w),
        mask=mask if mask is not None else rand_interior_mask(rng, h, w),
        mode=mode,
        solver=solver or SolverConfig(),
    )


# --- assembly ---------------------------------------------------------------


def test_assemble_matches_dense_matrix_and_rhs():
    rng = np.random.default_rng(41)
    for _ in range(10):
        src = rand_image(rng, 7, 8, channels=1)
        dst = rand_image(rng, 7, 8, channels=1)
        mask = rand_interior_mask(rng, 7, 8, density=0.4)
        for guided in (False, True):
            problem = assemble(
                src.channel(0) if guided else None, dst.channel(0), mask, guided
            )
            a, b, coords = dense_system(
                src.channel(0), dst.channel(0), mask.bits, guided
            )
            assert problem.n == len(coords)
            assert [(y, x) for y, x in zip(problem.ys, problem.xs)] == coords
            assert np.allclose(problem.full_rhs(), b, atol=1e-12)
            x = rng.uniform(size=problem.n)
            assert np.allclose(problem.apply(x), a @ x, atol=1e-12)


def test_assemble_single_pixel_equation():
    dst = np.zeros((5, 5))
    dst[1, 2], dst[3, 2], dst[2, 1], dst[2, 3] = 0.1, 0.2, 0.3, 0.4
    bits = np.zeros((5, 5), dtype=bool)
    bits[2, 2] = True
    problem = assemble(None, dst, BinaryMask(bits), guided=False)
    assert problem.n == 1
    assert problem.full_rhs()[0] == pytest.approx(1.0)
    result = solve(problem, TIGHT)
    assert result.values[0] == pytest.approx(0.25)


def test_assemble_rejects_border_mask():
    bits = np.zeros((5, 5), dtype=bool)
    bits[0, 2] = True
    with pytest.raises(MaskTouchesBorder):
        assemble(None, np.zeros((5, 5)), BinaryMask(bits), guided=False)


def test_assemble_empty_mask_yields_empty_system():
    problem = assemble(None, np.zeros((4, 4)), BinaryMask(np.zeros((4, 4), bool)), False)
    assert problem.n == 0
    result = solve(problem)
    assert result.iterations == 0
    assert result.residual == 0.0


def test_assemble_checks_channel_shapes():
    with pytest.raises(DimensionMismatch):
        assemble(None, np.zeros((3, 4)), BinaryMask(np.zeros((4, 4), bool)), False)


# --- solvers vs dense oracle -------------------------------------------------


def test_both_solvers_match_dense_solution():
    rng = np.random.default_rng(42)
    for _ in range(8):
        src = rand_image(rng, 12, 10, channels=1)
        dst = rand_image(rng, 12, 10, channels=1)
        mask = rand_interior_mask(rng, 12, 10, density=0.5)
        for guided in (False, True):
            expected, _ = dense_solve(
                src.channel(0), dst.channel(0), mask.bits, guided
            )
            problem = assemble(
                src.channel(0) if guided else None, dst.channel(0), mask, guided
            )
            for config in (TIGHT, TIGHT_GS):
                got = solve(problem, config).values
                assert np.max(np.abs(got - expected)) <= 1e-6


def test_returned_residual_is_true_residual():
    rng = np.random.default_rng(43)
    for config in (SolverConfig(), SolverConfig(method=SolverMethod.GAUSS_SEIDEL)):
        for _ in range(6):
            dst = rand_image(rng, 14, 14, channels=1)
            mask = blob_mask(rng, 14, 14)
            problem = assemble(None, dst.channel(0), mask, guided=False)
            result = solve(problem, config)
            assert result.residual <= config.tolerance
            assert problem.residual_norm(result.values) == pytest.approx(
                result.residual, abs=1e-12
            )


def test_did_not_converge_carries_diagnostics():
    rng = np.random.default_rng(44)
    dst = rand_image(rng, 32, 32, channels=1)
    mask = rand_interior_mask(rng, 32, 32, density=0.6)
    problem = assemble(None, dst.channel(0), mask, guided=False)
    for method in SolverMethod:
        config = SolverConfig(method=method, max_iterations=1, tolerance=1e-10)
        with pytest.raises(DidNotConverge) as info:
            solve(problem, config)
        assert info.value.iterations == 1
        assert info.value.residual > 1e-10


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(method="newton")


# --- blend modes -------------------------------------------------------------


def test_blend_request_validates_dimensions():
    rng = np.random.default_rng(45)
    with pytest.raises(DimensionMismatch):
        BlendRequest(
            source=rand_image(rng, 8, 8),
            destination=rand_image(rng, 8, 9),
            mask=rand_interior_mask(rng, 8, 9),
            mode=BlendMode.NAIVE,
        )
    with pytest.raises(DimensionMismatch):
        BlendRequest(
            source=rand_image(rng, 8, 8, channels=1),
            destination=rand_image(rng, 8, 8, channels=3),
            mask=rand_interior_mask(rng, 8, 8),
            mode=BlendMode.NAIVE,
        )


def test_naive_blend_is_bit_exact_copy_paste():
    rng = np.random.default_rng(46)
    request = make_request(rng, mode=BlendMode.NAIVE)
    out = blend(request).image.pixels
    bits = request.mask.bits
    assert np.array_equal(out[bits], request.source.pixels[bits])
    assert np.array_equal(out[~bits], request.destination.pixels[~bits])


def test_naive_blend_allows_border_masks():
    rng = np.random.default_rng(47)
    bits = np.zeros((8, 8), dtype=bool)
    bits[0, :] = True
    request = make_request(rng, 8, 8, mode=BlendMode.NAIVE, mask=BinaryMask(bits))
    out = blend(request).image.pixels
    assert np.array_equal(out[0, :], request.source.pixels[0, :])


def test_poisson_modes_copy_destination_outside_mask():
    rng = np.random.default_rng(48)
    for mode in (BlendMode.MEMBRANE, BlendMode.GUIDED, BlendMode.TWO_STEP):
        request = make_request(rng, mode=mode)
        out = blend(request).image.pixels
        outside = ~request.mask.bits
        assert np.array_equal(out[outside], request.destination.pixels[outside])


def test_guided_identity_returns_destination():
    rng = np.random.default_rng(49)
    dst = smooth_image(rng, 24, 24)
    request = BlendRequest(
        source=dst,
        destination=dst,
        mask=blob_mask(rng, 24, 24),
        mode=BlendMode.GUIDED,
    )
    result = blend(request)
    deviation = np.max(np.abs(result.image.pixels - dst.pixels))
    assert deviation <= 10 * request.solver.tolerance


def test_membrane_on_constant_destination_stays_constant():
    rng = np.random.default_rng(50)
    dst = RasterImage(np.full((16, 16, 3), 0.6))
    request = BlendRequest(
        source=rand_image(rng, 16, 16),
        destination=dst,
        mask=blob_mask(rng, 16, 16),
        mode=BlendMode.MEMBRANE,
    )
    out = blend(request).image.pixels
    assert np.max(np.abs(out - 0.6)) <= request.solver.tolerance


def test_guided_matches_source_laplacian_deep_inside():
    rng = np.random.default_rng(51)
    request = make_request(rng, 20, 20, solver=SolverConfig(tolerance=1e-6))
    out = blend(request).image.pixels
    src = request.source.pixels
    bits = request.mask.bits
    deep = (
        bits
        & np.roll(bits, 1, 0) & np.roll(bits, -1, 0)
        & np.roll(bits, 1, 1) & np.roll(bits, -1, 1)
    )
    deep[0, :] = deep[-1, :] = deep[:, 0] = deep[:, -1] = False

    def laplacian(px):
        return (
            np.roll(px, 1, 0) + np.roll(px, -1, 0)
            + np.roll(px, 1, 1) + np.roll(px, -1, 1) - 4.0 * px
        )

    checked = 0
    for c in range(3):
        ch = out[:, :, c]
        # The [0, 1] clamp may overwrite out-of-range solution values; the
        # equation is only expected to survive where nothing was clamped.
        unclamped = (ch > 0.0) & (ch < 1.0)
        usable = (
            deep
            & unclamped
            & np.roll(unclamped, 1, 0) & np.roll(unclamped, -1, 0)
            & np.roll(unclamped, 1, 1) & np.roll(unclamped, -1, 1)
        )
        if not usable.any():
            continue
        gap = laplacian(ch) - laplacian(src[:, :, c])
        assert np.max(np.abs(gap[usable])) <= 1e-5
        checked += int(usable.sum())
    assert checked > 0


def test_membrane_maximum_principle_gauss_seidel():
    rng = np.random.default_rng(52)
    for _ in range(10):
        dst = rand_image(rng, 16, 16, channels=1)
        mask = blob_mask(rng, 16, 16)
        problem = assemble(None, dst.channel(0), mask, guided=False)
        config = SolverConfig(method=SolverMethod.GAUSS_SEIDEL)
        values = solve(problem, config).values
        lo = problem.boundary_values.min() - config.tolerance
        hi = problem.boundary_values.max() + config.tolerance
        assert values.min() >= lo
        assert values.max() <= hi


def test_membrane_maximum_principle_cg_small():
    rng = np.random.default_rng(53)
    config = SolverConfig(tolerance=1e-8)
    for _ in range(10):
        dst = rand_image(rng, 10, 10, channels=1)
        mask = rand_interior_mask(rng, 10, 10, density=0.5)
        problem = assemble(None, dst.channel(0), mask, guided=False)
        values = solve(problem, config).values
        assert values.min() >= problem.boundary_values.min() - 1e-6
        assert values.max() <= problem.boundary_values.max() + 1e-6


def test_two_step_empty_mask_is_noop():
    rng = np.random.default_rng(54)
    request = make_request(
        rng, mode=BlendMode.TWO_STEP, mask=BinaryMask(np.zeros((16, 16), bool))
    )
    result = blend(request)
    assert np.array_equal(result.image.pixels, request.destination.pixels)
    assert result.solves == ()


def test_two_step_full_interior_mask_raises_empty_region():
    rng = np.random.default_rng(55)
    bits = np.zeros((10, 10), dtype=bool)
    bits[1:-1, 1:-1] = True
    request = make_request(rng, 10, 10, mode=BlendMode.TWO_STEP, mask=BinaryMask(bits))
    with pytest.raises(EmptyRegion):
        blend(request)


def test_two_step_differs_from_guided_and_tags_stages():
    rng = np.random.default_rng(56)
    src = smooth_image(rng, 18, 18, lo=0.6, hi=0.95)
    dst = smooth_image(rng, 18, 18, lo=0.05, hi=0.4)
    mask = blob_mask(rng, 18, 18)
    guided = blend(BlendRequest(src, dst, mask, BlendMode.GUIDED))
    two = blend(BlendRequest(src, dst, mask, BlendMode.TWO_STEP))
    assert not np.array_equal(guided.image.pixels, two.image.pixels)
    assert {s.stage for s in two.solves} == {"intermediate", "blend"}
    assert len(two.solves) == 6
    assert two.max_residual <= SolverConfig().tolerance


def test_two_step_final_image_solves_its_own_system():
    rng = np.random.default_rng(57)
    src = rand_image(rng, 12, 12, channels=1)
    dst = rand_image(rng, 12, 12, channels=1)
    mask = blob_mask(rng, 12, 12)
    result = blend_two_step(
        BlendRequest(src, dst, mask, BlendMode.TWO_STEP, TIGHT)
    )
    step1 = ~mask.bits
    step1[0, :] = step1[-1, :] = step1[:, 0] = step1[:, -1] = False
    inter_expected, coords = dense_solve(
        dst.channel(0), src.channel(0), step1, guided=True
    )
    intermediate = src.pixels[:, :, 0].copy()
    for value, (y, x) in zip(inter_expected, coords):
        intermediate[y, x] = min(max(value, 0.0), 1.0)
    final_expected, coords = dense_solve(
        intermediate, dst.channel(0), mask.bits, guided=True
    )
    got = result.image.pixels[:, :, 0]
    for value, (y, x) in zip(final_expected, coords):
        assert got[y, x] == pytest.approx(min(max(value, 0.0), 1.0), abs=1e-6)


def test_blend_is_deterministic():
    rng = np.random.default_rng(58)
    request = make_request(rng, mode=BlendMode.TWO_STEP)
    first = blend(request).image.pixels
    second = blend(request).image.pixels
    assert np.array_equal(first, second)


def test_mode_specific_entrypoints_reject_other_modes():
    rng = np.random.default_rng(59)
    request = make_request(rng, mode=BlendMode.GUIDED)
    with pytest.raises(ValueError):
        blend_naive(request)
    with pytest.raises(ValueError):
        blend_two_step(request)
    naive = make_request(rng, mode=BlendMode.NAIVE)
    with pytest.raises(ValueError):
        blend_poisson(naive)


def test_border_mask_raises_for_poisson_modes():
    rng = np.random.default_rng(60)
    bits = np.zeros((8, 8), dtype=bool)
    bits[0, 3] = bits[4, 4] = True
    for mode in (BlendMode.MEMBRANE, BlendMode.GUIDED):
        request = make_request(rng, 8, 8, mode=mode, mask=BinaryMask(bits))
        with pytest.raises(MaskTouchesBorder):
            blend(request)
