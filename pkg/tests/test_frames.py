import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dalpr.frames import FrameOperator, SpectrumVector, analyze, shrink, soft_threshold, synthesize

GEOMETRIES = [(8, 8), (8, 4), (16, 8)]


def test_block_counts():
    assert FrameOperator(8, 8, 8, 4).num_blocks == 1
    assert FrameOperator(8, 8, 8, 4).num_coefficients == 64
    f = FrameOperator(128, 128, 8, 4)
    assert f.num_blocks == 31 * 31 == 961
    assert f.num_coefficients == 61504
    np.testing.assert_array_equal(f.row_origins, np.arange(0, 121, 4))


def test_clamped_origins():
    f = FrameOperator(10, 13, 4, 3)
    np.testing.assert_array_equal(f.row_origins, [0, 3, 6])
    np.testing.assert_array_equal(f.col_origins, [0, 3, 6, 9])
    assert f.coverage.min() >= 1


@pytest.mark.parametrize("args", [(8, 8, 9, 4), (8, 8, 4, 5), (8, 8, 4, 0), (4, 16, 8, 4)])
def test_invalid_geometry(args):
    with pytest.raises(ValueError):
        FrameOperator(*args)


def test_constant_image_spectrum():
    f = FrameOperator(16, 16, 8, 4)
    theta = f.analyze(np.full((16, 16), 0.3)).coefficients.reshape(-1, 64)
    np.testing.assert_allclose(theta[:, 0], 0.3 * 8)
    np.testing.assert_allclose(theta[:, 1:], 0.0, atol=1e-15)


def test_zero_spectrum():
    f = FrameOperator(16, 24, 8, 4)
    out = f.synthesize(SpectrumVector(np.zeros(f.num_coefficients), f))
    assert np.all(out == 0)


@pytest.mark.parametrize("dc_exempt", [True, False])
def test_constant_survives_small_threshold(dc_exempt):
    f = FrameOperator(16, 16, 8, 4, dc_exempt=dc_exempt)
    x = np.full((16, 16), 2.0)
    back = f.synthesize(soft_threshold(f.analyze(x), 0.5))
    expected = 2.0 if dc_exempt else 2.0 - 0.5 / 8
    np.testing.assert_allclose(back, expected, atol=1e-13)


@pytest.mark.parametrize("block,step", GEOMETRIES)
@pytest.mark.parametrize("n", [16, 24, 37, 64, 128])
def test_left_inverse(block, step, n):
    rng = np.random.default_rng(n + block)
    x = rng.standard_normal((n, n + 3))
    f = FrameOperator(n, n + 3, block, step)
    theta = analyze(x, f)
    assert len(theta) >= x.size
    np.testing.assert_allclose(synthesize(theta, f), x, rtol=0, atol=1e-12)


@pytest.mark.parametrize("block,step", GEOMETRIES)
def test_energy(block, step):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((32, 32))
    f = FrameOperator(32, 32, block, step)
    energy = np.sum(f.analyze(x).coefficients ** 2)
    # each coefficient block preserves its patch energy
    patches = sum(
        np.sum(x[r : r + block, c : c + block] ** 2) for r in f.row_origins for c in f.col_origins
    )
    assert energy == pytest.approx(patches, rel=1e-12)
    if step == block:
        assert energy == pytest.approx(np.sum(x**2), rel=1e-12)
    else:
        assert energy >= np.sum(x**2)


def test_dimension_and_length_errors():
    f = FrameOperator(16, 16, 8, 4)
    with pytest.raises(ValueError):
        f.analyze(np.zeros((16, 15)))
    with pytest.raises(ValueError):
        f.synthesize(SpectrumVector(np.zeros(10), f))


def test_shrink_examples():
    assert shrink(np.array(0.5), 0.2) == pytest.approx(0.3)
    assert shrink(np.array(-0.1), 0.2) == 0.0
    assert shrink(np.array(-0.5), 0.2) == pytest.approx(-0.3)
    u = np.random.default_rng(0).standard_normal(50)
    np.testing.assert_array_equal(shrink(u, 0.0), u)
    with pytest.raises(ValueError):
        shrink(u, -0.1)


def test_soft_threshold_dc_flag():
    f = FrameOperator(8, 8, 8, 8, dc_exempt=True)
    theta = SpectrumVector(np.full(64, 0.1), f)
    out = soft_threshold(theta, 0.2).coefficients
    assert out[0] == 0.1 and np.all(out[1:] == 0)
    g = FrameOperator(8, 8, 8, 8, dc_exempt=False)
    assert np.all(soft_threshold(SpectrumVector(np.full(64, 0.1), g), 0.2).coefficients == 0)
    with pytest.raises(ValueError):
        soft_threshold(theta, -1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_shrink_non_expansive(seed, tau):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 40)) * 2
    assert np.linalg.norm(shrink(u, tau) - shrink(v, tau)) <= np.linalg.norm(u - v) + 1e-15


def test_threshold_monotone():
    rng = np.random.default_rng(4)
    f = FrameOperator(32, 32, 8, 4)
    theta = f.analyze(rng.standard_normal((32, 32)))
    ac = ~f.dc_mask
    counts = [np.count_nonzero(soft_threshold(theta, t).coefficients[ac]) for t in np.linspace(0, 3, 13)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[-1] < counts[0]
