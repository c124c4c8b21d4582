from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from mca.augment import (
    IDENTITY,
    PERMUTATIONS,
    MixCoefficient,
    channel_swap,
    channel_swap_batch,
    inverse_permutation,
    mca_gate,
    parse_permutation,
    permutation_name,
    random_swap_mix,
    sample_lambda,
    sample_permutation,
    swap_mix,
    swap_mix_batch,
)
from mca.colorspace import rgb_to_hsv


def solid(rgb, t=2, h=4, w=4, dtype=np.float32):
    v = np.empty((t, 3, h, w), dtype=dtype)
    v[:] = np.asarray(rgb, dtype=dtype)[None, :, None, None]
    return v


def test_permutation_set():
    assert len(PERMUTATIONS) == 5
    assert IDENTITY not in PERMUTATIONS
    assert len(set(PERMUTATIONS)) == 5
    assert {permutation_name(p) for p in PERMUTATIONS} == {"RBG", "BRG", "BGR", "GRB", "GBR"}


def test_parse_permutation():
    assert parse_permutation("grb") == (1, 0, 2)
    assert parse_permutation([2, 1, 0]) == (2, 1, 0)
    for bad in ("RRG", "RGBA", [0, 0, 1]):
        with pytest.raises(ValueError):
            parse_permutation(bad)


def test_sample_permutation_never_identity_and_deterministic():
    a = [sample_permutation(np.random.default_rng(7)) for _ in range(3)]
    assert a[0] == a[1] == a[2] != IDENTITY


def test_sample_permutation_uniform():
    rng = np.random.default_rng(123)
    counts = Counter(sample_permutation(rng) for _ in range(100_000))
    assert set(counts) == set(PERMUTATIONS)
    for c in counts.values():
        assert abs(c / 100_000 - 0.2) < 0.01
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_channel_swap_red_to_green():
    out = channel_swap(solid((1, 0, 0)), "GRB")
    np.testing.assert_array_equal(out, solid((0, 1, 0)))
    assert rgb_to_hsv(out[0, :, 0, 0])[0] == 120


@pytest.mark.parametrize("perm", PERMUTATIONS)
def test_channel_swap_gray_fixed_and_inverse(perm):
    gray = solid((0.3, 0.3, 0.3))
    np.testing.assert_array_equal(channel_swap(gray, perm), gray)
    v = np.random.default_rng(0).integers(0, 256, (3, 3, 5, 5), dtype=np.uint8)
    back = channel_swap(channel_swap(v, perm), inverse_permutation(perm))
    np.testing.assert_array_equal(back, v)


def test_channel_swap_layout_and_no_alias():
    v = np.random.default_rng(0).random((4, 3, 6, 6))
    out = channel_swap(v, (2, 0, 1))
    for i, src in enumerate((2, 0, 1)):
        np.testing.assert_array_equal(out[:, i], v[:, src])
    assert not np.shares_memory(out, v)
    out[...] = -1
    assert v.min() >= 0


def test_channel_swap_identity_permitted():
    v = np.random.default_rng(0).random((2, 3, 4, 4))
    np.testing.assert_array_equal(channel_swap(v, IDENTITY), v)


def test_channel_swap_rejects_bad_channels():
    with pytest.raises(ValueError):
        channel_swap(np.zeros((2, 4, 3, 3)), "GRB")


@pytest.mark.parametrize("perm", PERMUTATIONS)
def test_channel_swap_keeps_s_v_exact_on_uint8(perm):
    v = np.random.default_rng(1).integers(0, 256, (2, 3, 8, 8), dtype=np.uint8)
    a = rgb_to_hsv(v, axis=-3)
    b = rgb_to_hsv(channel_swap(v, perm), axis=-3)
    np.testing.assert_array_equal(a[:, 1:], b[:, 1:])


def test_sample_lambda_validation():
    with pytest.raises(ValueError):
        sample_lambda(np.random.default_rng(0), 0.0)
    with pytest.raises(ValueError):
        MixCoefficient(1.5)


def test_sample_lambda_uniform_moments():
    rng = np.random.default_rng(5)
    lams = np.array([sample_lambda(rng, 1.0).lam for _ in range(10_000)])
    assert abs(lams.mean() - 0.5) < 0.02
    assert abs(lams.var() - 1 / 12) < 0.01


def beta_cdf_by_quadrature(x, a):
    """CDF of Beta(a, a) by integrating the density; endpoint singularities via an algebraic weight."""
    norm = special.beta(a, a)

    def one(t):
        if t <= 0:
            return 0.0
        if t >= 1:
            return 1.0
        # the algebraic weight absorbs the singular factor at the nearer endpoint
        if t <= 0.5:
            val, _ = integrate.quad(lambda u: (1 - u) ** (a - 1), 0, t, weight="alg", wvar=(a - 1, 0))
            return val / norm
        if 1 - t < 1e-9:
            # u^(a-1) ~ 1 on a vanishing interval, leaving the closed form of the weight
            return 1 - (1 - t) ** a / a / norm
        val, _ = integrate.quad(lambda u: u ** (a - 1), t, 1, weight="alg", wvar=(0, a - 1))
        return 1 - val / norm

    return np.array([one(t) for t in np.atleast_1d(x)])


def test_beta_oracle_sanity():
    assert beta_cdf_by_quadrature([0.5], 0.2)[0] == pytest.approx(0.5, abs=1e-8)
    assert beta_cdf_by_quadrature([0.3], 1.0)[0] == pytest.approx(0.3, abs=1e-10)
    assert beta_cdf_by_quadrature([0.9], 1.0)[0] == pytest.approx(0.9, abs=1e-10)
    left, right = beta_cdf_by_quadrature([0.1, 0.9], 0.2)
    assert left + right == pytest.approx(1.0, abs=1e-8)


def test_sample_lambda_beta_ks():
    rng = np.random.default_rng(11)
    lams = np.array([sample_lambda(rng, 0.2).lam for _ in range(10_000)])
    result = stats.kstest(lams, lambda x: beta_cdf_by_quadrature(x, 0.2))
    assert result.pvalue > 0.01


def test_swap_mix_degenerate_lambdas():
    v = np.random.default_rng(0).random((3, 3, 5, 5)).astype(np.float32)
    for perm in PERMUTATIONS:
        np.testing.assert_array_equal(swap_mix(v, perm, 1.0), v)
        np.testing.assert_array_equal(swap_mix(v, perm, 0.0), channel_swap(v, perm))


def test_swap_mix_hand_example():
    px = np.array([0.6, 0.2, 0.4])[None, :, None, None]
    out = swap_mix(px, "BGR", 0.5)
    np.testing.assert_allclose(out[0, :, 0, 0], [0.5, 0.2, 0.5], atol=1e-12)


def test_swap_mix_uint8_is_not_requantised():
    v = np.array([255, 0, 0], dtype=np.uint8)[None, :, None, None]
    out = swap_mix(v, "GRB", 0.3)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out[0, :, 0, 0], [0.3, 0.7, 0.0], atol=1e-6)


def test_swap_mix_accepts_mix_coefficient():
    v = np.random.default_rng(0).random((1, 3, 2, 2))
    np.testing.assert_array_equal(swap_mix(v, "BRG", MixCoefficient(0.25)), swap_mix(v, "BRG", 0.25))
    with pytest.raises(ValueError):
        swap_mix(v, "BRG", -0.1)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.sampled_from(PERMUTATIONS), st.integers(0, 2**32 - 1))
def test_swap_mix_convex(lam, perm, seed):
    v = np.random.default_rng(seed).random((2, 3, 4, 4)).astype(np.float32)
    out = swap_mix(v, perm, lam)
    other = channel_swap(v, perm)
    lo, hi = np.minimum(v, other), np.maximum(v, other)
    assert np.all(out >= lo - 1e-7) and np.all(out <= hi + 1e-7)


def test_swap_mix_temporally_coherent():
    # every frame of a constant-colour video must be mapped identically
    v = solid((0.9, 0.1, 0.5), t=6)
    out = swap_mix(v, "GBR", 0.37)
    for f in out[1:]:
        np.testing.assert_array_equal(f, out[0])


def test_batch_helpers_are_per_sample():
    rng = np.random.default_rng(0)
    batch = rng.random((4, 2, 3, 3, 3)).astype(np.float32)
    perms = list(PERMUTATIONS[:4])
    lams = [0.0, 0.25, 0.5, 1.0]
    mixed = swap_mix_batch(batch, perms, lams)
    swapped = channel_swap_batch(batch, perms)
    for i in range(4):
        np.testing.assert_array_equal(mixed[i], swap_mix(batch[i], perms[i], lams[i]))
        np.testing.assert_array_equal(swapped[i], channel_swap(batch[i], perms[i]))
    with pytest.raises(ValueError):
        swap_mix_batch(batch, perms[:2], lams)


def test_random_swap_mix_deterministic():
    batch = np.random.default_rng(0).integers(0, 256, (3, 2, 3, 4, 4), dtype=np.uint8)
    a = random_swap_mix(batch, np.random.default_rng(9))
    b = random_swap_mix(batch, np.random.default_rng(9))
    assert a.tobytes() == b.tobytes()


def test_gate_extremes_and_rate():
    rng = np.random.default_rng(0)
    assert all(mca_gate(rng, 1.0) for _ in range(1000))
    assert not any(mca_gate(rng, 0.0) for _ in range(1000))
    rate = np.mean([mca_gate(rng, 0.25) for _ in range(10_000)])
    assert abs(rate - 0.25) < 0.015


@pytest.mark.parametrize("rho", [-0.1, 1.01])
def test_gate_rejects_out_of_range(rho):
    with pytest.raises(ValueError):
        mca_gate(np.random.default_rng(0), rho)
