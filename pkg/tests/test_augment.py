import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from condiv import augment as A
from condiv.augment import AugmentSpec, Crop, Flip
from condiv.data import gen_toy_shapes
from condiv.nn import seeded_rng

NONE = A.preset("none")


def image(seed=0, c=3, h=8, w=8):
    return np.random.default_rng(seed).uniform(0, 1, (c, h, w))


def test_identity_pipeline():
    x = image()
    v1, v2 = A.two_views(x, NONE, seeded_rng(0))
    np.testing.assert_array_equal(v1, x)
    np.testing.assert_array_equal(v2, x)


def test_hflip_involution():
    x = image(1)
    flip = A.drop_all(AugmentSpec(hflip=Flip(prob=1.0)), keep=("hflip",))
    once = A.augment(x, flip, seeded_rng(0))
    np.testing.assert_array_equal(once, x[:, :, ::-1])
    np.testing.assert_array_equal(A.augment(once, flip, seeded_rng(1)), x)


def test_seed_determinism():
    x = image(2)
    for name in ("small", "imagenet"):
        spec = A.preset(name)
        a = A.two_views(x, spec, seeded_rng(5))
        b = A.two_views(x, spec, seeded_rng(5))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


def test_presets():
    small, big = A.preset("small"), A.preset("imagenet")
    assert small.crop.area_range == (0.2, 1.0)
    assert small.crop.aspect_range == (3 / 4, 4 / 3)
    assert small.hflip.prob == 0.5 and small.jitter.prob == 0.8
    assert small.jitter.strengths == (0.4, 0.4, 0.4, 0.1)
    assert small.grayscale.prob == 0.2 and not small.blur.enabled
    assert big.jitter.strengths == (0.8, 0.8, 0.8, 0.2) and big.crop.area_range == (0.08, 1.0)
    assert big.blur.enabled and big.blur.prob == 0.5 and big.blur.sigma_range == (0.1, 2.0)
    assert A.preset("vector").enabled_stages() == ["noise"]
    assert not small.rotation.enabled and not small.noise.enabled
    with pytest.raises(ValueError):
        A.preset("huge")


def test_spec_validation():
    with pytest.raises(ValueError):
        AugmentSpec(hflip=Flip(prob=1.5))
    with pytest.raises(ValueError):
        AugmentSpec(crop=Crop(area_range=(0.0, 1.0)))
    with pytest.raises(ValueError):
        AugmentSpec(crop=Crop(area_range=(0.5, 0.2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(["small", "imagenet"]), st.sampled_from([1, 3]),
       st.integers(2, 12), st.integers(2, 12))
def test_range_and_shape_preserved(seed, name, c, h, w):
    x = image(seed, c, h, w)
    spec = A.preset(name)
    spec = A.AugmentSpec(**{**spec.__dict__, "rotation": A.Rotation(enabled=True), "noise": A.Noise(enabled=True)})
    for v in A.two_views(x, spec, seeded_rng(seed)):
        assert v.shape == x.shape
        assert v.min() >= 0.0 and v.max() <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_grayscale_idempotent(seed):
    x = image(seed)
    g = A.to_grayscale(x)
    np.testing.assert_allclose(A.to_grayscale(g), g, atol=1e-12)
    np.testing.assert_allclose(g[0], np.tensordot(A.LUMA, x, axes=1), atol=1e-12)


def test_small_images_rejected_for_spatial_stages():
    with pytest.raises(ValueError):
        A.two_views(image(0, 3, 1, 8), A.preset("small"), seeded_rng(0))
    # flat vectors (H = 1) are fine under the noise-only preset
    v = np.full((1, 1, 5), 0.5)
    a, _ = A.two_views(v, A.preset("vector"), seeded_rng(0))
    assert a.shape == v.shape and not np.array_equal(a, v)
    with pytest.raises(ValueError):
        A.augment(np.zeros((2, 4, 4)), NONE, seeded_rng(0))


def test_drop_stage():
    spec = A.preset("small")
    dropped = A.drop_stage(spec, "crop")
    assert not dropped.crop.enabled and spec.crop.enabled
    assert A.drop_stage(dropped, "crop") == dropped
    everything = spec
    for s in ("crop", "hflip", "jitter", "grayscale", "blur"):
        everything = A.drop_stage(everything, s)
    assert everything.enabled_stages() == []
    x = image(3)
    np.testing.assert_array_equal(A.augment(x, everything, seeded_rng(1)), x)
    with pytest.raises(ValueError):
        A.drop_stage(spec, "solarize")


def test_drop_crop_keeps_geometry_when_only_colour_remains():
    x = image(4)
    spec = A.drop_stage(A.drop_stage(A.preset("small"), "crop"), "hflip")
    v = A.augment(x, spec, seeded_rng(2))
    # no spatial stage left: a constant image stays constant per channel
    const = np.full((3, 6, 6), 0.4)
    vc = A.augment(const, spec, seeded_rng(3))
    assert np.ptp(vc, axis=(1, 2)).max() < 1e-12
    assert v.shape == x.shape


def test_resize_checkerboard_reference():
    board = [[0.0, 1.0], [1.0, 0.0]]
    up = A.resize(np.array([board]), 4, 4)[0]
    ref = O.resize_reference(board, 4, 4)
    np.testing.assert_allclose(up, ref, atol=1e-12)
    # centre 2 x 2 of the 2x upscale, hand weights 0.75/0.25 at coords 0.25, 0.75
    centre = up[1:3, 1:3]
    np.testing.assert_allclose(centre, [[0.375, 0.625], [0.625, 0.375]], atol=1e-6)
    np.testing.assert_allclose(A.eval_transform(np.array([board]), (4, 4))[0], ref, atol=1e-12)


def test_resize_matches_reference_on_random_image():
    img = np.random.default_rng(5).uniform(0, 1, (5, 7))
    got = A.resize(img[None], 3, 9)[0]
    np.testing.assert_allclose(got, O.resize_reference(img.tolist(), 3, 9), atol=1e-12)


def test_eval_transform():
    x = image(6, 3, 4, 4)
    np.testing.assert_array_equal(A.eval_transform(x, (4, 4)), x)
    const = np.full((3, 4, 4), 0.3)
    for hw in ((2, 2), (6, 6)):
        out = A.eval_transform(const, hw)
        assert out.shape == (3, *hw)
        np.testing.assert_allclose(out, 0.3, atol=1e-12)
    assert A.eval_transform(np.full((1, 4, 8), 0.3), (3, 5)).shape == (1, 3, 5)
    wide = image(7, 1, 4, 8)
    np.testing.assert_array_equal(A.eval_transform(wide, (4, 4)), wide[:, :, 2:6])
    with pytest.raises(ValueError):
        A.eval_transform(image(8, 1, 4, 4), (2, 8))


def test_blur_preserves_constants_and_smooths():
    const = np.full((3, 10, 10), 0.6)
    np.testing.assert_allclose(A._gaussian_blur(const, 1.0), const, atol=1e-12)
    x = image(9, 1, 10, 10)
    assert A._gaussian_blur(x, 1.5).var() < x.var()


def test_jitter_zero_strength_is_identity():
    x = image(10)
    out = A._jitter(x, A.Jitter(strengths=(0.0, 0.0, 0.0, 0.0)), seeded_rng(0))
    np.testing.assert_allclose(out, x, atol=1e-9)


def test_augment_batch_noise_path_and_labels_untouched():
    ds = gen_toy_shapes(2, size=8, seed=0)
    labels = ds.labels.copy()
    a, b = A.augment_batch(ds.images, A.preset("small"), seeded_rng(0))
    assert a.shape == ds.images.shape and b.shape == ds.images.shape
    np.testing.assert_array_equal(ds.labels, labels)
    vec = np.full((4, 1, 1, 3), 0.5)
    a, b = A.augment_batch(vec, A.preset("vector"), seeded_rng(1))
    assert not np.array_equal(a, b) and a.min() >= 0 and a.max() <= 1
