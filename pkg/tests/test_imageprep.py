import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedrate.errors import SchemaError
from embedrate.imageprep import (
    CategoryPolicy,
    batch_filter_report,
    censor_image,
    filter_image,
    house_fraction,
    load_category_vocabulary,
    load_image,
    load_mask,
    policy_from_vocabulary,
    save_image,
    save_mask,
    write_category_vocabulary,
)

HOUSE, SKY, PERSON, BIN = 1, 2, 3, 4

POLICY = CategoryPolicy(
    house_categories=frozenset({HOUSE}),
    censor_categories=frozenset({PERSON, BIN}),
    house_fraction_threshold=0.05,
)


def mask_with_house_pixels(n_house, shape=(10, 10)):
    mask = np.full(shape, SKY, dtype=np.int64)
    mask.flat[:n_house] = HOUSE
    return mask


class TestHouseFraction:
    def test_full_coverage(self):
        assert house_fraction(np.full((4, 4), HOUSE), POLICY) == 1.0

    def test_counting(self):
        assert house_fraction(mask_with_house_pixels(3), POLICY) == pytest.approx(0.03)

    def test_no_house(self):
        assert house_fraction(np.full((5, 5), SKY), POLICY) == 0.0

    def test_empty_mask_rejected(self):
        with pytest.raises(SchemaError):
            house_fraction(np.zeros((0, 4), dtype=np.int64), POLICY)


class TestFilterImage:
    def test_below_threshold_discards(self):
        decision = filter_image(mask_with_house_pixels(3), POLICY)
        assert not decision.keep
        assert decision.house_fraction == pytest.approx(0.03)

    def test_boundary_keeps(self):
        decision = filter_image(mask_with_house_pixels(5), POLICY)
        assert decision.keep  # exactly at the threshold

    def test_well_above_keeps(self):
        assert filter_image(mask_with_house_pixels(60), POLICY).keep

    @given(st.integers(min_value=0, max_value=99), st.integers(min_value=0, max_value=99))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_house_pixels(self, n, extra):
        # adding house pixels never flips keep -> discard
        before = filter_image(mask_with_house_pixels(n), POLICY)
        after = filter_image(mask_with_house_pixels(min(n + extra, 100)), POLICY)
        assert after.keep or not before.keep


class TestCensorImage:
    def test_constant_image_unchanged(self):
        # the mean of a constant equals the constant (to a rounding ulp)
        image = np.full((6, 6, 3), 0.4)
        mask = np.full((6, 6), SKY, dtype=np.int64)
        mask[0, 0] = PERSON
        out = censor_image(image, mask, POLICY)
        np.testing.assert_allclose(out, image, rtol=0, atol=1e-15)
        # with an exactly representable constant the image is bit-identical
        image = np.full((6, 6, 3), 0.5)
        out = censor_image(image, mask, POLICY)
        np.testing.assert_array_equal(out, image)

    def test_two_pixel_mean(self):
        # second pixel censored; replacement is the mean of the non-censored
        # pixel alone: 0.2 per channel
        image = np.zeros((2, 1, 3))
        image[0, 0] = [0.2, 0.2, 0.2]
        image[1, 0] = [0.8, 0.8, 0.8]
        mask = np.array([[SKY], [PERSON]], dtype=np.int64)
        out = censor_image(image, mask, POLICY)
        np.testing.assert_array_equal(out[1, 0], [0.2, 0.2, 0.2])
        np.testing.assert_array_equal(out[0, 0], image[0, 0])

    def test_empty_censor_set_is_identity(self):
        rng = np.random.default_rng(0)
        image = rng.uniform(size=(5, 5, 3))
        mask = np.full((5, 5), SKY, dtype=np.int64)
        out = censor_image(image, mask, POLICY)
        np.testing.assert_array_equal(out, image)

    def test_non_censored_pixels_bit_identical(self):
        rng = np.random.default_rng(1)
        image = rng.uniform(size=(8, 8, 3))
        mask = rng.choice([SKY, HOUSE, PERSON], size=(8, 8)).astype(np.int64)
        out = censor_image(image, mask, POLICY)
        untouched = ~np.isin(mask, [PERSON, BIN])
        np.testing.assert_array_equal(out[untouched], image[untouched])

    def test_per_channel_mean_exact(self):
        rng = np.random.default_rng(2)
        image = rng.uniform(size=(9, 7, 3))
        mask = rng.choice([SKY, PERSON], size=(9, 7), p=[0.8, 0.2]).astype(np.int64)
        censored = mask == PERSON
        if not censored.any():
            censored[0, 0] = True
            mask[0, 0] = PERSON
        out = censor_image(image, mask, POLICY)
        expected = image[~censored].mean(axis=0)
        for channel in range(3):
            assert np.all(out[censored][:, channel] == expected[channel])

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        image = rng.uniform(size=(6, 6, 3))
        mask = rng.choice([SKY, PERSON], size=(6, 6)).astype(np.int64)
        mask[0, 0] = SKY
        once = censor_image(image, mask, POLICY)
        twice = censor_image(once, mask, POLICY)
        np.testing.assert_array_equal(once, twice)

    def test_all_censored_rejected(self):
        image = np.full((2, 2, 3), 0.5)
        mask = np.full((2, 2), PERSON, dtype=np.int64)
        with pytest.raises(SchemaError, match="every pixel"):
            censor_image(image, mask, POLICY)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_output_stays_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        image = rng.uniform(size=(4, 5, 3))
        mask = rng.choice([SKY, HOUSE, PERSON, BIN], size=(4, 5)).astype(np.int64)
        if np.isin(mask, [PERSON, BIN]).all():
            mask[0, 0] = SKY
        out = censor_image(image, mask, POLICY)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(SchemaError, match="mask shape"):
            censor_image(
                np.zeros((3, 3, 3)), np.zeros((2, 3), dtype=np.int64), POLICY
            )


class TestBatchFilterReport:
    def test_rate(self):
        masks = [mask_with_house_pixels(3) for _ in range(41)] + [
            mask_with_house_pixels(50) for _ in range(959)
        ]
        report = batch_filter_report(masks, POLICY)
        assert report.discard_rate == pytest.approx(0.041)

    def test_all_kept(self):
        masks = [mask_with_house_pixels(50) for _ in range(10)]
        assert batch_filter_report(masks, POLICY).discard_rate == 0.0

    def test_empty_collection(self):
        with pytest.raises(SchemaError):
            batch_filter_report([], POLICY)


class TestCategoryPolicy:
    def test_overlapping_sets_rejected(self):
        with pytest.raises(ValueError, match="disjoint"):
            CategoryPolicy(
                house_categories=frozenset({1}),
                censor_categories=frozenset({1, 2}),
            )

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            CategoryPolicy(
                house_categories=frozenset({1}),
                censor_categories=frozenset({2}),
                house_fraction_threshold=1.5,
            )


class TestRasterIo:
    def test_image_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(4)
        image = rng.uniform(size=(12, 9, 3))
        path = tmp_path / "img.png"
        save_image(path, image)
        again = load_image(path)
        assert np.abs(again - image).max() <= 0.5 / 255 + 1e-12

    def test_mask_round_trip_exact(self, tmp_path):
        mask = np.arange(24, dtype=np.int64).reshape(4, 6) % 7
        path = tmp_path / "mask.png"
        save_mask(path, mask)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_vocabulary_round_trip_and_policy(self, tmp_path):
        vocab = {1: "wall", 2: "building;edifice", 3: "person", 4: "house", 5: "toy"}
        path = tmp_path / "vocab.csv"
        write_category_vocabulary(path, vocab)
        loaded = load_category_vocabulary(path)
        assert loaded == vocab
        with pytest.warns(UserWarning):  # names missing from vocabulary warn
            policy = policy_from_vocabulary(loaded)
        assert policy.house_categories == frozenset({2, 4})
        assert policy.censor_categories == frozenset({3, 5})

    def test_policy_requires_house_category(self, tmp_path):
        with pytest.warns(UserWarning):
            with pytest.raises(SchemaError, match="house"):
                policy_from_vocabulary({9: "sky"}, censor_names=())
