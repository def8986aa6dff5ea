"""
Test the confidence forest: patch sampling, training, angle bins, grid prediction and AUSC.
"""
import numpy as np
import pytest

from core.confidence.evaluation import sparsification_ausc, sparsification_curve
from core.confidence.forest import oob_accuracy, restructure_leaves, train_forest
from core.confidence.io import (
    forest_from_bytes,
    forest_to_bytes,
    load_forest,
    read_confidence_images,
    save_forest,
    write_confidence_image,
)
from core.confidence.patches import extract_samples, to_lab
from core.confidence.services import classification_accuracy, confidence_curve, predict_grid
from core.confidence.types import LEAF, ConfidenceForest, ForestConfig, PatchSamples, Tree
from core.exceptions import FormatError, NoSamplesError
from core.labelgen.types import NEGATIVE, POSITIVE, LabelImage


SMALL = dict(trees=5, max_depth=6, min_leaf=10, node_tests=60, thresholds=10, node_samples=200, seed=0)


def toy_samples(n=400, seed=0, shuffle=False, angle_max=45.0):
    """Bright patches are positive, dark ones negative; `shuffle` destroys the signal."""
    rng = np.random.default_rng(seed)
    positive = np.arange(n) % 2 == 0
    patches = np.empty((n, 27, 27, 3), dtype=np.float32)
    patches[..., 0] = np.where(positive, 75.0, 25.0)[:, None, None] + rng.normal(0.0, 3.0, (n, 27, 27))
    patches[..., 1:] = rng.normal(0.0, 2.0, (n, 27, 27, 2))
    if shuffle:
        positive = rng.permutation(positive)
    return PatchSamples(patches, positive, rng.uniform(0.0, angle_max, n))


def leaf_tree(bin_counts):
    """A single-leaf tree with the given (bins, 2) counts."""
    bin_counts = np.asarray(bin_counts, dtype=np.int64)[None]
    return Tree(
        kind=np.array([LEAF], dtype=np.int8),
        offsets=np.zeros((1, 4), dtype=np.int8),
        channels=np.zeros((1, 2), dtype=np.int8),
        threshold=np.zeros(1),
        children=np.full((1, 2), -1, dtype=np.int32),
        leaf=np.zeros(1, dtype=np.int32),
        class_counts=bin_counts.sum(axis=1),
        bin_counts=bin_counts,
    )


@pytest.fixture(scope='module')
def toy_forest():
    samples = toy_samples()
    forest = restructure_leaves(train_forest(samples, ForestConfig(**SMALL)), samples, bins=9, gamma_max=45.0)
    return forest, samples


class TestPatchSamples:

    def test_gray_has_no_chroma(self):
        lab = to_lab(np.full((4, 4, 3), 0.5))
        assert np.allclose(lab[..., 1:], 0.0, atol=0.01)
        assert np.allclose(lab[..., 0], lab[0, 0, 0])

    def test_no_labels(self):
        image = np.zeros((60, 60, 3))
        with pytest.raises(NoSamplesError):
            extract_samples({'img': image}, {'img': LabelImage.empty('img', (60, 60))}, per_class_cap=10)

    def test_cap_balances_classes(self):
        rng = np.random.default_rng(0)
        image = rng.uniform(0.0, 1.0, (100, 100, 3))
        labels = LabelImage.empty('img', (100, 100))
        labels.labels[20:40, 20:70] = POSITIVE
        labels.labels[50:70, 20:70] = NEGATIVE
        labels.angles[labels.labeled] = 10.0

        samples = extract_samples({'img': image}, {'img': labels}, per_class_cap=500, seed=1)
        again = extract_samples({'img': image}, {'img': labels}, per_class_cap=500, seed=1)
        assert len(samples) == 1000
        assert samples.positive.sum() == 500
        assert samples.patches.shape[1:] == (27, 27, 3)
        assert np.array_equal(samples.patches, again.patches)
        assert np.allclose(samples.angles, 10.0)

    def test_border_pixels_skipped(self):
        labels = LabelImage.empty('img', (60, 60))
        labels.labels[:5, :] = POSITIVE
        labels.labels[30, 30] = NEGATIVE
        with pytest.raises(NoSamplesError):
            extract_samples({'img': np.zeros((60, 60, 3))}, {'img': labels}, per_class_cap=10)


class TestForestTraining:

    def test_separable_toy_set(self, toy_forest):
        forest, samples = toy_forest
        assert classification_accuracy(forest, samples) >= 0.99

    def test_depth_limit(self, toy_forest):
        forest, _ = toy_forest
        assert all(tree.depth() <= SMALL['max_depth'] for tree in forest.trees)

    def test_shuffled_labels_are_chance(self):
        samples = toy_samples(n=1000, seed=4, shuffle=True)
        forest = train_forest(samples, ForestConfig(**dict(SMALL, trees=15)))
        assert oob_accuracy(forest, samples) == pytest.approx(0.5, abs=0.05)

    def test_same_seed_same_bytes(self):
        samples = toy_samples(n=200)
        first = train_forest(samples, ForestConfig(**SMALL))
        second = train_forest(samples, ForestConfig(**SMALL))
        assert forest_to_bytes(first) == forest_to_bytes(second)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            train_forest(toy_samples(n=4), ForestConfig(**SMALL))


class TestAngleBins:

    def test_smoothed_confidence(self):
        tree = leaf_tree([[0, 98], [0, 0], [3, 1]])
        assert np.allclose(tree.confidence()[0], [0.99, 0.5, 2.0 / 6.0])

    def test_five_degree_bins(self):
        forest = ConfidenceForest(trees=[], config=ForestConfig(), bins=9, gamma_max=45.0)
        assert list(forest.bin_of([0.0, 4.99, 5.0, 44.9, 90.0])) == [0, 0, 1, 8, 8]
        assert forest.bin_centers()[0] == pytest.approx(2.5)

    def test_bin_counts_match_routed_samples(self, toy_forest):
        forest, samples = toy_forest
        for tree in forest.trees:
            assert tree.bin_counts.shape[1:] == (9, 2)
            assert tree.bin_counts.sum() == len(samples)

    def test_confidences_in_unit_interval(self, toy_forest):
        forest, _ = toy_forest
        for tree in forest.trees:
            confidence = tree.confidence()
            assert ((confidence >= 0) & (confidence <= 1)).all()

    def test_empty_bins_end_the_curve(self):
        samples = toy_samples(angle_max=4.0)
        forest = restructure_leaves(train_forest(samples, ForestConfig(**SMALL)), samples, bins=9, gamma_max=45.0)
        image = np.full((40, 40, 3), 0.7)
        curve = confidence_curve(forest, image, (20, 20))
        assert curve.valid[0]
        assert not curve.valid[1:].any()
        assert curve.mass.sum() == pytest.approx(1.0)

    def test_curve_pixel_out_of_bounds(self, toy_forest):
        forest, _ = toy_forest
        with pytest.raises(ValueError):
            confidence_curve(forest, np.zeros((10, 10, 3)), (10, 0))


class TestPredictGrid:

    def test_constant_image(self, toy_forest):
        forest, _ = toy_forest
        image = predict_grid(forest, np.full((40, 48, 3), 0.7), step=8, image_id='flat')
        assert image.values.shape == (9, 5, 6)
        assert np.allclose(image.values, image.values[:, :1, :1])
        assert image.image_size == (48, 40)

    def test_grid_nodes_match_per_pixel(self, toy_forest):
        """A coarse grid evaluates exactly the per-pixel prediction at its nodes."""
        forest, _ = toy_forest
        rng = np.random.default_rng(2)
        image = rng.uniform(0.0, 1.0, (40, 40, 3))
        exact = predict_grid(forest, image, step=1)
        coarse = predict_grid(forest, image, step=4)
        assert np.array_equal(coarse.values, exact.values[:, ::4, ::4])

    def test_bright_beats_dark(self, toy_forest):
        forest, _ = toy_forest
        image = np.full((40, 80, 3), 0.25)
        image[:, :40] = 0.7
        confidence = predict_grid(forest, image, step=4)
        assert confidence.lookup(np.array([[4.0, 20.0]]), [0])[0] > confidence.lookup(np.array([[76.0, 20.0]]), [0])[0]

    def test_invalid_step(self, toy_forest):
        forest, _ = toy_forest
        with pytest.raises(ValueError):
            predict_grid(forest, np.zeros((8, 8, 3)), step=0)


class TestSparsification:

    def test_perfect_predictor(self):
        errors = np.array([0, 1, 0, 0, 1, 0, 1, 0], dtype=bool)
        result = sparsification_ausc(1.0 - errors.astype(float), errors)
        assert result.relative == pytest.approx(1.0)

    def test_constant_confidence(self):
        errors = np.array([0, 1, 0, 0, 1, 0, 1, 0], dtype=bool)
        result = sparsification_ausc(np.full(len(errors), 0.3), errors)
        assert result.ausc == pytest.approx(result.random)
        assert result.random == pytest.approx(3 / 8)

    def test_hand_case(self):
        """Ten pixels with three errors at known ranks."""
        confidence = np.linspace(0.05, 0.95, 10)
        errors = np.zeros(10, dtype=bool)
        errors[[0, 4, 8]] = True
        expected = np.mean([errors[i:].mean() for i in range(10)])
        assert sparsification_curve(confidence, errors).mean() == pytest.approx(expected)
        assert sparsification_ausc(confidence, errors).ausc == pytest.approx(expected)

    def test_all_correct_is_degenerate(self):
        result = sparsification_ausc(np.linspace(0, 1, 5), np.zeros(5, dtype=bool))
        assert result.relative is None
        assert result.ausc == 0.0

    def test_informed_beats_constant(self):
        rng = np.random.default_rng(0)
        errors = rng.random(500) < 0.3
        informed = np.where(errors, rng.uniform(0.0, 0.6, 500), rng.uniform(0.4, 1.0, 500))
        assert sparsification_ausc(informed, errors).ausc < sparsification_ausc(np.ones(500), errors).ausc

    def test_misaligned_inputs(self):
        with pytest.raises(ValueError):
            sparsification_curve(np.ones(3), np.zeros(2, dtype=bool))


class TestConfidenceIO:

    def test_forest_file(self, tmp_path, toy_forest):
        forest, _ = toy_forest
        save_forest(tmp_path / 'forest.bin', forest)
        loaded = load_forest(tmp_path / 'forest.bin')
        assert loaded.bins == 9
        assert forest_to_bytes(loaded) == forest_to_bytes(forest)

    def test_not_a_forest(self):
        with pytest.raises(FormatError):
            forest_from_bytes(b'something else')

    def test_confidence_image_files(self, tmp_path, toy_forest):
        forest, _ = toy_forest
        image = predict_grid(forest, np.full((16, 16, 3), 0.5), step=8, image_id='cam-01')
        write_confidence_image(tmp_path, image)
        loaded = read_confidence_images(tmp_path)['cam-01']
        assert loaded.step == 8
        assert np.allclose(loaded.values, image.values)
