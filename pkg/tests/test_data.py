import numpy as np
import pytest

from vrd.data import LabeledExample, gen_synthetic, split_dataset
from vrd.exceptions import ShapeMismatchError
from vrd.lattice import Field


class TestGenSynthetic:
    def test_deterministic(self):
        a = gen_synthetic(11, 3, 16, 12)
        b = gen_synthetic(11, 3, 16, 12)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.input.data, y.input.data)
            np.testing.assert_array_equal(x.labels, y.labels)

    def test_seed_changes_data(self):
        a = gen_synthetic(1, 1, 16, 16)[0]
        b = gen_synthetic(2, 1, 16, 16)[0]
        assert not np.array_equal(a.input.data, b.input.data)

    def test_noisy_argmax_accuracy(self):
        example = gen_synthetic(7, 1, 64, 64, noise_sigma=1.5)[0]
        accuracy = np.mean(np.argmax(example.input.data, axis=-1) == example.labels)
        assert 0.5 < accuracy < 0.95

    def test_noise_free_argmax_recovers_labels(self):
        for example in gen_synthetic(3, 5, 20, 24, n_classes=3, noise_sigma=0.0):
            np.testing.assert_array_equal(np.argmax(example.input.data, axis=-1), example.labels)

    def test_shapes(self):
        examples = gen_synthetic(0, 4, 10, 7, n_classes=3)
        assert len(examples) == 4
        for example in examples:
            assert example.input.shape == (10, 7, 3)
            assert example.labels.shape == (10, 7)
            assert example.labels.min() >= 0 and example.labels.max() < 3

    def test_noise_level(self):
        example = gen_synthetic(5, 1, 64, 64, noise_sigma=1.5)[0]
        residual = example.input.data - np.eye(2)[example.labels]
        assert np.std(residual) == pytest.approx(1.5, rel=0.05)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            gen_synthetic(0, 1, 4, 4, n_classes=1)


class TestLabeledExample:
    def test_label_grid_must_match(self):
        with pytest.raises(ShapeMismatchError):
            LabeledExample(Field.zeros(3, 3, 2), np.zeros((3, 4)))


class TestSplitDataset:
    def test_eighty_twenty(self):
        examples = gen_synthetic(0, 10, 4, 4)
        train, test = split_dataset(examples, 0.8, seed=1)
        assert len(train) == 8 and len(test) == 2
        ids = {id(e) for e in train} | {id(e) for e in test}
        assert ids == {id(e) for e in examples}

    def test_deterministic(self):
        examples = gen_synthetic(0, 10, 4, 4)
        a, _ = split_dataset(examples, seed=3)
        b, _ = split_dataset(examples, seed=3)
        assert [id(e) for e in a] == [id(e) for e in b]
