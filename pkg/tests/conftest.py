import os

import numpy as np
import pytest

from bitnn import mnist

DATA_DIR = os.path.join(os.path.dirname(__file__), "data", "mnist")


@pytest.fixture(scope="session")
def mnist_dir():
    if not os.path.exists(os.path.join(DATA_DIR, "train-images-idx3-ubyte.gz")):
        pytest.skip("MNIST files not present under tests/data/mnist")
    return DATA_DIR


@pytest.fixture(scope="session")
def mnist_train(mnist_dir):
    return mnist.load_dataset(mnist_dir, "train")


@pytest.fixture(scope="session")
def mnist_test(mnist_dir):
    return mnist.load_dataset(mnist_dir, "test")


def random_signs(rng, shape, dtype=np.float32):
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0).astype(dtype)
