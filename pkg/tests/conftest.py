import pytest

from corenet.data import make_digits
from corenet.network import TrainConfig, train


@pytest.fixture(scope="session")
def digits_data():
    return make_digits(1200, seed=3)


@pytest.fixture(scope="session")
def small_trained_net(digits_data):
    return train([64, 32, 10], digits_data, TrainConfig(epochs=8, seed=2))
