import numpy as np
import pytest
import torch

import semcs
from semcs import sample_images


@pytest.fixture(scope="session")
def enc():
    return semcs.load_encoders()


@pytest.fixture(scope="session")
def enc64():
    return semcs.load_encoders(dtype=torch.float64)


@pytest.fixture(scope="session")
def photo256():
    return sample_images.object_photo(256, seed=0)


@pytest.fixture(scope="session")
def photo128():
    return sample_images.object_photo(128, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
