import numpy as np
import pytest

from cupdisc.netspec import TensorShape, default_network_spec
from cupdisc.synthetic import phantom_sample, write_drishti_tree, write_rimone_tree


@pytest.fixture(scope="session")
def drishti_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("drishti")
    write_drishti_tree(root, count=101, side=48, seed=11)
    return str(root)


@pytest.fixture(scope="session")
def rimone_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("rimone")
    write_rimone_tree(root, glaucoma=74, healthy=85, side=48, seed=12)
    return str(root)


@pytest.fixture(scope="session")
def drishti_manifest(drishti_root):
    from cupdisc.data import load_drishti

    return load_drishti(drishti_root)


@pytest.fixture(scope="session")
def rimone_manifest(rimone_root):
    from cupdisc.data import load_rimone

    return load_rimone(rimone_root)


@pytest.fixture(scope="session")
def tiny_spec():
    return default_network_spec(TensorShape(64, 64, 3))


@pytest.fixture()
def tiny_samples():
    return [
        phantom_sample(64, cup_ratio=0.45 + 0.1 * i, sample_id=f"s{i}", seed=i)
        for i in range(3)
    ]


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
