import pytest

from sdelab import Coefficient, SdeModel, build_jump_removal_transform


@pytest.fixture(scope="session")
def indicator_model():
    return SdeModel(
        drift=Coefficient.indicator_right(0.0, 1.0),
        diffusion=Coefficient.constant(1.0),
        x0=0.0,
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def indicator_affine_model():
    return SdeModel(
        drift=Coefficient.indicator_right(0.0, 1.0),
        diffusion=Coefficient.polynomial([2.0, 1.0]),
        x0=0.0,
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def ou_model():
    return SdeModel(
        drift=Coefficient.polynomial([0.0, -1.0]),
        diffusion=Coefficient.constant(1.0),
        x0=0.0,
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def brownian_model():
    return SdeModel(
        drift=Coefficient.constant(0.0),
        diffusion=Coefficient.constant(1.0),
        x0=0.0,
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def indicator_transform(indicator_model):
    return build_jump_removal_transform(indicator_model)
