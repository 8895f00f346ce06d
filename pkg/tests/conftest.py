import pytest

from mfcloads.model import FeedbackLaw, ModelParams


@pytest.fixture
def ref():
    """Reference setting r=100, tau=1 on the band [-1, 1]."""
    return ModelParams.from_tau(1.0, 100.0)


@pytest.fixture
def law_of():
    return FeedbackLaw.from_params
