import pytest
import torch


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
    yield
