import numpy as np
import pytest

from core import SurvivalDataset
from simlab import ScenarioConfig, generate_base
from streams import make_stream


@pytest.fixture
def toy():
    """(T, delta, eta) = (1,1,2), (2,0,1), (3,1,0), (4,1,-1)."""
    ds = SurvivalDataset(time=[1.0, 2.0, 3.0, 4.0], event=[1, 0, 1, 1])
    eta = np.array([2.0, 1.0, 0.0, -1.0])
    return ds, eta


@pytest.fixture
def stream():
    return make_stream(20240607, 0, "tests")


def random_dataset(stream, n, p=2, censor_rate=0.3, integer_times=False):
    X = stream.standard_normal((n, p))
    eta = X @ np.linspace(1.0, -0.5, p) if p else np.zeros(n)
    latent = stream.exponential(1.0, size=n) / np.exp(eta)
    censor = stream.exponential(1.0 / censor_rate, size=n)
    time = np.minimum(latent, censor)
    if integer_times:
        time = np.ceil(time * 5)
    return SurvivalDataset(time=time, event=latent <= censor, X=X)


@pytest.fixture
def base_sample():
    cfg = ScenarioConfig(n_train=250, n_test=250)
    return generate_base(250, cfg, make_stream(cfg.seed, 0, "fixture"))
