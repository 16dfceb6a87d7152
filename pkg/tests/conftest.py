import numpy as np
import pytest

from esn_adjoint.esn import EsnHyperParams, RegimeDataset, build_reservoir, train
from esn_adjoint.lorenz import (
    IntegrationConfig,
    LorenzParams,
    LorenzState,
    simulate,
)
from esn_adjoint.seeding import rng_for

DT = 0.01

SMALL_HYPER = EsnHyperParams(
    n_reservoir=64,
    n_conn=3,
    rho=0.8,
    sigma_in=0.5,
    alpha=0.85,
    tikhonov=1e-8,
    sigma_p=(0.15, 0.04, 0.6),
    k_p=(37.0, 33.0, 34.0),
    seed=7,
)

SMALL_REGIMES = (
    LorenzParams(10.0, 35.0, 2.5),
    LorenzParams(14.0, 40.0, 1.5),
    LorenzParams(12.0, 45.0, 3.0),
)


def make_dataset(params: LorenzParams, seed_index: int, wash_steps=200, train_steps=600):
    cfg = IntegrationConfig(
        dt=DT, n_steps=wash_steps + train_steps, transient_steps=2000
    )
    ic = LorenzState.from_array(
        rng_for(5, "ic", seed_index).uniform([-15, -15, 5], [15, 15, 35])
    )
    traj = simulate(params, ic, cfg)
    return RegimeDataset(
        regime=params.as_array(),
        washout_series=traj.states[:wash_steps],
        train_series=traj.states[wash_steps:],
        dt=DT,
        lyapunov_time=1.0,
    )


@pytest.fixture(scope="session")
def small_datasets():
    return [make_dataset(p, k) for k, p in enumerate(SMALL_REGIMES)]


@pytest.fixture(scope="session")
def small_model(small_datasets):
    mats = build_reservoir(SMALL_HYPER, 3, 3)
    return train(mats, SMALL_HYPER, small_datasets)
