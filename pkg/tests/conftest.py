import os

import numpy as np
import pytest

from dptr import (
    DgpConfig,
    GammaGrid,
    InstrumentSpec,
    MomentSystem,
    build_instruments,
    fit_continuity_restricted,
    fit_unrestricted,
    simulate_panel,
)


def mc_workers():
    return int(os.environ.get("DPTR_TEST_WORKERS", "2"))


def make_ms(panel, spec=None):
    iv = build_instruments(panel, spec or InstrumentSpec())
    return MomentSystem.from_panel(panel, iv)


def quantile_grid(panel, count=21, lo=0.10, hi=0.90):
    return GammaGrid.from_quantiles(panel.q, lo, hi, count)


@pytest.fixture(scope="session")
def jump_dgp():
    # benchmark design with a unit jump at the threshold
    return DgpConfig(n=400, T=6).with_jump(1.0)


@pytest.fixture(scope="session")
def continuous_dgp():
    return DgpConfig(n=400, T=6).with_jump(0.0)


@pytest.fixture(scope="session")
def seed1_panel(jump_dgp):
    return simulate_panel(jump_dgp, seed=1)


@pytest.fixture(scope="session")
def seed1_ms(seed1_panel):
    return make_ms(seed1_panel)


@pytest.fixture(scope="session")
def seed1_grid(seed1_panel):
    return quantile_grid(seed1_panel)


@pytest.fixture(scope="session")
def seed1_fit(seed1_ms, seed1_grid):
    return fit_unrestricted(seed1_ms, None, seed1_grid)


@pytest.fixture(scope="session")
def seed1_kink(seed1_ms, seed1_grid, seed1_fit):
    return fit_continuity_restricted(
        seed1_ms, None, seed1_grid, weight_matrix=seed1_fit.W, workspace=seed1_fit.workspace
    )


@pytest.fixture(scope="session")
def exact_panel():
    # noise-free jump design: the model fits exactly
    return simulate_panel(DgpConfig(n=200, T=6, sigma=0.0).with_jump(1.0), seed=3)


@pytest.fixture(scope="session")
def exact_ms(exact_panel):
    return make_ms(exact_panel)


@pytest.fixture(scope="session")
def exact_grid(exact_panel):
    pts = np.unique(
        np.append(np.quantile(exact_panel.q, np.linspace(0.1, 0.9, 21), method="lower"), 0.25)
    )
    return GammaGrid(points=pts)
