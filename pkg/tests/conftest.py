"""Shared fixtures.

The expensive artifacts (full training runs) are session-scoped and cached,
so the acceptance tests and the unit tests share one computation.
"""

import numpy as np
import pytest

from cgms.config import compile_setup, load_config
from cgms.learning import MODE_UNCERTIFIED_AFTER_VIA, initial_policy, rollout, train


@pytest.fixture(scope="session")
def handover_setup():
    cfg = load_config()
    setup, _ = compile_setup(cfg)
    return setup


@pytest.fixture(scope="session")
def handover_policy(handover_setup):
    return initial_policy(handover_setup)


@pytest.fixture(scope="session")
def nominal_rollout(handover_setup, handover_policy):
    return rollout(handover_policy, None, handover_setup)


def run_training(seed, mode=None, hook=None):
    overrides = {"run_seed": seed}
    if mode is not None:
        overrides["run_mode"] = mode
    cfg = load_config(overrides=overrides)
    setup, noise = compile_setup(cfg)
    result = train(setup, noise=noise, updates=cfg.run_updates,
                   rollouts_per_update=cfg.run_rollouts,
                   beta_softmax=cfg.learning_softmax_sharpness,
                   rollout_hook=hook)
    return setup, result


@pytest.fixture(scope="session")
def training_runs():
    """Full 50 x 12 handover runs for seeds 0, 1, 2, with wall times."""
    import time

    runs = {}
    for seed in (0, 1, 2):
        t0 = time.perf_counter()
        setup, result = run_training(seed)
        runs[seed] = (setup, result, time.perf_counter() - t0)
    return runs


@pytest.fixture(scope="session")
def ablation_run():
    """Uncertified-after-via run; collects post-via eigenvalue maxima."""
    eig_rows = []

    def hook(update, r_idx, ro):
        setup = hook.setup
        post = setup.tgrid > setup.weights.t_hat
        eig_rows.append((update, r_idx, float(ro.lam_A[post].max()),
                         float(ro.lam_C[post].max())))

    cfg = load_config(overrides={"run_mode": MODE_UNCERTIFIED_AFTER_VIA})
    setup, noise = compile_setup(cfg)
    hook.setup = setup
    result = train(setup, noise=noise, updates=cfg.run_updates,
                   rollouts_per_update=cfg.run_rollouts,
                   beta_softmax=cfg.learning_softmax_sharpness,
                   rollout_hook=hook)
    return setup, result, eig_rows


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
