import time

import pytest

from mca.data import MotionShapesConfig, generate_motionshapes
from mca.metrics import affinity, ece
from mca.trainer import TrainConfig, evaluate, run_training

# desk-scale protocol shared by the acceptance suite and the empirical metric tests
SEEDS = (0, 1, 2, 3, 4)
EPOCHS = 12
MODE_OVERRIDES = {"mca": {"lambda_av": 3.0}}

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def motionshapes():
    return generate_motionshapes(MotionShapesConfig(kappa=0.9))


@pytest.fixture(scope="session")
def trained(motionshapes):
    """Lazily train and summarise one (mode, seed) run; results are cached for the session."""
    cache = {}

    def get(mode, seed):
        if (mode, seed) not in cache:
            t0 = time.perf_counter()
            cfg = TrainConfig(mode=mode, epochs=EPOCHS, seed=seed, **MODE_OVERRIDES.get(mode, {}))
            res = run_training(cfg, motionshapes["train"], motionshapes["val"], motionshapes["val_hueshift"])
            seconds = time.perf_counter() - t0
            clean = evaluate(res.net, motionshapes["val"])
            cache[mode, seed] = {
                "net": res.net,
                "log": res.log,
                "seconds": seconds,
                "val_acc": clean.accuracy,
                "val_acc_hueshift": res.log[-1]["val_acc_hueshift"],
                "train_ce": res.log[-1]["train_ce"],
                "ece": ece(clean.probs, clean.labels),
                "tau_swapmix": affinity(res.net, motionshapes["val"], "swapmix", seed=0).tau,
                "tau_hue": affinity(res.net, motionshapes["val"], "hue-jitter", seed=0).tau,
            }
        return cache[mode, seed]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
