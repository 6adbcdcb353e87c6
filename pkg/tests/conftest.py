import time

import pytest

from idslab import pipeline
from idslab.config import ExperimentConfig


def small_config(out, seed=11, **changes):
    """A tenth-scale experiment with light models, for pipeline-level tests."""
    text = f"""
[experiment]
seed = {seed}
out = {out}

[simulation]
horizon = 2600

[hyper.RandomForest]
n_trees = 10

[hyper.NeuralNet]
epochs = 5

[hyper.LogisticRegression]
epochs = 50
"""
    config = ExperimentConfig.from_ini(text)
    return config.with_overrides(**changes) if changes else config


def run_all_stages(config, timings=None):
    """simulate, extract and train-eval in order; stage wall times go into ``timings``."""
    lines = []
    timings = {} if timings is None else timings
    start = time.perf_counter()
    pipeline.simulate(config, log=lines.append)
    timings["simulate"] = time.perf_counter() - start
    start = time.perf_counter()
    pipeline.extract(config, log=lines.append)
    timings["extract"] = time.perf_counter() - start
    start = time.perf_counter()
    reports, best = pipeline.train_eval(config, log=lines.append)
    timings["train-eval"] = time.perf_counter() - start
    return lines, reports, best


@pytest.fixture(scope="session")
def default_experiment(tmp_path_factory):
    """The full default pipeline, run once per session."""
    out = tmp_path_factory.mktemp("default")
    config = ExperimentConfig().with_overrides(out=str(out))
    timings = {}
    lines, reports, best = run_all_stages(config, timings)
    return config, lines, reports, best, timings

