import sys

import pytest

from reve.config import ArchSpec, DataSpec, RunConfig
from reve.core import ReveConfig


def tiny_config(out_dir, **overrides) -> RunConfig:
    """A seconds-scale blobs run."""
    cfg = RunConfig(
        data=DataSpec(n_train=256, n_test=256, nuisance=6),
        arch=ArchSpec(layers=[{"type": "dense", "units": 16, "activation": "relu"},
                              {"type": "dense", "units": 8, "activation": "relu"}], dim_y=8),
        reve=ReveConfig(S=3),
        batch_size=64, epochs=2, seed=3, out_dir=str(out_dir),
    )
    return cfg.with_overrides(**overrides)


@pytest.fixture
def tiny(tmp_path):
    return lambda name="run", **kw: tiny_config(tmp_path / name, **kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.REPORT):
        terminalreporter.write_line(mod.REPORT[n])
