import numpy as np
import pytest
import torch

from sketchmatch.datamodel import load_manifest, load_paired_set
from sketchmatch.synth import synth_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth12")
    synth_dataset(12, 3, out, size=(32, 32))
    return out


@pytest.fixture(scope="session")
def synth_manifest(synth_dir):
    return load_manifest(synth_dir / "manifest.csv")


@pytest.fixture(scope="session")
def paired(synth_manifest):
    return load_paired_set(synth_manifest, (32, 32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._acceptance = []


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    status = "PASS" if call.excinfo is None else "FAIL"
    item.config._acceptance.append((number, title, status, call.duration))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config._acceptance)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, duration in rows:
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({duration:.1f}s)")
