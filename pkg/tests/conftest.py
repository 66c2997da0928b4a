import numpy as np
import pytest

from dirmatch.io import save_shape
from dirmatch.spectral import cached_embedding
from dirmatch.synthetic import blob, grid, icosphere, rigid_copy

TETRA_OFF = """OFF
4 4 0
0 0 0
1 0 0
0.5 0.8660254037844386 0
0.5 0.28867513459481287 0.816496580927726
3 0 2 1
3 0 1 3
3 1 2 3
3 2 0 3
"""


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    results = report.config_criteria.setdefault(number, {"title": title, "outcomes": [], "measured": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        results["outcomes"].append(report.outcome)
        results["measured"] += [v for k, v in report.user_properties if k == "measured"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = tuple(marker.args)
        report.config_criteria = item.config._criteria


def pytest_terminal_summary(terminalreporter, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        entry = criteria[number]
        outcomes = entry["outcomes"]
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")
        for measured in entry["measured"]:
            terminalreporter.write_line(f"              {measured}")


@pytest.fixture
def tetra_path(tmp_path):
    p = tmp_path / "tetra.off"
    p.write_text(TETRA_OFF)
    return p


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return icosphere(4)


@pytest.fixture(scope="session")
def strip():
    return grid(7, 5)


@pytest.fixture(scope="session")
def blob_mesh():
    return blob()


@pytest.fixture(scope="session")
def blob_copy(blob_mesh):
    return rigid_copy(blob_mesh, seed=11)


@pytest.fixture(scope="session")
def emb_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("emb_cache")


@pytest.fixture(scope="session")
def blob_embeddings(blob_mesh, blob_copy, emb_cache):
    """K=300 embeddings of the blob and its rigid copy, computed once per session."""
    return cached_embedding(blob_mesh, 300, emb_cache), cached_embedding(blob_copy, 300, emb_cache)


@pytest.fixture(scope="session")
def small_blob():
    return blob(frequency=10)


@pytest.fixture(scope="session")
def blob_files(tmp_path_factory, blob_mesh, blob_copy):
    d = tmp_path_factory.mktemp("blob_files")
    save_shape(blob_mesh, d / "a.off")
    save_shape(blob_copy, d / "b.off")
    np.savetxt(d / "identity.txt", np.arange(blob_mesh.n), fmt="%d")
    return d
