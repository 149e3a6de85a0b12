import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
DEMO = FIXTURES / "demo_corpus"

_criteria: list[tuple[str, str, str]] = []


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    cid, title = marker.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _criteria.append((cid, title, outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, outcome in sorted(_criteria, key=lambda t: int(t[0].lstrip("C"))):
        terminalreporter.write_line(f"{outcome}  {cid:>3}  {title}")


@pytest.fixture
def demo_corpus(tmp_path):
    """A private copy of the bundled three-page corpus."""
    dst = tmp_path / "corpus"
    shutil.copytree(DEMO, dst)
    return dst


@pytest.fixture
def mock_server():
    from semchunk.demo import load_texts_by_color
    from semchunk.mock_server import MockChatServer

    with MockChatServer(load_texts_by_color(DEMO / "texts.json")) as srv:
        yield srv
