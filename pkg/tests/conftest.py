import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import _shared  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not _shared.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_shared.ACCEPTANCE):
        terminalreporter.write_line(_shared.ACCEPTANCE[k])
