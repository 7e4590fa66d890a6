import json
import os
from pathlib import Path

import pytest

# registry for acceptance-criterion outcomes; printed as a summary table
_CRITERIA: list[tuple[str, bool, str]] = []

CACHE_DIR = Path(__file__).parent / "_acceptance_cache"


def record_criterion(name: str, passed: bool, detail: str = ""):
    _CRITERIA.append((name, passed, detail))


def cache_get(key: str):
    if os.environ.get("TWISTPO_ACCEPT_CACHE", "1") == "0":
        return None
    path = CACHE_DIR / f"{key}.json"
    if path.exists():
        return json.loads(path.read_text())
    return None


def cache_put(key: str, payload) -> None:
    if os.environ.get("TWISTPO_ACCEPT_CACHE", "1") == "0":
        return
    CACHE_DIR.mkdir(exist_ok=True)
    (CACHE_DIR / f"{key}.json").write_text(json.dumps(payload))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
