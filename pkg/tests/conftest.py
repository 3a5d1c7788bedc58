from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Remember one acceptance outcome for the terminal summary."""
    _RESULTS[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        ok, detail = _RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
