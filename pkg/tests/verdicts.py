"""Collects acceptance verdicts so they can be echoed in the terminal summary."""

RESULTS: list[str] = []


def verdict(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {name} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line
