"""Collects one verdict line per acceptance criterion for the end-of-run summary."""

RESULTS = {}


def record(n: int, ok: bool, title: str, detail: str, seconds: float) -> str:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title} ({seconds:.1f} s) {detail}"
    RESULTS[n] = line
    print(line)
    return line
