"""Collects one pass/fail line per acceptance criterion."""

LINES = []


def report(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    LINES.append(line)
    print(line)
    return ok
