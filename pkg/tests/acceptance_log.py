"""Pass/fail lines collected by the acceptance suite, printed in the terminal summary."""

LINES = []


def report(number, title, passed, detail=""):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}"
    if detail:
        line += f": {detail}"
    LINES.append(line)
    print(line)
    return passed
