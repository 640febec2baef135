"""Run the acceptance suite and print only its PASS/FAIL lines.

Usage: python3 scripts/acceptance_report.py [-k EXPR]
"""

import subprocess
import sys


def main(argv):
    cmd = [sys.executable, "-m", "pytest", "tests/test_acceptance.py", "-q", "-p", "no:cacheprovider", *argv]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    lines = [ln for ln in proc.stdout.splitlines() if ": PASS |" in ln or ": FAIL |" in ln]
    # the terminal summary repeats each captured line; keep the first copy
    seen = dict.fromkeys(lines)
    print("\n".join(seen))
    return 0 if seen else proc.returncode


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
