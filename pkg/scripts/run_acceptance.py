"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python scripts/run_acceptance.py

Exit status is 0 only when every criterion passes.
"""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(pytest.main([str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]))
