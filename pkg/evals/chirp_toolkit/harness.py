"""
Shared runner for the chirp_toolkit test collections.

Each test module exposes plain pytest-style functions; run directly, the
module hands them to run_tests(), which prints PASS/FAIL lines and the
"Results: N passed, M failed" summary the shell runner greps for.
"""

import argparse
import sys
import traceback
from pathlib import Path
from typing import Callable, List, Optional, Sequence

SCRIPT_DIR = Path(__file__).parent.resolve()
REPO_ROOT = SCRIPT_DIR.parent.parent
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))


class TestResult:
    """Simple test result container."""

    __test__ = False

    def __init__(self, name: str):
        self.name = name
        self.passed = False
        self.error: Optional[str] = None


def run_one(test_func: Callable[[], None]) -> TestResult:
    result = TestResult(test_func.__name__.removeprefix("test_"))
    try:
        test_func()
        result.passed = True
    except AssertionError as e:
        result.error = str(e) or traceback.format_exc(limit=2)
    except Exception as e:
        result.error = f"{type(e).__name__}: {e}"
    return result


def run_tests(title: str, tests: Sequence[Callable[[], None]], argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description=title)
    parser.add_argument("-v", "--verbose", action="store_true", help="Verbose output")
    args = parser.parse_args(argv)

    print(title)
    print("=" * 40)

    passed = 0
    failed = 0
    for test_func in tests:
        result = run_one(test_func)
        if result.passed:
            print(f"  PASS: {result.name}")
            passed += 1
        else:
            print(f"  FAIL: {result.name}")
            if args.verbose and result.error:
                print(f"        Error: {result.error}")
            failed += 1

    print("=" * 40)
    print(f"Results: {passed} passed, {failed} failed")
    return 0 if failed == 0 else 1
