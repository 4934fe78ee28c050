"""Run the acceptance criteria and print one PASS/FAIL line each.

Equivalent to ``python3 -m foascene.acceptance``; kept here so the
experiment scripts live in one place.
"""
import sys

from foascene.acceptance import main

if __name__ == "__main__":
    sys.exit(main())
