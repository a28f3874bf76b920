"""
Standalone entry point for IRS Link Lab.

    python python/irs_engine.py validate --seed 7
    python python/irs_engine.py rate-curves --preset rate --out rates.csv

Equivalent to `python -m irslink` run from the python/ directory.
"""

import logging
import os
import sys

# ==============================================================================
# Runtime module path: make the irslink package importable when this script
# is launched from anywhere.
# ==============================================================================
_SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
if _SCRIPT_DIR not in sys.path:
    sys.path.insert(0, _SCRIPT_DIR)

from irslink.cli import EXIT_NUMERICAL, cli_main  # noqa: E402


def main() -> int:
    try:
        return cli_main(sys.argv[1:])
    except KeyboardInterrupt:
        logging.warning("Interrupted")
        return EXIT_NUMERICAL
    except Exception as e:
        logging.exception(f"Unhandled error: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
