"""Allow oband_nli to be executable through `python -m oband_nli`."""

import sys

from oband_nli.cli import main

if __name__ == "__main__":
    sys.exit(main())
