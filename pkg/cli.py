#!/usr/bin/env python3
"""Run the roistream CLI from a source checkout without installing it."""

import sys

from roistream.cli import main

if __name__ == "__main__":
    sys.exit(main())
