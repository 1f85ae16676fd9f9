#!/usr/bin/env python3
"""Entry point for the quasi2d toolkit."""
import sys

from quasi2d.main import main

if __name__ == "__main__":
    sys.exit(main())
