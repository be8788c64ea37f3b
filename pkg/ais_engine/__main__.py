"""
CLI module for the ais_engine package.
"""
import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
