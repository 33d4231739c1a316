"""Entry point for running the engine as a module."""
import sys

from multical.cli import main

if __name__ == "__main__":
    sys.exit(main())
