#!/usr/bin/env python3
"""
facestab - face-stability toolkit for sparse attention
"""
import sys

from views.cli import main

if __name__ == "__main__":
    sys.exit(main())
