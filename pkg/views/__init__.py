"""
Views package for facestab
"""

from views.cli import main, run, make_run_config

__all__ = ['main', 'run', 'make_run_config']
