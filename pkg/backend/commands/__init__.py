"""
Command modules for the mortality forecast command line
"""

from . import baseline_fit, describe, evaluate, importance, score, synth, train

COMMAND_MODULES = [synth, train, evaluate, score, importance, baseline_fit, describe]

__all__ = ["COMMAND_MODULES"]
