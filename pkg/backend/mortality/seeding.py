"""
Derived seeds: every random stream is a SeedSequence keyed by the master
seed plus a stream id (and block / repetition index), so parallel runs
reproduce sequential ones.
"""

# Third-party imports
import numpy as np

STREAM_CALIBRATION_SPLIT = 1
STREAM_REPETITION = 2
STREAM_COHORT_BLOCK = 3
STREAM_PILOT_BLOCK = 4
STREAM_PATIENTS = 5
STREAM_DEDUPE = 6


def seed_sequence(master: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])


def derive_seed(master: int, *keys: int) -> int:
    """A 32-bit integer seed for the given stream"""
    return int(seed_sequence(master, *keys).generate_state(1, dtype=np.uint32)[0])


def generator(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master, *keys))
