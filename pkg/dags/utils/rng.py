"""Counter-based random streams.

Every stream is a Philox generator keyed by (master_seed, stream_id), so
parallel chains never share state and a chain's draws depend only on its
key and on how many numbers it has consumed.
"""
import numpy as np

from .errors import ConfigError

_UINT64 = 2 ** 64


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {type(seed).__name__}", module="rng")
    if not 0 <= int(seed) < _UINT64:
        raise ConfigError(f"seed must fit in 64 unsigned bits, got {seed}", module="rng")
    return int(seed)


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Generator for one chain."""
    key = np.array([_check_seed(seed), int(stream_id) % _UINT64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def step_stream(seed: int, stream_id: int, step: int) -> np.random.Generator:
    """Generator for one step of a stream.

    The step occupies the top word of the 256-bit Philox counter, so every
    step owns a block of 2^192 counter values and adjacent steps never share
    draws. Step 0 coincides with `stream(seed, stream_id)`.
    """
    key = np.array([_check_seed(seed), int(stream_id) % _UINT64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(step) % _UINT64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
