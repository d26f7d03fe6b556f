"""Named random sub-streams derived from one root seed."""
import zlib

import numpy as np


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Independent generator for stage ``name``; changing one stage leaves the others untouched."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]))
