"""Root-seed splitting.

Each component draws from ``derive_seed(root, name)``: a numpy
``SeedSequence`` built from the root seed and the CRC-32 of the component
name, reduced to one 32-bit word. Components therefore get independent
streams, and rerunning one component alone reproduces its randomness.
"""

import zlib

import numpy as np


def derive_seed(root: int, component: str) -> int:
    seq = np.random.SeedSequence([int(root), zlib.crc32(component.encode("utf-8"))])
    return int(seq.generate_state(1)[0])


def component_rng(root: int, component: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, component))
