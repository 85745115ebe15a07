"""Reproducible, splittable random streams.

Every stream of a run descends from one root seed through `numpy.random.SeedSequence`
spawn keys, so streams used for different purposes never share increments, and a
stream is identified by its key alone.
"""

import enum

import numpy as np


class Purpose(enum.IntEnum):
    INITIAL = 0
    ACCELERATED = 1
    REFERENCE = 2
    BOOTSTRAP = 3
    PROBE = 4


class StreamFactory:
    """
    Derive PCG64 generators from a root seed.

    Normal variates are drawn with `Generator.standard_normal` (ziggurat); each Euler
    step draws one C-ordered (J, m) block, i.e. variates are consumed in
    (step, particle, channel) order.

    Args:
        seed (int): Root seed of the run.
    """

    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = seed

    def stream(self, purpose: Purpose, *index: int) -> np.random.Generator:
        key = (int(purpose), *(int(i) for i in index))
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key))
        )

    def lineage(self, purpose: Purpose, *index: int) -> str:
        key = ".".join(str(i) for i in (int(purpose), *index))
        return f"seed={self.seed}/{purpose.name.lower()}[{key}]"

    def initial(self) -> np.random.Generator:
        return self.stream(Purpose.INITIAL)

    def macro_step(self, n: int) -> np.random.Generator:
        return self.stream(Purpose.ACCELERATED, n)

    def reference(self) -> np.random.Generator:
        return self.stream(Purpose.REFERENCE)

    def bootstrap(self) -> np.random.Generator:
        return self.stream(Purpose.BOOTSTRAP)
