"""Deterministic named RNG streams derived from one master seed.

Every stochastic consumer (weight init, dropout, replay sampling, data
generation, ...) owns a named stream so that adding draws to one consumer
never perturbs another.  Stream state is checkpointable.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    # crc32 keyed by name: stable across processes, unlike hash().
    return np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(zlib.crc32(name.encode("utf-8")),)
    )


class RngHub:
    """Factory and registry of named, stateful random streams."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """Return the stream for `name`, creating it on first use.

        Repeated calls return the same generator object, so draws continue
        where the previous consumer left off.
        """
        gen = self._streams.get(name)
        if gen is None:
            gen = np.random.default_rng(stream_seed(self.master_seed, name))
            self._streams[name] = gen
        return gen

    def fresh(self, name: str) -> np.random.Generator:
        """A new generator at the stream's initial state (does not register)."""
        return np.random.default_rng(stream_seed(self.master_seed, name))

    def state(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "streams": {
                name: gen.bit_generator.state for name, gen in self._streams.items()
            },
        }

    def set_state(self, state: dict) -> None:
        self.master_seed = int(state["master_seed"])
        self._streams = {}
        for name, bg_state in state["streams"].items():
            gen = np.random.default_rng(stream_seed(self.master_seed, name))
            gen.bit_generator.state = bg_state
            self._streams[name] = gen
