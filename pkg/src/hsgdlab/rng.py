"""Reproducible random streams.

Every stochastic piece of the lab draws from a stream obtained through
:func:`derive_stream`.  The triple ``(master_seed, purpose_tag, replica_index)``
is hashed with BLAKE2b to a 128-bit key for numpy's counter-based Philox
generator, so streams are independent of platform, process layout and the
order in which replicas are executed.
"""

import hashlib

import numpy as np

__all__ = ["derive_stream", "stream_key"]


def stream_key(master_seed, purpose_tag, replica_index):
    """128-bit Philox key for the given triple."""
    payload = f"{int(master_seed)}\x1f{purpose_tag}\x1f{int(replica_index)}".encode()
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derive_stream(master_seed, purpose_tag, replica_index=0):
    """Independent generator for one (seed, purpose, replica) triple.

    Parameters
    ----------
    master_seed : int
        Experiment-level seed.
    purpose_tag : str
        What the stream is used for, e.g. ``"sgd"`` or ``"dataset"``.
    replica_index : int
        Replica number; distinct indices give distinct streams.

    Returns
    -------
    numpy.random.Generator
    """
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, purpose_tag, replica_index)))
