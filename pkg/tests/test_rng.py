import numpy as np

from hsgdlab.rng import derive_stream, stream_key


def test_same_triple_same_draws():
    a = derive_stream(7, "sgd", 3).standard_normal(1000)
    b = derive_stream(7, "sgd", 3).standard_normal(1000)
    assert np.array_equal(a, b)


def test_replica_index_changes_stream():
    a = derive_stream(7, "sgd", 3).standard_normal(1000)
    b = derive_stream(7, "sgd", 4).standard_normal(1000)
    assert not np.any(a == b)


def test_purpose_tag_changes_stream():
    assert stream_key(1, "sgd", 0) != stream_key(1, "hsgd", 0)


def test_no_fingerprint_collisions():
    prints = set()
    for i in range(10_000):
        lo, hi = derive_stream(123, "scan", i).integers(0, 2**63, size=2, dtype=np.int64)
        prints.add((int(lo), int(hi)))
    assert len(prints) == 10_000
