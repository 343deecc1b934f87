"""Network serialization: round trips must be bit-exact."""

import numpy as np
import pytest

from featcast.layers import BatchNorm1d, Conv1d, Dense, GlobalAvgPool, Network, ReLU
from featcast.netio import load_network, save_network


def _sample_net(rng):
    net = Network(
        [
            Conv1d(1, 4, 8, rng=rng), BatchNorm1d(4), ReLU(),
            Conv1d(4, 3, 3, rng=rng), BatchNorm1d(3), ReLU(),
            GlobalAvgPool(), Dense(3, 5, rng=rng), Dense(5, 2, rng=rng),
        ]
    )
    # populate batchnorm running stats with awkward values
    for _ in range(3):
        net.forward(rng.standard_normal((4, 1, 10)), training=True)
    return net


def test_round_trip_is_bit_exact(tmp_path, rng):
    net = _sample_net(rng)
    path = tmp_path / "net.txt"
    save_network(path, net, meta={"n_classes": "2", "window_length": "10"})
    loaded, meta = load_network(path)
    assert meta == {"n_classes": "2", "window_length": "10"}
    assert len(loaded.layers) == len(net.layers)
    for a, b in zip(net.layers, loaded.layers):
        assert a.kind == b.kind
        for (_, wa, _), (_, wb, _) in zip(a.params(), b.params()):
            assert np.array_equal(wa, wb)
    for a, b in zip(net.layers, loaded.layers):
        if isinstance(a, BatchNorm1d):
            assert np.array_equal(a.running_mean, b.running_mean)
            assert np.array_equal(a.running_var, b.running_var)
            assert a.initialized == b.initialized
            assert a.momentum == b.momentum and a.eps == b.eps


def test_loaded_network_forwards_identically(tmp_path, rng):
    net = _sample_net(rng)
    path = tmp_path / "net.txt"
    save_network(path, net)
    loaded, _ = load_network(path)
    x = rng.standard_normal((3, 1, 10))
    assert np.array_equal(net.forward(x, False), loaded.forward(x, False))


def test_double_round_trip_identical_bytes(tmp_path, rng):
    net = _sample_net(rng)
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_network(p1, net)
    loaded, _ = load_network(p1)
    save_network(p2, loaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("not a network\n")
    with pytest.raises(ValueError, match="not a"):
        load_network(path)
