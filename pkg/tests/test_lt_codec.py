import pytest

from ripple_lab.lt_codec import EncodedSymbol, encode, peel_decode
from ripple_lab.rng import Stream


class ScriptedRng:
    """Hand-fed RNG: uniforms for degree draws, integers for randbelow."""

    def __init__(self, uniforms=(), draws=()):
        self.uniforms = list(uniforms)
        self.draws = list(draws)
        self.randbelow_calls = 0

    def uniform(self):
        return self.uniforms.pop(0)

    def randbelow(self, m):
        self.randbelow_calls += 1
        v = self.draws.pop(0)
        assert 0 <= v < m
        return v


def _graph(neighbor_lists):
    return [EncodedSymbol(list(nb)) for nb in neighbor_lists]


def test_encode_draw_order_with_replacement(quad):
    rng = ScriptedRng(uniforms=[0.1, 0.9], draws=[2, 0, 0])
    syms = encode(5, 2, quad, rng, mode="with_replacement")
    assert [s.neighbors for s in syms] == [[2], [0, 0]]
    assert rng.randbelow_calls == 3
    assert not rng.uniforms and not rng.draws


def test_encode_rejection_without_replacement(quad):
    # second symbol: 0 accepted, duplicate 0 rejected, 1 accepted
    rng = ScriptedRng(uniforms=[0.1, 0.9], draws=[2, 0, 0, 1])
    syms = encode(5, 2, quad, rng, mode="without_replacement")
    assert [s.neighbors for s in syms] == [[2], [0, 1]]
    assert rng.randbelow_calls == 4


def test_encode_validation(quad, cap):
    rng = Stream(0)
    with pytest.raises(ValueError):
        encode(0, 3, quad, rng)
    with pytest.raises(ValueError):
        encode(3, 0, quad, rng)
    with pytest.raises(ValueError):
        encode(3, 3, quad, rng, mode="bogus")
    with pytest.raises(ValueError):
        # max degree 50 cannot be drawn without replacement from 20 inputs
        encode(20, 22, cap, rng, mode="without_replacement")


def test_peel_chain_success():
    syms = _graph([[0], [0, 1], [1, 2]])
    rng = ScriptedRng(draws=[0, 0, 0])
    traj = peel_decode(syms, 3, rng=rng)
    assert traj.success and traj.halt_u == 0
    assert traj.ripple_size.tolist() == [0, 1, 1, 1]
    assert traj.cloud_size.tolist() == [0, 0, 1, 2]
    # exactly one randbelow per recovery, even with a single-member ripple
    assert rng.randbelow_calls == 3


def test_peel_halt():
    traj = peel_decode(_graph([[0], [1, 2]]), 3, pick="first")
    assert not traj.success
    assert traj.halt_u == 2
    assert traj.ripple_size[3] == 1 and traj.ripple_size[2] == 0
    assert traj.cloud_size[3] == 1 and traj.cloud_size[2] == 1


def test_duplicate_draws_collapse_to_reduced_degree():
    # with-replacement symbol [0, 0] has reduced degree 1 and peels normally
    traj = peel_decode(_graph([[0, 0], [0, 1]]), 2, pick="first")
    assert traj.success
    assert traj.ripple_size[2] == 1


def test_peel_validation():
    with pytest.raises(ValueError):
        peel_decode([], 3)
    with pytest.raises(ValueError):
        peel_decode(_graph([[0]]), 3, pick="bogus")
    with pytest.raises(ValueError):
        peel_decode(_graph([[0]]), 3, pick="random", rng=None)
    with pytest.raises(ValueError):
        peel_decode(_graph([[5]]), 3, pick="first")


def test_pick_order_does_not_change_halt(cap):
    # the halting u is a property of the graph, not of which ripple member
    # is peeled first; check over a few hundred random graphs
    k, n = 20, 22
    halted = 0
    for t in range(300):
        syms = encode(k, n, cap, Stream(3, t), mode="with_replacement")
        a = peel_decode(syms, k, pick="first")
        b = peel_decode(syms, k, rng=Stream(99, t), pick="random")
        assert a.success == b.success
        assert a.halt_u == b.halt_u
        halted += 0 if a.success else 1
    # the ensemble must exercise both outcomes for the check to mean much
    assert 0 < halted < 300
