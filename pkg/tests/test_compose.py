import numpy as np
import pytest

from gen import joinable_net
from qpn.algebra import Channel, channels_close
from qpn.checker import is_qpn
from qpn.compose import (
    AnnotatedNet,
    JoinSpec,
    check_join_preservation,
    drop_preserving_join,
    joined_id,
    parallel,
    single_join,
    validate_drop_preserving,
)
from qpn.demo import branching_demo, two_phase_cycle
from qpn.errors import PolarityMismatch, QpnError, SignalSpaceMismatch
from qpn.nets import Net, race_free, verify_safety


X = np.array([[0, 1], [1, 0]], dtype=complex)


class TestParallel:
    def test_disjoint_ids_kept_verbatim(self):
        c, prov = parallel(branching_demo(), two_phase_cycle())
        assert "p0" in c.net.places and "s0" in c.net.places
        assert prov["p0"] == ("L", "p0") and prov["fwd"] == ("R", "fwd")

    def test_collision_prefixes_both_sides(self):
        bd = branching_demo()
        c, prov = parallel(bd, bd)
        assert "L/p0" in c.net.places and "R/p0" in c.net.places
        assert "p0" not in c.net.places
        assert prov["L/a"] == ("L", "a") and prov["R/a"] == ("R", "a")
        assert len(c.net.places) == 2 * len(bd.net.places)

    def test_product_of_qpns_is_qpn(self):
        c, _ = parallel(branching_demo(), two_phase_cycle())
        assert is_qpn(c.net, c.ann)

    def test_annotation_carried_over(self):
        bd = branching_demo()
        c, _ = parallel(bd, bd)
        assert c.ann.dim("L/p0") == bd.ann.dim("p0")
        assert c.ann.channel("R/c") is bd.ann.channel("c")
        assert c.ann.signal_dim("L/a") == bd.ann.signal_dim("a")


def _cyclic_pair():
    """p feeds a place that n consumes, so joining them would close a loop."""
    dims = {"a": 2, "q": 1, "r": 2}
    pol = {"p": "+", "n": "-"}
    flow = {("a", "p"), ("p", "q"), ("q", "n"), ("n", "r")}
    net = Net(set(dims), set(pol), flow, {"a"}, pol)
    verify_safety(net)
    from qpn.annotation import LocalAnnotation
    ann = LocalAnnotation(dims, {"p": Channel.from_unitary(X),
                                 "n": Channel.identity(2)},
                          {"p": 2, "n": 2})
    return AnnotatedNet(net, ann)


class TestSingleJoin:
    def test_polarity_mismatch(self):
        x = joinable_net(np.random.default_rng(0), False, False)
        with pytest.raises(PolarityMismatch):
            single_join(x, "n1", "p1")
        with pytest.raises(PolarityMismatch):
            single_join(x, "p1", "p2")

    def test_self_join_rejected(self):
        x = joinable_net(np.random.default_rng(0), False, False)
        with pytest.raises(QpnError, match="itself"):
            single_join(x, "p1", "p1")

    def test_signal_dimension_mismatch(self):
        x = joinable_net(np.random.default_rng(0), False, False)
        h = dict(x.ann.h)
        h["n1"] = 4
        from qpn.annotation import LocalAnnotation
        chans = dict(x.ann.channels)
        chans["n1"] = Channel.identity(8)
        bad = AnnotatedNet(x.net, LocalAnnotation(dict(x.ann.dims), chans, h))
        with pytest.raises(SignalSpaceMismatch):
            single_join(bad, "p1", "n1")

    def test_flow_cycle_rejected(self):
        with pytest.raises(QpnError, match="cycle"):
            single_join(_cyclic_pair(), "p", "n")

    def test_joined_event_shape(self):
        x = joinable_net(np.random.default_rng(0), False, False)
        y = single_join(x, "p1", "n1")
        j = joined_id("p1", "n1")
        assert j in y.net.transitions
        assert "p1" not in y.net.transitions and "n1" not in y.net.transitions
        assert y.net.pol(j) == "0"
        assert y.net.pre(j) == frozenset({"u1", "s"})
        assert y.net.post(j) == frozenset({"v1", "d1"})
        assert j not in y.ann.h

    def test_joined_channel_matches_hand_composition(self):
        # p1 maps u1 to the signal through X (v1 is trivial); n1 writes the
        # signal into d1 unchanged.  Net effect on s (x) u1: identity on s,
        # X on u1, landing in d1 = s (x) signal.
        x = joinable_net(np.random.default_rng(0), False, False)
        y = single_join(x, "p1", "n1")
        oracle = Channel.from_unitary(np.kron(np.eye(2), X))
        assert channels_close(y.ann.channel(joined_id("p1", "n1")), oracle)

    def test_join_preserves_qpn(self):
        x = joinable_net(np.random.default_rng(0), False, False)
        assert is_qpn(x.net, x.ann)
        y = single_join(x, "p1", "n1")
        verify_safety(y.net)
        assert is_qpn(y.net, y.ann)


class TestValidateDropPreserving:
    def test_accepts_matched_clusters(self):
        x = joinable_net(np.random.default_rng(0), True, True)
        spec = JoinSpec((("p1", "n1"), ("p2", "n2")))
        assert validate_drop_preserving(x, spec)

    def test_rejects_repeated_member(self):
        x = joinable_net(np.random.default_rng(0), True, True)
        out = validate_drop_preserving(x, JoinSpec((("p1", "n1"), ("p1", "n2"))))
        assert not out and "bijection" in out.reason

    def test_rejects_partial_negative_cluster(self):
        x = joinable_net(np.random.default_rng(0), True, True)
        out = validate_drop_preserving(x, JoinSpec((("p1", "n1"),)))
        assert not out and "maximal" in out.reason

    def test_rejects_positives_across_clusters(self):
        x = joinable_net(np.random.default_rng(0), True, False)
        out = validate_drop_preserving(x, JoinSpec((("p1", "n1"), ("p2", "n2"))))
        assert not out and "cluster" in out.reason

    def test_rejects_conflict_not_carried(self):
        # p1 ~ p3 ~ p2 keeps the positives in one cluster, but p1 and p2
        # themselves do not share a pre-place, so n1 ~ n2 is dropped.
        from qpn.annotation import LocalAnnotation
        dims = {"s": 2, "w1": 1, "w2": 1, "d1": 2, "d2": 2,
                "v1": 1, "v2": 1, "v3": 1}
        pol = {"n1": "-", "n2": "-", "p1": "+", "p2": "+", "p3": "+"}
        flow = {("s", "n1"), ("s", "n2"), ("n1", "d1"), ("n2", "d2"),
                ("w1", "p1"), ("w1", "p3"), ("w2", "p3"), ("w2", "p2"),
                ("p1", "v1"), ("p2", "v2"), ("p3", "v3")}
        net = Net(set(dims), set(pol), flow, {"s", "w1", "w2"}, pol)
        verify_safety(net)
        ann = LocalAnnotation(dims, {
            "n1": Channel.identity(2), "n2": Channel.identity(2),
            "p1": Channel.identity(1).scaled(0.5),
            "p2": Channel.identity(1).scaled(0.5),
            "p3": Channel.identity(1).scaled(0.5),
        }, {"n1": 1, "n2": 1, "p1": 1, "p2": 1, "p3": 1})
        out = validate_drop_preserving(
            AnnotatedNet(net, ann), JoinSpec((("p1", "n1"), ("p2", "n2"))))
        assert not out
        assert out.data["witness"] == (("n1", "n2"), ("p1", "p2"))

    def test_independent_negatives_join_one_at_a_time(self):
        x = joinable_net(np.random.default_rng(0), False, False)
        assert validate_drop_preserving(x, JoinSpec((("p1", "n1"),)))


class TestDropPreservingJoin:
    @pytest.mark.parametrize("conflicting", [False, True])
    def test_valid_join_stays_qpn(self, conflicting):
        x = joinable_net(np.random.default_rng(0), conflicting, conflicting)
        pairs = ((("p1", "n1"), ("p2", "n2")) if conflicting
                 else (("p1", "n1"),))
        y = drop_preserving_join(x, JoinSpec(pairs))
        assert is_qpn(x.net, x.ann)
        assert is_qpn(y.net, y.ann)

    def test_join_order_does_not_matter(self):
        x = joinable_net(np.random.default_rng(0), True, True)
        y = drop_preserving_join(x, JoinSpec((("p1", "n1"), ("p2", "n2"))))
        z = single_join(single_join(x, "p2", "n2"), "p1", "n1")
        assert y.net.transitions == z.net.transitions
        assert y.net.flow == z.net.flow
        for t in y.net.transitions:
            assert channels_close(y.ann.channel(t), z.ann.channel(t))

    def test_invalid_spec_raises_without_force(self):
        x = joinable_net(np.random.default_rng(0), True, False)
        spec = JoinSpec((("p1", "n1"), ("p2", "n2")))
        with pytest.raises(QpnError, match="invalid join spec"):
            drop_preserving_join(x, spec)

    def test_forced_bad_join_breaks_the_net(self):
        # negatives conflict but the positives do not: after the forced
        # join the two fused events race on s with trace-preserving
        # channels, so inclusion-exclusion dips below zero.
        x = joinable_net(np.random.default_rng(0), True, False)
        spec = JoinSpec((("p1", "n1"), ("p2", "n2")))
        y = drop_preserving_join(x, spec, force=True)
        out = is_qpn(y.net, y.ann)
        assert not out
        assert out.data["stage"] == "drop"


class TestJoinPreservation:
    @pytest.mark.parametrize("conflicting", [False, True])
    def test_drop_agrees_across_the_join(self, conflicting):
        x = joinable_net(np.random.default_rng(0), conflicting, conflicting)
        pairs = ((("p1", "n1"), ("p2", "n2")) if conflicting
                 else (("p1", "n1"),))
        spec = JoinSpec(pairs)
        y = drop_preserving_join(x, spec)
        assert check_join_preservation(x, y, spec)

    def test_race_freeness_survives(self):
        x = joinable_net(np.random.default_rng(0), True, True)
        y = drop_preserving_join(x, JoinSpec((("p1", "n1"), ("p2", "n2"))))
        assert race_free(y.net)
