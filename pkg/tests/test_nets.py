import numpy as np
import pytest

from gen import random_occurrence_annotated
from qpn.errors import (
    BoundExceeded,
    NotAConfiguration,
    NotEnabled,
    NotReachableFrom,
    SafetyViolation,
    Unreachable,
)
from qpn.nets import (
    Net,
    OccurrenceNet,
    configuration_of_marking,
    cut_of_configuration,
    enabled,
    fire,
    interval,
    is_occurrence_net,
    marking_clusters,
    marking_of_configuration,
    race_free,
    reachable_markings,
    restriction,
    to_dot,
    verify_safety,
)


def simple_cycle():
    return Net({"s0", "s1"}, {"f", "b"},
               {("s0", "f"), ("f", "s1"), ("s1", "b"), ("b", "s0")},
               {"s0"}, {"f": "0", "b": "0"})


def branching_occ():
    """c0 -> a; a -> c1, c2; c1 feeds conflicting b and c."""
    return OccurrenceNet(
        {"c0", "c1", "c2", "c3", "c4"}, {"a", "b", "c"},
        {("c0", "a"), ("a", "c1"), ("a", "c2"),
         ("c1", "b"), ("b", "c3"), ("c1", "c"), ("c", "c4")},
        {"c0"}, {"a": "0", "b": "0", "c": "0"})


class TestTokenGame:
    def test_enabled_and_fire(self):
        net = simple_cycle()
        assert enabled(net, frozenset({"s0"})) == {"f"}
        assert fire(net, frozenset({"s0"}), "f") == {"s1"}

    def test_fire_disabled_raises(self):
        with pytest.raises(NotEnabled):
            fire(simple_cycle(), frozenset({"s0"}), "b")

    def test_reachable_markings_of_cycle(self):
        assert reachable_markings(simple_cycle()) == {
            frozenset({"s0"}), frozenset({"s1"})}

    def test_bound_exceeded(self):
        with pytest.raises(BoundExceeded):
            reachable_markings(simple_cycle(), bound=1)

    def test_unsafe_firing_detected(self):
        net = Net({"p", "q"}, {"t"}, {("p", "t"), ("t", "q")},
                  {"p", "q"}, {"t": "0"})
        out = verify_safety(net)
        assert not out
        assert "second token" in out.reason

    def test_verify_safety_sets_flag(self):
        net = simple_cycle()
        assert not net.safety_verified
        assert verify_safety(net)
        assert net.safety_verified


class TestOccurrenceNetAxioms:
    def test_cyclic_flow_rejected(self):
        net = simple_cycle()
        out = is_occurrence_net(net)
        assert not out and "cyclic" in out.reason

    def test_backward_branching_rejected(self):
        net = Net({"p", "q", "r"}, {"t", "u"},
                  {("p", "t"), ("q", "u"), ("t", "r"), ("u", "r")},
                  {"p", "q"}, {"t": "0", "u": "0"})
        out = is_occurrence_net(net)
        assert not out and "backward branching" in out.reason

    def test_minimal_conditions_must_be_initial(self):
        net = Net({"p", "q"}, {"t"}, {("p", "t"), ("t", "q")},
                  set(), {"t": "0"})
        assert not is_occurrence_net(net)

    def test_self_conflict_rejected(self):
        # d consumes the posts of two conflicting events
        net = Net({"c0", "x", "y", "z"}, {"a", "b", "d"},
                  {("c0", "a"), ("c0", "b"), ("a", "x"), ("b", "y"),
                   ("x", "d"), ("y", "d"), ("d", "z")},
                  {"c0"}, {"a": "0", "b": "0", "d": "0"})
        out = is_occurrence_net(net)
        assert not out and "self-conflict" in out.reason

    def test_relations_on_branching_net(self):
        o = branching_occ()
        assert o.lt("a", "b") and o.lt("c0", "c4")
        assert not o.lt("b", "a")
        assert o.in_conflict("b", "c") and o.in_conflict("c3", "c4")
        assert o.minimal_conflict("b", "c")
        assert not o.in_conflict("b", "c2")


class TestConfigurations:
    def test_all_configurations(self):
        o = branching_occ()
        assert o.all_configurations() == {
            frozenset(), frozenset({"a"}), frozenset({"a", "b"}),
            frozenset({"a", "c"})}

    def test_marking_cut_roundtrip(self):
        o = branching_occ()
        for x in o.all_configurations():
            m = marking_of_configuration(o, x)
            assert configuration_of_marking(o, m) == x
        assert cut_of_configuration(o, {"a", "b"}) == {"b"}

    def test_conflicting_set_is_not_configuration(self):
        o = branching_occ()
        with pytest.raises(NotAConfiguration):
            marking_of_configuration(o, {"a", "b", "c"})

    def test_unreachable_marking_rejected(self):
        o = branching_occ()
        with pytest.raises(Unreachable):
            configuration_of_marking(o, frozenset({"c1", "c3"}))

    def test_roundtrip_on_random_nets(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            o = random_occurrence_annotated(rng).net
            for x in o.all_configurations():
                m = marking_of_configuration(o, x)
                assert configuration_of_marking(o, m) == x


class TestIntervals:
    def test_interval_contents(self):
        o = branching_occ()
        iv = interval(o, frozenset({"c0"}), frozenset({"c2", "c4"}))
        assert iv.sigma == {"a", "c"}
        assert iv.conditions == {"c0", "c1", "c2", "c4"}

    def test_collapsed_interval(self):
        o = branching_occ()
        iv = interval(o, frozenset({"c0"}), frozenset({"c0"}))
        assert iv.sigma == frozenset()

    def test_backwards_interval_rejected(self):
        o = branching_occ()
        with pytest.raises(NotReachableFrom):
            interval(o, frozenset({"c1", "c2"}), frozenset({"c0"}))

    def test_restriction_flow(self):
        o = branching_occ()
        iv = interval(o, frozenset({"c0"}), frozenset({"c1", "c2"}))
        r = restriction(o, iv)
        assert r.events == {"a"}
        assert r.flow == {("c0", "a"), ("a", "c1"), ("a", "c2")}


class TestClustersAndRaces:
    def test_conflicting_pair_is_one_cluster(self):
        o = branching_occ()
        m = marking_of_configuration(o, {"a"})
        assert marking_clusters(o, m) == [frozenset({"b", "c"})]

    def test_negative_events_excluded_from_clusters(self):
        net = Net({"p", "q"}, {"t"}, {("p", "t"), ("t", "q")},
                  {"p"}, {"t": "-"})
        assert marking_clusters(net, frozenset({"p"})) == []

    def test_race_detected(self):
        net = Net({"p", "x", "y"}, {"t", "u"},
                  {("p", "t"), ("p", "u"), ("t", "x"), ("u", "y")},
                  {"p"}, {"t": "-", "u": "0"})
        out = race_free(net)
        assert not out and out.data["witness"] == ("t", "u")

    def test_all_same_polarity_conflicts_are_fine(self):
        o = branching_occ()
        assert race_free(o)


def test_dot_export_mentions_every_node():
    o = branching_occ()
    dot = to_dot(o)
    for node in o.places | o.transitions:
        assert f'"{node}"' in dot
