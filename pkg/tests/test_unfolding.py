import numpy as np
import pytest

from gen import random_occurrence_annotated, random_state_machine
from qpn.annotation import validate_signatures
from qpn.checker import is_local_qon, is_qpn
from qpn.demo import branching_demo, two_phase_cycle
from qpn.errors import SafetyUnverified
from qpn.nets import Net, as_occurrence_net
from qpn.unfolding import (
    BranchingProcess,
    UnfoldBudget,
    cluster_bijection_check,
    transfer_annotation,
    unfold,
    verify_branching_process,
)


class TestUnfold:
    def test_requires_verified_net(self):
        bd = branching_demo()
        fresh = Net(bd.net.places, bd.net.transitions, bd.net.flow,
                    bd.net.initial_marking, bd.net.polarity)
        with pytest.raises(SafetyUnverified):
            unfold(fresh)

    def test_occurrence_net_unfolds_to_itself(self):
        bd = branching_demo()
        bp = unfold(bd.net, UnfoldBudget(8, 100))
        assert len(bp.occ.transitions) == len(bd.net.transitions)
        assert len(bp.occ.places) == len(bd.net.places)
        assert not bp.exhausted
        assert sorted(bp.label_event.values()) == sorted(bd.net.transitions)
        assert verify_branching_process(bp, bd.net)

    def test_cycle_grows_with_depth(self):
        tc = two_phase_cycle()
        sizes = [len(unfold(tc.net, UnfoldBudget(d, 1000)).occ.transitions)
                 for d in (1, 2, 3, 4)]
        assert sizes == [1, 2, 3, 4]
        assert all(unfold(tc.net, UnfoldBudget(d, 1000)).exhausted
                   for d in (1, 2, 3, 4))

    def test_deterministic_ids(self):
        sm = random_state_machine(np.random.default_rng(2))
        b1 = unfold(sm.net, UnfoldBudget(3, 500))
        b2 = unfold(sm.net, UnfoldBudget(3, 500))
        assert b1.occ.places == b2.occ.places
        assert b1.occ.transitions == b2.occ.transitions
        assert b1.occ.flow == b2.occ.flow

    def test_prefix_monotonicity(self):
        """The depth-d prefix is an induced sub-net of the depth-(d+1) one,
        with literally identical ids."""
        rng = np.random.default_rng(8)
        for _ in range(5):
            sm = random_state_machine(rng)
            prev = unfold(sm.net, UnfoldBudget(2, 500))
            nxt = unfold(sm.net, UnfoldBudget(3, 500))
            assert prev.occ.transitions <= nxt.occ.transitions
            assert prev.occ.places <= nxt.occ.places
            for e in prev.occ.transitions:
                assert prev.occ.pre(e) == nxt.occ.pre(e)
                assert prev.occ.post(e) == nxt.occ.post(e)

    def test_event_budget_cuts_off(self):
        tc = two_phase_cycle()
        bp = unfold(tc.net, UnfoldBudget(50, 3))
        assert len(bp.occ.transitions) == 3
        assert bp.exhausted


class TestVerifyBranchingProcess:
    def test_duplicate_events_fail_clause_four(self):
        bd = branching_demo()
        bp = unfold(bd.net, UnfoldBudget(8, 100))
        # forge a duplicate: two events with the same label and pre-set
        o = bp.occ
        e_old = next(iter(o.transitions))
        dup = "forged"
        net2 = Net(o.places | {"forged_out"}, o.transitions | {dup},
                   o.flow | {(c, dup) for c in o.pre(e_old)}
                   | {(dup, "forged_out")},
                   o.initial_marking,
                   dict(o.polarity) | {dup: o.pol(e_old)})
        forged = BranchingProcess(
            as_occurrence_net(net2),
            dict(bp.label_place) | {"forged_out": bp.label_place[
                next(iter(o.post(e_old)))]},
            dict(bp.label_event) | {dup: bp.label_event[e_old]},
            bp.budget, False)
        out = verify_branching_process(forged, bd.net)
        assert not out

    def test_wrong_minimal_conditions_fail_clause_three(self):
        bd = branching_demo()
        bp = unfold(bd.net, UnfoldBudget(8, 100))
        bad_labels = dict(bp.label_place)
        c0 = next(iter(bp.occ.initial_marking))
        bad_labels[c0] = "p1"  # no longer bijective with the initial marking
        forged = BranchingProcess(bp.occ, bad_labels, bp.label_event,
                                  bp.budget, False)
        out = verify_branching_process(forged, bd.net)
        assert not out

    def test_unfold_outputs_verify_on_random_nets(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            sm = random_state_machine(rng)
            bp = unfold(sm.net, UnfoldBudget(3, 500))
            assert verify_branching_process(bp, sm.net)


class TestTransfer:
    def test_same_label_same_channel(self):
        tc = two_phase_cycle()
        bp = unfold(tc.net, UnfoldBudget(4, 100))
        ann = transfer_annotation(bp, tc.ann)
        for e in bp.occ.transitions:
            assert ann.channel(e) is tc.ann.channel(bp.label_event[e])
        assert validate_signatures(bp.occ, ann)

    def test_signatures_transfer_on_random_nets(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            sm = random_state_machine(rng)
            bp = unfold(sm.net, UnfoldBudget(3, 500))
            assert validate_signatures(bp.occ, transfer_annotation(bp, sm.ann))


class TestClusterBijection:
    def test_demo_cluster_appears_in_both_views(self):
        bd = branching_demo()
        bp = unfold(bd.net, UnfoldBudget(8, 100))
        assert cluster_bijection_check(bd.net, bp)

    def test_on_random_nets(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            sm = random_state_machine(rng)
            bp = unfold(sm.net, UnfoldBudget(3, 500))
            assert cluster_bijection_check(sm.net, bp)


class TestQpnEquivalence:
    def test_verdicts_agree_through_unfolding(self):
        rng = np.random.default_rng(13)
        agree = 0
        for _ in range(10):
            sm = random_state_machine(rng)
            direct = bool(is_qpn(sm.net, sm.ann))
            bp = unfold(sm.net, UnfoldBudget(4, 2000))
            unfolded = bool(is_local_qon(bp.occ, transfer_annotation(bp, sm.ann)))
            assert direct == unfolded
            agree += 1
        assert agree == 10
