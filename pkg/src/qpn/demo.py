"""Small built-in nets used by the documentation, the CLI examples and the
test suite."""

from __future__ import annotations

import numpy as np

from .algebra import Channel
from .annotation import LocalAnnotation
from .compose import AnnotatedNet
from .nets import Net, verify_safety

X = np.array([[0, 1], [1, 0]], dtype=complex)


def branching_demo(scaled: bool = True) -> AnnotatedNet:
    """A four-dimensional token split by an environment input into a
    qubit that either passes through internally (b) or is flipped and
    emitted as a signal (c); b and c are in conflict.

    With ``scaled`` the two conflicting branches carry half-weight
    channels, so each fires with probability 1/2 and the drop condition
    holds with the zero effect.  Without it the channels are trace
    preserving and the drop condition fails (two certain branches cannot
    both be scheduled), which makes the unscaled variant the canonical
    negative example.
    """
    net = Net(
        places={"p0", "p1", "p2", "p3", "p4"},
        transitions={"a", "b", "c"},
        flow={("p0", "a"), ("a", "p1"), ("a", "p2"),
              ("p1", "b"), ("b", "p4"),
              ("p1", "c"), ("c", "p3")},
        initial_marking={"p0"},
        polarity={"a": "-", "b": "0", "c": "+"},
    )
    verify_safety(net)
    dims = {"p0": 4, "p1": 2, "p2": 4, "p3": 1, "p4": 2}
    chan_b = Channel.identity(2)
    chan_c = Channel.from_unitary(X)  # emits the flipped qubit as its signal
    if scaled:
        chan_b = chan_b.scaled(0.5)
        chan_c = chan_c.scaled(0.5)
    ann = LocalAnnotation(
        dims=dims,
        channels={"a": Channel.identity(8), "b": chan_b, "c": chan_c},
        h={"a": 2, "c": 2},
    )
    return AnnotatedNet(net, ann)


def two_phase_cycle(dim: int = 2) -> AnnotatedNet:
    """A two-place cycle with identity transitions: the simplest cyclic
    safe net that is a QPN (no conflicts, trace-preserving channels)."""
    net = Net(
        places={"s0", "s1"},
        transitions={"fwd", "bwd"},
        flow={("s0", "fwd"), ("fwd", "s1"), ("s1", "bwd"), ("bwd", "s0")},
        initial_marking={"s0"},
        polarity={"fwd": "0", "bwd": "0"},
    )
    verify_safety(net)
    ann = LocalAnnotation(
        dims={"s0": dim, "s1": dim},
        channels={"fwd": Channel.identity(dim), "bwd": Channel.identity(dim)},
    )
    return AnnotatedNet(net, ann)
