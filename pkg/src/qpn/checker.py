"""Drop-function computation and net certification.

The drop function of a configuration x against extensions y1..yn is the
inclusion-exclusion sum over compatible sub-families of the effects of the
corresponding interval channels.  Positivity of every such effect is what
makes trace-of-evaluation a sub-probability over runs.  This module holds
the general evaluator, the single-extension and clique fast paths, the
local check over reachable markings, the brute-force global oracle used to
cross-validate it, and the top-level net verdicts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    TOL_PSD,
    Channel,
    FactorPermutation,
    effect,
    embed_operator,
    hermitize,
    min_eigenvalue,
)
from .annotation import (
    GlobalValuation,
    LocalAnnotation,
    annotation_is_cptni,
    check_local_obliviousness,
    marking_factors,
    validate_signatures,
)
from .errors import (
    BoundExceeded,
    CrossClusterConflict,
    IncompatibleExtension,
    NegativeEventInCluster,
    NotAClique,
    NotEnabled,
    SafetyUnverified,
)
from .nets import (
    NEGATIVE,
    POSITIVE,
    DEFAULT_MARKING_BOUND,
    Net,
    OccurrenceNet,
    as_occurrence_net,
    is_occurrence_net,
    marking_clusters,
    marking_of_configuration,
    reachable_markings,
    verify_safety,
)
from .outcome import CheckOutcome

# Equality of drop effects is extensional; tolerance scales with dimension.
TOL_DROP_EQ = 1e-10

DEFAULT_CLUSTER_CAP = 12
DEFAULT_CONFIG_BOUND = 64
DEFAULT_FAMILY_CAP = 4


# --------------------------------------------------------------------------
# general evaluator on configuration families


def _union_config(o: OccurrenceNet, ys):
    u = frozenset().union(*ys) if ys else frozenset()
    return u if o.is_configuration(u) else None


def _check_extensions(o: OccurrenceNet, x, ys):
    x = frozenset(x)
    for y in ys:
        y = frozenset(y)
        if not x <= y:
            raise IncompatibleExtension(f"{sorted(y)} does not extend {sorted(x)}")
        for e in y - x:
            if o.pol(e) == NEGATIVE:
                raise IncompatibleExtension(
                    f"extension adds negative event {e}")


def drop_effect(gv: GlobalValuation, x, ys, *, validate: bool = True) -> np.ndarray:
    """d[x; y1..yn] as a Hermitian effect on Q(m) for m the marking of x.

    Sum over index sets I whose union y_I is a configuration of
    (-1)^|I| * effect(Q[m; marking(y_I)]); the empty set contributes the
    identity.  Extensions must add only non-negative events, so no
    environment-input factors occur and the effect lives on Q(m) alone.
    """
    o = gv.net
    x = frozenset(x)
    ys = [frozenset(y) for y in ys]
    if validate:
        _check_extensions(o, x, ys)
    m = marking_of_configuration(o, x)
    dim = math.prod(d for _, d in marking_factors(gv.ann, m))
    total = np.eye(dim, dtype=complex)
    for r in range(1, len(ys) + 1):
        for idx in itertools.combinations(range(len(ys)), r):
            y_union = _union_config(o, [ys[i] for i in idx])
            if y_union is None:
                continue
            chan = gv.q(m, marking_of_configuration(o, y_union))
            total = total + (-1) ** r * effect(chan)
    return hermitize(total)


def _compose_effect(chan: Channel, d_target: np.ndarray, h_dim: int) -> np.ndarray:
    """Effect of [tr_{H} ⊗ d] ∘ Φ, where d acts on the condition factors of
    the output of Φ and H gathers its trailing signal factors."""
    op = np.kron(d_target, np.eye(h_dim, dtype=complex))
    acc = np.zeros((chan.dim_in, chan.dim_in), dtype=complex)
    for k in chan.kraus:
        acc += k.conj().T @ op @ k
    return acc


def _positive_signal_dim(o: OccurrenceNet, ann: LocalAnnotation, events) -> int:
    return math.prod(ann.signal_dim(e) for e in events if o.pol(e) == POSITIVE)


def drop_inductive(gv: GlobalValuation, x, ys) -> np.ndarray:
    """d[x; y1..yn] by peeling off the last extension.

    d[x;] is the identity effect; otherwise the head family is evaluated
    recursively and the tail contributes through the interval channel from
    x to yn, with the drop of the shifted family taken at yn.  Unions that
    fail to be configurations are incompatible with everything and are
    dropped from the shifted family.
    """
    o = gv.net
    x = frozenset(x)
    ys = [frozenset(y) for y in ys]
    _check_extensions(o, x, ys)
    m = marking_factors(gv.ann, marking_of_configuration(o, x))
    if not ys:
        return np.eye(math.prod(d for _, d in m), dtype=complex)
    head, yn = ys[:-1], ys[-1]
    d_head = drop_inductive(gv, x, head)
    shifted = [y | yn for y in head if o.is_configuration(y | yn)]
    d_shift = drop_inductive(gv, yn, shifted)
    chan = gv.q(marking_of_configuration(o, x), marking_of_configuration(o, yn))
    h = _positive_signal_dim(o, gv.ann, yn - x)
    return hermitize(d_head - _compose_effect(chan, d_shift, h))


def recursive_sum_check(gv: GlobalValuation, x, ys_head, yn, yn_big,
                        tol: float = TOL_DROP_EQ) -> CheckOutcome:
    """Identity relating d over a grown last extension yn ⊆ yn_big:

    d[x; ys, yn_big] = d[x; ys, yn]
                     + [tr ⊗ d[yn; ys∪yn, yn_big]] ∘ Q[x; yn].
    """
    o = gv.net
    x, yn, yn_big = frozenset(x), frozenset(yn), frozenset(yn_big)
    ys_head = [frozenset(y) for y in ys_head]
    if not (x <= yn <= yn_big):
        raise IncompatibleExtension("need x ⊆ yn ⊆ yn_big")
    lhs = drop_effect(gv, x, ys_head + [yn_big])
    first = drop_effect(gv, x, ys_head + [yn])
    shifted = [y | yn for y in ys_head if o.is_configuration(y | yn)]
    d_shift = drop_effect(gv, yn, shifted + [yn_big])
    chan = gv.q(marking_of_configuration(o, x), marking_of_configuration(o, yn))
    rhs = first + _compose_effect(chan, d_shift, _positive_signal_dim(o, gv.ann, yn - x))
    err = float(np.max(np.abs(lhs - rhs)))
    if err > tol * max(1, lhs.shape[0]):
        return CheckOutcome.fail(f"recursive-sum identity off by {err:.2e}", error=err)
    return CheckOutcome.ok(error=err)


def expand_drop(gv: GlobalValuation, x, ys):
    """Evaluate d[x; y1..yn] by rewriting toward single-extension terms.

    Each rewrite splits the largest extension through one of its minimal
    added events; the product of extension sizes strictly decreases, which
    is asserted, so the rewriting terminates.  Returns (effect, steps).
    """
    o = gv.net
    x = frozenset(x)
    ys = [frozenset(y) for y in ys]
    _check_extensions(o, x, ys)
    steps = 0

    def weight(base, fam):
        return math.prod(len(y - base) for y in fam)

    def go(base, fam, w):
        nonlocal steps
        steps += 1
        if any(y == base for y in fam):
            m = marking_factors(gv.ann, marking_of_configuration(o, base))
            return np.zeros((math.prod(d for _, d in m),) * 2, dtype=complex)
        big = next((i for i, y in enumerate(fam) if len(y - base) > 1), None)
        if big is None:
            return drop_effect(gv, base, fam, validate=False)
        fam = fam[:big] + fam[big + 1:] + [fam[big]]
        y_big = fam[-1]
        e = min(e for e in y_big - base if not any(o.lt(f, e) for f in y_big - base))
        y_small = base | {e}
        head = fam[:-1]
        left_fam = head + [y_small]
        shifted = [y | y_small for y in head if o.is_configuration(y | y_small)]
        right_fam = shifted + [y_big]
        wl, wr = weight(base, left_fam), weight(y_small, right_fam)
        assert wl < w and wr < w, "expansion weight failed to decrease"
        left = go(base, left_fam, wl)
        right = go(y_small, right_fam, wr)
        chan = gv.q(marking_of_configuration(o, base),
                    marking_of_configuration(o, y_small))
        h = _positive_signal_dim(o, gv.ann, y_small - base)
        return left + _compose_effect(chan, right, h)

    return hermitize(go(x, ys, weight(x, ys))), steps


# --------------------------------------------------------------------------
# fast paths on markings


def _embedded_effect(net: Net, ann: LocalAnnotation, m, e) -> np.ndarray:
    """effect(Q0(e)) placed on the pre-set factors inside Q(m)."""
    factors = marking_factors(ann, m)
    ids = [p for p, _ in factors]
    dims = [d for _, d in factors]
    positions = [ids.index(c) for c in sorted(net.pre(e))]
    return embed_operator(effect(ann.channel(e)), dims, positions)


def single_extension_drop(net: Net, ann: LocalAnnotation, m, events) -> np.ndarray:
    """d at marking m for single-event extensions, without interval channels.

    Compatible index sets are exactly the families with pairwise-disjoint
    pre-sets; each term is a product of commuting embedded effects, so no
    target markings ever need to be constructed.
    """
    m = frozenset(m)
    events = sorted(events)
    for e in events:
        if not net.pre(e) <= m:
            raise NotEnabled(f"{e} is not enabled at {sorted(m)}")
        if net.pol(e) == NEGATIVE:
            raise NegativeEventInCluster(f"{e} is negative")
    effs = {e: _embedded_effect(net, ann, m, e) for e in events}
    dim = math.prod(d for _, d in marking_factors(ann, m))
    total = np.eye(dim, dtype=complex)
    for r in range(1, len(events) + 1):
        for combo in itertools.combinations(events, r):
            if any(net.pre(a) & net.pre(b)
                   for a, b in itertools.combinations(combo, 2)):
                continue
            term = np.eye(dim, dtype=complex)
            for e in combo:
                term = term @ effs[e]
            total = total + (-1) ** r * term
    return hermitize(total)


def clique_drop(net: Net, ann: LocalAnnotation, m, clique) -> np.ndarray:
    """d at marking m when the extension events are pairwise in conflict.

    Only the empty and singleton index sets survive, so the drop is the
    identity minus the sum of embedded branch effects: linear in the size
    of the clique.
    """
    m = frozenset(m)
    clique = sorted(clique)
    for e in clique:
        if not net.pre(e) <= m:
            raise NotEnabled(f"{e} is not enabled at {sorted(m)}")
        if net.pol(e) == NEGATIVE:
            raise NegativeEventInCluster(f"{e} is negative")
    for a, b in itertools.combinations(clique, 2):
        if not net.pre(a) & net.pre(b):
            raise NotAClique(f"{a} and {b} are not in conflict")
    dim = math.prod(d for _, d in marking_factors(ann, m))
    total = np.eye(dim, dtype=complex)
    for e in clique:
        total = total - _embedded_effect(net, ann, m, e)
    return hermitize(total)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class DropInstanceResult:
    key: tuple  # (sorted marking, sorted events/extension tag)
    method: str  # "clique" | "single" | "general"
    min_eig: float
    passed: bool

    def to_dict(self):
        return {"marking": list(self.key[0]), "events": list(self.key[1]),
                "method": self.method, "min_eig": self.min_eig,
                "passed": self.passed}


@dataclass
class DropReport:
    instances: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    tol: float = TOL_PSD

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.instances)

    def __bool__(self):
        return self.passed

    @property
    def worst(self):
        return min((r.min_eig for r in self.instances), default=float("inf"))

    def add(self, key, method, eff: np.ndarray):
        lo = min_eigenvalue(eff)
        self.instances.append(
            DropInstanceResult(key, method, lo, lo >= -self.tol))

    def sort(self):
        self.instances.sort(key=lambda r: r.key)

    def failures(self):
        return [r for r in self.instances if not r.passed]

    def to_dict(self):
        return {"passed": self.passed, "tol": self.tol, "stats": self.stats,
                "instances": [r.to_dict() for r in self.instances]}


def _instance_key(m, events):
    return (tuple(sorted(m)), tuple(sorted(events)))


def check_local_drop(net: Net, ann: LocalAnnotation,
                     marking_bound: int = DEFAULT_MARKING_BOUND,
                     cluster_cap: int = DEFAULT_CLUSTER_CAP,
                     tol: float = TOL_PSD) -> DropReport:
    """Drop positivity over every conflict cluster at every reachable marking.

    Cliques take the linear fast path (positivity on the full clique implies
    it on every sub-family, since branch effects are PSD); other clusters
    enumerate all their compatible sub-families explicitly.
    """
    if not net.safety_verified:
        raise SafetyUnverified("run verify_safety before checking the drop condition")
    report = DropReport(tol=tol)
    markings = sorted(reachable_markings(net, marking_bound),
                      key=lambda m: sorted(m))
    clusters_checked = cliques = 0
    for m in markings:
        for cluster in marking_clusters(net, m):
            clusters_checked += 1
            cl = sorted(cluster)
            if len(cl) > cluster_cap:
                raise BoundExceeded(
                    f"cluster of {len(cl)} events at marking {sorted(m)} "
                    f"exceeds cap {cluster_cap}")
            if len(cl) > 1 and all(net.pre(a) & net.pre(b) for a, b in
                                   itertools.combinations(cl, 2)):
                cliques += 1
                report.add(_instance_key(m, cl), "clique",
                           clique_drop(net, ann, m, cl))
                continue
            for r in range(1, len(cl) + 1):
                for fam in itertools.combinations(cl, r):
                    report.add(_instance_key(m, fam), "single",
                               single_extension_drop(net, ann, m, fam))
    report.stats = {"markings": len(markings), "clusters": clusters_checked,
                    "clique_fast_paths": cliques}
    report.sort()
    return report


def brute_force_global_drop(o: OccurrenceNet, ann: LocalAnnotation,
                            config_bound: int = DEFAULT_CONFIG_BOUND,
                            family_cap: int = DEFAULT_FAMILY_CAP,
                            tol: float = TOL_PSD) -> DropReport:
    """Exhaustive drop positivity over all configurations and extension
    families, evaluated through interval channels.

    This is the reference semantics the local check is measured against;
    it is exponential and only meant for small nets.
    """
    gv = GlobalValuation(o, ann)
    configs = sorted(o.all_configurations(config_bound), key=lambda x: sorted(x))
    report = DropReport(tol=tol)
    families = 0
    for x in configs:
        exts = sorted(e for e in o.transitions - x
                      if o.pol(e) != NEGATIVE and o.enables(x, e))
        for r in range(1, min(len(exts), family_cap) + 1):
            for combo in itertools.combinations(exts, r):
                families += 1
                eff = drop_effect(gv, x, [x | {e} for e in combo])
                report.add((tuple(sorted(x)), tuple(combo)), "general", eff)
    report.stats = {"configurations": len(configs), "families": families}
    report.sort()
    return report


def cluster_factorization_check(net: Net, ann: LocalAnnotation, m,
                                cluster_a, cluster_b,
                                tol: float = TOL_DROP_EQ) -> CheckOutcome:
    """d[x; A ∪ B] ⊗ tr  =  d[x; A] ⊗ d[x; B] for cross-compatible clusters.

    As effects: d_{A∪B} ⊗ I equals d_A ⊗ d_B on Q(m) ⊗ Q(m).
    """
    m = frozenset(m)
    cluster_a, cluster_b = sorted(cluster_a), sorted(cluster_b)
    for a in cluster_a:
        for b in cluster_b:
            if a == b or net.pre(a) & net.pre(b):
                raise CrossClusterConflict(f"{a} and {b} are not compatible")
    d_ab = single_extension_drop(net, ann, m, cluster_a + cluster_b)
    d_a = single_extension_drop(net, ann, m, cluster_a)
    d_b = single_extension_drop(net, ann, m, cluster_b)
    dim = d_a.shape[0]
    lhs = np.kron(d_ab, np.eye(dim, dtype=complex))
    rhs = np.kron(d_a, d_b)
    # align: d_b acts on the B-side pre-place factors of the second copy;
    # swap those factors with their twins in the first copy
    factors = marking_factors(ann, m)
    ids = [p for p, _ in factors]
    dims = [d for _, d in factors]
    b_places = set().union(*(net.pre(e) for e in cluster_b), set())
    n = len(ids)
    order = [i + n if ids[i] in b_places else i for i in range(n)]
    order += [i - n if ids[i - n] in b_places else i for i in range(n, 2 * n)]
    u = FactorPermutation(tuple(dims + dims), tuple(order)).matrix()
    rhs = u.conj().T @ rhs @ u
    err = float(np.max(np.abs(lhs - rhs)))
    if err > tol * max(1, dim):
        return CheckOutcome.fail(f"factorization off by {err:.2e}", error=err)
    return CheckOutcome.ok(error=err)


# --------------------------------------------------------------------------
# top-level verdicts


def is_qpn(net: Net, ann: LocalAnnotation,
           marking_bound: int = DEFAULT_MARKING_BOUND,
           cluster_cap: int = DEFAULT_CLUSTER_CAP,
           tol: float = TOL_PSD) -> CheckOutcome:
    """Full certification of an annotated safe Petri net.

    Signature validity, complete positivity and trace non-increase of all
    channels, identity behaviour of negative transitions, and drop
    positivity over reachable markings.  No unfolding is built: the local
    conditions on the net itself are equivalent to the unfolding-based
    definition.
    """
    if not net.safety_verified:
        out = verify_safety(net, marking_bound)
        if not out:
            return CheckOutcome.fail(f"safety: {out.reason}", **out.data)
    for name, out in (
        ("signatures", validate_signatures(net, ann)),
        ("cptni", annotation_is_cptni(net, ann)),
        ("obliviousness", check_local_obliviousness(net, ann)),
    ):
        if not out:
            return CheckOutcome.fail(f"{name}: {out.reason}", stage=name, **out.data)
    report = check_local_drop(net, ann, marking_bound, cluster_cap, tol)
    if not report.passed:
        worst = report.failures()[0]
        return CheckOutcome.fail(
            f"drop condition fails at marking {list(worst.key[0])} on "
            f"{list(worst.key[1])} (min eigenvalue {worst.min_eig:.3e})",
            stage="drop", report=report.to_dict())
    return CheckOutcome.ok(stage="all", drop_stats=report.stats)


def is_local_qon(o: Net, ann: LocalAnnotation,
                 marking_bound: int = DEFAULT_MARKING_BOUND,
                 cluster_cap: int = DEFAULT_CLUSTER_CAP,
                 tol: float = TOL_PSD) -> CheckOutcome:
    """is_qpn plus the occurrence-net axioms."""
    out = is_occurrence_net(o)
    if not out:
        return CheckOutcome.fail(f"occurrence net: {out.reason}", stage="occurrence")
    return is_qpn(as_occurrence_net(o), ann, marking_bound, cluster_cap, tol)
