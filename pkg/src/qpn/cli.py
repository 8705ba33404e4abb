"""Command-line front end.

Exit codes are a stable contract: 0 all checks pass, 1 a check failed,
2 parse/IO error, 3 a resource bound was exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import checker, netfile, semantics
from .annotation import (
    annotation_is_cptni,
    check_local_obliviousness,
    validate_signatures,
)
from .compose import AnnotatedNet, drop_preserving_join, parallel, validate_drop_preserving
from .errors import BoundExceeded, NetFileError, QpnError
from .nets import (
    DEFAULT_MARKING_BOUND,
    as_occurrence_net,
    is_occurrence_net,
    race_free,
    to_dot,
    verify_safety,
)
from .unfolding import UnfoldBudget, transfer_annotation, unfold, verify_branching_process

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_PARSE = 2
EXIT_BOUND = 3


def _p(name, outcome):
    print(f"{'PASS' if outcome else 'FAIL'} {name}"
          + (f": {outcome.reason}" if getattr(outcome, 'reason', '') else ""))
    return bool(outcome)


def _load(path, bound):
    net, ann, meta, labels = netfile.load_net(path)
    safe = verify_safety(net, bound)
    return net, ann, meta, labels, safe


def cmd_validate(args) -> int:
    net, ann, _, _, safe = _load(args.path, args.marking_bound)
    ok = _p("safety", safe)
    ok &= _p("signatures", validate_signatures(net, ann))
    ok &= _p("cptni", annotation_is_cptni(net, ann))
    if not safe and safe.data.get("bound_exceeded"):
        return EXIT_BOUND
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_check(args) -> int:
    net, ann, _, _, safe = _load(args.path, args.marking_bound)
    if not _p("safety", safe):
        return EXIT_BOUND if safe.data.get("bound_exceeded") else EXIT_CHECK_FAILED
    run_all = not (args.drop or args.obliviousness or args.race_free)
    ok = _p("signatures", validate_signatures(net, ann))
    ok &= _p("cptni", annotation_is_cptni(net, ann))
    report_doc = {}
    if run_all or args.obliviousness:
        ok &= _p("obliviousness", check_local_obliviousness(net, ann))
    if run_all or args.race_free:
        ok &= _p("race-free", race_free(net))
    if ok and (run_all or args.drop):
        report = checker.check_local_drop(net, ann, args.marking_bound,
                                          args.cluster_cap, args.tol_psd)
        report_doc = report.to_dict()
        worst = report.worst
        print(f"{'PASS' if report.passed else 'FAIL'} drop"
              f" (instances={len(report.instances)},"
              f" min_eig={worst if worst != float('inf') else 'n/a'})")
        ok &= report.passed
    if ok and args.oracle:
        occ = is_occurrence_net(net)
        if not occ:
            print(f"FAIL oracle: input is not an occurrence net ({occ.reason})")
            ok = False
        else:
            o = as_occurrence_net(net)
            brute = checker.brute_force_global_drop(o, ann, tol=args.tol_psd)
            local = checker.check_local_drop(net, ann, args.marking_bound,
                                             args.cluster_cap, args.tol_psd)
            agree = brute.passed == local.passed
            print(f"{'PASS' if agree else 'FAIL'} oracle agreement: "
                  f"{'yes' if agree else 'no'} (brute={brute.passed}, "
                  f"local={local.passed})")
            report_doc["oracle"] = brute.to_dict()
            ok &= agree
    if args.report and report_doc:
        netfile.save_report(args.report, report_doc)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_unfold(args) -> int:
    net, ann, _, _, safe = _load(args.path, args.marking_bound)
    if not safe:
        print(f"FAIL safety: {safe.reason}")
        return EXIT_BOUND if safe.data.get("bound_exceeded") else EXIT_CHECK_FAILED
    bp = unfold(net, UnfoldBudget(args.depth, args.max_events))
    out = verify_branching_process(bp, net)
    _p("branching-process", out)
    if bp.exhausted:
        print(f"note: budget exhausted (depth={args.depth},"
              f" max_events={args.max_events})")
    if args.out:
        labels = dict(bp.label_place) | dict(bp.label_event)
        netfile.save_net(args.out, bp.occ, transfer_annotation(bp, ann),
                         {"unfolded_from": str(args.path),
                          "depth": args.depth}, labels)
        print(f"wrote {args.out}")
    if args.dot:
        labels = dict(bp.label_place) | dict(bp.label_event)
        with open(args.dot, "w") as fh:
            fh.write(to_dot(bp.occ, labels) + "\n")
        print(f"wrote {args.dot}")
    return EXIT_OK if out else EXIT_CHECK_FAILED


def cmd_compose(args) -> int:
    bound = args.marking_bound
    if args.mode == "par":
        n1, a1, _, _, s1 = _load(args.inputs[0], bound)
        n2, a2, _, _, s2 = _load(args.inputs[1], bound)
        if not (s1 and s2):
            print("FAIL safety on an input")
            return EXIT_CHECK_FAILED
        composite, provenance = parallel(AnnotatedNet(n1, a1), AnnotatedNet(n2, a2))
        netfile.save_net(args.out, composite.net, composite.ann,
                         {"composition": "parallel",
                          "provenance": {k: list(v) for k, v in provenance.items()}})
        print(f"wrote {args.out}")
        return EXIT_OK
    net, ann, _, _, safe = _load(args.inputs[0], bound)
    if not safe:
        print(f"FAIL safety: {safe.reason}")
        return EXIT_CHECK_FAILED
    spec = netfile.load_join_spec(args.inputs[1])
    x = AnnotatedNet(net, ann)
    valid = validate_drop_preserving(x, spec)
    if not _p("join-spec", valid) and not args.force:
        return EXIT_CHECK_FAILED
    joined = drop_preserving_join(x, spec, force=args.force)
    if args.force:
        _p("is-qpn-after-join", checker.is_qpn(joined.net, joined.ann, bound))
    netfile.save_net(args.out, joined.net, joined.ann, {"composition": "join"})
    print(f"wrote {args.out}")
    return EXIT_OK


def _parse_marking(s):
    return frozenset(p for p in s.split(",") if p)


def _load_matrix(path):
    with open(path) as fh:
        return netfile.matrix_from_json(json.load(fh), str(path))


def cmd_prob(args) -> int:
    from .annotation import GlobalValuation, marking_factors
    from .nets import interval

    net, ann, _, _, safe = _load(args.path, args.marking_bound)
    if not safe:
        print(f"FAIL safety: {safe.reason}")
        return EXIT_CHECK_FAILED
    o = as_occurrence_net(net)
    m_from = _parse_marking(args.from_marking)
    m_to = _parse_marking(args.to_marking)
    iv = interval(o, m_from, m_to)
    dim = int(np.prod([d for _, d in marking_factors(ann, m_from)]))
    rho = _load_matrix(args.rho) if args.rho else np.eye(dim, dtype=complex) / dim
    env = {}
    if args.env:
        with open(args.env) as fh:
            doc = json.load(fh)
        env = {e: netfile.matrix_from_json(m, f"env.{e}") for e, m in doc.items()}
    else:
        for e in iv.sigma:
            if o.pol(e) == "-":
                h = ann.signal_dim(e)
                env[e] = np.eye(h, dtype=complex) / h
    p = semantics.run_probability(o, ann, iv, rho, env)
    print(f"probability {p:.12f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    net, ann, _, _, safe = _load(args.path, args.marking_bound)
    if not safe:
        print(f"FAIL safety: {safe.reason}")
        return EXIT_CHECK_FAILED
    from .annotation import marking_factors

    dim = int(np.prod([d for _, d in marking_factors(ann, net.initial_marking)]))
    rho = _load_matrix(args.rho) if args.rho else np.eye(dim, dtype=complex) / dim
    counts = {}
    for i in range(args.runs):
        st = semantics.sample_execution(net, ann, rho, seed=args.seed + i,
                                        max_steps=args.max_steps)
        key = tuple(rec["event"] for rec in st.log)
        counts[key] = counts.get(key, 0) + 1
    for key in sorted(counts):
        n = counts[key]
        freq = n / args.runs
        se = (freq * (1 - freq) / args.runs) ** 0.5 if args.runs else 0.0
        print(f"{' '.join(key) or '(none)'}: {n}/{args.runs}"
              f" ({freq:.4f} ± {se:.4f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="qpn",
                                  description="verify quantum-annotated Petri nets")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--marking-bound", type=int, default=DEFAULT_MARKING_BOUND)
        p.add_argument("--tol-psd", type=float, default=checker.TOL_PSD)
        p.add_argument("--cluster-cap", type=int, default=checker.DEFAULT_CLUSTER_CAP)
        p.add_argument("--jobs", type=int, default=1,
                       help="reserved; instance evaluation is deterministic")

    p = sub.add_parser("validate", help="structure, safety, signatures, CPTNI")
    p.add_argument("path")
    common(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("check", help="full certification checks")
    p.add_argument("path")
    p.add_argument("--drop", action="store_true")
    p.add_argument("--obliviousness", action="store_true")
    p.add_argument("--race-free", action="store_true")
    p.add_argument("--oracle", action="store_true",
                   help="also run the brute-force drop oracle (occurrence nets)")
    p.add_argument("--report", help="write a JSON report here")
    common(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("unfold", help="depth-bounded unfolding")
    p.add_argument("path")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--max-events", type=int, default=10_000)
    p.add_argument("--out")
    p.add_argument("--dot")
    common(p)
    p.set_defaults(fn=cmd_unfold)

    p = sub.add_parser("compose", help="parallel composition or join")
    p.add_argument("mode", choices=["par", "join"])
    p.add_argument("inputs", nargs=2,
                   help="par: two net files; join: net file + spec file")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("prob", help="exact run probability of an interval")
    p.add_argument("path")
    p.add_argument("--from", dest="from_marking", required=True,
                   help="comma-separated place ids")
    p.add_argument("--to", dest="to_marking", required=True)
    p.add_argument("--rho", help="JSON matrix file (default maximally mixed)")
    p.add_argument("--env", help="JSON file: negative event id -> matrix")
    common(p)
    p.set_defaults(fn=cmd_prob)

    p = sub.add_parser("sample", help="Monte Carlo execution sampling")
    p.add_argument("path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--rho")
    common(p)
    p.set_defaults(fn=cmd_sample)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NetFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BoundExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except QpnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
