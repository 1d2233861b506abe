"""Randomized rule-validity harness: one line per rule."""

import argparse
import time

from rqpd.soundness import GENERATORS, run_rule


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("rules", nargs="*", help="rule names (default: all)")
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    bad = 0
    for rule in args.rules or list(GENERATORS):
        start = time.perf_counter()
        out = run_rule(rule, args.instances, args.samples, args.seed)
        bad += not out.ok
        print(
            f"{rule:10s} {'ok ' if out.ok else 'BAD'} instances={out.instances} rejected={out.rejected} "
            f"falsified={out.falsified} inconclusive={out.inconclusive} worst_margin={out.worst_margin:.3g} "
            f"({time.perf_counter() - start:.1f}s)"
        )
        for f in out.failures[:3]:
            print(f"    {f}")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
