#!/usr/bin/env python3
"""Solve one update-scheduling instance and print the policy structure.

Usage:
    python scripts/solve_policy.py [--p-tx 0.8] [--q 0.3] [--c 12] [--omega 1]
                                   [--caps 100]
"""

import argparse

import numpy as np

from dtmec import schedmdp


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--p-tx", type=float, default=0.8)
    parser.add_argument("--q", type=float, default=0.3)
    parser.add_argument("--c", type=float, default=12.0)
    parser.add_argument("--omega", type=float, default=1.0)
    parser.add_argument("--caps", type=int, default=100)
    args = parser.parse_args()

    spec = schedmdp.MdpSpec(aoci_cap=args.caps, aoi_cap=args.caps,
                            p_tx=args.p_tx, content_q=args.q,
                            update_cost=args.c, weight=args.omega)
    res = schedmdp.relative_policy_iteration(spec)
    print(f"gain {res.gain:.6f} after {res.iterations} iterations "
          f"(history {['%.4f' % g for g in res.gain_history]})")
    acts = res.policy.actions
    first = np.argmax(acts, axis=0) + 1
    never = ~acts.any(axis=0)
    print("per-aoi transmit thresholds (aoi: first transmitting aoci):")
    for d in range(min(args.caps, 12)):
        thr = "never" if never[d] else str(int(first[d]))
        margin = schedmdp.threshold_for(d + 1, spec)
        print(f"  aoi={d + 1:3d}: solved {thr:>6}   margin rule {margin}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
