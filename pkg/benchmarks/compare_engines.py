"""Benchmark the reference engine against the compiled kernel.

Runs the identical scenario on every available engine, reports the
cycle rate, and cross-checks the final state digests so a speedup
never comes at the cost of divergent behaviour.

    python3 benchmarks/compare_engines.py --cycles 20000
"""
import argparse
import sys
import time
from dataclasses import replace

from kfnoc import simcore
from kfnoc.config import ScenarioConfig, load_config
from kfnoc.engine import available_engines


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cycles", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--config", help="benchmark a scenario file instead "
                        "of the stock mesh")
    args = parser.parse_args(argv)

    base = load_config(args.config) if args.config else ScenarioConfig()
    base = replace(base, seed=args.seed, max_cycles=args.cycles)

    rows = []
    for name in available_engines():
        engine = simcore.build_engine(replace(base, engine=name))
        start = time.perf_counter()
        engine.run_cycles(args.cycles)
        elapsed = time.perf_counter() - start
        rows.append((name, elapsed, engine.state_digest()))
        print("%-8s %9d cycles  %8.2f s  %10.1f kcycles/s"
              % (name, args.cycles, elapsed, args.cycles / elapsed / 1e3))

    digests = {digest for _n, _e, digest in rows}
    if len(digests) > 1:
        print("DIGEST MISMATCH across engines", file=sys.stderr)
        return 1
    if len(rows) > 1:
        baseline = rows[0][1]
        for name, elapsed, _d in rows[1:]:
            print("%s speedup over %s: %.1fx"
                  % (name, rows[0][0], baseline / elapsed))
    print("state digest: 0x%016x" % rows[0][2])
    return 0


if __name__ == "__main__":
    sys.exit(main())
