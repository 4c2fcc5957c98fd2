"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because QSG_DISABLE_NUMBA is read
at import time. The first run per config is a warm-up (it absorbs JIT
compilation) and is excluded from the timings. Both backends must produce
the same trajectory digest; a mismatch is reported and exits nonzero.

    python benchmarks/bench_kernels.py [--repeats 3]
"""
import argparse
import json
import os
import subprocess
import sys

CONFIGS = [
    {"name": "soft N=64 K=5", "N": 64, "K": 5, "alpha": 0.5, "channel": "soft", "horizon": 200_000},
    {"name": "hard N=64 K=5", "N": 64, "K": 5, "alpha": 0.5, "channel": "hard", "horizon": 200_000},
    {"name": "topm m=5 N=256 K=10", "N": 256, "K": 10, "alpha": 0.2, "channel": "topm", "m": 5,
     "horizon": 100_000},
]

WORKER = r"""
import hashlib, json, sys, time
import numpy as np
from qsg._backend import BACKEND
from qsg.channels import ChannelSpec
from qsg.dynamics import SimConfig, run

cfgs, repeats = json.loads(sys.argv[1]), int(sys.argv[2])
out = {"backend": BACKEND, "results": []}
for c in cfgs:
    ch = ChannelSpec.topm(c["m"]) if c["channel"] == "topm" else getattr(ChannelSpec, c["channel"])()
    cfg = SimConfig(N=c["N"], K=c["K"], alpha=c["alpha"], channel=ch,
                    horizon=c["horizon"], probe_every=c["horizon"] // 10, seed=1)
    traj = run(cfg)
    digest = hashlib.sha256(traj.means.tobytes() + traj.q.tobytes()).hexdigest()[:16]
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(cfg)
        times.append(time.perf_counter() - t0)
    out["results"].append({"name": c["name"], "steps": c["horizon"], "best": min(times),
                           "digest": digest})
print(json.dumps(out))
"""


def run_backend(disable_numba, repeats):
    env = dict(os.environ, QSG_DISABLE_NUMBA="1" if disable_numba else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, json.dumps(CONFIGS), str(repeats)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)

    fast = run_backend(False, args.repeats)
    slow = run_backend(True, args.repeats)

    print(f"{'config':<22}{'steps':>9}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}  match")
    ok = True
    for f, s in zip(fast["results"], slow["results"]):
        match = f["digest"] == s["digest"]
        ok &= match
        print(f"{f['name']:<22}{f['steps']:>9}{f['best']:>11.3f}s{s['best']:>11.3f}s"
              f"{s['best'] / f['best']:>9.1f}x  {'yes' if match else 'NO'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
