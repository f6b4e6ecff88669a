"""Time the compiled kernels against the pure-numpy fallback.

Both backends execute the identical kernel source; SO3LAB_JIT=0 merely
skips the numba decoration. Each backend runs in a fresh subprocess so
the flag is read once at import, the way a user would set it. The JIT
pass times the full 30 s stabilization scenario after a warm-up run;
the fallback gets a shorter horizon (same step size) because the
interpreted loop is slow, and both are reported as steps per second.
The script exits nonzero if the two backends disagree on the final
state, so it doubles as a consistency check.
"""

import os
import subprocess
import sys
import tempfile

WORKER = r"""
import json, sys, time
import numpy as np
from dataclasses import replace
import so3lab

duration = float(sys.argv[1])
out = sys.argv[2]
sc = replace(so3lab.stabilization_v_a(), duration=duration, log_every=int(duration * 1000))
so3lab.run(replace(sc, duration=0.01, log_every=10))   # warm-up / compile
t0 = time.perf_counter()
log = so3lab.run(sc)
wall = time.perf_counter() - t0
np.save(out + ".npy", np.concatenate([log.R[-1].ravel(), log.Omega[-1]]))
print(json.dumps({"wall": wall, "steps": int(duration * 1000)}))
"""


def run_backend(jit: bool, duration: float, tag: str):
    env = dict(os.environ, SO3LAB_JIT="1" if jit else "0")
    out = os.path.join(tempfile.gettempdir(), f"so3lab_bench_{tag}")
    res = subprocess.run([sys.executable, "-c", WORKER, str(duration), out],
                         env=env, capture_output=True, text=True, check=True)
    import json
    info = json.loads(res.stdout.strip().splitlines()[-1])
    return info["wall"], info["steps"], out + ".npy"


def main():
    jit_wall, jit_steps, jit_out = run_backend(True, 30.0, "jit")
    fb_wall, fb_steps, fb_out = run_backend(False, 2.0, "fb")
    jit_rate = jit_steps / jit_wall
    fb_rate = fb_steps / fb_wall
    print(f"jit      : {jit_steps:6d} steps in {jit_wall:7.3f} s "
          f"= {jit_rate:10.0f} steps/s")
    print(f"fallback : {fb_steps:6d} steps in {fb_wall:7.3f} s "
          f"= {fb_rate:10.0f} steps/s")
    print(f"speedup  : {jit_rate / fb_rate:.1f}x")

    import numpy as np
    a = np.load(jit_out)
    b = np.load(fb_out)
    # the consistency check reuses the jit backend at the fallback horizon
    jw, _, jshort = run_backend(True, 2.0, "jit_short")
    a2 = np.load(jshort)
    if not np.array_equal(a2, b):
        print(f"backend mismatch: max |diff| = {np.abs(a2 - b).max():.3e}")
        return 1
    print("consistency: final states bitwise identical")
    return 0


if __name__ == "__main__":
    sys.exit(main())
