"""Numba kernels vs their pure-numpy twins at training-loop shapes.

    python benchmarks/bench_kernels.py [--repeat 7] [--batch 32] [--json out.json]

Shapes follow one student pass on a B=32, T=10 batch of 2x32x32 frames. Each
kernel is timed after a warm-up call (so JIT compilation is excluded) and the
median of ``--repeat`` runs is reported, along with a check that both
backends agree. The last column shows which backend the package dispatches
to when numba is enabled.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from ckd import kernels as K


def _median_time(fn, repeat):
    fn()
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def cases(batch, steps=10, rng=None):
    rng = rng or np.random.default_rng(0)
    n = batch * steps
    x0 = rng.uniform(size=(n, 2, 32, 32))
    x1 = rng.uniform(size=(n, 16, 16, 16))
    cols1 = rng.normal(size=(n, 16 * 9, 16, 16))
    cur = rng.normal(0.5, 1.0, size=(steps, batch * 16 * 32 * 32))
    spikes, vs = K.lif_forward_numpy(cur, 0.5, 1.0, 1.0, K.HARD)
    g_spk = rng.normal(size=cur.shape)
    pool_in = rng.uniform(size=(n, 16, 32, 32))
    g_pool = rng.normal(size=(n, 16, 16, 16))
    _, idx = K.maxpool_forward_numpy(pool_in, 2)
    m = 200_000
    bins, ex, ey, ep = rng.integers(0, steps, m), rng.integers(0, 32, m), rng.integers(0, 32, m), rng.integers(0, 2, m)
    return {
        "im2col conv0": ("im2col", (x0, 3, 1)),
        "im2col conv1": ("im2col", (x1, 3, 1)),
        "col2im conv1": ("col2im", (cols1, x1.shape, 3, 1)),
        "avgpool fwd": ("avgpool_forward", (pool_in, 2)),
        "avgpool bwd": ("avgpool_backward", (g_pool, pool_in.shape, 2)),
        "maxpool fwd": ("maxpool_forward", (pool_in, 2)),
        "maxpool bwd": ("maxpool_backward", (g_pool, idx, pool_in.shape, 2)),
        "lif fwd": ("lif_forward", (cur, 0.5, 1.0, 1.0, K.HARD)),
        "lif bwd": ("lif_backward", (g_spk, vs, spikes, 0.5, 1.0, 1.0)),
        "bin events": ("bin_events", (bins, ex, ey, ep, steps, 32, 32)),
    }


def _same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(u, v, rtol=1e-10, atol=1e-12) for u, v in zip(a, b))


def run(batch=32, repeat=7):
    if not K._HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rows = []
    for label, (name, args) in cases(batch).items():
        f_np = getattr(K, f"{name}_numpy")
        f_nb = getattr(K, f"{name}_numba")
        t_np = _median_time(lambda: f_np(*args), repeat)
        t_nb = _median_time(lambda: f_nb(*args), repeat)
        dispatched = "numpy" if getattr(K, name) is f_np else "numba"
        rows.append({"kernel": label, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb,
                     "agree": _same(f_np(*args), f_nb(*args)), "dispatch": dispatched})
    return rows


_STUDENT_PASS = """
import time, numpy as np
from ckd.spiking import StudentArch, build_student
from ckd.losses import tet_loss
rng = np.random.default_rng(0)
net = build_student(StudentArch(input_shape=(2, 32, 32), channels=(16, 32), num_classes=10,
                                timesteps=10, weight_gain=6.0), seed=0)
x = (rng.uniform(size=({b}, 10, 2, 32, 32)) < 0.05) * 1.0
y = rng.integers(0, 10, {b})
def step():
    out = net.forward_temporal(x)
    loss = tet_loss(out.logits, y)
    for p in net.parameters():
        p.grad = None
    loss.backward()
step()
ts = []
for _ in range({r}):
    t0 = time.perf_counter(); step(); ts.append(time.perf_counter() - t0)
print(float(np.median(ts)))
"""


def student_pass(batch, repeat):
    """Median forward+backward seconds of one student stream, per backend."""
    out = {}
    for backend, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, CKD_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _STUDENT_PASS.format(b=batch, r=repeat)],
                             env=env, capture_output=True, text=True, check=True)
        out[backend] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    rows = run(args.batch, args.repeat)
    print(f"{'kernel':16s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree  dispatch")
    for r in rows:
        print(f"{r['kernel']:16s} {1e3 * r['numpy_s']:10.2f} {1e3 * r['numba_s']:10.2f} {r['speedup']:8.2f}  "
              f"{str(r['agree']):5s}  {r['dispatch']}")
    full = student_pass(args.batch, args.repeat)
    print(f"{'student fwd+bwd':16s} {1e3 * full['numpy']:10.2f} {1e3 * full['numba']:10.2f} "
          f"{full['numpy'] / full['numba']:8.2f}  (subprocess per CKD_DISABLE_NUMBA setting)")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": rows, "student_pass": full}, fh, indent=2)


if __name__ == "__main__":
    main()
