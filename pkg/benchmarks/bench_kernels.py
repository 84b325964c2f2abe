"""
Compiled (Cython) vs pure-numpy kernels on the layer shapes of the desk
network, plus one full forward/backward pass of the multimodal model.

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 32]

Times are the median over ``--repeat`` runs, in milliseconds.
"""

import argparse
import statistics
import time

import numpy as np

from pibearing.model import ArchConfig, MultimodalNet, PhysicsLossConfig, physics_informed_loss
from pibearing.nn import backend


def timed(fn, repeat):
    fn()  # warm-up
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(out)


def kernel_cases(batch, rng):
    # (label, x shape, w shape, stride) for the two conv layers of a branch
    shapes = [
        ("conv0 1x10000 k16 s16", (batch, 1, 10000), (4, 1, 16), 16),
        ("conv1 4x156 k4 s1", (batch, 4, 156), (8, 4, 4), 1),
        ("wide 8x2000 k8 s1", (batch, 8, 2000), (16, 8, 8), 1),
    ]
    for label, xs, ws, stride in shapes:
        x = rng.standard_normal(xs)
        w = rng.standard_normal(ws)
        b = rng.standard_normal(ws[0])
        l_out = (xs[2] - ws[2]) // stride + 1
        g = rng.standard_normal((xs[0], ws[0], l_out))
        yield label, x, w, b, stride, g


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args(argv)
    names = [n for n in ("cython", "python") if n in backend.available()]
    if "cython" not in names:
        print("compiled kernels are not built; only the numpy backend is timed")
    rng = np.random.default_rng(0)
    print(f"{'case':38s}" + "".join(f"{n:>12s}" for n in names) + ("   speedup" if len(names) == 2 else ""))
    rows = []
    for label, x, w, b, stride, g in kernel_cases(args.batch, rng):
        for part in ("forward", "backward"):
            times = []
            for name in names:
                backend.use(name)
                k = backend.kernels
                if part == "forward":
                    times.append(timed(lambda: k.conv1d_forward(x, w, b, stride), args.repeat))
                else:
                    times.append(timed(lambda: k.conv1d_backward(x, w, g, stride), args.repeat))
            rows.append((f"{label} {part}", times))
    x = rng.standard_normal((args.batch, 4, 624))
    times = []
    for name in names:
        backend.use(name)
        times.append(timed(lambda: backend.kernels.maxpool1d_forward(x, 4, 4), args.repeat))
    rows.append(("maxpool 4x624 p4 forward", times))

    X = rng.standard_normal((args.batch, 3, 10000)).astype(np.float32)
    F = rng.uniform(0, 1, (args.batch, 2))
    y = rng.integers(0, 3, args.batch)
    cfg = PhysicsLossConfig(1.0, 0.3, 0.3)
    times = []
    for name in names:
        backend.use(name)
        net = MultimodalNet(ArchConfig(), 0)

        def step():
            net.store.zero_grad()
            _, grad, _ = physics_informed_loss(net.forward(X, F), y, F, cfg)
            net.backward(grad)

        times.append(timed(step, args.repeat))
    rows.append((f"desk model fwd+bwd, batch {args.batch}", times))
    for label, times in rows:
        line = f"{label:38s}" + "".join(f"{t:12.2f}" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:9.2f}x"
        print(line)
    backend.use(names[0])


if __name__ == "__main__":
    main()
