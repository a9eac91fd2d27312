"""Compare the compiled kernel extension against the numpy fallback.

Times the four hot kernels on realistic shapes (batch of 96x96 patches
through the first two conv stages) plus a full conv2d forward+backward
through the autograd layer under each backend.

Run:  python benchmarks/bench_kernels.py [--batch 32] [--repeats 5]
"""

import argparse
import time

import numpy as np

from twostream_reid import autograd as ag
from twostream_reid.kernels import reference

try:
    from twostream_reid.kernels import _native as native
except ImportError:
    native = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def kernel_cases(impl, batch, dtype):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, 64, 96, 96)).astype(dtype)
    cols = impl.im2col3(x)
    pooled, idx = impl.maxpool2x2_forward(x)
    return {
        "im2col3 64x96x96": lambda: impl.im2col3(x),
        "col2im3 64x96x96": lambda: impl.col2im3(cols, x.shape[1], x.shape[2], x.shape[3]),
        "maxpool fwd": lambda: impl.maxpool2x2_forward(x),
        "maxpool bwd": lambda: impl.maxpool2x2_backward(pooled, idx, x.shape[2], x.shape[3]),
    }


def conv_case(batch, dtype):
    rng = np.random.default_rng(1)
    x = ag.Tensor(rng.standard_normal((batch, 3, 96, 96)), dtype=dtype, requires_grad=True)
    w = ag.Tensor(rng.standard_normal((64, 3, 3, 3)) * 0.1, dtype=dtype, requires_grad=True)
    b = ag.Tensor(np.zeros(64), dtype=dtype, requires_grad=True)

    def run():
        tape = ag.Tape()
        y = ag.conv2d(x, w, b, tape)
        loss = ag.sum_all(y, tape)
        ag.backward(tape, loss)

    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = parser.parse_args()
    dtype = np.dtype(args.dtype)

    backends = [("pure-python", reference)]
    if native is not None:
        backends.append(("native", native))
    else:
        print("compiled extension unavailable; timing the fallback only")

    results = {}
    for name, impl in backends:
        for case, fn in kernel_cases(impl, args.batch, dtype).items():
            results.setdefault(case, {})[name] = best_of(fn, args.repeats)
    # conv2d goes through whichever backend the package selected at import
    results[f"conv2d fwd+bwd ({ag.kernels.BACKEND})"] = {
        ag.kernels.BACKEND: best_of(conv_case(args.batch, dtype), args.repeats)
    }

    width = max(len(c) for c in results)
    print(f"\nbatch={args.batch} dtype={args.dtype} best-of-{args.repeats}")
    print(f"{'case':<{width}}  {'pure-python':>12}  {'native':>12}  {'speedup':>8}")
    for case, times in results.items():
        ref_t = times.get("pure-python")
        nat_t = times.get("native")
        ref_s = f"{ref_t * 1e3:9.1f} ms" if ref_t else f"{'-':>12}"
        nat_s = f"{nat_t * 1e3:9.1f} ms" if nat_t else f"{'-':>12}"
        ratio = f"{ref_t / nat_t:7.2f}x" if ref_t and nat_t else f"{'-':>8}"
        print(f"{case:<{width}}  {ref_s}  {nat_s}  {ratio}")


if __name__ == "__main__":
    main()
