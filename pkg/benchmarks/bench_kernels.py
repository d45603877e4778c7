"""Timing comparison of the numba and numpy raycast/oracle kernels.

Usage:
    python benchmarks/bench_kernels.py [--repeats N] [--large]

Renders the same scenes through both kernel implementations and prints
per-call wall time plus the speedup. --large adds a 270x480 raycast case
on top of the 60x80 default. Results from the two backends are checked
to agree (same invalid mask, values to 1e-12 relative) before timing.
"""

import argparse
import time

import numpy as np

from collenc import _kernels
from collenc._backend import HAVE_NUMBA
from collenc.imagecore import CameraIntrinsics, DepthImage, pixels_to_points
from collenc.render import _pack_mesh_groups, ray_grid
from collenc.scenegen import SceneConfig, generate_scene


def time_call(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def check_agreement(a, b):
    if not np.array_equal(a == 0.0, b == 0.0):
        raise AssertionError("backends disagree on the invalid mask")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0.0)


def bench_raycast(K, seed, repeats):
    scene = generate_scene(SceneConfig(seed=seed))
    dirs = ray_grid(K)
    tris, start, stop, lo, hi = _pack_mesh_groups(scene.meshes)
    boxes = np.ascontiguousarray(scene.boxes)
    args = (dirs, tris, start, stop, lo, hi, boxes, _kernels.NEAR_Z, 10.0)

    out_np = _kernels.raycast_rays_numpy(*args)
    t_np = time_call(lambda: _kernels.raycast_rays_numpy(*args), repeats)
    if HAVE_NUMBA:
        out_nb = _kernels.raycast_rays_njit(*args)  # includes jit warmup
        check_agreement(out_nb, out_np)
        t_nb = time_call(lambda: _kernels.raycast_rays_njit(*args), repeats)
    else:
        t_nb = None
    return (f"raycast {K.height}x{K.width} ({len(tris)} tris, "
            f"{len(boxes)} boxes)"), t_np, t_nb


def bench_oracle(repeats):
    K = CameraIntrinsics(fx=160.0, fy=160.0, cx=32.0, cy=32.0, width=64, height=64)
    depth = DepthImage(np.full((64, 64), 4.0))
    vs, us = np.nonzero(depth.valid_mask)
    pts = pixels_to_points(us, vs, depth.data[vs, us], K)
    dirs = ray_grid(K)
    args = (dirs, pts, 0.25, 10.0)

    out_np = _kernels.oracle_entry_numpy(*args)
    t_np = time_call(lambda: _kernels.oracle_entry_numpy(*args), repeats)
    if HAVE_NUMBA:
        out_nb = _kernels.oracle_entry_njit(*args)
        check_agreement(out_nb, out_np)
        t_nb = time_call(lambda: _kernels.oracle_entry_njit(*args), repeats)
    else:
        t_nb = None
    return f"oracle 64x64 ({len(pts)} points)", t_np, t_nb


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions; the best run is reported")
    parser.add_argument("--large", action="store_true",
                        help="add a 270x480 raycast case")
    args = parser.parse_args(argv)

    if HAVE_NUMBA:
        import numba

        print(f"numba {numba.__version__}, "
              f"{numba.get_num_threads()} thread(s)")
    else:
        print("numba not installed; numpy path only")

    cases = [
        bench_raycast(CameraIntrinsics(100.0, 100.0, 40.0, 30.0, 80, 60),
                      seed=1, repeats=args.repeats),
        bench_oracle(repeats=args.repeats),
    ]
    if args.large:
        cases.append(
            bench_raycast(CameraIntrinsics(450.0, 450.0, 240.0, 135.0, 480, 270),
                          seed=1, repeats=args.repeats))

    width = max(len(c[0]) for c in cases)
    print(f"{'case':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_np, t_nb in cases:
        if t_nb is None:
            print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {'-':>10}  {'-':>8}")
        else:
            print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms"
                  f"  {t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
