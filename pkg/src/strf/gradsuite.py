"""The curated gradient-check suite the CLI runs.

Every entry builds a scalar-valued map in double precision and compares the
tape gradient against central differences. Inputs are drawn from seeded
generators and spread apart slightly so no max-pool or hinge sits within a
finite-difference step of a tie.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, matmul, softmax_rows
from .kernels import conv3d, conv_channel_mix, pool3d
from .gradcheck import grad_check
from .factorize import StrfConfig, StrfParams, init_strf_params, strf_forward
from .backbone import BlockSpec, build_block
from .losses import batch_hard_triplet, cross_entropy

TOLERANCE = 1e-6


def _spread(rng: np.random.Generator, shape) -> np.ndarray:
    """Random values with all pairwise gaps well above the probe step."""
    n = int(np.prod(shape))
    base = rng.uniform(-1.0, 1.0, size=n)
    ladder = rng.permutation(n) * 2e-3
    return (base + ladder).reshape(shape)


def run_suite(eps: float = 1e-5) -> list[tuple[str, float]]:
    rng = np.random.Generator(np.random.PCG64(20240817))
    results: list[tuple[str, float]] = []

    def check(name: str, f, x: np.ndarray) -> None:
        results.append((name, grad_check(f, x, eps)))

    a = _spread(rng, (3, 4))
    b = Tensor(_spread(rng, (4, 2)))
    check("matmul", lambda t: matmul(t, b).sum(), a)
    soft_w = Tensor(_fixed(rng, (3, 4)))
    check("softmax_rows", lambda t: (softmax_rows(t) * soft_w).sum(), a)

    vol = _spread(rng, (4, 3, 4, 3))
    check("pool3d_max", lambda t: (pool3d(t, (3, 1, 1), "max") * 0.5 + pool3d(t, (1, 3, 3), "max") * 0.25).sum(), vol)
    check("pool3d_avg", lambda t: (pool3d(t, (3, 3, 3), "avg") ** 2).sum(), vol)

    mix_w = Tensor(_spread(rng, (2, 4)))
    check("conv_channel_mix", lambda t: (conv_channel_mix(t, mix_w) ** 2).sum(), vol)
    conv_w = Tensor(_spread(rng, (2, 4, 3, 3, 3)))
    check("conv3d_same", lambda t: (conv3d(t, conv_w, (1, 2, 2), "same") ** 2).sum(), vol)
    check("conv3d_valid", lambda t: (conv3d(t, conv_w, (1, 1, 1), "valid") ** 2).sum(), vol)
    check(
        "conv3d_weights",
        lambda t: (conv3d(Tensor(vol), t, (1, 1, 1), "same") ** 2).sum(),
        _spread(rng, (2, 4, 3, 1, 1)),
    )

    cfg = StrfConfig()
    unit_in = _spread(rng, (8, 4, 6, 3))
    params = init_strf_params(8, cfg, rng, dtype=np.float64)
    check("strf_forward_input", lambda t: (strf_forward(t, cfg, params) ** 2).sum(), unit_in)
    fixed_in = Tensor(unit_in)
    for (dimension, kind), weight in params.items():
        def weight_map(t, _d=dimension, _k=kind):
            swapped = dict(params.items())
            swapped[(_d, _k)] = t
            return (strf_forward(fixed_in, cfg, StrfParams(swapped)) ** 2).sum()

        check(f"strf_weight_{dimension}_{kind}", weight_map, weight.data.copy())

    block_in = _spread(rng, (1, 16, 4, 6, 3))
    for variant in ("i3d", "p3d-a", "p3d-b", "p3d-c"):
        spec = BlockSpec(variant=variant, in_channels=16, out_channels=16, strf=cfg)
        block = build_block(spec, seed=7, dtype=np.float64)
        check(f"block_{variant}_strf", lambda t, _b=block: (_b(t, training=True) ** 2).sum(), block_in)

    logits = _spread(rng, (6, 5))
    labels = np.array([0, 1, 2, 3, 4, 0])
    check("cross_entropy", lambda t: cross_entropy(t, labels), logits)
    emb = _spread(rng, (8, 6)) + 0.5
    ids = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    check("batch_hard_triplet", lambda t: batch_hard_triplet(t, ids, margin=0.3), emb)

    return results


def _fixed(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape)


def suite_passes(results: list[tuple[str, float]], tolerance: float = TOLERANCE) -> bool:
    return all(err <= tolerance for _, err in results)
