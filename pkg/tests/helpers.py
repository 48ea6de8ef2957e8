"""Shared builders for deterministic test fixtures."""

from __future__ import annotations

import numpy as np

from scalecloak.raster import RasterImage
from scalecloak.replica import ReplicaPair, composite_pair
from scalecloak.scaleops import ScalingOperator, build_operator, downscale
from scalecloak.synth import make_scene, make_trigger


def matched_pair(seed: int, ratio: int, dst: int = 64, channels: int = 1) -> ReplicaPair:
    """Same continuous scene + trigger rendered at source size dst * ratio.

    Scene and trigger parameters are drawn in relative coordinates from a
    fixed seed, so two calls with the same seed and different ratios depict
    the same content at different resolutions — which is what lets tests
    compare crafting across scaling ratios on "the same" pair.
    """
    side = dst * ratio
    scene = make_scene(np.random.default_rng(seed), (side, side), channels)
    t = side // 4
    trigger = make_trigger(np.random.default_rng(seed + 1), (t, t), channels)
    x = side * 3 // 8
    y = side * 5 // 16
    return composite_pair(scene, trigger, (x, y, t, t))


def small_target(pair: ReplicaPair, size: tuple[int, int], algorithm: str = "bilinear"):
    """(target image, operator) for crafting the pair down to ``size``."""
    op = build_operator(algorithm, (pair.target.height, pair.target.width), size)
    return downscale(pair.target, op), op


def feasible_instance(
    rng: np.random.Generator,
    src: tuple[int, int],
    dst: tuple[int, int],
    algorithm: str,
    epsilon: float,
) -> tuple[RasterImage, RasterImage, ScalingOperator]:
    """Random (source, target, operator) with the target provably reachable.

    The target is the downscale of some in-range image plus noise smaller
    than epsilon/2, so a feasible attack always exists.
    """
    op = build_operator(algorithm, src, dst)
    source = RasterImage(rng.uniform(0.0, 255.0, (*src, 1)))
    hidden = RasterImage(rng.uniform(0.0, 255.0, (*src, 1)))
    base = downscale(hidden, op).pixels
    if epsilon > 0:
        base = base + rng.uniform(-epsilon / 2.0, epsilon / 2.0, base.shape)
    target = RasterImage(np.clip(base, 0.0, 255.0))
    return source, target, op


def dense_qp_energy(source, target, op, epsilon: float) -> float:
    """Reference minimum perturbation energy via a dense convex QP solve.

    Vectorizes the plane row-major so the 2-D operator is kron(row, col),
    then solves min ||a - s||^2 subject to the intensity box and the
    infinity-norm constraint on the downscaled output.
    """
    import cvxpy as cp

    s = source.pixels[:, :, 0].ravel()
    t = target.pixels[:, :, 0].ravel()
    m2d = np.kron(op.row_matrix, op.col_matrix)
    a = cp.Variable(s.size)
    problem = cp.Problem(
        cp.Minimize(cp.sum_squares(a - s)),
        [a >= 0, a <= 255, m2d @ a <= t + epsilon, m2d @ a >= t - epsilon],
    )
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed: {problem.status}")
    return float(problem.value)
