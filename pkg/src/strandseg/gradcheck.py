"""Central finite-difference verification of the analytic gradients.

Central differences approximate well only where the objective is smooth, so
fixtures are rejection-sampled until every hinge argument in the
discriminative loss sits a safe margin away from its kink (the hinge-squared
is C1 but its curvature jump still pollutes the FD estimate within a step of
the boundary). Relative error uses the customary floored denominator
|a - n| / max(1, |a|, |n|) so near-zero gradient entries are compared
absolutely.
"""

from __future__ import annotations

import numpy as np

from .network import (LossConfig, PARAM_ORDER, _dice_loss_grad, _discriminative_flat,
                      discriminative_loss, forward_full, init_params,
                      total_loss_and_grad)

DEFAULT_STEP = 1e-3
DEFAULT_TOL = 1e-4


def rel_err(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float((np.abs(a - n) / denom).max())


def _hinge_margins_ok(vectors, ids, cfg: LossConfig, margin: float) -> bool:
    """True when no hinge argument is within `margin` of its boundary."""
    unique = np.unique(ids)
    means = np.stack([vectors[ids == u].mean(axis=0) for u in unique])
    for k, u in enumerate(unique):
        dist = np.linalg.norm(vectors[ids == u] - means[k], axis=1)
        if (np.abs(dist - cfg.delta_v) < margin).any():
            return False
    for i in range(len(unique)):
        for j in range(i + 1, len(unique)):
            d = np.linalg.norm(means[i] - means[j])
            if abs(d - cfg.delta_d) < margin or d < margin:
                return False
    return True


def make_fixture(seed: int, size: int = 16, cfg: LossConfig | None = None,
                 margin: float = 5 * DEFAULT_STEP):
    """Random (params, image, labels) with all loss hinges margin-clear.

    Labels live at head resolution with 2-3 instances plus background; the
    seed walks forward until the network's own embeddings on the fixture
    keep every hinge argument away from its kink.
    """
    cfg = cfg or LossConfig()
    half = size // 2
    attempt_seed = seed
    while True:
        rng = np.random.default_rng(attempt_seed)
        n_inst = int(rng.integers(2, 4))
        labels = rng.integers(0, n_inst + 1, size=(half, half))
        params = init_params(attempt_seed)
        image = rng.random((size, size))
        present = np.unique(labels[labels > 0])
        if len(present) == n_inst:
            _, emb, _ = forward_full(params, image)
            fg = labels > 0
            if _hinge_margins_ok(emb[fg], labels[fg], cfg, margin):
                return params, image, labels
        attempt_seed += 1000003


def check_discriminative(seed: int, n_points: int = 40, dim: int = 3,
                         cfg: LossConfig | None = None,
                         step: float = DEFAULT_STEP) -> float:
    """Max relative FD error of the discriminative loss over a random
    embedding field; returns the worst entry."""
    cfg = cfg or LossConfig()
    attempt_seed = seed
    while True:
        rng = np.random.default_rng(attempt_seed)
        n_inst = int(rng.integers(2, 4))
        vectors = rng.normal(0.0, 1.2, size=(n_points, dim))
        ids = rng.integers(1, n_inst + 1, size=n_points)
        if len(np.unique(ids)) == n_inst and _hinge_margins_ok(
                vectors, ids, cfg, 5 * step):
            break
        attempt_seed += 1000003

    # exercise the field-shaped public entry point
    side = int(np.ceil(np.sqrt(n_points)))
    emb = np.zeros((side, side, dim))
    labels = np.zeros((side, side), dtype=np.int64)
    flat_r, flat_c = np.divmod(np.arange(n_points), side)
    emb[flat_r, flat_c] = vectors
    labels[flat_r, flat_c] = ids

    _, grad = discriminative_loss(emb, labels, cfg)
    worst = 0.0
    for r, c in zip(flat_r, flat_c):
        for d in range(dim):
            e_hi = emb.copy(); e_hi[r, c, d] += step
            e_lo = emb.copy(); e_lo[r, c, d] -= step
            hi, _ = discriminative_loss(e_hi, labels, cfg)
            lo, _ = discriminative_loss(e_lo, labels, cfg)
            numeric = (hi - lo) / (2 * step)
            worst = max(worst, rel_err(grad[r, c, d], numeric))
    return worst


def _loss_value(params, image, seg_target, labels, cfg) -> float:
    _, emb, cache = forward_full(params, image)
    dice, _ = _dice_loss_grad(cache["seg_prob"], seg_target.astype(np.float64))
    fg = labels > 0
    disc = _discriminative_flat(emb[fg], labels[fg], cfg)[0] if fg.any() else 0.0
    return cfg.w_dice * dice + cfg.w_disc * disc


def check_total(params, image, labels, cfg: LossConfig | None = None,
                step: float = DEFAULT_STEP) -> float:
    """Max relative FD error of total_loss_and_grad over every parameter entry."""
    cfg = cfg or LossConfig()
    seg_target = labels > 0
    _, grads, _ = total_loss_and_grad(params, image, seg_target, labels, cfg)
    worst = 0.0
    for name in PARAM_ORDER:
        theta = params[name]
        flat = theta.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = _loss_value(params, image, seg_target, labels, cfg)
            flat[i] = orig - step
            lo = _loss_value(params, image, seg_target, labels, cfg)
            flat[i] = orig
            worst = max(worst, rel_err(g_flat[i], (hi - lo) / (2 * step)))
    return worst


def run_suite(seed: int = 0, fixtures: int = 10, step: float = DEFAULT_STEP,
              tol: float = DEFAULT_TOL, progress=None) -> dict:
    """The full check: `fixtures` random 16x16 fixtures, all parameters.

    Returns {"max_rel_err_disc", "max_rel_err_total", "fixtures", "tol",
    "passed"}.
    """
    cfg = LossConfig()
    worst_disc = 0.0
    worst_total = 0.0
    for k in range(fixtures):
        worst_disc = max(worst_disc, check_discriminative(seed + 17 * k, cfg=cfg, step=step))
        params, image, labels = make_fixture(seed + 17 * k + 1, cfg=cfg)
        worst_total = max(worst_total, check_total(params, image, labels, cfg, step=step))
        if progress is not None:
            progress(k, worst_disc, worst_total)
    return {
        "fixtures": fixtures,
        "step": step,
        "tol": tol,
        "max_rel_err_disc": worst_disc,
        "max_rel_err_total": worst_total,
        "passed": bool(worst_disc <= tol and worst_total <= tol),
    }
