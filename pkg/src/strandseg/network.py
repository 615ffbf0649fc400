"""Small two-branch embedding network with hand-derived backpropagation.

Architecture: a 3-layer, 16-channel convolutional trunk (3x3 kernels, tanh,
one stride-2 stage) feeding two 1x1 heads — a segmentation head squashed
through a logistic, and a linear 3-d embedding head. Outputs live at half
the input resolution; inference upsamples them back.

Losses: Dice on the segmentation probabilities, and a two-term
discriminative loss on the embeddings. The variance term pulls each
embedding toward its instance's mean once it strays more than delta_v; the
distance term pushes instance means apart until they are delta_d apart:

    L_var  = (1/C) sum_c (1/N_c) sum_i [ ||mu_c - x_i|| - delta_v ]+^2
    L_dist = (1/(C(C-1))) sum_{cA != cB} [ delta_d - ||mu_cA - mu_cB|| ]+^2

with [x]+ = max(x, 0), C the number of instances present, and the distance
sum running over ordered pairs. Gradients are exact, including the paths
through the cluster means.

Everything is float64 numpy; parameters are a plain dict of arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

TRUNK_CHANNELS = 16
EMB_DIM = 3
DICE_EPS = 1.0

PARAM_ORDER = (
    "conv1_w", "conv1_b",
    "conv2_w", "conv2_b",
    "conv3_w", "conv3_b",
    "seg_w", "seg_b",
    "emb_w", "emb_b",
)


def param_shapes(channels: int = TRUNK_CHANNELS, emb_dim: int = EMB_DIM) -> dict:
    return {
        "conv1_w": (3, 3, 1, channels),
        "conv1_b": (channels,),
        "conv2_w": (3, 3, channels, channels),
        "conv2_b": (channels,),
        "conv3_w": (3, 3, channels, channels),
        "conv3_b": (channels,),
        "seg_w": (channels, 1),
        "seg_b": (1,),
        "emb_w": (channels, emb_dim),
        "emb_b": (emb_dim,),
    }


def init_params(seed: int, channels: int = TRUNK_CHANNELS, emb_dim: int = EMB_DIM) -> dict:
    """Seeded uniform fan-in initialization: U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    biases drawn with the bound of their weight tensor."""
    rng = np.random.default_rng(seed)
    shapes = param_shapes(channels, emb_dim)
    params = {}
    for name in PARAM_ORDER:
        shape = shapes[name]
        if name.endswith("_w"):
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
            last_bound = bound
        else:
            params[name] = rng.uniform(-last_bound, last_bound, size=shape)
    return params


def validate_params(params: dict, channels: int = TRUNK_CHANNELS, emb_dim: int = EMB_DIM):
    shapes = param_shapes(channels, emb_dim)
    for name, shape in shapes.items():
        if name not in params:
            raise ValueError(f"missing parameter {name!r}")
        got = np.asarray(params[name]).shape
        if got != shape:
            raise ValueError(f"parameter {name!r} has shape {got}, expected {shape}")
        if not np.isfinite(params[name]).all():
            raise ValueError(f"parameter {name!r} contains non-finite values")


def _conv_windows(x, stride):
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(padded, (3, 3), axis=(0, 1))
    return win[::stride, ::stride]  # (H_out, W_out, C_in, 3, 3)


def _conv_forward(x, w, b, stride):
    win = _conv_windows(x, stride)
    return np.einsum("hwcij,ijco->hwo", win, w, optimize=True) + b


def _conv_backward(x, w, stride, g_out):
    """Gradients of a padded 3x3 convolution; returns (g_x, g_w, g_b)."""
    win = _conv_windows(x, stride)
    g_b = g_out.sum(axis=(0, 1))
    g_w = np.einsum("hwcij,hwo->ijco", win, g_out, optimize=True)
    g_cols = np.einsum("hwo,ijco->hwcij", g_out, w, optimize=True)
    h_out, w_out = g_out.shape[:2]
    gpad = np.zeros((x.shape[0] + 2, x.shape[1] + 2, x.shape[2]))
    for i in range(3):
        for j in range(3):
            gpad[i : i + stride * h_out : stride,
                 j : j + stride * w_out : stride] += g_cols[:, :, :, i, j]
    return gpad[1:-1, 1:-1, :], g_w, g_b


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_image(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-d, got shape {image.shape}")
    h, w = image.shape
    if h < 4 or w < 4 or h % 2 or w % 2:
        raise ValueError(f"image dims must be even and >= 4, got {h}x{w}")
    return image


def forward_full(params: dict, image: np.ndarray):
    """Run the network and keep intermediate activations for backprop.

    Returns (seg_prob, emb, cache) where seg_prob is (H/2, W/2) in (0, 1)
    and emb is (H/2, W/2, 3).
    """
    image = _check_image(image)
    validate_params(params)
    x0 = image[:, :, None]
    a1 = np.tanh(_conv_forward(x0, params["conv1_w"], params["conv1_b"], 1))
    a2 = np.tanh(_conv_forward(a1, params["conv2_w"], params["conv2_b"], 2))
    a3 = np.tanh(_conv_forward(a2, params["conv3_w"], params["conv3_b"], 1))
    logits = a3 @ params["seg_w"] + params["seg_b"]
    seg_prob = _sigmoid(logits[:, :, 0])
    emb = a3 @ params["emb_w"] + params["emb_b"]
    cache = {"x0": x0, "a1": a1, "a2": a2, "a3": a3, "seg_prob": seg_prob}
    return seg_prob, emb, cache


def forward(params: dict, image: np.ndarray):
    """Half-resolution (seg_prob, emb) for an even-dimensioned image."""
    seg_prob, emb, _ = forward_full(params, image)
    return seg_prob, emb


def backward(params: dict, cache: dict, g_seg_prob: np.ndarray, g_emb: np.ndarray) -> dict:
    """Backpropagate head-output gradients to every parameter."""
    a3 = cache["a3"]
    seg_prob = cache["seg_prob"]
    # Through the logistic: dL/dlogit = dL/dp * p * (1 - p).
    g_logits = (g_seg_prob * seg_prob * (1.0 - seg_prob))[:, :, None]
    grads = {
        "seg_w": np.einsum("hwc,hwo->co", a3, g_logits),
        "seg_b": g_logits.sum(axis=(0, 1)),
        "emb_w": np.einsum("hwc,hwo->co", a3, g_emb),
        "emb_b": g_emb.sum(axis=(0, 1)),
    }
    g_a3 = g_logits @ params["seg_w"].T + g_emb @ params["emb_w"].T
    g_z3 = g_a3 * (1.0 - a3 * a3)
    g_a2, grads["conv3_w"], grads["conv3_b"] = _conv_backward(
        cache["a2"], params["conv3_w"], 1, g_z3)
    g_z2 = g_a2 * (1.0 - cache["a2"] ** 2)
    g_a1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(
        cache["a1"], params["conv2_w"], 2, g_z2)
    g_z1 = g_a1 * (1.0 - cache["a1"] ** 2)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(
        cache["x0"], params["conv1_w"], 1, g_z1)
    return grads


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class LossConfig:
    delta_v: float = 0.5
    delta_d: float = 3.0
    w_var: float = 1.0
    w_dist: float = 1.0
    w_dice: float = 0.3
    w_disc: float = 1.0

    def __post_init__(self):
        if self.delta_v <= 0:
            raise ValueError("delta_v must be > 0")
        if self.delta_d <= 2 * self.delta_v:
            raise ValueError("delta_d must exceed 2*delta_v for separable zero-loss configs")
        for name in ("w_var", "w_dist", "w_dice", "w_disc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def dice_loss(prob: np.ndarray, target: np.ndarray, eps: float = DICE_EPS) -> float:
    """1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps); eps rescues empty/empty."""
    loss, _ = _dice_loss_grad(prob, target, eps)
    return loss


def _dice_loss_grad(prob, target, eps=DICE_EPS):
    prob = np.asarray(prob, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prob.shape != target.shape:
        raise ValueError(f"prob {prob.shape} and target {target.shape} shapes differ")
    num = 2.0 * float((prob * target).sum()) + eps
    den = float(prob.sum()) + float(target.sum()) + eps
    loss = 1.0 - num / den
    grad = (num - 2.0 * target * den) / (den * den)
    return loss, grad


def discriminative_loss(emb: np.ndarray, labels: np.ndarray, cfg: LossConfig):
    """Pull-push loss over an embedding field and integer instance labels.

    `labels` holds 0 for background and k>0 for instance k; shape must match
    emb's leading dims. Returns (loss, gradient field), the gradient being
    exact — the paths through every cluster mean are differentiated, not
    treated as constants. No foreground at all is a documented degenerate
    case: loss 0 with a zero gradient.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != emb.shape[:-1]:
        raise ValueError(f"labels {labels.shape} must match emb leading dims {emb.shape[:-1]}")
    fg = labels > 0
    grad_field = np.zeros_like(emb)
    if not fg.any():
        return 0.0, grad_field
    loss, grad = _discriminative_flat(emb[fg], labels[fg], cfg)
    grad_field[fg] = grad
    return loss, grad_field


def _discriminative_flat(vectors, ids, cfg: LossConfig):
    """(N, D) embedding vectors with per-vector instance ids; returns
    (loss, (N, D) gradient)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    ids = np.asarray(ids)
    n = vectors.shape[0]
    grad = np.zeros_like(vectors)
    unique = np.unique(ids)
    c = len(unique)
    if n == 0 or c == 0:
        return 0.0, grad

    means = np.empty((c, vectors.shape[1]))
    members = []
    for k, uid in enumerate(unique):
        idx = np.flatnonzero(ids == uid)
        members.append(idx)
        means[k] = vectors[idx].mean(axis=0)

    # Variance (pull) term.
    l_var = 0.0
    for k, idx in enumerate(members):
        diff = vectors[idx] - means[k]
        dist = np.linalg.norm(diff, axis=1)
        hinge = np.maximum(dist - cfg.delta_v, 0.0)
        l_var += float((hinge * hinge).mean())
        # unit vectors, defined as 0 where dist == 0
        unit = np.zeros_like(diff)
        nz = dist > 0
        unit[nz] = diff[nz] / dist[nz, None]
        a = 2.0 * hinge[:, None] * unit
        # d/dx_i of mean_j hinge_j^2 picks up a term from every x_j via mu_c
        grad[idx] += (cfg.w_var / (c * len(idx))) * (a - a.mean(axis=0))
    l_var /= c

    # Distance (push) term over ordered pairs of cluster means.
    l_dist = 0.0
    if c >= 2:
        norm = c * (c - 1)
        for ka in range(c):
            for kb in range(ka + 1, c):
                delta = means[ka] - means[kb]
                d = float(np.linalg.norm(delta))
                hinge = max(cfg.delta_d - d, 0.0)
                if hinge == 0.0:
                    continue
                l_dist += 2.0 * hinge * hinge / norm
                if d > 0:
                    # both ordered pairs, then spread over the cluster members
                    g_mean = (-4.0 * hinge / norm) * (delta / d)
                    grad[members[ka]] += cfg.w_dist * g_mean / len(members[ka])
                    grad[members[kb]] -= cfg.w_dist * g_mean / len(members[kb])

    loss = cfg.w_var * l_var + cfg.w_dist * l_dist
    return loss, grad


def total_loss_and_grad(params: dict, image: np.ndarray, seg_target: np.ndarray,
                        instance_labels: np.ndarray, cfg: LossConfig):
    """Full training objective and its exact parameter gradients.

    seg_target (binary) and instance_labels (0 = background) live at head
    resolution, i.e. half the image dims. Returns (loss, grads, parts) with
    parts = {"dice": ..., "disc": ...} for logging.
    """
    seg_prob, emb, cache = forward_full(params, image)
    seg_target = np.asarray(seg_target)
    instance_labels = np.asarray(instance_labels)
    if seg_target.shape != seg_prob.shape:
        raise ValueError(f"seg_target {seg_target.shape} must be {seg_prob.shape}")
    if instance_labels.shape != seg_prob.shape:
        raise ValueError(f"instance_labels {instance_labels.shape} must be {seg_prob.shape}")

    dice, d_dice = _dice_loss_grad(seg_prob, seg_target.astype(np.float64))
    disc, d_disc = discriminative_loss(emb, instance_labels, cfg)
    loss = cfg.w_dice * dice + cfg.w_disc * disc
    grads = backward(params, cache, cfg.w_dice * d_dice, cfg.w_disc * d_disc)
    return loss, grads, {"dice": dice, "disc": disc}
