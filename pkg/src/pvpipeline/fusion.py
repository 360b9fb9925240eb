"""Fusion mathematics at toy scale: palette-invariance loss, gated fusion,
focal and GIoU losses, the composite training objective, small trainable
encoders with hand-derived analytic gradients, and finite-difference
gradient verification.

Embeddings are plain float64 numpy vectors of a fixed dimension D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .thermal import apply_palette, load_all_palettes

PROB_EPS = 1e-12


class FusionError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Loss weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    lambda_box: float = 1.0
    lambda_pal: float = 0.1
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        if self.lambda_box < 0 or self.lambda_pal < 0:
            raise FusionError("loss weights must be non-negative")
        if not (0.0 < self.focal_alpha <= 1.0) or self.focal_gamma < 0:
            raise FusionError("invalid focal parameters")


# ---------------------------------------------------------------------------
# Palette-invariance loss
# ---------------------------------------------------------------------------

def embedding_centroid(members) -> np.ndarray:
    mats = np.asarray(members, dtype=np.float64)
    if mats.ndim != 2 or mats.shape[0] < 2:
        raise FusionError("need at least two embeddings of equal dimension")
    return mats.mean(axis=0)


def palette_invariance_loss(members) -> float:
    """Mean squared distance of each embedding from the member centroid."""
    mats = np.asarray(members, dtype=np.float64)
    zbar = embedding_centroid(mats)
    return float(np.mean(np.sum((mats - zbar) ** 2, axis=1)))


def palette_invariance_loss_grad(members):
    """Loss and per-member gradients; d/dz_m = (2/M)(z_m - centroid)."""
    mats = np.asarray(members, dtype=np.float64)
    zbar = embedding_centroid(mats)
    diff = mats - zbar
    loss = float(np.mean(np.sum(diff ** 2, axis=1)))
    return loss, (2.0 / mats.shape[0]) * diff


def mean_pairwise_distance(members) -> float:
    mats = np.asarray(members, dtype=np.float64)
    m = mats.shape[0]
    acc = 0.0
    cnt = 0
    for i in range(m):
        for j in range(i + 1, m):
            acc += float(np.linalg.norm(mats[i] - mats[j]))
            cnt += 1
    return acc / max(cnt, 1)


# ---------------------------------------------------------------------------
# Gated fusion
# ---------------------------------------------------------------------------

@dataclass
class GateParams:
    weight: np.ndarray  # (D, 2D)
    bias: np.ndarray    # (D,)

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, scale: float = 0.1):
        return cls(weight=scale * rng.standard_normal((dim, 2 * dim)),
                   bias=np.zeros(dim))


def _sigmoid_vec(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gated_fuse(z_bar: np.ndarray, r: np.ndarray, gate: GateParams):
    """u = g * z_bar + (1 - g) * r with g = sigmoid(W [z_bar ; r] + b)."""
    z_bar = np.asarray(z_bar, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if z_bar.shape != r.shape or gate.weight.shape != (z_bar.size, 2 * z_bar.size):
        raise FusionError("gate/embedding shape mismatch")
    zr = np.concatenate([z_bar, r])
    g = _sigmoid_vec(gate.weight @ zr + gate.bias)
    u = g * z_bar + (1.0 - g) * r
    return u, g


def gated_fuse_backward(z_bar, r, gate: GateParams, g, du):
    """Backprop through gated_fuse; returns (dz_bar, dr, dW, db)."""
    zr = np.concatenate([z_bar, r])
    dg = du * (z_bar - r)
    ds = dg * g * (1.0 - g)
    d_w = np.outer(ds, zr)
    d_b = ds
    dzr = gate.weight.T @ ds
    dim = z_bar.size
    dz_bar = du * g + dzr[:dim]
    dr = du * (1.0 - g) + dzr[dim:]
    return dz_bar, dr, d_w, d_b


# ---------------------------------------------------------------------------
# Focal loss
# ---------------------------------------------------------------------------

def focal_loss(pred_prob: float, is_positive: bool,
               alpha: float = 0.25, gamma: float = 2.0) -> float:
    p = min(max(pred_prob, PROB_EPS), 1.0 - PROB_EPS)
    pt = p if is_positive else 1.0 - p
    return -alpha * (1.0 - pt) ** gamma * math.log(pt)


def focal_loss_grad(pred_prob: float, is_positive: bool,
                    alpha: float = 0.25, gamma: float = 2.0):
    """Loss and d(loss)/d(pred_prob)."""
    p = min(max(pred_prob, PROB_EPS), 1.0 - PROB_EPS)
    pt = p if is_positive else 1.0 - p
    loss = -alpha * (1.0 - pt) ** gamma * math.log(pt)
    d_pt = -alpha * (1.0 - pt) ** gamma / pt
    if gamma > 0:
        d_pt += alpha * gamma * (1.0 - pt) ** (gamma - 1.0) * math.log(pt)
    return loss, d_pt if is_positive else -d_pt


# ---------------------------------------------------------------------------
# GIoU loss
# ---------------------------------------------------------------------------

def giou_loss(a, b) -> float:
    return _giou_loss_grad(np.asarray(a, dtype=np.float64),
                           np.asarray(b, dtype=np.float64))[0]


def giou_loss_grad(a, b):
    """Loss and gradient w.r.t. the first box's (x1, y1, x2, y2)."""
    return _giou_loss_grad(np.asarray(a, dtype=np.float64),
                           np.asarray(b, dtype=np.float64))


def _box_array(box):
    if hasattr(box, "x_min"):
        return np.array([box.x_min, box.y_min, box.x_max, box.y_max], dtype=np.float64)
    return np.asarray(box, dtype=np.float64)


def _giou_loss_grad(a, b):
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    if ax2 <= ax1 or ay2 <= ay1 or bx2 <= bx1 or by2 <= by1:
        raise FusionError("degenerate box")

    ix1, ix2 = max(ax1, bx1), min(ax2, bx2)
    iy1, iy2 = max(ay1, by1), min(ay2, by2)
    iw, ih = max(ix2 - ix1, 0.0), max(iy2 - iy1, 0.0)
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    cx1, cx2 = min(ax1, bx1), max(ax2, bx2)
    cy1, cy2 = min(ay1, by1), max(ay2, by2)
    cw, ch = cx2 - cx1, cy2 - cy1
    hull = cw * ch
    iou = inter / union
    giou = iou - (hull - union) / hull
    loss = 1.0 - giou

    # Partials of area_a.
    d_area = np.array([-(ay2 - ay1), -(ax2 - ax1), (ay2 - ay1), (ax2 - ax1)])
    # Partials of intersection (zero when boxes are disjoint on that axis).
    d_inter = np.zeros(4)
    if iw > 0 and ih > 0:
        if ax1 > bx1:
            d_inter[0] = -ih
        if ax2 < bx2:
            d_inter[2] = ih
        if ay1 > by1:
            d_inter[1] = -iw
        if ay2 < by2:
            d_inter[3] = iw
    d_union = d_area - d_inter
    d_iou = (d_inter * union - inter * d_union) / union ** 2
    # Partials of hull.
    d_hull = np.zeros(4)
    if ax1 < bx1:
        d_hull[0] = -ch
    if ax2 > bx2:
        d_hull[2] = ch
    if ay1 < by1:
        d_hull[1] = -cw
    if ay2 > by2:
        d_hull[3] = cw
    # d giou = d_iou + d(U/C) = d_iou + (d_union * hull - union * d_hull) / hull^2
    d_giou = d_iou + (d_union * hull - union * d_hull) / hull ** 2
    return float(loss), -d_giou


def total_loss(cls_term: float, box_term: float, pal_term: float,
               weights: LossWeights) -> float:
    """Composite objective: L_cls + lambda_box * L_box + lambda_pal * L_pal."""
    return cls_term + weights.lambda_box * box_term + weights.lambda_pal * pal_term


# ---------------------------------------------------------------------------
# Toy encoders
# ---------------------------------------------------------------------------

@dataclass
class ToyEncoderParams:
    """Two affine layers with a tanh nonlinearity between them."""

    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, hidden: int, out_dim: int,
             scale: float = 0.5):
        return cls(w1=scale * rng.standard_normal((hidden, in_dim)) / math.sqrt(in_dim),
                   b1=np.zeros(hidden),
                   w2=scale * rng.standard_normal((out_dim, hidden)) / math.sqrt(hidden),
                   b2=np.zeros(out_dim))


def encode(x: np.ndarray, params: ToyEncoderParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != params.w1.shape[1]:
        raise FusionError(f"encoder expects input of size {params.w1.shape[1]}")
    h = np.tanh(params.w1 @ x + params.b1)
    return params.w2 @ h + params.b2


def encode_backward(x: np.ndarray, params: ToyEncoderParams, dz: np.ndarray):
    """Gradients of a downstream loss w.r.t. encoder parameters.

    Returns a dict {w1, b1, w2, b2} of gradient arrays.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    h_pre = params.w1 @ x + params.b1
    h = np.tanh(h_pre)
    d_w2 = np.outer(dz, h)
    d_b2 = dz
    dh = params.w2.T @ dz
    dpre = dh * (1.0 - h ** 2)
    return {"w1": np.outer(dpre, x), "b1": dpre, "w2": d_w2, "b2": d_b2}


def downsample(image: np.ndarray, size: int = 16) -> np.ndarray:
    """Block-mean downsample of a 2-D raster to size x size (bilinear when
    dimensions do not divide evenly)."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    ys = np.clip((np.arange(size) + 0.5) * h / size - 0.5, 0, h - 1)
    xs = np.clip((np.arange(size) + 0.5) * w / size - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if img.ndim == 2:
        out = ((1 - fy) * (1 - fx) * img[np.ix_(y0, x0)]
               + (1 - fy) * fx * img[np.ix_(y0, x1)]
               + fy * (1 - fx) * img[np.ix_(y1, x0)]
               + fy * fx * img[np.ix_(y1, x1)])
    else:
        fy = fy[..., None]
        fx = fx[..., None]
        out = ((1 - fy) * (1 - fx) * img[np.ix_(y0, x0)]
               + (1 - fy) * fx * img[np.ix_(y0, x1)]
               + fy * (1 - fx) * img[np.ix_(y1, x0)]
               + fy * fx * img[np.ix_(y1, x1)])
    return out


# ---------------------------------------------------------------------------
# Full toy model: palettes -> shared encoder -> gate -> detector head
# ---------------------------------------------------------------------------

PARAM_KEYS = ("t.w1", "t.b1", "t.w2", "t.b2",
              "r.w1", "r.b1", "r.w2", "r.b2",
              "gate.w", "gate.b",
              "head.w_cls", "head.b_cls", "head.w_box", "head.b_box")


@dataclass
class ToySample:
    """One synthetic crop pair: M palette renderings of a thermal crop plus
    an RGB crop, a defect label, and (for positives) a target box in
    normalized [0, 1] image coordinates."""

    palette_inputs: np.ndarray  # (M, in_dim) flattened RGB renders in [0, 1]
    rgb_input: np.ndarray       # (in_dim,)
    is_positive: bool
    box: np.ndarray | None      # (4,) normalized or None


class FusionModel:
    """Toy thermal/RGB fusion model with analytic gradients."""

    def __init__(self, seed: int = 0, crop_size: int = 16, hidden: int = 16,
                 dim: int = 32):
        self.crop_size = crop_size
        self.in_dim = crop_size * crop_size * 3
        self.hidden = hidden
        self.dim = dim
        rng = np.random.default_rng(seed)
        enc_t = ToyEncoderParams.init(rng, self.in_dim, hidden, dim)
        enc_r = ToyEncoderParams.init(rng, self.in_dim, hidden, dim)
        gate = GateParams.init(rng, dim)
        self.params = {
            "t.w1": enc_t.w1, "t.b1": enc_t.b1, "t.w2": enc_t.w2, "t.b2": enc_t.b2,
            "r.w1": enc_r.w1, "r.b1": enc_r.b1, "r.w2": enc_r.w2, "r.b2": enc_r.b2,
            "gate.w": gate.weight, "gate.b": gate.bias,
            "head.w_cls": 0.1 * rng.standard_normal(dim), "head.b_cls": np.zeros(1),
            "head.w_box": 0.1 * rng.standard_normal((4, dim)), "head.b_box": np.zeros(4),
        }

    # -- parameter vector helpers --------------------------------------

    def flatten(self, params=None) -> np.ndarray:
        params = self.params if params is None else params
        return np.concatenate([params[k].ravel() for k in PARAM_KEYS])

    def unflatten(self, vec: np.ndarray) -> dict:
        out = {}
        pos = 0
        for k in PARAM_KEYS:
            shape = self.params[k].shape
            n = int(np.prod(shape))
            out[k] = vec[pos:pos + n].reshape(shape).copy()
            pos += n
        return out

    def _encoder(self, params, prefix) -> ToyEncoderParams:
        return ToyEncoderParams(w1=params[prefix + ".w1"], b1=params[prefix + ".b1"],
                                w2=params[prefix + ".w2"], b2=params[prefix + ".b2"])

    def _gate(self, params) -> GateParams:
        return GateParams(weight=params["gate.w"], bias=params["gate.b"])

    # -- forward --------------------------------------------------------

    def palette_embeddings(self, sample: ToySample, params=None) -> np.ndarray:
        params = self.params if params is None else params
        enc = self._encoder(params, "t")
        return np.stack([encode(x, enc) for x in sample.palette_inputs])

    def _pred_box(self, t: np.ndarray):
        cx, cy = _sigmoid_vec(t[:2])
        w = 0.02 + _sigmoid_vec(t[2:3])[0]
        h = 0.02 + _sigmoid_vec(t[3:4])[0]
        return np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]), (cx, cy, w, h)

    def sample_loss_grads(self, params, sample: ToySample, weights: LossWeights,
                          cls_scale: float = 1.0, box_scale: float = 1.0,
                          pal_scale: float = 1.0):
        """Loss terms for one sample plus gradients of the scaled composite
        cls_scale*L_cls + box_scale*lambda_box*L_box + pal_scale*lambda_pal*L_pal.
        """
        enc_t = self._encoder(params, "t")
        enc_r = self._encoder(params, "r")
        gate = self._gate(params)

        zs = np.stack([encode(x, enc_t) for x in sample.palette_inputs])
        pal_loss, d_zs_pal = palette_invariance_loss_grad(zs)
        z_bar = zs.mean(axis=0)
        r = encode(sample.rgb_input, enc_r)
        u, g = gated_fuse(z_bar, r, gate)

        logit = float(params["head.w_cls"] @ u + params["head.b_cls"][0])
        p = 1.0 / (1.0 + math.exp(-logit)) if logit >= 0 else \
            math.exp(logit) / (1.0 + math.exp(logit))
        cls_loss, d_p = focal_loss_grad(p, sample.is_positive,
                                        weights.focal_alpha, weights.focal_gamma)
        d_logit = d_p * p * (1.0 - p)

        t_box = params["head.w_box"] @ u + params["head.b_box"]
        box_loss = 0.0
        d_t_box = np.zeros(4)
        if sample.is_positive and sample.box is not None:
            pred, (cx, cy, w, h) = self._pred_box(t_box)
            box_loss, d_box = _giou_loss_grad(pred, sample.box)
            # Chain through (cx, cy, w, h) -> corners.
            d_cx = d_box[0] + d_box[2]
            d_cy = d_box[1] + d_box[3]
            d_w = (d_box[2] - d_box[0]) / 2.0
            d_h = (d_box[3] - d_box[1]) / 2.0
            s = _sigmoid_vec(t_box)
            d_t_box = np.array([d_cx * s[0] * (1 - s[0]),
                                d_cy * s[1] * (1 - s[1]),
                                d_w * s[2] * (1 - s[2]),
                                d_h * s[3] * (1 - s[3])])

        # Backward into u, with the requested per-term scales folded in.
        d_logit *= cls_scale
        d_t_box = d_t_box * (box_scale * weights.lambda_box)
        du = d_logit * params["head.w_cls"] + params["head.w_box"].T @ d_t_box
        grads = {k: np.zeros_like(params[k]) for k in PARAM_KEYS}
        grads["head.w_cls"] = d_logit * u
        grads["head.b_cls"] = np.array([d_logit])
        grads["head.w_box"] = np.outer(d_t_box, u)
        grads["head.b_box"] = d_t_box

        dz_bar, dr, d_gw, d_gb = gated_fuse_backward(z_bar, r, gate, g, du)
        grads["gate.w"] = d_gw
        grads["gate.b"] = d_gb

        for key, grad in encode_backward(sample.rgb_input, enc_r, dr).items():
            grads["r." + key] += grad
        m = zs.shape[0]
        for i, x in enumerate(sample.palette_inputs):
            dz = dz_bar / m + pal_scale * weights.lambda_pal * d_zs_pal[i]
            for key, grad in encode_backward(x, enc_t, dz).items():
                grads["t." + key] += grad

        total = total_loss(cls_loss, box_loss, pal_loss, weights)
        return total, cls_loss, box_loss, pal_loss, grads

    def loss_and_grads(self, params, samples, weights: LossWeights):
        """Mean composite loss over samples plus aggregated gradients.

        L_cls and L_pal average over all samples; L_box averages over the
        positive samples carrying a target box.
        """
        n = len(samples)
        n_pos = sum(1 for s in samples if s.is_positive and s.box is not None)
        grads = {k: np.zeros_like(params[k]) for k in PARAM_KEYS}
        cls_acc = box_acc = pal_acc = 0.0
        for s in samples:
            has_box = s.is_positive and s.box is not None
            box_w = 1.0 / n_pos if (has_box and n_pos) else 0.0
            _, cls_l, box_l, pal_l, g = self.sample_loss_grads(
                params, s, weights,
                cls_scale=1.0 / n, box_scale=box_w, pal_scale=1.0 / n)
            cls_acc += cls_l / n
            box_acc += box_l * box_w
            pal_acc += pal_l / n
            for k in PARAM_KEYS:
                grads[k] += g[k]
        total = total_loss(cls_acc, box_acc, pal_acc, weights)
        if not math.isfinite(total):
            raise TrainingDiverged("non-finite loss")
        return total, grads, {"cls": cls_acc, "box": box_acc, "pal": pal_acc}

    def loss_closure(self, samples, weights: LossWeights):
        """(flat params) -> (loss, flat grad) for optimization and checking."""
        def closure(vec: np.ndarray):
            params = self.unflatten(vec)
            loss, grads, _ = self.loss_and_grads(params, samples, weights)
            return loss, np.concatenate([grads[k].ravel() for k in PARAM_KEYS])
        return closure


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------

def gradient_check(loss_closure, params: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error between the closure's analytic gradient and central
    finite differences over every parameter coordinate."""
    if not (1e-7 <= step <= 1e-3):
        raise FusionError("step must lie in [1e-7, 1e-3]")
    params = np.asarray(params, dtype=np.float64)
    loss0, grad = loss_closure(params)
    if not math.isfinite(loss0):
        raise FusionError("non-finite loss at the evaluation point")
    worst = 0.0
    for i in range(params.size):
        p_hi = params.copy()
        p_hi[i] += step
        p_lo = params.copy()
        p_lo[i] -= step
        num = (loss_closure(p_hi)[0] - loss_closure(p_lo)[0]) / (2.0 * step)
        denom = max(abs(grad[i]), abs(num), 1e-6)
        worst = max(worst, abs(grad[i] - num) / denom)
    return worst


# ---------------------------------------------------------------------------
# Synthetic crops and toy training
# ---------------------------------------------------------------------------

def make_toy_samples(n: int, seed: int = 0, crop_size: int = 16) -> list:
    """Synthetic thermal/RGB crop pairs.

    Every crop shows a hot Gaussian blob; only the RGB stream separates a
    real defect (dark damage spot) from a look-alike glint (clean panel).
    This mirrors the field failure mode where reflections mimic hotspots.
    Positives carry the blob's bounding box. Inputs are zero-centered.
    """
    rng = np.random.default_rng(seed)
    luts = load_all_palettes()
    yy, xx = np.mgrid[0:crop_size, 0:crop_size].astype(np.float64)
    samples = []
    for i in range(n):
        positive = bool(i % 2 == 0)
        base = 25.0 + 3.0 * rng.random() * (xx / crop_size)
        cx = rng.uniform(0.25, 0.75) * crop_size
        cy = rng.uniform(0.25, 0.75) * crop_size
        sig = rng.uniform(1.0, 2.5)
        excess = rng.uniform(8.0, 25.0)
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sig ** 2))
        temp = base + excess * blob
        lo, hi = temp.min(), temp.max()
        gray = (temp - lo) / (hi - lo) if hi > lo else np.full_like(temp, 0.5)
        pal_inputs = np.stack([
            apply_palette(gray, lut).pixels.astype(np.float64).ravel() / 255.0 - 0.5
            for lut in luts])
        rgb_gray = 0.6 + 0.02 * rng.standard_normal((crop_size, crop_size))
        box = None
        if positive:
            rgb_gray = rgb_gray - 0.4 * blob
            half = 2.0 * sig / crop_size
            box = np.array([cx / crop_size - half, cy / crop_size - half,
                            cx / crop_size + half, cy / crop_size + half])
        rgb = np.clip(np.repeat(rgb_gray[..., None], 3, axis=2), 0, 1) - 0.5
        samples.append(ToySample(palette_inputs=pal_inputs,
                                 rgb_input=rgb.ravel(),
                                 is_positive=positive, box=box))
    return samples


@dataclass
class TrainResult:
    params: dict
    total_trace: list
    pal_trace: list


def train_toy(samples, epochs: int = 600, learning_rate: float = 0.02,
              weights: LossWeights = LossWeights(), seed: int = 0,
              model: FusionModel | None = None) -> TrainResult:
    """Full-batch Adam on the composite loss (deterministic given the seed)."""
    if len(samples) < 32:
        raise FusionError("need at least 32 samples")
    if model is None:
        crop = int(round(math.sqrt(samples[0].rgb_input.size / 3)))
        model = FusionModel(seed=seed, crop_size=crop)
    vec = model.flatten()
    m1 = np.zeros_like(vec)
    m2 = np.zeros_like(vec)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    total_trace = []
    pal_trace = []
    for t in range(1, epochs + 1):
        params = model.unflatten(vec)
        loss, grads, aux = model.loss_and_grads(params, samples, weights)
        total_trace.append(loss)
        pal_trace.append(aux["pal"])
        g = np.concatenate([grads[k].ravel() for k in PARAM_KEYS])
        m1 = beta1 * m1 + (1 - beta1) * g
        m2 = beta2 * m2 + (1 - beta2) * g * g
        step = learning_rate * (m1 / (1 - beta1 ** t)) / (np.sqrt(m2 / (1 - beta2 ** t)) + eps)
        vec = vec - step
        if not np.all(np.isfinite(vec)):
            raise TrainingDiverged("parameters diverged")
    model.params = model.unflatten(vec)
    return TrainResult(params=model.params, total_trace=total_trace, pal_trace=pal_trace)


def palette_spread(model: FusionModel, samples) -> float:
    """Mean pairwise distance between per-palette embeddings over samples."""
    vals = [mean_pairwise_distance(model.palette_embeddings(s)) for s in samples]
    return float(np.mean(vals))
