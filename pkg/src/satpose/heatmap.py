"""Gaussian keypoint heatmaps: encoding, subpixel decoding, and the
adaptive wing regression loss with its analytic gradient.

Encoding maps an input-image keypoint (u, v) to grid coordinates
(u/stride, v/stride) and evaluates an unnormalized Gaussian with unit
peak on the integer grid lattice, so a keypoint sitting exactly on a
lattice point produces a value of 1.0 there.  Keypoints outside the
grid are still encoded; only their (possibly sub-threshold) tail lands
on the grid.

Decoding finds the per-channel argmax (ties broken toward the smallest
row, then column) and refines it with a weighted centroid of the 3x3
neighborhood, border-clamped, using weights (value - window minimum)
squared.  Subtracting the local floor removes the bias the Gaussian's
shoulders put on the centroid, and squaring concentrates the weights
near the peak, which is what keeps the worst case (the keypoint at the
corner between four grid cells) inside the certified error bound; the
achievable round-trip accuracy is established by test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDimensions, ShapeMismatch

__all__ = [
    "Heatmap",
    "DecodedKeypoints",
    "AdaptiveWingParams",
    "encode_heatmap",
    "decode_heatmap",
    "adaptive_wing_loss",
]


class Heatmap:
    """Per-keypoint response grids: (channels, height, width) in [0, 1]."""

    __slots__ = ("values", "stride")

    def __init__(self, values, stride: int):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError("heatmap values must be (channels, height, width)")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap values must be finite")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("heatmap values must lie in [0, 1]")
        if int(stride) < 1:
            raise ValueError("stride must be a positive integer")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "stride", int(stride))

    def __setattr__(self, name, value):
        raise AttributeError("Heatmap is immutable")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class DecodedKeypoints:
    """Decoded keypoints in input-image pixels plus per-keypoint confidence."""

    coords: np.ndarray       # (N, 2) of (u, v), input-image pixels
    confidences: np.ndarray  # (N,) raw peak values in [0, 1]

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        f = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
        if c.shape[0] != f.shape[0]:
            raise ValueError("coords and confidences must have equal length")
        if not np.all(np.isfinite(c)):
            raise ValueError("decoded coordinates must be finite")
        if f.size and (f.min() < 0.0 or f.max() > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        c.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "confidences", f)


@dataclass(frozen=True)
class AdaptiveWingParams:
    """Adaptive wing loss parameters (the conventional defaults)."""

    omega: float = 14.0
    theta: float = 0.5
    epsilon: float = 1.0
    alpha: float = 2.1

    def __post_init__(self):
        for name in ("omega", "theta", "epsilon", "alpha"):
            v = float(getattr(self, name))
            if not (v > 0.0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")
            object.__setattr__(self, name, v)


def encode_heatmap(keypoints, height: int, width: int, stride: int, sigma: float) -> Heatmap:
    """Encode keypoints (input-image px) as unit-peak Gaussian channels.

    `height` and `width` are input-image dimensions; the grid is
    (height/stride, width/stride).  Raises BadDimensions if the stride
    does not divide both.  The Gaussian is evaluated over the full grid
    (no truncation window), so the translation-equivariance property
    holds exactly for shifts that are multiples of the stride.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    stride = int(stride)
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    if height % stride != 0 or width % stride != 0:
        raise BadDimensions(
            f"stride {stride} does not divide image dimensions {width}x{height}"
        )
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)
    gh, gw = height // stride, width // stride
    xs = np.arange(gw, dtype=np.float64)
    ys = np.arange(gh, dtype=np.float64)
    gu = kps[:, 0] / stride
    gv = kps[:, 1] / stride
    dx2 = (xs[None, :] - gu[:, None]) ** 2          # (N, gw)
    dy2 = (ys[None, :] - gv[:, None]) ** 2          # (N, gh)
    inv = 1.0 / (2.0 * sigma * sigma)
    vals = np.exp(-(dy2[:, :, None] + dx2[:, None, :]) * inv)
    return Heatmap(np.clip(vals, 0.0, 1.0), stride)


def decode_heatmap(h: Heatmap) -> DecodedKeypoints:
    """Recover keypoints: per-channel argmax plus 3x3 centroid refinement.

    The refinement weights are the squared offsets of the 3x3 window
    values above the window minimum; if every weight vanishes (flat
    window, e.g. an all-zero channel) the argmax location itself is
    returned.  Argmax ties break to the smallest row, then the smallest
    column.  Coordinates are returned in input-image pixels (grid
    coordinates times stride); confidence is the raw peak value.
    """
    v = h.values
    n, gh, gw = v.shape
    flat = v.reshape(n, -1)
    idx = flat.argmax(axis=1)
    rows = idx // gw
    cols = idx % gw
    peaks = flat[np.arange(n), idx]

    coords = np.empty((n, 2), dtype=np.float64)
    for k in range(n):
        r, c = int(rows[k]), int(cols[k])
        r0, r1 = max(r - 1, 0), min(r + 1, gh - 1)
        c0, c1 = max(c - 1, 0), min(c + 1, gw - 1)
        win = v[k, r0 : r1 + 1, c0 : c1 + 1]
        w = (win - win.min()) ** 2
        s = w.sum()
        if s > 0.0:
            # offsets relative to the argmax, so a symmetric window
            # cancels exactly and a lattice keypoint decodes exactly
            dr = np.arange(r0 - r, r1 - r + 1, dtype=np.float64)
            dc = np.arange(c0 - c, c1 - c + 1, dtype=np.float64)
            gv = r + float((w.sum(axis=1) * dr).sum() / s)
            gu = c + float((w.sum(axis=0) * dc).sum() / s)
        else:
            gv, gu = float(r), float(c)
        coords[k, 0] = gu * h.stride
        coords[k, 1] = gv * h.stride
    return DecodedKeypoints(coords, peaks)


def adaptive_wing_loss(pred, target, params: AdaptiveWingParams | None = None):
    """Adaptive wing loss averaged over all elements, with analytic gradient.

    For residual d = |target - pred| the penalty is

        omega * ln(1 + (d/epsilon)^(alpha - target))           if d < theta
        A * d - C                                              otherwise

    where A and C are chosen so the two branches meet with a continuous
    value and slope at d = theta.  The exponent alpha - target adapts
    the curvature: near-peak elements (target close to 1) get a flatter,
    more forgiving basin.  Returns (loss, gradient w.r.t. pred), where
    the gradient has the same shape as pred.
    """
    if params is None:
        params = AdaptiveWingParams()
    p = pred.values if isinstance(pred, Heatmap) else np.asarray(pred, dtype=np.float64)
    t = target.values if isinstance(target, Heatmap) else np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeMismatch(f"pred shape {p.shape} != target shape {t.shape}")
    if p.size == 0:
        raise ValueError("empty grids have no loss")

    omega, theta, eps, alpha = params.omega, params.theta, params.epsilon, params.alpha
    d = np.abs(t - p)
    k = alpha - t                       # adaptive exponent, elementwise
    ratio_theta = (theta / eps) ** k
    # Linear-branch slope and offset making value and slope continuous at theta.
    a = omega * (1.0 / (1.0 + ratio_theta)) * k * (theta / eps) ** (k - 1.0) / eps
    c = theta * a - omega * np.log1p(ratio_theta)

    small = d < theta
    ratio = np.where(small, d / eps, 0.0)
    with np.errstate(divide="ignore"):
        # d == 0 with exponent k - 1 in (0, alpha - 1] is fine: 0^positive = 0.
        pow_k = np.where(small, ratio**k, 0.0)
        pow_km1 = np.where(small & (d > 0), ratio ** (k - 1.0), 0.0)
    loss_el = np.where(small, omega * np.log1p(pow_k), a * d - c)
    # dL/dd for each branch; gradient w.r.t. pred flips the sign of (t - p).
    dldd = np.where(small, omega * k * pow_km1 / (eps * (1.0 + pow_k)), a)
    grad = dldd * np.sign(p - t) / p.size
    return float(loss_el.mean()), grad
