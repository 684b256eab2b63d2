"""Branching dueling Q-network in plain numpy.

A shared two-layer trunk feeds one state-value head and ``n`` action arms,
each arm producing advantages for the two sub-actions {keep, broadcast}.
All tensors live in one flat float64 buffer so Adam, cloning and
checkpointing are single-array operations.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import ShapeMismatch

DEFAULT_HIDDEN = (512, 256, 128)
FORMAT_VERSION = 1
MAGIC = b"MACSNET\x00"
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def layer_shapes(n: int, hidden=DEFAULT_HIDDEN) -> list[tuple[str, tuple[int, ...]]]:
    h1, h2, h3 = hidden
    return [
        ("trunk_w1", (n, h1)),
        ("trunk_b1", (h1,)),
        ("trunk_w2", (h1, h2)),
        ("trunk_b2", (h2,)),
        ("state_w1", (h2, h3)),
        ("state_b1", (h3,)),
        ("state_w2", (h3, 1)),
        ("state_b2", (1,)),
        ("arm_w1", (h2, n, h3)),
        ("arm_b1", (n, h3)),
        ("arm_w2", (n, h3, 2)),
        ("arm_b2", (n, 2)),
    ]


def parameter_count(n: int, hidden=DEFAULT_HIDDEN) -> int:
    return sum(int(np.prod(s)) for _, s in layer_shapes(n, hidden))


@dataclass
class BranchingNetParams:
    n: int
    hidden: tuple[int, int, int]
    flat: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0
    input_scale: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.shapes = layer_shapes(self.n, self.hidden)
        self.t = _views(self.flat, self.shapes)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.t[name]


def _views(flat: np.ndarray, shapes) -> dict[str, np.ndarray]:
    out, off = {}, 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        out[name] = flat[off:off + size].reshape(shape)
        off += size
    if off != flat.size:
        raise ShapeMismatch(f"flat buffer has {flat.size} entries, layout needs {off}")
    return out


@dataclass
class ForwardOutput:
    state_value: np.ndarray  # (B,)
    advantages: np.ndarray  # (B, n, 2)
    q_values: np.ndarray  # (B, n, 2)


def init_params(n: int, seed: int | np.random.Generator = 0, hidden=DEFAULT_HIDDEN,
                input_scale: float = 1.0) -> BranchingNetParams:
    """He-style uniform weights, zero biases, zero Adam moments."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shapes = layer_shapes(n, hidden)
    flat = np.zeros(sum(int(np.prod(s)) for _, s in shapes))
    p = BranchingNetParams(n, tuple(hidden), flat, np.zeros_like(flat), np.zeros_like(flat),
                           0, float(input_scale))
    for name, shape in shapes:
        if "_w" not in name:
            continue
        fan_in = shape[1] if name == "arm_w2" else shape[0]
        bound = np.sqrt(6.0 / fan_in)
        p[name][...] = rng.uniform(-bound, bound, size=shape)
    return p


def clone_params(src: BranchingNetParams) -> BranchingNetParams:
    return BranchingNetParams(src.n, src.hidden, src.flat.copy(), src.adam_m.copy(),
                              src.adam_v.copy(), src.step, src.input_scale)


def copy_into(src: BranchingNetParams, dst: BranchingNetParams) -> None:
    if src.n != dst.n or src.hidden != dst.hidden:
        raise ShapeMismatch("parameter layouts differ")
    dst.flat[...] = src.flat
    dst.adam_m[...] = src.adam_m
    dst.adam_v[...] = src.adam_v
    dst.step = src.step
    dst.input_scale = src.input_scale


def _as_batch(p: BranchingNetParams, state) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != p.n:
        raise ShapeMismatch(f"expected input of length {p.n}, got shape {np.shape(state)}")
    return x * p.input_scale


def _forward(p: BranchingNetParams, x: np.ndarray):
    h1_pre = x @ p["trunk_w1"] + p["trunk_b1"]
    h1 = np.maximum(h1_pre, 0.0)
    h2_pre = h1 @ p["trunk_w2"] + p["trunk_b2"]
    h2 = np.maximum(h2_pre, 0.0)
    hv_pre = h2 @ p["state_w1"] + p["state_b1"]
    hv = np.maximum(hv_pre, 0.0)
    v = (hv @ p["state_w2"])[:, 0] + p["state_b2"][0]
    h2_dim, n, h3 = p["arm_w1"].shape
    ha_pre = (h2 @ p["arm_w1"].reshape(h2_dim, n * h3)).reshape(-1, n, h3) + p["arm_b1"]
    ha = np.maximum(ha_pre, 0.0)
    # (n, B, h3) @ (n, h3, 2) -> (n, B, 2)
    adv = np.matmul(ha.transpose(1, 0, 2), p["arm_w2"]).transpose(1, 0, 2) + p["arm_b2"]
    q = v[:, None, None] + (adv - adv.mean(axis=2, keepdims=True))
    cache = (x, h1_pre, h1, h2_pre, h2, hv_pre, hv, ha_pre, ha)
    return ForwardOutput(v, adv, q), cache


def forward(p: BranchingNetParams, state) -> ForwardOutput:
    """Q-values for a state (n,) or batch (B, n) of raw staleness counts."""
    out, _ = _forward(p, _as_batch(p, state))
    return out


def loss_and_grad(p: BranchingNetParams, state, chosen, targets) -> tuple[float, np.ndarray]:
    """Mean over batch and arms of (y_i - Q_i(s, a_i))**2, and its gradient.

    Only the chosen sub-action's Q carries error; it reaches the arm, the
    state head and the trunk.
    """
    x = _as_batch(p, state)
    chosen = np.asarray(chosen, dtype=np.int64).reshape(x.shape[0], p.n)
    targets = np.asarray(targets, dtype=float).reshape(x.shape[0], p.n)
    out, (x, h1_pre, h1, h2_pre, h2, hv_pre, hv, ha_pre, ha) = _forward(p, x)
    B, n = chosen.shape
    q_sel = np.take_along_axis(out.q_values, chosen[:, :, None], axis=2)[:, :, 0]
    resid = q_sel - targets
    loss = float(np.mean(resid**2))

    g_q = np.zeros_like(out.q_values)
    np.put_along_axis(g_q, chosen[:, :, None], (2.0 / (B * n)) * resid[:, :, None], axis=2)
    g_v = g_q.sum(axis=(1, 2))
    g_adv = g_q - g_q.mean(axis=2, keepdims=True)

    grad = np.zeros_like(p.flat)
    g = _views(grad, p.shapes)

    # arms
    g["arm_b2"][...] = g_adv.sum(axis=0)
    g["arm_w2"][...] = np.matmul(ha.transpose(1, 2, 0), g_adv.transpose(1, 0, 2))
    g_ha = np.matmul(g_adv.transpose(1, 0, 2), p["arm_w2"].transpose(0, 2, 1)).transpose(1, 0, 2)
    g_ha_pre = g_ha * (ha_pre > 0)
    g["arm_b1"][...] = g_ha_pre.sum(axis=0)
    h2_dim, _, h3 = p["arm_w1"].shape
    g_ha_flat = g_ha_pre.reshape(B, n * h3)
    g["arm_w1"][...] = (h2.T @ g_ha_flat).reshape(h2_dim, n, h3)
    g_h2 = g_ha_flat @ p["arm_w1"].reshape(h2_dim, n * h3).T

    # state head
    g["state_b2"][0] = g_v.sum()
    g["state_w2"][...] = hv.T @ g_v[:, None]
    g_hv_pre = (g_v[:, None] * p["state_w2"][:, 0][None, :]) * (hv_pre > 0)
    g["state_b1"][...] = g_hv_pre.sum(axis=0)
    g["state_w1"][...] = h2.T @ g_hv_pre
    g_h2 += g_hv_pre @ p["state_w1"].T

    # trunk
    g_h2_pre = g_h2 * (h2_pre > 0)
    g["trunk_b2"][...] = g_h2_pre.sum(axis=0)
    g["trunk_w2"][...] = h1.T @ g_h2_pre
    g_h1_pre = (g_h2_pre @ p["trunk_w2"].T) * (h1_pre > 0)
    g["trunk_b1"][...] = g_h1_pre.sum(axis=0)
    g["trunk_w1"][...] = x.T @ g_h1_pre
    return loss, grad


def backward(p: BranchingNetParams, state, chosen, targets) -> np.ndarray:
    return loss_and_grad(p, state, chosen, targets)[1]


def adam_step(p: BranchingNetParams, grad: np.ndarray, lr: float) -> BranchingNetParams:
    """Bias-corrected Adam update applied in place; returns ``p``."""
    if lr <= 0:
        raise ValueError("learning rate must be > 0")
    if grad.shape != p.flat.shape:
        raise ShapeMismatch("gradient layout differs from parameters")
    p.step += 1
    _adam_kernel(p.flat, p.adam_m, p.adam_v, grad,
                 lr / (1 - ADAM_BETA1**p.step), 1.0 / np.sqrt(1 - ADAM_BETA2**p.step))
    return p


@numba.njit(cache=True)
def _adam_kernel(theta, m, v, g, step_size, v_corr):
    # one fused pass; elementwise numpy would make ~10 passes over memory
    for k in range(theta.size):
        gk = g[k]
        m[k] = ADAM_BETA1 * m[k] + (1 - ADAM_BETA1) * gk
        v[k] = ADAM_BETA2 * v[k] + (1 - ADAM_BETA2) * gk * gk
        theta[k] -= step_size * m[k] / (np.sqrt(v[k]) * v_corr + ADAM_EPS)


def save_checkpoint(p: BranchingNetParams, path: str | Path) -> None:
    """Write magic, a length-prefixed JSON header, then little-endian float64 data.

    Data order: parameters in layer declaration order, then Adam first
    moments, then Adam second moments, each in the same order.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "n": p.n,
        "hidden": list(p.hidden),
        "layers": [[name, list(shape)] for name, shape in p.shapes],
        "input_scale": p.input_scale,
        "step": p.step,
        "dtype": "<f8",
        "sections": ["params", "adam_m", "adam_v"],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in (p.flat, p.adam_m, p.adam_v):
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> BranchingNetParams:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path} is not a network checkpoint")
    off = len(MAGIC)
    (hlen,) = struct.unpack("<I", raw[off:off + 4])
    off += 4
    header = json.loads(raw[off:off + hlen])
    off += hlen
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['format_version']}")
    n, hidden = header["n"], tuple(header["hidden"])
    shapes = layer_shapes(n, hidden)
    if [[k, list(s)] for k, s in shapes] != header["layers"]:
        raise ShapeMismatch("checkpoint layer table does not match the architecture")
    size = parameter_count(n, hidden)
    data = np.frombuffer(raw, dtype="<f8", offset=off)
    if data.size != 3 * size:
        raise ShapeMismatch("checkpoint payload has the wrong length")
    data = data.astype(np.float64)
    return BranchingNetParams(n, hidden, data[:size].copy(), data[size:2 * size].copy(),
                              data[2 * size:].copy(), int(header["step"]), float(header["input_scale"]))
