"""Vision transformer over windowed HD-sEMG patch sequences.

Forward path: linear patch embedding, a learned class token prepended at
row 0, learned positional embeddings added to every row, then `depth`
pre-norm encoder layers

    Z' = MSA(LN(Z)) + Z
    Z  = MLP(LN(Z')) + Z'

and a classification head reading only the class-token row (LayerNorm then
linear; the leading LayerNorm is a config toggle). Multi-head attention runs
H scaled dot-product attentions over D/H-wide projections, concatenated and
projected back to D.

The batched and single-sequence entry points share one code path: a single
sequence is a batch of one.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import FormatError, ParameterError, ShapeError
from .segment import PatchSequence, WindowTensor, patch_batch, patchify
from .tensor import Tensor

CHECKPOINT_MAGIC = b"VITCKPT1"

# Reference parameter budgets the three presets are audited against; train
# reports carry the signed delta between the implemented count and these.
PARAM_COUNT_REFERENCE = {"I": 340_866, "II": 78_210, "III": 25_314}

# model id -> (mlp_size, embed_dim); all presets use patch side 4, depth 1,
# twelve heads
PRESETS = {"I": (384, 192), "II": (96, 96), "III": (48, 48)}


@dataclass(frozen=True)
class VitConfig:
    embed_dim: int
    mlp_size: int
    depth: int
    num_heads: int
    patch_side: int
    num_classes: int
    num_patches: int
    patch_dim: int
    final_layernorm: bool = True
    activation: str = "gelu"

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ParameterError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.depth < 1 or self.num_heads < 1:
            raise ParameterError("depth and num_heads must be >= 1")
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if min(self.embed_dim, self.mlp_size, self.num_patches, self.patch_dim) < 1:
            raise ParameterError("all dimensions must be positive")
        if self.activation not in ("gelu", "relu"):
            raise ParameterError(f"activation must be gelu or relu, got {self.activation!r}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


def preset_config(
    model_id: str,
    num_classes: int,
    num_patches: int = 256,
    patch_dim: int = 16,
    patch_side: int = 4,
    final_layernorm: bool = True,
    activation: str = "gelu",
) -> VitConfig:
    """VitConfig for preset I, II or III over the default window geometry."""
    if model_id not in PRESETS:
        raise ParameterError(f"unknown model preset {model_id!r}; expected I, II or III")
    mlp_size, embed_dim = PRESETS[model_id]
    return VitConfig(
        embed_dim=embed_dim,
        mlp_size=mlp_size,
        depth=1,
        num_heads=12,
        patch_side=patch_side,
        num_classes=num_classes,
        num_patches=num_patches,
        patch_dim=patch_dim,
        final_layernorm=final_layernorm,
        activation=activation,
    )


@dataclass
class LayerParams:
    ln1_gain: Tensor
    ln1_bias: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    w_msa: Tensor
    b_msa: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    w_mlp_in: Tensor
    b_mlp_in: Tensor
    w_mlp_out: Tensor
    b_mlp_out: Tensor


@dataclass
class VitParams:
    """All trainable tensors of one model, in checkpoint declaration order."""

    config: VitConfig
    patch_projection: Tensor
    patch_bias: Tensor
    class_token: Tensor
    pos_embedding: Tensor
    layers: list[LayerParams] = field(default_factory=list)
    head_gain: Tensor | None = None
    head_bias: Tensor | None = None
    w_head: Tensor | None = None
    b_head: Tensor | None = None

    def named_parameters(self) -> list[tuple[str, Tensor, bool]]:
        """(name, tensor, weight_decay_applies) in fixed declaration order.

        Decay applies only to projection/weight matrices; biases, LayerNorm
        gains, the class token and the positional embedding are excluded.
        """
        out = [
            ("patch_projection", self.patch_projection, True),
            ("patch_bias", self.patch_bias, False),
            ("class_token", self.class_token, False),
            ("pos_embedding", self.pos_embedding, False),
        ]
        for i, lp in enumerate(self.layers):
            out.extend(
                [
                    (f"layer{i}.ln1_gain", lp.ln1_gain, False),
                    (f"layer{i}.ln1_bias", lp.ln1_bias, False),
                    (f"layer{i}.wq", lp.wq, True),
                    (f"layer{i}.bq", lp.bq, False),
                    (f"layer{i}.wk", lp.wk, True),
                    (f"layer{i}.bk", lp.bk, False),
                    (f"layer{i}.wv", lp.wv, True),
                    (f"layer{i}.bv", lp.bv, False),
                    (f"layer{i}.w_msa", lp.w_msa, True),
                    (f"layer{i}.b_msa", lp.b_msa, False),
                    (f"layer{i}.ln2_gain", lp.ln2_gain, False),
                    (f"layer{i}.ln2_bias", lp.ln2_bias, False),
                    (f"layer{i}.w_mlp_in", lp.w_mlp_in, True),
                    (f"layer{i}.b_mlp_in", lp.b_mlp_in, False),
                    (f"layer{i}.w_mlp_out", lp.w_mlp_out, True),
                    (f"layer{i}.b_mlp_out", lp.b_mlp_out, False),
                ]
            )
        if self.config.final_layernorm:
            out.append(("head_gain", self.head_gain, False))
            out.append(("head_bias", self.head_bias, False))
        out.append(("w_head", self.w_head, True))
        out.append(("b_head", self.b_head, False))
        return out

    def zero_grads(self) -> None:
        for _, t, _ in self.named_parameters():
            t.grad = None

    def copy(self) -> "VitParams":
        clone = load_state(self.config, {n: t.values.copy() for n, t, _ in self.named_parameters()})
        return clone


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled until every draw lies within two deviations."""
    out = rng.standard_normal(shape)
    while True:
        mask = np.abs(out) > 2.0
        if not mask.any():
            break
        out[mask] = rng.standard_normal(int(mask.sum()))
    return out * std


def init_params(config: VitConfig, seed: int) -> VitParams:
    """Fresh parameters: truncated normal (std 0.02) projections and class
    token, N(0, 0.02) positional embedding, zero biases, unit LayerNorm gains."""
    rng = np.random.default_rng([int(seed), 0x56495431])
    d, m = config.embed_dim, config.mlp_size

    def proj(rows, cols):
        return Tensor(_trunc_normal(rng, (rows, cols)), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    params = VitParams(
        config=config,
        patch_projection=proj(config.patch_dim, d),
        patch_bias=zeros(d),
        class_token=Tensor(_trunc_normal(rng, (d,)), requires_grad=True),
        pos_embedding=Tensor(
            rng.normal(0.0, 0.02, size=(config.num_patches + 1, d)), requires_grad=True
        ),
    )
    for _ in range(config.depth):
        params.layers.append(
            LayerParams(
                ln1_gain=ones(d),
                ln1_bias=zeros(d),
                wq=proj(d, d),
                bq=zeros(d),
                wk=proj(d, d),
                bk=zeros(d),
                wv=proj(d, d),
                bv=zeros(d),
                w_msa=proj(d, d),
                b_msa=zeros(d),
                ln2_gain=ones(d),
                ln2_bias=zeros(d),
                w_mlp_in=proj(d, m),
                b_mlp_in=zeros(m),
                w_mlp_out=proj(m, d),
                b_mlp_out=zeros(d),
            )
        )
    if config.final_layernorm:
        params.head_gain = ones(d)
        params.head_bias = zeros(d)
    params.w_head = proj(d, config.num_classes)
    params.b_head = zeros(config.num_classes)
    return params


def parameter_count(config: VitConfig, include_qkv_bias: bool = True) -> int:
    """Exact number of trainable scalars for a config.

    include_qkv_bias=False reports the hypothetical count without query, key
    and value biases (the audit variant); the built model always has them.
    """
    d, m, n, c = config.embed_dim, config.mlp_size, config.num_patches, config.num_classes
    total = config.patch_dim * d + d  # patch projection
    total += d  # class token
    total += (n + 1) * d  # positional embedding
    per_layer = 2 * d  # ln1
    per_layer += 3 * (d * d + (d if include_qkv_bias else 0))  # q, k, v
    per_layer += d * d + d  # attention output projection
    per_layer += 2 * d  # ln2
    per_layer += d * m + m + m * d + d  # mlp
    total += config.depth * per_layer
    if config.final_layernorm:
        total += 2 * d
    total += d * c + c  # head
    return total


# ---------------------------------------------------------------------------
# forward path
# ---------------------------------------------------------------------------

def _activation(config: VitConfig, x: Tensor) -> Tensor:
    return T.gelu(x) if config.activation == "gelu" else T.relu(x)


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    b, t, d = x.shape
    dh = d // num_heads
    return T.reshape(T.transpose(T.reshape(x, (b, t, num_heads, dh)), (0, 2, 1, 3)), (b * num_heads, t, dh))


def _merge_heads(x: Tensor, batch: int, num_heads: int) -> Tensor:
    bh, t, dh = x.shape
    return T.reshape(T.transpose(T.reshape(x, (batch, num_heads, t, dh)), (0, 2, 1, 3)), (batch, t, num_heads * dh))


def embed_batch(patches, params: VitParams) -> Tensor:
    """Z0 for a (B, N, patch_dim) batch: [cls; x1 E; ...; xN E] + pos."""
    x = patches if isinstance(patches, Tensor) else Tensor(patches)
    if x.ndim != 3:
        raise ShapeError(f"expected (batch, N, patch_dim), got {x.shape}")
    cfg = params.config
    if x.shape[1] != cfg.num_patches or x.shape[2] != cfg.patch_dim:
        raise ShapeError(
            f"patch batch {x.shape[1:]} does not match config "
            f"({cfg.num_patches}, {cfg.patch_dim})"
        )
    b = x.shape[0]
    projected = T.add(T.matmul(x, params.patch_projection), params.patch_bias)
    cls = T.broadcast_to(T.reshape(params.class_token, (1, 1, cfg.embed_dim)), (b, 1, cfg.embed_dim))
    z = T.concat([cls, projected], axis=1)
    return T.add(z, params.pos_embedding)


def embed(patches: PatchSequence, params: VitParams) -> Tensor:
    """Z0 for one patch sequence: shape (N+1, embed_dim)."""
    arr = patches.patches if isinstance(patches, PatchSequence) else np.asarray(patches)
    z = embed_batch(Tensor(arr[None]), params)
    return T.reshape(z, z.shape[1:])


def self_attention(z: Tensor, wq, bq, wk, bk, wv, bv) -> Tensor:
    """Single-head scaled dot-product attention for one (T, D) sequence.

    The projection matrices are (D, d_h) slices of a layer's q/k/v weights;
    output is (T, d_h).
    """
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim != 2:
        raise ShapeError(f"expected a (T, D) sequence, got {z.shape}")
    t = z.shape[0]
    q = T.reshape(T.add(T.matmul(z, wq), bq), (1, t, -1))
    k = T.reshape(T.add(T.matmul(z, wk), bk), (1, t, -1))
    v = T.reshape(T.add(T.matmul(z, wv), bv), (1, t, -1))
    out = T.scaled_dot_attention(q, k, v)
    return T.reshape(out, out.shape[1:])


def multi_head_attention_batch(z: Tensor, lp: LayerParams, config: VitConfig) -> Tensor:
    """MSA over a (B, T, D) batch: per-head attention, concat, project."""
    b = z.shape[0]
    q = T.add(T.matmul(z, lp.wq), lp.bq)
    k = T.add(T.matmul(z, lp.wk), lp.bk)
    v = T.add(T.matmul(z, lp.wv), lp.bv)
    heads = T.scaled_dot_attention(
        _split_heads(q, config.num_heads),
        _split_heads(k, config.num_heads),
        _split_heads(v, config.num_heads),
    )
    merged = _merge_heads(heads, b, config.num_heads)
    return T.add(T.matmul(merged, lp.w_msa), lp.b_msa)


def multi_head_attention(z: Tensor, lp: LayerParams, config: VitConfig) -> Tensor:
    """MSA for one (T, D) sequence."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    out = multi_head_attention_batch(T.reshape(z, (1,) + z.shape), lp, config)
    return T.reshape(out, out.shape[1:])


def encoder_layer_batch(z: Tensor, lp: LayerParams, config: VitConfig) -> Tensor:
    """Pre-norm residual block: Z' = MSA(LN(Z)) + Z; out = MLP(LN(Z')) + Z'."""
    attended = multi_head_attention_batch(T.layer_norm(z, lp.ln1_gain, lp.ln1_bias), lp, config)
    z = T.add(z, attended)
    h = T.layer_norm(z, lp.ln2_gain, lp.ln2_bias)
    h = _activation(config, T.add(T.matmul(h, lp.w_mlp_in), lp.b_mlp_in))
    h = T.add(T.matmul(h, lp.w_mlp_out), lp.b_mlp_out)
    return T.add(z, h)


def encoder_layer(z: Tensor, lp: LayerParams, config: VitConfig) -> Tensor:
    """Pre-norm residual block for one (T, D) sequence."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    out = encoder_layer_batch(T.reshape(z, (1,) + z.shape), lp, config)
    return T.reshape(out, out.shape[1:])


def forward_batch(patches, params: VitParams) -> Tensor:
    """Logits (B, num_classes) for a (B, N, patch_dim) batch of patch sequences."""
    z = embed_batch(patches, params)
    for lp in params.layers:
        z = encoder_layer_batch(z, lp, params.config)
    z0 = z[:, 0]  # class-token row only
    if params.config.final_layernorm:
        z0 = T.layer_norm(z0, params.head_gain, params.head_bias)
    return T.add(T.matmul(z0, params.w_head), params.b_head)


def classify(window: WindowTensor, params: VitParams, layout: str = "time_by_channels") -> np.ndarray:
    """Logits vector for one window (inference only; nothing is recorded)."""
    seq = patchify(window, params.config.patch_side, layout)
    with T.no_grad():
        logits = forward_batch(seq.patches[None], params)
    return logits.values[0]


def predict(windows, params: VitParams, batch_size: int = 64, layout: str = "time_by_channels") -> np.ndarray:
    """Argmax class ids for a list of windows (batched, no recording)."""
    patches = patch_batch(list(windows), params.config.patch_side, layout)
    out = np.empty(len(patches), dtype=np.int64)
    with T.no_grad():
        for start in range(0, len(patches), batch_size):
            logits = forward_batch(patches[start : start + batch_size], params)
            out[start : start + len(logits.values)] = np.argmax(logits.values, axis=1)
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params: VitParams, path: str, seed: int | None = None) -> None:
    """Self-describing container: magic, JSON header (config, layout version,
    seed), then little-endian float64 blocks in named_parameters order."""
    header = {
        "layout_version": 1,
        "seed": seed,
        "config": asdict(params.config),
        "fields": [name for name, _, _ in params.named_parameters()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, t, _ in params.named_parameters():
            fh.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> VitParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size).decode("utf-8"))
        if header.get("layout_version") != 1:
            raise FormatError(f"{path}: unsupported layout version {header.get('layout_version')}")
        config = VitConfig(**header["config"])
        template = init_params(config, seed=0)
        state = {}
        for name, t, _ in template.named_parameters():
            raw = fh.read(t.values.size * 8)
            if len(raw) != t.values.size * 8:
                raise FormatError(f"{path}: truncated block for {name}")
            state[name] = np.frombuffer(raw, dtype="<f8").reshape(t.values.shape).copy()
    return load_state(config, state)


def load_state(config: VitConfig, state: dict[str, np.ndarray]) -> VitParams:
    """Build VitParams from a name -> array mapping (shapes must match)."""
    params = init_params(config, seed=0)
    for name, t, _ in params.named_parameters():
        arr = state[name]
        if arr.shape != t.values.shape:
            raise ShapeError(f"state[{name}] has shape {arr.shape}, expected {t.values.shape}")
        t.values = np.asarray(arr, dtype=np.float64).copy()
    return params
