"""Encoder-decoder transformer built on the autodiff tape.

Pre-norm residual blocks, multi-head attention with learned relative-position
bucket biases (one table per stack, shared across its layers), ReLU
feed-forward blocks, and an input embedding optionally tied to the output
projection.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig

NEG_INF = -1e9


class ShapeError(ValueError):
    pass


# -- parameters ---------------------------------------------------------------


def _param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f, v = config.hidden_size, config.feedforward_size, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {"embed": (v, d)}
    if not config.tie_embeddings:
        shapes["out_proj"] = (d, v)
        shapes["out_bias"] = (v,)
    shapes["enc_relpos"] = (config.relpos_buckets, config.num_heads)
    shapes["dec_relpos"] = (config.relpos_buckets, config.num_heads)

    def attn(prefix: str) -> None:
        for name in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{name}"] = (d, d)
        for name in ("bq", "bk", "bv", "bo"):
            shapes[f"{prefix}.{name}"] = (d,)

    def ln(prefix: str) -> None:
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def ffn(prefix: str) -> None:
        shapes[f"{prefix}.w1"] = (d, f)
        shapes[f"{prefix}.b1"] = (f,)
        shapes[f"{prefix}.w2"] = (f, d)
        shapes[f"{prefix}.b2"] = (d,)

    for i in range(config.num_layers):
        ln(f"enc{i}.ln1")
        attn(f"enc{i}.attn")
        ln(f"enc{i}.ln2")
        ffn(f"enc{i}.ffn")
    ln("enc_final")
    for i in range(config.num_layers):
        ln(f"dec{i}.ln1")
        attn(f"dec{i}.self_attn")
        ln(f"dec{i}.ln2")
        attn(f"dec{i}.cross_attn")
        ln(f"dec{i}.ln3")
        ffn(f"dec{i}.ffn")
    ln("dec_final")
    return shapes


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every parameter the config implies."""
    return _param_shapes(config)


def init(config: ModelConfig, seed: int, dtype=np.float32) -> dict[str, Tensor]:
    """Deterministic initialization: scaled-uniform matrices, zero biases,
    unit layer-norm gains, zero relative-position tables."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, Tensor] = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith(".g"):
            data = np.ones(shape, dtype=dtype)
        elif name.endswith((".b", ".b1", ".b2", "_bias")) or name.startswith(
            ("enc_relpos", "dec_relpos")
        ) or name.endswith(("bq", "bk", "bv", "bo")):
            data = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = shape[0], shape[-1]
            bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params[name] = Tensor(data, requires_grad=True)
    return params


def parameter_count(params: dict[str, Tensor]) -> int:
    return sum(int(p.data.size) for p in params.values())


# -- relative position buckets --------------------------------------------------


def relative_position_buckets(
    query_len: int,
    key_len: int,
    bidirectional: bool,
    num_buckets: int,
    max_distance: int,
) -> np.ndarray:
    """Bucket index for each (query, key) offset; log-spaced beyond the exact range."""
    context = np.arange(query_len, dtype=np.int64)[:, None]
    memory = np.arange(key_len, dtype=np.int64)[None, :]
    relative = memory - context
    if bidirectional:
        half = num_buckets // 2
        buckets = np.where(relative > 0, half, 0).astype(np.int64)
        distance = np.abs(relative)
    else:
        half = num_buckets
        buckets = np.zeros_like(relative)
        distance = -np.minimum(relative, 0)
    max_exact = half // 2
    is_small = distance < max_exact
    scaled = max_exact + (
        np.log(np.maximum(distance, 1) / max_exact)
        / np.log(max_distance / max_exact)
        * (half - max_exact)
    ).astype(np.int64)
    scaled = np.minimum(scaled, half - 1)
    return buckets + np.where(is_small, distance, scaled)


# -- building blocks -----------------------------------------------------------


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def _split_heads(x: Tensor, num_heads: int, head_size: int) -> Tensor:
    batch, length, _ = x.shape
    x = ad.reshape(x, (batch, length, num_heads, head_size))
    return ad.transpose(x, (0, 2, 1, 3))


def _attention(
    params: dict[str, Tensor],
    prefix: str,
    queries: Tensor,
    keys_values: Tensor,
    mask_bias: np.ndarray | None,
    relpos: Tensor | None,
    config: ModelConfig,
) -> Tensor:
    heads, head_size = config.num_heads, config.head_size
    batch, q_len, _ = queries.shape
    q = _split_heads(_linear(queries, params[f"{prefix}.wq"], params[f"{prefix}.bq"]), heads, head_size)
    k = _split_heads(_linear(keys_values, params[f"{prefix}.wk"], params[f"{prefix}.bk"]), heads, head_size)
    v = _split_heads(_linear(keys_values, params[f"{prefix}.wv"], params[f"{prefix}.bv"]), heads, head_size)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / float(np.sqrt(head_size)))
    if relpos is not None:
        scores = ad.add(scores, relpos)
    if mask_bias is not None:
        scores = ad.add_const(scores, mask_bias)
    weights = ad.softmax(scores, axis=-1)
    context = ad.matmul(weights, v)
    context = ad.reshape(ad.transpose(context, (0, 2, 1, 3)), (batch, q_len, config.hidden_size))
    return _linear(context, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def _ffn(params: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    hidden = ad.relu(_linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return _linear(hidden, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def _layer_norm(params: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    return ad.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def _relpos_tensor(
    params: dict[str, Tensor], table: str, q_len: int, k_len: int, bidirectional: bool, config: ModelConfig
) -> Tensor:
    buckets = relative_position_buckets(
        q_len, k_len, bidirectional, config.relpos_buckets, config.relpos_max_distance
    )
    bias = ad.embedding(params[table], buckets)  # (q_len, k_len, heads)
    return ad.transpose(bias, (2, 0, 1))  # broadcasts over the batch axis


def _key_mask_bias(mask: np.ndarray, dtype) -> np.ndarray:
    # (batch, k_len) boolean -> additive (batch, 1, 1, k_len)
    bias = np.where(mask, 0.0, NEG_INF).astype(dtype)
    return bias[:, None, None, :]


def _causal_bias(length: int, dtype) -> np.ndarray:
    bias = np.triu(np.full((length, length), NEG_INF, dtype=dtype), k=1)
    return bias[None, None, :, :]


# -- full passes ----------------------------------------------------------------


def _check_ids(name: str, ids: np.ndarray, vocab_size: int) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ShapeError(f"{name} must be 2-d (batch, length), got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ShapeError(f"{name} contains ids outside [0, {vocab_size})")
    return ids


def encode(
    params: dict[str, Tensor],
    config: ModelConfig,
    input_ids: np.ndarray,
    input_mask: np.ndarray | None = None,
) -> Tensor:
    input_ids = _check_ids("input_ids", input_ids, config.vocab_size)
    if input_mask is None:
        input_mask = np.ones(input_ids.shape, dtype=bool)
    dtype = params["embed"].data.dtype
    mask_bias = _key_mask_bias(np.asarray(input_mask, dtype=bool), dtype)
    relpos = _relpos_tensor(params, "enc_relpos", input_ids.shape[1], input_ids.shape[1], True, config)
    x = ad.embedding(params["embed"], input_ids)
    for i in range(config.num_layers):
        normed = _layer_norm(params, f"enc{i}.ln1", x)
        x = ad.add(x, _attention(params, f"enc{i}.attn", normed, normed, mask_bias, relpos, config))
        x = ad.add(x, _ffn(params, f"enc{i}.ffn", _layer_norm(params, f"enc{i}.ln2", x)))
    return _layer_norm(params, "enc_final", x)


def decode(
    params: dict[str, Tensor],
    config: ModelConfig,
    encoder_out: Tensor,
    input_mask: np.ndarray,
    decoder_input_ids: np.ndarray,
) -> Tensor:
    decoder_input_ids = _check_ids("decoder_input_ids", decoder_input_ids, config.vocab_size)
    dtype = params["embed"].data.dtype
    length = decoder_input_ids.shape[1]
    causal = _causal_bias(length, dtype)
    cross_bias = _key_mask_bias(np.asarray(input_mask, dtype=bool), dtype)
    relpos = _relpos_tensor(params, "dec_relpos", length, length, False, config)
    x = ad.embedding(params["embed"], decoder_input_ids)
    for i in range(config.num_layers):
        normed = _layer_norm(params, f"dec{i}.ln1", x)
        x = ad.add(x, _attention(params, f"dec{i}.self_attn", normed, normed, causal, relpos, config))
        x = ad.add(
            x,
            _attention(
                params, f"dec{i}.cross_attn", _layer_norm(params, f"dec{i}.ln2", x),
                encoder_out, cross_bias, None, config,
            ),
        )
        x = ad.add(x, _ffn(params, f"dec{i}.ffn", _layer_norm(params, f"dec{i}.ln3", x)))
    x = _layer_norm(params, "dec_final", x)
    if config.tie_embeddings:
        return ad.matmul(x, ad.transpose(params["embed"], (1, 0)))
    return ad.add(ad.matmul(x, params["out_proj"]), params["out_bias"])


def forward(
    params: dict[str, Tensor],
    config: ModelConfig,
    input_ids: np.ndarray,
    decoder_input_ids: np.ndarray,
    input_mask: np.ndarray | None = None,
) -> tuple[Tensor, dict]:
    """Teacher-forced pass: returns logits (batch, target_len, vocab) plus
    cached activations (currently the encoder output)."""
    input_ids = np.asarray(input_ids)
    if input_mask is None:
        input_mask = np.ones(input_ids.shape, dtype=bool)
    input_mask = np.asarray(input_mask, dtype=bool)
    if input_mask.shape != input_ids.shape:
        raise ShapeError(
            f"input_mask shape {input_mask.shape} does not match input_ids {input_ids.shape}"
        )
    if np.asarray(decoder_input_ids).shape[0] != input_ids.shape[0]:
        raise ShapeError("batch dimension differs between encoder and decoder inputs")
    encoder_out = encode(params, config, input_ids, input_mask)
    logits = decode(params, config, encoder_out, input_mask, decoder_input_ids)
    return logits, {"encoder_out": encoder_out}


def loss(logits: Tensor, target_ids: np.ndarray, target_mask: np.ndarray) -> Tensor:
    """Mean token cross-entropy over unmasked target positions."""
    target_ids = np.asarray(target_ids)
    if logits.shape[:2] != target_ids.shape:
        raise ShapeError(
            f"logits shape {logits.shape} inconsistent with targets {target_ids.shape}"
        )
    return ad.cross_entropy(logits, target_ids, np.asarray(target_mask, dtype=bool))


def shift_right(target_ids: np.ndarray, start_id: int) -> np.ndarray:
    """Teacher-forcing decoder input: start token, then the target minus its last step."""
    target_ids = np.asarray(target_ids)
    shifted = np.empty_like(target_ids)
    shifted[:, 0] = start_id
    shifted[:, 1:] = target_ids[:, :-1]
    return shifted
