"""The segmentation-and-tracking network.

Per frame, a strided conv encoder produces a coarse feature map; a stack of
decoder blocks refines a learned set of object tokens with cross-attention
over that map, self-attention, a feed-forward layer, and finally an
attention layer whose keys/values are the tokens of *all* frames, which is
the only place information crosses frames. Three heads read each token:
an existence score, a mask embedding dotted against a pixel-embedding map,
and a unit-norm tracking embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor, tape_section
from .config import ConfigError, ModelConfig

MFA_TAG = "multi_frame_attention"
_INIT_TAG = 0x4E455457


class Module:
    """Parameter container; ``params`` walks attributes depth-first."""

    def params(self):
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                yield key, value
            elif isinstance(value, Module):
                for name, p in value.params():
                    yield f"{key}.{name}", p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for name, p in item.params():
                            yield f"{key}.{i}.{name}", p

    def param_dict(self) -> dict[str, Tensor]:
        return dict(self.params())


def _uniform_init(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, rng, n_in, n_out, dtype):
        self.w = _uniform_init(rng, (n_in, n_out), n_in, n_out, dtype)
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class Mlp2(Module):
    """Two-layer perceptron with a ReLU between."""

    def __init__(self, rng, n_in, hidden, n_out, dtype):
        self.fc1 = Linear(rng, n_in, hidden, dtype)
        self.fc2 = Linear(rng, hidden, n_out, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2.forward(ad.relu(self.fc1.forward(x)))


class LayerNorm(Module):
    def __init__(self, width, dtype):
        self.gain = Tensor(np.ones(width, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


class Conv(Module):
    def __init__(self, rng, c_in, c_out, kernel, stride, padding, dtype):
        fan_in = c_in * kernel * kernel
        fan_out = c_out * kernel * kernel
        self.w = _uniform_init(rng, (c_out, c_in, kernel, kernel), fan_in, fan_out, dtype)
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class Attention(Module):
    """softmax(f_Q(x) f_K(kv)^T / sqrt(d)) f_V(kv) + x, multi-head.

    The residual is part of the operation itself; there is no output
    projection. Keys and values may come from a different source than the
    queries (cross-attention over image features, or tokens pooled from all
    frames).
    """

    def __init__(self, rng, dim_q, dim_kv, heads, dtype):
        self.heads = heads
        self.dim = dim_q
        self.f_q = Linear(rng, dim_q, dim_q, dtype)
        self.f_k = Linear(rng, dim_kv, dim_q, dtype)
        self.f_v = Linear(rng, dim_kv, dim_q, dtype)

    def project_kv(self, source: Tensor):
        m = source.shape[0]
        h, d = self.heads, self.dim // self.heads
        k = ad.transpose(ad.reshape(self.f_k.forward(source), (m, h, d)), (1, 2, 0))
        v = ad.transpose(ad.reshape(self.f_v.forward(source), (m, h, d)), (1, 0, 2))
        return k, v  # [h, d, M], [h, M, d]

    def attend(self, x: Tensor, k: Tensor, v: Tensor) -> Tensor:
        n = x.shape[0]
        h, d = self.heads, self.dim // self.heads
        q = ad.transpose(ad.reshape(self.f_q.forward(x), (n, h, d)), (1, 0, 2))
        scores = ad.mul(ad.matmul(q, k), 1.0 / math.sqrt(d))
        weights = ad.softmax(scores, axis=-1)
        pooled = ad.matmul(weights, v)
        out = ad.reshape(ad.transpose(pooled, (1, 0, 2)), (n, self.dim))
        return ad.add(out, x)

    def forward(self, x: Tensor, keys_src: Tensor, values_src: Tensor) -> Tensor:
        m = keys_src.shape[0]
        h, d = self.heads, self.dim // self.heads
        k = ad.transpose(ad.reshape(self.f_k.forward(keys_src), (m, h, d)), (1, 2, 0))
        v = ad.transpose(ad.reshape(self.f_v.forward(values_src), (m, h, d)), (1, 0, 2))
        return self.attend(x, k, v)

    def self_attention(self, x: Tensor) -> Tensor:
        return self.forward(x, x, x)

    def multi_frame_attention(self, x: Tensor, all_frame_tokens) -> Tensor:
        """Queries from one frame over the token set pooled from all frames."""
        kv = ad.concat(list(all_frame_tokens), axis=0)
        return self.forward(x, kv, kv)


class DecoderBlock(Module):
    def __init__(self, rng, cfg: ModelConfig, dtype):
        cq = cfg.token_width
        self.cross = Attention(rng, cq, cfg.feature_channels, cfg.heads, dtype)
        self.norm_cross = LayerNorm(cq, dtype)
        self.self_attn = Attention(rng, cq, cq, cfg.heads, dtype)
        self.norm_self = LayerNorm(cq, dtype)
        self.ffn = Mlp2(rng, cq, cfg.ffn_width, cq, dtype)
        self.norm_ffn = LayerNorm(cq, dtype)
        self.frame_attn = Attention(rng, cq, cq, cfg.heads, dtype)
        self.norm_frame = LayerNorm(cq, dtype)

    def forward(self, tokens_by_frame, memories, multi_frame=True):
        mids = []
        for x, (values_src, keys_src) in zip(tokens_by_frame, memories):
            x = self.norm_cross.forward(self.cross.forward(x, keys_src, values_src))
            x = self.norm_self.forward(self.self_attn.self_attention(x))
            x = self.norm_ffn.forward(ad.add(self.ffn.forward(x), x))
            mids.append(x)
        out = []
        with tape_section(MFA_TAG):
            if multi_frame:
                pooled = ad.concat(mids, axis=0)
                k, v = self.frame_attn.project_kv(pooled)
                for x in mids:
                    out.append(self.norm_frame.forward(self.frame_attn.attend(x, k, v)))
            else:
                for x in mids:
                    out.append(self.norm_frame.forward(self.frame_attn.self_attention(x)))
        return out


class Encoder(Module):
    """Strided conv stack: 3 -> feature_channels at 1/S resolution."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        n_stages = int(math.log2(cfg.downsample))
        chans = [min(cfg.feature_channels, 16 * 2 ** i) for i in range(n_stages - 1)]
        chans.append(cfg.feature_channels)
        self.convs = []
        self.norms = []
        prev = 3
        for c in chans:
            self.convs.append(Conv(rng, prev, c, kernel=3, stride=2, padding=1, dtype=dtype))
            self.norms.append(LayerNorm(c, dtype))
            prev = c

    def forward(self, image: Tensor) -> Tensor:
        x = image
        for conv, norm in zip(self.convs, self.norms):
            x = conv.forward(x)
            c, h, w = x.shape
            x = ad.transpose(x, (1, 2, 0))
            x = ad.relu(norm.forward(x))
            x = ad.transpose(x, (2, 0, 1))
        return x


class PixelDecoder(Module):
    """Two convs + bilinear upsample: features at 1/S -> embeddings at 1/4."""

    def __init__(self, rng, cfg: ModelConfig, dtype):
        self.conv1 = Conv(rng, cfg.feature_channels, cfg.feature_channels, 3, 1, 1, dtype)
        self.conv2 = Conv(rng, cfg.feature_channels, cfg.embed_width, 3, 1, 1, dtype)
        self.factor = cfg.downsample // 4

    def forward(self, feat: Tensor) -> Tensor:
        x = self.conv2.forward(ad.relu(self.conv1.forward(feat)))
        return ad.bilinear_upsample(x, self.factor) if self.factor > 1 else x


def positional_encoding_2d(channels: int, h: int, w: int, dtype=np.float32) -> np.ndarray:
    """Fixed 2-D sinusoidal map [channels, h, w]; half y-driven, half x."""
    if channels % 4:
        raise ConfigError("positional encoding needs channels divisible by 4")
    c4 = channels // 4
    omega = 1.0 / (10000.0 ** (np.arange(c4) / c4))
    ys = (np.arange(h) + 0.5) / h * 2.0 * math.pi
    xs = (np.arange(w) + 0.5) / w * 2.0 * math.pi
    ya = ys[:, None] * omega[None, :]    # [h, c4]
    xa = xs[:, None] * omega[None, :]    # [w, c4]
    pe = np.zeros((channels, h, w), dtype=dtype)
    pe[0:c4] = np.sin(ya).T[:, :, None]
    pe[c4 : 2 * c4] = np.cos(ya).T[:, :, None]
    pe[2 * c4 : 3 * c4] = np.sin(xa).T[:, None, :]
    pe[3 * c4 :] = np.cos(xa).T[:, None, :]
    return pe


@dataclass
class FramePrediction:
    """Per-token outputs for one frame."""

    score_logits: Tensor        # [N_q]
    scores: Tensor              # [N_q] in (0, 1)
    mask_logits: Tensor         # [N_q, H/4, W/4]
    embeddings: Tensor          # [N_q, C_r], unit norm
    mask_embed: Tensor          # [N_q, C_e]
    pixel_embed: Tensor         # [C_e, H/4, W/4]
    full_logits: Tensor | None = None   # [N_q, H, W] (final layer only)
    masks: np.ndarray | None = None     # bool [N_q, H, W]


class SegTrackNet(Module):
    """Full pipeline from image frames to per-token predictions."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng([int(seed), _INIT_TAG])
        self.encoder = Encoder(rng, config, dtype)
        self.pixel_decoder = PixelDecoder(rng, config, dtype)
        self.blocks = [DecoderBlock(rng, config, dtype) for _ in range(config.blocks)]
        self.initial_queries = Tensor(
            rng.normal(0.0, 0.02, size=(config.queries, config.token_width)).astype(dtype),
            requires_grad=True)
        self.score_head = Linear(rng, config.token_width, 1, dtype)
        self.mask_head = Mlp2(rng, config.token_width, config.token_width, config.embed_width, dtype)
        self.track_head = Mlp2(rng, config.token_width, config.token_width, config.track_width, dtype)
        self.log_temp = Tensor(np.asarray(math.log(1.0 / 0.07), dtype=dtype), requires_grad=True)

    # -- heads -------------------------------------------------------------

    def predict_scores(self, tokens: Tensor):
        logits = ad.reshape(self.score_head.forward(tokens), (tokens.shape[0],))
        return logits, ad.sigmoid(logits)

    def predict_track_embeddings(self, tokens: Tensor) -> Tensor:
        return ad.l2_normalize(self.track_head.forward(tokens))

    def predict_masks(self, tokens: Tensor, pixel_embed: Tensor):
        """Mask logits at 1/4 resolution from token/pixel embedding dots."""
        n_q = tokens.shape[0]
        c_e, h4, w4 = pixel_embed.shape
        emb = self.mask_head.forward(tokens)
        logits = ad.reshape(ad.matmul(emb, ad.reshape(pixel_embed, (c_e, h4 * w4))), (n_q, h4, w4))
        return emb, logits

    def upsample_masks(self, mask_logits: Tensor):
        """Full-resolution logits and thresholded binary masks."""
        full = ad.bilinear_upsample(mask_logits, 4)
        return full, full.values > 0.0  # sigmoid(z) > 0.5 <=> z > 0

    # -- pipeline ----------------------------------------------------------

    def encode_frame(self, image) -> tuple[Tensor, np.ndarray]:
        """Feature map plus its positional-encoding map."""
        image = image if isinstance(image, Tensor) else Tensor(np.asarray(image, dtype=self.dtype))
        if image.ndim != 3 or image.shape[0] != 3:
            raise ConfigError(f"expected [3, H, W] image, got {image.shape}")
        s = self.config.downsample
        if image.shape[1] % s or image.shape[2] % s:
            raise ConfigError(f"image extents {image.shape[1:]} not divisible by downsample {s}")
        feat = self.encoder.forward(image)
        pos = positional_encoding_2d(self.config.feature_channels, feat.shape[1], feat.shape[2],
                                     dtype=self.dtype)
        return feat, pos

    def forward_sequence(self, images, with_aux: bool = False):
        """Run the pipeline over T frames.

        Returns a list of FramePrediction (final layer, with full-resolution
        masks), or with ``with_aux`` a list over layers 0..L of per-frame
        predictions at 1/4 resolution (layer 0 reads the initial queries).
        """
        images = list(images)
        shapes = {tuple(np.asarray(i).shape) for i in images}
        if len(shapes) != 1:
            raise ConfigError(f"frames disagree on extents: {sorted(shapes)}")
        memories = []
        pixel_embeds = []
        for img in images:
            feat, pos = self.encode_frame(img)
            pixel_embeds.append(self.pixel_decoder.forward(feat))
            c_f = self.config.feature_channels
            flat = ad.transpose(ad.reshape(feat, (c_f, feat.shape[1] * feat.shape[2])), (1, 0))
            pos_flat = pos.reshape(c_f, -1).T
            memories.append((flat, ad.add(flat, Tensor(pos_flat))))

        tokens = [self.initial_queries for _ in images]
        per_layer = [tokens]
        for block in self.blocks:
            tokens = block.forward(tokens, memories, multi_frame=self.config.multi_frame)
            per_layer.append(tokens)

        layer_ids = range(len(per_layer)) if with_aux else [len(per_layer) - 1]
        outputs = []
        for layer in layer_ids:
            frame_preds = []
            for t in range(len(images)):
                toks = per_layer[layer][t]
                score_logits, scores = self.predict_scores(toks)
                emb, mask_logits = self.predict_masks(toks, pixel_embeds[t])
                frame_preds.append(FramePrediction(
                    score_logits=score_logits,
                    scores=scores,
                    mask_logits=mask_logits,
                    embeddings=self.predict_track_embeddings(toks),
                    mask_embed=emb,
                    pixel_embed=pixel_embeds[t],
                ))
            outputs.append(frame_preds)

        if with_aux:
            return outputs
        final = outputs[0]
        for pred in final:
            pred.full_logits, pred.masks = self.upsample_masks(pred.mask_logits)
        return final
