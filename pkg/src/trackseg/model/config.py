"""Network hyperparameters.

Defaults are the desk-scale preset that trains on a laptop CPU; ``presets``
also carries the full-scale variant the architecture was designed around.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    blocks: int = 4              # decoder blocks (L)
    queries: int = 20            # object tokens per frame (N_q)
    token_width: int = 64        # token channels (C_q)
    feature_channels: int = 64   # encoder output channels (C_F)
    embed_width: int = 32        # mask/pixel embedding channels (C_e)
    track_width: int = 32        # tracking embedding channels (C_r)
    downsample: int = 8          # encoder stride product (S)
    heads: int = 4
    ffn_width: int = 256
    multi_frame: bool = True     # False: the cross-frame layer sees only its own frame

    def validate(self) -> "ModelConfig":
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and v < 1:
                raise ConfigError(f"{f.name} must be >= 1, got {v}")
        if self.token_width % self.heads != 0:
            raise ConfigError(f"token_width {self.token_width} not divisible by heads {self.heads}")
        if self.downsample < 4 or self.downsample & (self.downsample - 1):
            raise ConfigError(f"downsample must be a power of two >= 4, got {self.downsample}")
        if self.feature_channels % 4 != 0:
            raise ConfigError("feature_channels must be divisible by 4 (2-D sinusoidal encoding)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d).validate()


presets = {
    "tiny": ModelConfig(),
    "full": ModelConfig(blocks=10, queries=100, token_width=256, feature_channels=256,
                        embed_width=256, track_width=256, downsample=32, heads=8, ffn_width=1024),
}
