from .loop import (
    METRIC_COLUMNS,
    TrainConfig,
    augment_clip,
    clip_loss_terms,
    draw_augment_params,
    load_train_config,
    rotate_nearest,
    train_loop,
    train_presets,
    weighted_total,
    write_train_config,
)
from .losses import (
    ContrastiveConfig,
    LossWeights,
    contrastive_terms,
    cosine_distance,
    loss_bce_mask,
    loss_class,
    loss_contrastive,
    loss_dice,
    loss_infonce,
    total_loss,
)
from .matching import MatchResult, downsample_mask, hungarian, mask_iou_matrix, match_predictions_to_gt

__all__ = [
    "ContrastiveConfig",
    "LossWeights",
    "MatchResult",
    "METRIC_COLUMNS",
    "TrainConfig",
    "augment_clip",
    "clip_loss_terms",
    "contrastive_terms",
    "cosine_distance",
    "downsample_mask",
    "draw_augment_params",
    "hungarian",
    "load_train_config",
    "loss_bce_mask",
    "loss_class",
    "loss_contrastive",
    "loss_dice",
    "loss_infonce",
    "mask_iou_matrix",
    "match_predictions_to_gt",
    "rotate_nearest",
    "total_loss",
    "train_loop",
    "train_presets",
    "weighted_total",
    "write_train_config",
]
