"""trackseg: joint segmentation and tracking of unseen objects in discrete frames.

Library layout:

- ``autodiff``   reverse-mode engine (tensors, tape, Adam) on numpy
- ``synthgen``   deterministic 2-D scene/sequence generator + dataset I/O
- ``model``      per-frame encoder, query decoder with a cross-frame
                 attention layer, and the mask/score/embedding heads
- ``train``      Hungarian matching, the five-term loss, training loop
- ``associator`` trajectory bank linking detections across frames
- ``evalkit``    sequence-level IoU, PR curves, video/image AP
- ``cli``        gen / train / infer / eval subcommands
"""

__version__ = "0.1.0"
