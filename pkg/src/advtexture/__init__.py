"""Expandable adversarial textures against person detectors.

Two-stage pipeline: train an expandable fully-convolutional patch
generator against a detector, then search a toroidal latent unit whose
tiling yields a texture every crop of which stays adversarial. Includes
baselines, digital-domain evaluation (AP, recall-confidence curves,
ASR/mASR, shift study) and a CLI.
"""

__version__ = "0.1.0"
