"""Feature extraction front-ends feeding the encoder.

A pipeline maps a stack of images ``(n, colors, H, W)`` to feature maps
``(n, C, S, S)``.  When given an ``rng`` it augments each image first
(training path); without one the mapping is deterministic (evaluation path).
"""

import numpy as np

from .data import augment
from .scattering import channel_count, scattering_batch


class ScatteringFeatures:
    """Scattering coefficients of (optionally augmented) images."""

    def __init__(self, bank, crop_padding=0, horizontal_flip=False, jobs=1):
        self.bank = bank
        self.crop_padding = crop_padding
        self.horizontal_flip = horizontal_flip
        self.jobs = jobs

    def _augment_all(self, images, rng):
        out = np.empty_like(images)
        for i, img in enumerate(images):
            out[i] = augment(img, rng, self.crop_padding, self.horizontal_flip)
        return out

    def extract(self, images, rng=None):
        images = np.asarray(images, dtype=np.float64)
        if rng is not None and (self.crop_padding > 0 or self.horizontal_flip):
            images = self._augment_all(images, rng)
        return scattering_batch(images, self.bank, jobs=self.jobs)

    def describe(self):
        cfg = self.bank.config
        return {
            "features": "scattering",
            "scattering": cfg.to_dict(),
            "crop_padding": self.crop_padding,
            "horizontal_flip": self.horizontal_flip,
        }

    def layout(self, colors=3):
        cfg = self.bank.config
        return {
            "J": cfg.J,
            "L": cfg.L,
            "colors": colors,
            "channels": channel_count(cfg.J, cfg.L, colors),
        }


class RawPixelFeatures:
    """Flattened raw pixels as a 1x1 feature map (dense-network baseline)."""

    def __init__(self, crop_padding=0, horizontal_flip=False):
        self.crop_padding = crop_padding
        self.horizontal_flip = horizontal_flip

    def extract(self, images, rng=None):
        images = np.asarray(images, dtype=np.float64)
        if rng is not None and (self.crop_padding > 0 or self.horizontal_flip):
            out = np.empty_like(images)
            for i, img in enumerate(images):
                out[i] = augment(img, rng, self.crop_padding, self.horizontal_flip)
            images = out
        n = images.shape[0]
        return images.reshape(n, -1, 1, 1)

    def describe(self):
        return {
            "features": "raw_pixels",
            "crop_padding": self.crop_padding,
            "horizontal_flip": self.horizontal_flip,
        }
