"""Scan geometry and the token order used by the autoregressive model.

A scan is a ``uint8`` array of shape ``(height, width, channels)`` whose cells
are intensity levels in ``[0, levels)``. Tokens run over pixels in row-major
order from the top-left corner, with channels in order R, G, B inside each
pixel.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ScanConfig:
    height: int = 8
    width: int = 8
    channels: int = 3
    levels: int = 8

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"scan {name} must be positive, got {getattr(self, name)}")
        if not 2 <= self.levels <= 256:
            raise ConfigError(f"scan levels must lie in [2, 256], got {self.levels}")

    @property
    def shape(self):
        return (self.height, self.width, self.channels)

    @property
    def n_tokens(self):
        return self.height * self.width * self.channels

    @property
    def n_cells(self):
        return self.n_tokens

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scan keys: {sorted(unknown)}")
        return cls(**d)


def check_scan(scan, cfg):
    scan = np.asarray(scan)
    if scan.shape != cfg.shape:
        raise ShapeError(f"scan of shape {scan.shape} does not match config shape {cfg.shape}")
    if scan.size and (scan.min() < 0 or scan.max() >= cfg.levels):
        raise ShapeError(f"scan levels must lie in [0, {cfg.levels})")
    return scan


def tokenize(scan, cfg):
    """Token triples ``(pixel, channel, level)`` in generation order."""
    scan = check_scan(scan, cfg)
    levels = scan.reshape(-1)
    n_pix = cfg.height * cfg.width
    pixel = np.repeat(np.arange(n_pix), cfg.channels)
    channel = np.tile(np.arange(cfg.channels), n_pix)
    return np.stack([pixel, channel, levels.astype(np.int64)], axis=1)


def detokenize(tokens, cfg):
    tokens = np.asarray(tokens)
    if tokens.shape != (cfg.n_tokens, 3):
        raise ShapeError(f"expected {cfg.n_tokens} tokens, got array of shape {tokens.shape}")
    return tokens[:, 2].astype(np.uint8).reshape(cfg.shape)


def token_levels(scans, cfg):
    """Level sequences of a batch of scans, shape (batch, n_tokens)."""
    scans = np.asarray(scans)
    return scans.reshape(scans.shape[0], cfg.n_tokens).astype(np.int64)


def normalize_scan(scans, cfg):
    """Levels scaled to [0, 1] and flattened per scan."""
    scans = np.asarray(scans, dtype=np.float64)
    lead = scans.shape[: scans.ndim - 3]
    return scans.reshape(lead + (cfg.n_tokens,)) / (cfg.levels - 1)
