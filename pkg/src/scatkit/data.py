"""Dataset ingestion (CIFAR-10 binary, PPM), subsets and augmentation."""

import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidArgumentError

CIFAR_SIDE = 32
_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE  # label byte + 3 plane-major planes
_TRAIN_BATCHES = [f"data_batch_{i}.bin" for i in range(1, 6)]
_TEST_BATCH = "test_batch.bin"


@dataclass
class LabeledImageSet:
    """Images ``(n, 3, H, W)`` scaled to [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __len__(self):
        return len(self.labels)


def _parse_cifar_file(path, class_count=10):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % _RECORD != 0:
        record = len(raw) // _RECORD
        raise FormatError(
            f"{path}: truncated at record {record}", offset=record * _RECORD
        )
    n = len(raw) // _RECORD
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(n, _RECORD)
    labels = buf[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= class_count)
    if bad.size:
        raise FormatError(
            f"{path}: label byte {labels[bad[0]]} > {class_count - 1} "
            f"in record {bad[0]}",
            offset=int(bad[0]) * _RECORD,
        )
    images = buf[:, 1:].reshape(n, 3, CIFAR_SIDE, CIFAR_SIDE).astype(np.float64)
    return images / 255.0, labels


def load_cifar10(directory):
    """Load the CIFAR-10 binary batches from ``directory``.

    Expects the standard file names (``data_batch_1.bin`` .. ``_5.bin`` and
    ``test_batch.bin``); each file holds 3073-byte records of one label byte
    followed by plane-major RGB pixels.

    Returns ``(train, test)`` as :class:`LabeledImageSet`.
    """
    for name in _TRAIN_BATCHES + [_TEST_BATCH]:
        if not os.path.exists(os.path.join(directory, name)):
            raise FormatError(f"missing CIFAR-10 batch file {name} in {directory}")
    train_parts = [_parse_cifar_file(os.path.join(directory, n)) for n in _TRAIN_BATCHES]
    test_images, test_labels = _parse_cifar_file(os.path.join(directory, _TEST_BATCH))
    train = LabeledImageSet(
        images=np.concatenate([p[0] for p in train_parts]),
        labels=np.concatenate([p[1] for p in train_parts]),
        class_count=10,
    )
    test = LabeledImageSet(images=test_images, labels=test_labels, class_count=10)
    return train, test


def save_cifar10_batch(path, images, labels):
    """Write images/labels as one CIFAR-10 binary batch (8-bit quantized)."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 4 or images.shape[1:] != (3, CIFAR_SIDE, CIFAR_SIDE):
        raise InvalidArgumentError(
            f"expected (n, 3, {CIFAR_SIDE}, {CIFAR_SIDE}) images, got {images.shape}"
        )
    quantized = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        for img, label in zip(quantized, labels):
            fh.write(bytes([int(label)]))
            fh.write(img.tobytes())


def load_ppm(path):
    """Read a binary P6 PPM with maxval 255 into a ``(3, H, W)`` array in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()

    pos = 0

    def token():
        nonlocal pos
        while pos < len(raw):
            if raw[pos : pos + 1].isspace():
                pos += 1
            elif raw[pos : pos + 1] == b"#":
                while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: unexpected end of header", offset=start)
        return raw[start:pos]

    if token() != b"P6":
        raise FormatError(f"{path}: not a binary P6 PPM", offset=0)
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise FormatError(f"{path}: malformed header: {exc}", offset=pos) from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}", offset=pos)
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    payload = raw[pos : pos + expected]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: pixel payload truncated", offset=pos + len(payload)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def save_ppm(path, image):
    """Write a ``(3, H, W)`` array in [0, 1] as a binary P6 PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise InvalidArgumentError(f"expected (3, H, W), got {image.shape}")
    quantized = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape[1:]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantized.transpose(1, 2, 0).tobytes())


def sample_subset(dataset, per_class, seed):
    """Draw ``per_class`` samples from every class, without replacement.

    Selection is deterministic for a given ``seed``; samples are returned
    class-major (all of class 0 first).
    """
    if per_class < 0:
        raise InvalidArgumentError("per_class must be >= 0")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == c)
        if members.size < per_class:
            raise InvalidArgumentError(
                f"class {c} has {members.size} samples, need {per_class}"
            )
        pick = rng.choice(members, size=per_class, replace=False)
        chosen.append(np.sort(pick))
    idx = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    idx = idx.astype(np.int64)
    return LabeledImageSet(
        images=dataset.images[idx],
        labels=dataset.labels[idx],
        class_count=dataset.class_count,
    )


def augment(image, rng, crop_padding=4, horizontal_flip=True):
    """Reflection-pad, randomly crop back to size, and maybe flip.

    Draws, in order: the crop offsets (two integers in ``[0, 2*padding]``)
    and the flip coin.  With the center offsets and no flip the output
    equals the input.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise InvalidArgumentError(f"expected (colors, H, W), got {image.shape}")
    out = image
    if crop_padding > 0:
        h, w = image.shape[1:]
        p = crop_padding
        padded = np.pad(image, ((0, 0), (p, p), (p, p)), mode="reflect")
        dy, dx = rng.integers(0, 2 * p + 1, size=2)
        out = padded[:, dy : dy + h, dx : dx + w]
    if horizontal_flip and rng.random() < 0.5:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)
