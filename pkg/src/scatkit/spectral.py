"""Discrete Fourier engine and the periodized convolution/subsampling kernel.

All spatial grids are square with a power-of-two side.  A "complex image" is
simply a complex ndarray of shape ``(..., side, side)``; leading axes are
treated as independent batch lanes.  The DFT convention is numpy's:
unnormalized forward transform, inverse carries the ``1/side**2`` factor,
frequency origin at index ``(0, 0)`` with no fftshift.
"""

import numpy as np
import scipy.fft as _fft

from .errors import InvalidArgumentError


def _check_side(side):
    if side < 1 or (side & (side - 1)) != 0:
        raise InvalidArgumentError(f"side must be a power of two, got {side}")


def _check_square(img):
    if img.ndim < 2 or img.shape[-1] != img.shape[-2]:
        raise InvalidArgumentError(f"expected a square image, got shape {img.shape}")
    _check_side(img.shape[-1])


def dft2(img):
    """Forward 2D DFT over the last two axes.

    Parameters
    ----------
    img : ndarray, shape (..., side, side)
        Real or complex input; ``side`` must be a power of two.

    Returns
    -------
    ndarray, complex, same shape
        Unnormalized spectrum, ``out[0, 0]`` holding the sum of all samples.
    """
    img = np.asarray(img)
    _check_square(img)
    return _fft.fft2(img, axes=(-2, -1))


def idft2(spectrum):
    """Inverse of :func:`dft2` (carries the ``1/side**2`` normalization)."""
    spectrum = np.asarray(spectrum)
    _check_square(spectrum)
    return _fft.ifft2(spectrum, axes=(-2, -1))


def fold_spectrum(spectrum, k):
    """Sum the ``2**k x 2**k`` spectral translates of a spectrum.

    Folding by ``2**k`` divided by ``4**k`` is the spectral form of spatial
    decimation: ``idft2(fold_spectrum(dft2(x), k) / 4**k)[n] == x[2**k n]``.
    The undivided sum is used when periodizing filters, where the ``4**k``
    factor doubles as the Riemann measure of the coarser grid.
    """
    spectrum = np.asarray(spectrum)
    _check_square(spectrum)
    side = spectrum.shape[-1]
    step = 1 << k
    if step > side:
        raise InvalidArgumentError(f"cannot fold side {side} by 2**{k}")
    m = side // step
    shape = spectrum.shape[:-2] + (step, m, step, m)
    return spectrum.reshape(shape).sum(axis=(-4, -2))


def conv_subsample(signal_spectrum, filter_values, k):
    """Convolve in the Fourier domain and decimate by ``2**k``.

    Computes ``(x * h)(2**k u)`` for the signal ``x`` whose spectrum is given,
    via a pointwise spectral product, folding of the product by ``2**k`` and
    an inverse DFT at the reduced size.  Equivalent to direct circular
    convolution followed by decimation.

    Parameters
    ----------
    signal_spectrum : ndarray, shape (..., side, side)
        Spectrum of the signal, e.g. ``dft2(x)``.
    filter_values : ndarray, shape (side, side)
        Filter spectrum at the same resolution as the signal.
    k : int
        Subsampling exponent; ``2**k`` must divide ``side``.

    Returns
    -------
    ndarray, complex, shape (..., side / 2**k, side / 2**k)
        Spatial-domain result on the decimated grid.
    """
    signal_spectrum = np.asarray(signal_spectrum)
    filter_values = np.asarray(filter_values)
    _check_square(signal_spectrum)
    if filter_values.shape != signal_spectrum.shape[-2:]:
        raise InvalidArgumentError(
            f"filter resolution {filter_values.shape} does not match signal "
            f"resolution {signal_spectrum.shape[-2:]}"
        )
    if k < 0 or (1 << k) > signal_spectrum.shape[-1]:
        raise InvalidArgumentError(f"invalid subsample exponent {k}")
    product = signal_spectrum * filter_values
    folded = fold_spectrum(product, k) / float(4**k)
    return _fft.ifft2(folded, axes=(-2, -1))


def modulus(img):
    """Pointwise complex modulus; returns a real array."""
    return np.abs(np.asarray(img))


def pad_reflect(img, target):
    """Pad an image to ``target x target`` by mirror reflection.

    The image is centered in the padded frame (extra pixel on the
    bottom/right when the margin is odd).  Reflection excludes the edge
    sample, so a ``target`` equal to the image size is the identity.

    Parameters
    ----------
    img : ndarray, shape (..., H, W)
    target : int
        Power of two, at least ``max(H, W)``.

    Returns
    -------
    ndarray, complex, shape (..., target, target)
    """
    img = np.asarray(img)
    if img.ndim < 2:
        raise InvalidArgumentError("expected at least a 2D image")
    h, w = img.shape[-2:]
    _check_side(target)
    if target < max(h, w):
        raise InvalidArgumentError(f"target {target} smaller than image {h}x{w}")
    top = (target - h) // 2
    left = (target - w) // 2
    pad = [(0, 0)] * (img.ndim - 2)
    pad += [(top, target - h - top), (left, target - w - left)]
    return np.pad(img, pad, mode="reflect").astype(np.complex128)


def unpad(out, original_hw, padded_side):
    """Crop a coefficient grid back to the region covering the original image.

    ``out`` has side ``padded_side / 2**J`` for some stride ``2**J``; the
    crop keeps the ``ceil(H / stride) x ceil(W / stride)`` block whose
    coefficients sample the unpadded image region.
    """
    out = np.asarray(out)
    h, w = original_hw
    side = out.shape[-1]
    if padded_side % side != 0:
        raise InvalidArgumentError(
            f"output side {side} does not divide padded side {padded_side}"
        )
    stride = padded_side // side
    top = (padded_side - h) // 2
    left = (padded_side - w) // 2
    r0 = top // stride
    c0 = left // stride
    rows = -(-h // stride)
    cols = -(-w // stride)
    return out[..., r0 : r0 + rows, c0 : c0 + cols]
