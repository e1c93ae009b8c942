"""Order-0/1/2 scattering cascade with path enumeration.

Each color channel is transformed independently.  The critically sampled
schedule subsamples ``x * psi_{j1}`` by ``2**j1``, the second wavelet stage
by ``2**(j2-j1)`` and the final averaging by the remaining factor, for a
total stride of ``2**J``.  Output channels are ordered color-major, path
within color, following :func:`enumerate_paths`.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .spectral import conv_subsample, dft2, modulus, pad_reflect, unpad


@dataclass(frozen=True)
class ScatteringPath:
    """Index tuple of one scattering coefficient channel.

    ``order`` is 0, 1 or 2; ``j1, theta1`` are set for orders >= 1 and
    ``j2, theta2`` for order 2 only (with ``j1 < j2``).
    """

    order: int
    j1: int = -1
    theta1: int = -1
    j2: int = -1
    theta2: int = -1

    def to_list(self):
        return [self.order, self.j1, self.theta1, self.j2, self.theta2]


@dataclass
class ScatteringOutput:
    """Scattering coefficients of one image.

    ``data`` has shape ``(colors * len(paths), side, side)`` with channel
    index ``c * len(paths) + path_index``.
    """

    paths: list
    spatial_side: int
    colors: int
    data: np.ndarray

    def channel(self, color, path_index):
        return self.data[color * len(self.paths) + path_index]


def enumerate_paths(J, L):
    """Canonical path order: order 0, then (j1, theta1), then (j1, j2, theta1, theta2)."""
    if J < 1 or L < 1:
        raise InvalidArgumentError("J and L must be >= 1")
    paths = [ScatteringPath(order=0)]
    for j1 in range(J):
        for t1 in range(L):
            paths.append(ScatteringPath(order=1, j1=j1, theta1=t1))
    for j1 in range(J):
        for j2 in range(j1 + 1, J):
            for t1 in range(L):
                for t2 in range(L):
                    paths.append(
                        ScatteringPath(order=2, j1=j1, theta1=t1, j2=j2, theta2=t2)
                    )
    return paths


def channel_count(J, L, colors):
    """Total output channels: ``colors * (1 + J*L + J*(J-1)/2 * L**2)``."""
    if J < 1 or L < 1 or colors < 1:
        raise InvalidArgumentError("J, L and colors must be >= 1")
    return colors * (1 + J * L + (J * (J - 1) // 2) * L * L)


def _scatter_lanes(lanes, bank):
    """Cascade for a stack of single-channel images ``(n, N, N)``."""
    config = bank.config
    J, L = config.J, config.L
    n_img = lanes.shape[0]
    side_out = config.N >> J
    n_paths = len(enumerate_paths(J, L))
    out = np.empty((n_img, n_paths, side_out, side_out))

    spectrum = dft2(lanes)
    out[:, 0] = conv_subsample(spectrum, bank.phi[0].values, J).real

    index = 1
    u_spectra = {}
    for j1 in range(J):
        for t1 in range(L):
            u = modulus(conv_subsample(spectrum, bank.psi[(j1, t1)][0].values, j1))
            u_hat = dft2(u)
            u_spectra[(j1, t1)] = u_hat
            out[:, index] = np.maximum(
                conv_subsample(u_hat, bank.phi[j1].values, J - j1).real, 0.0
            )
            index += 1

    for j1 in range(J):
        for j2 in range(j1 + 1, J):
            for t1 in range(L):
                u_hat = u_spectra[(j1, t1)]
                for t2 in range(L):
                    v = modulus(
                        conv_subsample(u_hat, bank.psi[(j2, t2)][j1].values, j2 - j1)
                    )
                    v_hat = dft2(v)
                    out[:, index] = np.maximum(
                        conv_subsample(v_hat, bank.phi[j2].values, J - j2).real, 0.0
                    )
                    index += 1
    return out


def scattering2d(image, bank):
    """Scattering transform of one image.

    Parameters
    ----------
    image : ndarray, shape (colors, H, W)
        Real image; ``H, W <= bank.config.N``.
    bank : FilterBank

    Returns
    -------
    ScatteringOutput
        Coefficients on the ``ceil(H / 2**J) x ceil(W / 2**J)`` grid covering
        the image (the padded frame is cropped away).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise InvalidArgumentError(f"expected (colors, H, W), got shape {image.shape}")
    batch = scattering_batch(image[None], bank)
    paths = enumerate_paths(bank.config.J, bank.config.L)
    data = batch[0]
    return ScatteringOutput(
        paths=paths, spatial_side=data.shape[-1], colors=image.shape[0], data=data
    )


def scattering_batch(images, bank, jobs=1):
    """Scattering transform of a batch, vectorized over ``(n, colors)`` lanes.

    Returns an array ``(n, colors * n_paths, side, side)``.  Results are
    identical for any ``jobs``; worker threads only split the batch.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise InvalidArgumentError(
            f"expected (n, colors, H, W), got shape {images.shape}"
        )
    n, colors, h, w = images.shape
    config = bank.config
    if h > config.N or w > config.N:
        raise InvalidArgumentError(
            f"image {h}x{w} larger than bank side {config.N}"
        )
    padded = pad_reflect(images.reshape(n * colors, h, w), config.N).real

    def run(chunk):
        return _scatter_lanes(chunk, bank)

    if jobs <= 1 or n * colors <= 1:
        lanes_out = run(padded)
    else:
        splits = np.array_split(np.arange(n * colors), min(jobs, n * colors))
        with ThreadPoolExecutor(max_workers=len(splits)) as pool:
            parts = list(pool.map(lambda ix: run(padded[ix]), splits))
        lanes_out = np.concatenate(parts, axis=0)

    n_paths = lanes_out.shape[1]
    side = lanes_out.shape[-1]
    out = lanes_out.reshape(n, colors * n_paths, side, side)
    cropped = unpad(out, (h, w), config.N)
    return np.ascontiguousarray(cropped)


def order2_path_energies(image, bank):
    """Diagnostic order-2 energies for every scale pair, increasing or not.

    Runs the cascade without intermediate subsampling so that non-increasing
    paths (``j2 <= j1``), which the production transform omits, are well
    defined.  Returns ``{(j1, t1, j2, t2): energy}`` where ``energy`` is the
    squared l2 norm of the averaged order-2 map.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InvalidArgumentError("diagnostic mode expects one channel (H, W)")
    config = bank.config
    J, L = config.J, config.L
    spectrum = dft2(pad_reflect(image, config.N))
    energies = {}
    for j1 in range(J):
        for t1 in range(L):
            u_hat = dft2(modulus(conv_subsample(spectrum, bank.psi[(j1, t1)][0].values, 0)))
            for j2 in range(J):
                for t2 in range(L):
                    v = modulus(
                        conv_subsample(u_hat, bank.psi[(j2, t2)][0].values, 0)
                    )
                    s2 = conv_subsample(dft2(v), bank.phi[0].values, J).real
                    energies[(j1, t1, j2, t2)] = float(np.sum(s2**2))
    return energies
