"""Angular Fourier analysis of the first learned layer, and covariance checks.

The first local layer F1 of a trained encoder inherits the scattering
channel structure: its columns split by path order into blocks indexed by
``(color,)``, ``(color, j1, theta1)`` and ``(color, j1, j2, theta1, theta2)``.
Transforming the angle axes to the Fourier domain exposes how smoothly the
layer acts along wavelet orientations; thresholding there sparsifies the
layer, and the energy profiles over angular frequency quantify how much of
the layer is invariant to local rotations.
"""

from dataclasses import dataclass, field

import numpy as np

from .encoder import clone_model, forward
from .errors import InvalidArgumentError, UnsupportedConfigError
from .scattering import channel_count, enumerate_paths, scattering2d


@dataclass(frozen=True)
class ScatteringLayout:
    """Channel layout of a scattering map feeding the encoder."""

    J: int
    L: int
    colors: int

    @property
    def paths_per_color(self):
        return channel_count(self.J, self.L, 1)

    @property
    def scale_pairs(self):
        return [(j1, j2) for j1 in range(self.J) for j2 in range(j1 + 1, self.J)]


@dataclass
class AngularOperatorView:
    """F1 weights regrouped by path order.

    ``f0``: (K, colors); ``f1``: (K, colors, J, L);
    ``f2``: (K, colors, n_pairs, L, L) with pairs ordered like
    ``ScatteringLayout.scale_pairs``.  Arrays are complex after
    :func:`angular_dft`.
    """

    layout: ScatteringLayout
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    zero_filters: list = field(default_factory=list)


@dataclass
class SpectrumReport:
    """Angular energy profiles and coefficient-magnitude histograms.

    ``omega1[w]`` sums ``|f1_hat|^2`` over (k, c, j1) at angular frequency
    ``w``; ``omega2[w1, w2]`` does the same for ``f2_hat``.  ``histograms``
    maps order -> (bin_edges, counts) over coefficient magnitudes.
    """

    omega1: np.ndarray
    omega2: np.ndarray
    histograms: dict


def split_first_layer(model, layout):
    """Reindex the first local layer by (order, color, scales, angles)."""
    weight = model.local_layers[0][0].weight
    expected = layout.colors * layout.paths_per_color
    if weight.shape[1] != expected:
        raise InvalidArgumentError(
            f"first-layer width {weight.shape[1]} does not match layout "
            f"({expected} channels)"
        )
    k = weight.shape[0]
    j, l, c = layout.J, layout.L, layout.colors
    per = layout.paths_per_color
    blocks = weight.reshape(k, c, per)
    f0 = blocks[:, :, 0].copy()
    f1 = blocks[:, :, 1 : 1 + j * l].reshape(k, c, j, l).copy()
    n_pairs = len(layout.scale_pairs)
    f2 = blocks[:, :, 1 + j * l :].reshape(k, c, n_pairs, l, l).copy()
    return AngularOperatorView(layout=layout, f0=f0, f1=f1, f2=f2)


def reassemble_first_layer(view):
    """Inverse of :func:`split_first_layer`; exact for untransformed views."""
    layout = view.layout
    k = view.f0.shape[0]
    per = layout.paths_per_color
    blocks = np.empty((k, layout.colors, per), dtype=view.f0.dtype)
    blocks[:, :, 0] = view.f0
    blocks[:, :, 1 : 1 + layout.J * layout.L] = view.f1.reshape(
        k, layout.colors, layout.J * layout.L
    )
    blocks[:, :, 1 + layout.J * layout.L :] = view.f2.reshape(
        k, layout.colors, -1
    )
    return blocks.reshape(k, layout.colors * per)


def normalize_view(view):
    """Scale each output filter to unit l2 norm within each order block.

    Filters with zero norm are left unchanged and recorded in
    ``zero_filters`` as ``(order, k)`` tuples.
    """
    flagged = []

    def scaled(arr, order):
        out = arr.copy()
        flat = out.reshape(out.shape[0], -1)
        norms = np.sqrt((np.abs(flat) ** 2).sum(axis=1))
        for k_idx in np.flatnonzero(norms == 0.0):
            flagged.append((order, int(k_idx)))
        safe = np.where(norms == 0.0, 1.0, norms)
        return out / safe.reshape((-1,) + (1,) * (out.ndim - 1))

    return AngularOperatorView(
        layout=view.layout,
        f0=scaled(view.f0, 0),
        f1=scaled(view.f1, 1),
        f2=scaled(view.f2, 2),
        zero_filters=flagged,
    )


def angular_dft(view):
    """Unnormalized DFT along theta1 of f1 and along (theta1, theta2) of f2."""
    return AngularOperatorView(
        layout=view.layout,
        f0=view.f0.copy(),
        f1=np.fft.fft(view.f1, axis=-1),
        f2=np.fft.fft2(view.f2, axes=(-2, -1)),
        zero_filters=list(view.zero_filters),
    )


def angular_idft(view):
    """Inverse of :func:`angular_dft` (carries the 1/L factors)."""
    return AngularOperatorView(
        layout=view.layout,
        f0=view.f0.copy(),
        f1=np.fft.ifft(view.f1, axis=-1),
        f2=np.fft.ifft2(view.f2, axes=(-2, -1)),
        zero_filters=list(view.zero_filters),
    )


def threshold_sparsify(model, layout, epsilon):
    """Zero angular-Fourier coefficients of F1 with magnitude <= epsilon.

    The order-1 and order-2 blocks are transformed, thresholded, inverse
    transformed and reinstalled into a copy of the model; the order-0 block
    is untouched.  Returns ``(model_copy, sparsity_fraction)`` where the
    fraction counts zeroed coefficients among all f1/f2 Fourier
    coefficients.  ``epsilon = 0`` reproduces the model up to rounding.
    """
    if epsilon < 0:
        raise InvalidArgumentError("epsilon must be >= 0")
    view = split_first_layer(model, layout)
    hat = angular_dft(view)
    zeroed = 0
    total = hat.f1.size + hat.f2.size
    for arr in (hat.f1, hat.f2):
        mask = np.abs(arr) <= epsilon
        arr[mask] = 0.0
        zeroed += int(mask.sum())
    back = angular_idft(hat)
    # conjugate-symmetric masks keep the inverse real; drop rounding residue
    new_weight = reassemble_first_layer(
        AngularOperatorView(
            layout=layout, f0=back.f0.real, f1=back.f1.real, f2=back.f2.real
        )
    )
    out = clone_model(model)
    out.local_layers[0][0].weight = new_weight
    return out, zeroed / total


def fourier_magnitudes(model, layout, normalized=True):
    """|F1_hat| coefficients of the order-1 and order-2 blocks.

    With ``normalized`` the per-filter, per-order unit-norm scaling is
    applied first (the convention used for the amplitude histograms).
    Returns ``(mag1, mag2)`` flat arrays.
    """
    view = split_first_layer(model, layout)
    if normalized:
        view = normalize_view(view)
    hat = angular_dft(view)
    return np.abs(hat.f1).ravel(), np.abs(hat.f2).ravel()


def percentile_epsilon(model, layout, quantile=0.8):
    """Threshold whose magnitude-quantile over the raw f1/f2 Fourier
    coefficients yields the requested zeroed fraction."""
    mag1, mag2 = fourier_magnitudes(model, layout, normalized=False)
    return float(np.quantile(np.concatenate([mag1, mag2]), quantile))


def omega_spectra(view, bins=50):
    """Angular energy profiles of a transformed view.

    ``omega1(w1) = sum_{k,c,j1} |f1_hat(k,c,j1,w1)|^2`` and its order-2
    companion over ``(w1, w2)``; plus magnitude histograms per order.
    """
    omega1 = (np.abs(view.f1) ** 2).sum(axis=(0, 1, 2))
    omega2 = (np.abs(view.f2) ** 2).sum(axis=(0, 1, 2))
    histograms = {}
    for order, arr in ((1, view.f1), (2, view.f2)):
        mags = np.abs(arr).ravel()
        counts, edges = np.histogram(mags, bins=bins)
        histograms[order] = (edges, counts)
    return SpectrumReport(omega1=omega1, omega2=omega2, histograms=histograms)


def low_frequency_share(report, radius=1):
    """Share of omega1 energy carried by frequencies within ``radius`` of 0."""
    total = report.omega1.sum()
    if total == 0:
        return 0.0
    l = len(report.omega1)
    idx = {w % l for w in range(-radius, radius + 1)}
    return float(sum(report.omega1[i] for i in sorted(idx)) / total)


def torus_rot90(arr, quarter_turns=1):
    """Exact 90-degree rotation on the periodic pixel grid (last two axes).

    One quarter turn maps sample ``(i, j)`` to ``(-j mod n, i)``; on a
    periodic domain this commutes exactly with circular convolution by a
    correspondingly rotated filter, unlike the off-grid rotation about the
    array center.
    """
    out = np.asarray(arr)
    for _ in range(quarter_turns % 4):
        out = np.roll(np.rot90(out, k=1, axes=(-2, -1)), 1, axis=-2)
    return out


@dataclass
class CovarianceReport:
    """Relative l2 covariance errors per order for one rotated image.

    ``s2_error_first_only`` shifts only theta1 (instead of both angles);
    comparing it with ``s2_error`` exhibits that the relative angle
    ``theta2 - theta1`` is the rotation invariant.
    """

    quarter_turns: int
    s0_error: float
    s1_error: float
    s2_error: float
    s2_error_first_only: float


def _relative_error(lhs, rhs):
    denom = np.linalg.norm(rhs)
    if denom == 0:
        return 0.0 if np.linalg.norm(lhs) == 0 else np.inf
    return float(np.linalg.norm(lhs - rhs) / denom)


def covariance_check(image, bank, quarter_turns):
    """Measure the rotation-covariance identities on one image.

    Rotates the image by ``quarter_turns`` exact grid quarter turns,
    scatters both versions, and compares ``S(rot x)`` against the
    prediction from ``S(x)``: angle indices shifted by
    ``quarter_turns * L / 4`` (modulo L, both angles for order 2) and the
    coefficient grid rotated the same way.
    """
    config = bank.config
    if config.L % 4 != 0:
        raise UnsupportedConfigError(
            f"covariance check needs L divisible by 4, got L={config.L}"
        )
    if quarter_turns not in (0, 1, 2, 3):
        raise InvalidArgumentError("quarter_turns must be in {0, 1, 2, 3}")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]

    rotated = torus_rot90(image, quarter_turns)
    s_rot = scattering2d(rotated, bank)
    s_ref = scattering2d(image, bank)
    shift = quarter_turns * (config.L // 4)
    l = config.L

    paths = s_ref.paths
    index_of = {
        (p.order, p.j1, p.theta1, p.j2, p.theta2): i for i, p in enumerate(paths)
    }

    def predicted(path, both_angles=True):
        # S(rot x) at angle t equals rot(S x) at angle t - shift
        if path.order == 0:
            src = path
        elif path.order == 1:
            src = (1, path.j1, (path.theta1 - shift) % l, -1, -1)
        else:
            t2 = (path.theta2 - shift) % l if both_angles else path.theta2
            src = (2, path.j1, (path.theta1 - shift) % l, path.j2, t2)
        key = src if isinstance(src, tuple) else (0, -1, -1, -1, -1)
        return index_of[key]

    errors = {}
    for order, both in ((0, True), (1, True), (2, True), (2, False)):
        lhs = []
        rhs = []
        for i, p in enumerate(paths):
            if p.order != order:
                continue
            for c in range(s_ref.colors):
                lhs.append(s_rot.channel(c, i))
                rhs.append(
                    torus_rot90(s_ref.channel(c, predicted(p, both)), quarter_turns)
                )
        key = (order, both)
        errors[key] = _relative_error(np.stack(lhs), np.stack(rhs))
    return CovarianceReport(
        quarter_turns=quarter_turns,
        s0_error=errors[(0, True)],
        s1_error=errors[(1, True)],
        s2_error=errors[(2, True)],
        s2_error_first_only=errors[(2, False)],
    )
