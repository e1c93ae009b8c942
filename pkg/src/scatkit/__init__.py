"""scatkit: 2D wavelet scattering, a shared local encoder, and layer analysis."""

from .filterbank import (
    FilterBank,
    FilterBankConfig,
    FourierFilter,
    build_filter_bank,
    build_gaussian,
    build_morlet,
    littlewood_paley,
    load_filter_bank,
    periodize,
    save_filter_bank,
)
from .scattering import (
    ScatteringOutput,
    ScatteringPath,
    channel_count,
    enumerate_paths,
    scattering2d,
    scattering_batch,
)
from .encoder import (
    ModelSpec,
    SleModel,
    TrainConfig,
    evaluate,
    forward,
    loss_and_backward,
    train,
)
from .analysis import (
    AngularOperatorView,
    ScatteringLayout,
    SpectrumReport,
    angular_dft,
    covariance_check,
    omega_spectra,
    split_first_layer,
    threshold_sparsify,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
