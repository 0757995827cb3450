"""Dynamic mode decomposition and Koopman spectral analysis toolkit."""

from .data import DelaySpec, SnapshotPair, delay_embed_state, hankel_embed, pairs_from_trajectory
from .dictionaries import EdmdMatrices, assemble, fourier_dictionary, linear_dictionary, rbf_dictionary
from .galerkin import edmd, hankel_dmd, havok, kmd_expand, log_scale_eigs
from .regression import DmdResult, dmdc, exact_dmd, fbdmd, kmd_forecast, mrdmd, optdmd, tlsdmd
from .compression import cdmd, csdmd, rdmd
from .resdmd import filtered_spectrum, pseudospectrum, residuals
from .structure import mpedmd, pidmd, spectral_measure, wasserstein1

__version__ = "0.1.0"
