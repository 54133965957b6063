"""Isometry-invariant density features and sparse regression of molecular energies."""

from .features import FeatureMatrix, FeatureVector, dictionary_size
from .molecule import Dataset, Molecule, load_manifest, parse_xyz, planarize
from .density import rasterize
from .signal import make_bank
from .fourier import fourier_features
from .wavelet import wavelet_features
from .scattering import scattering_features
from .ols import RegressionModel, ols_fit, select_model_order
from .synthetic import make_synthetic_dataset
from .config import RunConfig
from .pipeline import cross_validate, featurize_dataset

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FeatureMatrix", "FeatureVector", "Molecule", "RegressionModel", "RunConfig",
    "cross_validate", "dictionary_size", "featurize_dataset", "fourier_features", "load_manifest",
    "make_bank", "make_synthetic_dataset", "ols_fit", "parse_xyz", "planarize", "rasterize",
    "scattering_features", "select_model_order", "wavelet_features",
]
