"""
carbospec - Source Package

Soil carbonate regression from near-infrared spectra.

Modules:
    spectra: Wavelength grid, spectra, datasets, absorbance and screening
    preprocess: Min-max normalization and Savitzky-Golay derivatives
    metrics: Wasserstein distance, R2 / RMSE / RPD / RPIQ, quality bands
    linear_models: PLSR, Cubist-style rules and LS-SVM
    nn_layers / networks: Dense and convolutional networks with Adam training
    spectrogram / saliency: CNN image input and gradient saliency maps
    ingest / model_store: CSV adapters and the binary model container
    cli / plotting: Command line and SVG/PNG output
"""

__version__ = "1.0.0"

from .metrics import evaluate, wasserstein
from .model_store import ModelKind, fit_model, load_model, save_model
from .spectra import NIR_GRID, SpectralDataset

__all__ = [
    'evaluate',
    'wasserstein',
    'ModelKind',
    'fit_model',
    'load_model',
    'save_model',
    'NIR_GRID',
    'SpectralDataset',
]
