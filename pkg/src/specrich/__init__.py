"""Species richness estimation from hyperspectral reflectance spectra.

The pipeline has four stages:

* :mod:`specrich.spectra` -- Gaussian resampling, band removal, cloud
  filtering and mean-normalization.
* :mod:`specrich.dimred` -- PCA, CCA and PLS projections to k components.
* :mod:`specrich.regress` -- OLSR, kernel ridge and Gaussian process
  regression with a dot-product + RBF + white-noise kernel.
* :mod:`specrich.evaluation` -- repeated two-fold cross validation with
  nested grid search, r / RMSE metrics and report tables.

:mod:`specrich.synth` generates synthetic scenes with a known richness
signal.  The hot kernels come from a compiled extension when available;
``specrich.BACKEND`` names the one in use.
"""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
