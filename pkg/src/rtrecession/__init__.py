"""Real-time recession forecasting with penalized weighted logistic regression.

Submodules: :mod:`data_io` (vintages and indicator vintages), :mod:`preprocess`
(transforms, interpolation, imputation, design matrices), :mod:`glm`
(penalized logistic fits), :mod:`cv` (blocked CV and cutpoints),
:mod:`backtest`, :mod:`metrics`, :mod:`dating` and :mod:`synthgen`.
"""

__version__ = "0.1.0"
