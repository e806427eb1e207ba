"""Penalized minimax instrumental-variable regression on finite discrete designs.

Modules: ``probspace`` (weighted L2 on finite supports), ``npivop`` (the
conditional expectation operator and its ground-truth quantities),
``scenario`` (designs, fixtures and sampling), ``funclass`` (hypothesis and
discriminator families), ``estimators`` (the penalized minimax estimator and
its rivals), ``theory`` (checkable bounds and identities) and ``harness``
(rate sweeps, the verification suite and reports).
"""

__version__ = "0.1.0"
