"""Large deviations of the top eigenpairs of spiked random matrices.

Spectral transforms of the semicircle and Marchenko-Pastur laws, the
spherical-integral limit, joint rate functions for the top eigenvalue(s) and
spike overlap(s), and Monte Carlo samplers to check them against.
"""
from .spectral import (INFINITE, DomainError, SpectralMeasure, generic, log_potential,
                       marchenko_pastur, r_transform, semicircle, stieltjes)
from .spherical import j_fast, j_limit, j_semicircle, v_star
from .rates import (GoeRateQuery, MultiRateQuery, RateConfig, WishartRateQuery, global_min,
                    rate_goe, rate_multi, rate_wishart, wishart_global_min)
from .ensembles import EnsembleSpec, mc_stats, sample, tilted_estimate

__version__ = "0.1.0"

__all__ = [
    "INFINITE", "DomainError", "SpectralMeasure", "semicircle", "marchenko_pastur", "generic",
    "stieltjes", "r_transform", "log_potential", "v_star", "j_limit", "j_fast", "j_semicircle",
    "RateConfig", "GoeRateQuery", "MultiRateQuery", "WishartRateQuery", "rate_goe", "rate_multi",
    "rate_wishart", "global_min", "wishart_global_min", "EnsembleSpec", "sample", "mc_stats",
    "tilted_estimate",
]
