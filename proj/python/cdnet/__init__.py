"""Compound density networks.

Thin wrapper over the C++ extension: hypernetwork-parametrized
matrix-variate-normal weight distributions, maximum-likelihood and
variational-Bayes training, and the uncertainty / robustness evaluation
toolkit (predictive entropy, MMC, AUROC, FGSM sweeps).
"""

try:
    from ._cdnet import (  # noqa: F401
        ConfigError,
        DataError,
        Model,
        NumericalError,
        auroc,
        gen_toy,
        load_idx,
        mmc,
        mvn_kl_to_standard,
        predictive_entropy,
        run_command,
    )
except ImportError:  # in-tree builds place the extension on sys.path directly
    from _cdnet import (  # noqa: F401
        ConfigError,
        DataError,
        Model,
        NumericalError,
        auroc,
        gen_toy,
        load_idx,
        mmc,
        mvn_kl_to_standard,
        predictive_entropy,
        run_command,
    )

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericalError",
    "auroc",
    "gen_toy",
    "load_idx",
    "mmc",
    "mvn_kl_to_standard",
    "predictive_entropy",
    "run_command",
]
