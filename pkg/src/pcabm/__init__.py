"""Block models with pairwise covariates: estimation, detection, simulation.

The package implements the pairwise covariates-adjusted block model
(PCABM): Poisson edge weights with rate ``rho * B[c_i, c_j] *
exp(z_ij' gamma)``.  It provides coefficient estimation with plug-in
inference, likelihood (tabu search) and spectral (adjusted spectral
clustering) community detection, synthetic generators, agreement metrics,
pair-covariate construction from nodal attributes, and an experiment
harness exposed through the ``pcabm`` command-line tool.
"""

from .network import (BlockStats, Network, ValidationError, block_stats,
                      community_sizes, is_non_degenerate, membership_matrix,
                      pair_index, random_labeling, validate_dense,
                      validate_pairs)
from .gamma import (BlockMoments, CollinearCovariatesError, FitOptions,
                    GammaFit, ModelDegeneracyError, fit_gamma, gamma_grad,
                    gamma_hessian, gamma_inference, gamma_loglik)
from .generate import (CovariateSpecError, GenerationError, GenSpec,
                       PlantedInstance, covariate_library, rho_from_scale,
                       sample_correlated_covariate, sample_dcbm, sample_pcabm)
from .metrics import LossReport, ari, confusion_table, l1_l2, loss_report, nmi
from .tabu import (DetectionResult, TabuOptions, fit_mle, fit_mle0,
                   profile_loglik, tabu_search)
from .scwa import (KMeansResult, SpectralEmbedding, adjust, kmeans_approx,
                   scwa_detect, top_k_eigen)

__version__ = "0.1.0"
