"""Quality-diversity coevolution of GAN architectures.

Generators and discriminators are evolved as two populations of small
networks. Survivors are chosen either by speciated fitness (``coegan``) or by
constrained nondominated sorting over novelty and local (``nslc``) or global
(``nsgc``) competition.
"""

from .config import RunConfig, load_config
from .estimator import CoevolutionaryGAN
from .exceptions import (ConfigurationError, FormatError, InfeasiblePhenotypeError, MetricError,
                         QDGANError, TrainingDivergenceError, UsageError)
from .genome import Genome, IOShape, build_phenotype, genome_distance, mutate, transfer_weights
from .harness import compare_runs, run_experiment, sweep
from .metrics import FeatureExtractor, frechet_distance, matrix_sqrt

__version__ = "0.1.0"

__all__ = [
    "CoevolutionaryGAN", "RunConfig", "load_config", "Genome", "IOShape", "build_phenotype",
    "genome_distance", "mutate", "transfer_weights", "FeatureExtractor", "frechet_distance",
    "matrix_sqrt", "run_experiment", "sweep", "compare_runs", "QDGANError", "ConfigurationError",
    "UsageError", "FormatError", "InfeasiblePhenotypeError", "MetricError",
    "TrainingDivergenceError",
]
