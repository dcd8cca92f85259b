"""Bayesian reconstruction of networks from noisy measurements."""

from .config import RunConfig
from .estimators import MarginalAccumulator, mmp_estimate, normalized_mutual_information
from .graph import (AdjacencyView, HierarchicalPartition, LatentMultigraph, MeasurementData, hamming_distance,
                    similarity)
from .measurement import ErrorHyperParams, ExtrinsicUncertainty
from .mcmc import ChainState, run_chain, run_chains

__all__ = ["AdjacencyView", "ChainState", "ErrorHyperParams", "ExtrinsicUncertainty", "HierarchicalPartition",
           "LatentMultigraph", "MarginalAccumulator", "MeasurementData", "RunConfig", "hamming_distance",
           "mmp_estimate", "normalized_mutual_information", "run_chain", "run_chains", "similarity"]
__version__ = "0.1.0"
