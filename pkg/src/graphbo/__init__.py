"""Bayesian optimisation over labelled DAGs with a WL-kernel Gaussian process."""

from .graph import LabeledDigraph, SearchSpaceSpec, N101_SPEC, N201_SPEC, parse_graph, canonical_key
from .wl import Base, FeatureIndex, KernelConfig, Neighborhood, extract_features, gram, cross_gram
from .gp import GPModel, SearchGrid, fit, predict
from .bo import BOConfig, run_bo

__version__ = "0.1.0"
