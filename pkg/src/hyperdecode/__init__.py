"""Hypergraph message-passing decoders for quantum LDPC codes, with classical baselines."""
__version__ = "0.1.0"

from .codes import ClassicalCode, CssCode, hgp_construct, logical_operators
from .channel import ChannelConfig, Dataset, TrainDistConfig, gen_eval_set, gen_training_set, syndrome
from .hypergraph import Hypergraph
from .hypernq import HyperNQDecoder, HyperNQModel
from .evaluation import is_logical_error, measure_ler, sweep

__all__ = ["__version__", "ClassicalCode", "CssCode", "hgp_construct", "logical_operators", "ChannelConfig",
           "Dataset", "TrainDistConfig", "gen_eval_set", "gen_training_set", "syndrome", "Hypergraph",
           "HyperNQDecoder", "HyperNQModel", "is_logical_error", "measure_ler", "sweep"]
