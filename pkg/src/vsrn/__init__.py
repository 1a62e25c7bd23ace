"""Visual semantic reasoning for image-text matching, on a small numpy autodiff engine."""

from .config import TrainConfig
from .corpus import SyntheticCorpus, generate_synthetic_corpus, load_corpus, save_corpus
from .model import VSRN
from .retrieval import RetrievalReport, SimilarityMatrix, evaluate, recall_at_k
from .tensor import Tape, Tensor, backward

__all__ = [
    "TrainConfig",
    "SyntheticCorpus",
    "generate_synthetic_corpus",
    "load_corpus",
    "save_corpus",
    "VSRN",
    "RetrievalReport",
    "SimilarityMatrix",
    "evaluate",
    "recall_at_k",
    "Tape",
    "Tensor",
    "backward",
]

__version__ = "0.1.0"
