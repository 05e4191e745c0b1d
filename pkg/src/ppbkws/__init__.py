"""Keyword search over phoneme posteriorgrams derived from ASR lattices."""

from .lattice import (
    Hit,
    KeywordLexicon,
    Lattice,
    LatticeArc,
    LatticeError,
    LatticeNode,
    PhoneSet,
    ReferenceOccurrence,
)
from .posteriors import (
    PosteriorConfig,
    PosteriorMatrix,
    arc_posteriors,
    brute_force_frame_posteriors,
    compute_frame_posteriors,
    frame_posteriors,
)
from .smoothing import ConfusionModel, SmoothingConfig, estimate_confusion_model, smooth
from .decoder import (
    DecoderConfig,
    KeywordFSA,
    build_keyword_fsa,
    decode_keyword,
    search_corpus,
)
from .scoring import (
    ScoringConfig,
    TwvReport,
    align_hits,
    compute_mtwv,
    fuse_lists,
    score_hits,
    sto_normalize,
)
from .generator import GenConfig, KeywordPlant, gen_corpus, random_lattice

__version__ = "0.1.0"
