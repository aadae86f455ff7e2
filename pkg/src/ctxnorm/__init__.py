"""ctxnorm: entity normalization by context matching.

Pipeline: build an entity-linked corpus from raw sentences by dictionary
matching (longest-match overlap resolution), train a contextual mention
encoder with the Multi-Similarity contrastive loss over concept-balanced
mini-batches, then normalize new mentions by K-nearest-neighbor search
over the linked corpus with a majority vote on the neighbors' concepts.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .dictionary import (
    Dictionary,
    build_dictionary,
    dictionary_stats,
    downsample_synonyms,
    load_dictionary,
    lookup_synonym,
)
from .encoder import (
    EncoderParams,
    MentionInput,
    encode,
    encode_batch,
    featurize,
    init_params,
    load_params,
    mention_input_from_span,
    save_params,
)
from .errors import CtxnormError
from .evaluation import (
    GoldMention,
    evaluate_accuracy,
    filter_gold,
    tfidf_fit,
    tfidf_predict,
)
from .linker import (
    LinkedSentence,
    LinkMode,
    MentionSpan,
    RawSentence,
    SynonymMatcher,
    corpus_stats,
    find_matches,
    link_corpus,
)
from .losses import MSLossParams, mine_pairs, ms_loss, ms_loss_grad, similarity_matrix
from .neighbors import (
    NeighborIndex,
    build_index,
    knn_search,
    predict_concept,
    subsample_index,
)
from .synth import SynthSpec, generate, write_synth
from .textnorm import NormalizationPolicy
from .training import TrainConfig, build_pool, sample_minibatch, train, train_step
