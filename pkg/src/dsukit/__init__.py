"""Data engineering for speech-unit language models.

Turns continuous speech features into discrete unit tokens, extends an
embedding table to host them, assembles token-budgeted pretraining and
instruction-tuning corpora, QE-filters pseudo-labeled translations, and
scores ASR/MT output with significance testing. Everything is seeded and
byte-reproducible; see the README for the pipeline walkthrough.
"""

from .corpus import (
    CV_MAX_SPEAKERS_PER_TRANSCRIPT,
    CV_MIN_DURATION_SEC,
    DEFAULT_DSU_FRACTION,
    DEFAULT_SPEECH_FRACTION,
    MLS_MAX_PER_SPEAKER,
    ItReport,
    ItSource,
    MixtureReport,
    MixtureSpec,
    Phase,
    PromptKind,
    Task,
    TokenCount,
    TrainingRecord,
    apply_corpus_caps,
    asr_cpt_records,
    build_it_set,
    build_mixture,
    default_token_counter,
    load_bitext,
    make_record,
    mt_cpt_records,
    normalize_transcript,
    parse_template,
    read_records,
    render_chat,
    render_prompt,
    render_template,
    write_records,
)
from .embeddings import (
    DEFAULT_INIT_SCALE,
    EmbeddingTable,
    GaussianInitSpec,
    extend_vocab,
    fit_gaussian,
    load_embeddings,
    load_plain_embeddings,
    sample_rows,
    save_embeddings,
)
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    DsukitError,
    FormatError,
    NumericError,
    ParseError,
    TemplateError,
    TruncationError,
    ValidationError,
)
from .features import (
    DEFAULT_FRAME_RATE_HZ,
    CorpusTag,
    FeatureSequence,
    Translation,
    UtteranceRecord,
    anchor_vectors,
    iter_manifest,
    read_features,
    read_manifest,
    resolve_feature_path,
    synth_features,
    write_features,
    write_manifest,
)
from .kmeans import (
    CHUNK_FRAMES,
    Codebook,
    assign,
    load_codebook,
    save_codebook,
    train_kmeans,
)
from .metrics import (
    BootstrapResult,
    EvalPair,
    SignificanceSummary,
    bleu,
    bleu_score_fn,
    default_bleu_tokenizer,
    edit_distance,
    normalize_english,
    paired_bootstrap,
    wer,
)
from .pipeline import (
    compute_stats,
    generate_demo,
    run_pipeline,
)
from .pseudo import (
    DEFAULT_QE_THRESHOLD,
    DEFAULT_SET_SIZE,
    PseudoSampleReport,
    ScoredTriple,
    filter_by_qe,
    join_pseudo_inputs,
    load_scores,
    load_translations,
    sample_pseudo_sets,
)
from .seeding import derive_seed, derive_seed_sequence, rng_for
from .subset import CapRule, default_quantizer_subset_rules, select_subset
from .units import (
    DEFAULT_UNITS_PER_SEC,
    DsuSequence,
    count_tokens,
    count_units,
    deduplicate,
    estimate_hours,
    parse,
    read_unit_corpus,
    render,
    strip_unit_tokens,
    unit_token,
    unit_vocabulary,
    write_unit_corpus,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
