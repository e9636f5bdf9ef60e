"""Link unstructured attack and news text to CVE records.

The pipeline: clean text (textprep), embed it into 768-dim unit
vectors (embedder), search an exact cosine index (index), calibrate the
decision threshold and ranking depth against a catalog-derived mapping
(corpus, calibrate), and validate report-level predictions four ways
(news, validate). A CLI and a small HTTP service sit on top (cli,
service).
"""

from .calibrate import (
    ConfusionCounts,
    KSensitivityRow,
    MetricTriple,
    PrPoint,
    ScoredPair,
    compute_metrics,
    confusion_counts,
    find_eer,
    k_sensitivity,
    pr_curve,
    score_pairs,
)
from .corpus import (
    AttackEntry,
    CveRecord,
    DanglingLink,
    LabeledPair,
    Layer,
    Mapping,
    WeaknessRecord,
    build_mapping,
    load_mapping,
    load_pairs,
    make_pair_dataset,
    mapping_stats,
    parse_attack_catalog,
    parse_cve_records,
    parse_weakness_catalog,
    save_mapping,
    save_pairs,
)
from .embedder import (
    DIM,
    Backend,
    CorpusEmbedReport,
    DeterministicBackend,
    PortableBackend,
    RemoteBackend,
    embed,
    embed_corpus,
    make_backend,
)
from .errors import (
    CorruptionError,
    CvelinkError,
    EmptyCorpusError,
    FormatError,
    IngestionError,
    InputError,
    ModelLoadError,
    PersistenceError,
    ResolutionError,
    SamplingError,
    TransportError,
)
from .index import (
    Prediction,
    VectorIndex,
    apply_threshold,
    load_index,
    rank_top_k,
    rank_top_k_batch,
    save_index,
    similarity,
)
from .news import NewsReport, extract_cve_ids, extract_products, parse_report
from .textprep import normalize
from .validate import (
    ExactMatchCounts,
    ManualLabel,
    ValidationOutcome,
    evaluate_m1,
    evaluate_m2,
    evaluate_m3,
    evaluate_m4,
    exact_match_rate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
