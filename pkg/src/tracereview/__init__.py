"""tracereview: anchored review packages with a verifiable process trail.

The library turns a block-list manuscript into an exportable review bundle
(structured report, anchored annotations, repair plan, novelty verdicts, and
a typed evidence graph) behind a readiness gate, and ships the evaluation
harness used to score such bundles: strict rubric coverage, anonymous
ranking with paired-comparison ratings, and head-to-head preference tables.
"""

from .annotations import (
    Annotation,
    CalloutPlacement,
    ContinuationSheet,
    HighlightSet,
    LayoutConfig,
    NAMED_CATEGORIES,
    OverlayPlan,
    PageGeometry,
    PageOverlay,
    ProvisionalAnnotation,
    SEVERITIES,
    SEVERITY_MAJOR,
    SEVERITY_MINOR,
    SheetEntry,
    annotation_from_dict,
    annotation_to_dict,
    default_taxonomy,
    estimate_callout_height,
    finalize_annotation,
    layout_callouts,
    margin_zone,
    page_geometry,
    plan_from_dict,
    plan_to_dict,
    render_overlay_plan,
    validate_annotation,
)
from .config import RunConfig
from .doc_model import (
    BLOCK_KINDS,
    FALLBACK_X_MAX,
    FALLBACK_X_MIN,
    Anchor,
    AnchoredDocument,
    BlockRecord,
    Line,
    Rect,
    anchor_rects,
    fallback_rect,
    ingest_block_list,
    iter_anchor_lines,
    load_block_list,
    paragraph_spans,
    resolve_anchor_rects,
)
from .errors import (
    AnchorOutOfRange,
    BadGeometry,
    BootstrapFailed,
    ChainParseError,
    DegenerateMLE,
    DisconnectedComparisons,
    DuplicateAnnotation,
    DuplicateLabel,
    DuplicateSystem,
    EmptyChain,
    EmptyDenominator,
    EmptyDocument,
    EvidenceOutOfSpan,
    FallbackRequired,
    IncompleteSetting,
    InvalidAbility,
    MalformedBlock,
    MalformedProviderOutput,
    MalformedRecord,
    MalformedToken,
    NotReady,
    PackageIntegrityError,
    ProviderError,
    ReadingComplete,
    TraceReviewError,
    UnknownIssue,
    UnknownSystem,
)
from .eval_coverage import (
    CanonicalIssue,
    CoverageLabel,
    CoverageRow,
    LABEL_VALUES,
    MISSING,
    category_coverage,
    coverage_rows,
    format_fraction_pct,
    judge_coverage,
    judge_reviews,
    load_issue_file,
    load_label_file,
    overall_coverage,
    severity_coverage,
)
from .eval_ranking import (
    ASPECTS,
    BootstrapResult,
    ChainPool,
    ELO_BASE,
    ELO_SCALE,
    HeadToHeadRow,
    MICRO_LABEL,
    RankingChain,
    WinMatrix,
    accumulate_wins,
    average_ranks,
    avg_win_rate,
    bootstrap_elo,
    chain_ranks,
    chains_by_paper,
    check_comparison_structure,
    fit_bradley_terry,
    head_to_head,
    load_chain_pool,
    mm_step,
    nearest_rank_percentile,
    parse_chain,
    tier_ranks,
    to_elo,
    win_fraction,
)
from .ledger import (
    AgendaItem,
    ClaimDraft,
    LedgerEntry,
    ReadCursor,
    STATUS_CONFIRMED,
    STATUS_SUSPECTED,
    SpanEvidence,
    SpanFinding,
    apply_status_rule,
    build_ledger,
    derive_agenda,
    entry_from_dict,
    entry_to_dict,
    final_status_sweep,
    implicated_spans,
    item_from_dict,
    item_to_dict,
    select_span,
    update_ledger,
)
from .pipeline import ReviewOutcome, run_review
from .review_package import (
    Budgets,
    EvidenceGraph,
    GateResult,
    GraphEdge,
    GraphNode,
    ProcessCounters,
    RepairItem,
    ReviewPackage,
    RunCounters,
    StructuredReport,
    anchor_node_key,
    build_evidence_graph,
    build_repair_plan,
    check_traceability,
    export_gate,
    export_package,
    load_bundle,
    package_from_parts,
    package_to_parts,
    schema_check,
    synthesize,
)
from .verification import (
    ClaimSetting,
    Comparator,
    NOVELTY_TAGS,
    TAG_PARTIAL,
    TAG_SUBSTANTIAL,
    TAG_SUPPORTED,
    TAG_UNCLEAR,
    VerificationResult,
    assign_novelty_tag,
    comparability_gate,
    result_from_dict,
    result_to_dict,
    retrieve,
    verify,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
