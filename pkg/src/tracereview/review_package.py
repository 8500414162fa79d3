"""Review package assembly, the readiness gate, and bundle export.

A review package is the exportable unit: the five-section report, the
validated annotation set, a prioritized repair plan, the novelty assessment,
a typed evidence graph, and the process counters. Export is refused unless
the gate passes; the gate is a pure conjunction, so the reason list names
every failed conjunct, not just the first.

Bundles are directories of JSON files under a versioned manifest. Import
re-runs the integrity checks, so a tampered bundle (say, a dropped
annotation whose graph node survives) fails to load.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .annotations import (
    Annotation,
    LayoutConfig,
    NAMED_CATEGORIES,
    SEVERITY_MAJOR,
    annotation_from_dict,
    annotation_to_dict,
    plan_to_dict,
    render_overlay_plan,
    validate_annotation,
)
from .doc_model import Anchor, AnchoredDocument
from .errors import (
    DuplicateAnnotation,
    NotReady,
    PackageIntegrityError,
)
from .ledger import AgendaItem, LedgerEntry
from .verification import (
    TAG_PARTIAL,
    TAG_SUBSTANTIAL,
    VerificationResult,
    result_from_dict,
    result_to_dict,
)

SCHEMA_VERSION = "1"

REPORT_SECTIONS = (
    "summary",
    "strengths",
    "weaknesses",
    "prioritized_issues",
    "actionable_suggestions",
)

NODE_KINDS = frozenset({"claim", "anchor", "ann", "prior"})
EDGE_SUPPORTED = "supported-by"
EDGE_CONTRADICTED = "contradicted-by"
EDGE_LOCALIZED = "localized-to"
EDGE_OVERLAPS = "overlaps-with"
EDGE_KINDS = frozenset({EDGE_SUPPORTED, EDGE_CONTRADICTED, EDGE_LOCALIZED, EDGE_OVERLAPS})

# Legal (source kind, target kind) pairs per edge kind.
_EDGE_RULES: dict[str, frozenset[tuple[str, str]]] = {
    EDGE_LOCALIZED: frozenset({("ann", "anchor"), ("claim", "anchor")}),
    EDGE_SUPPORTED: frozenset({("claim", "anchor"), ("claim", "prior")}),
    EDGE_CONTRADICTED: frozenset({("claim", "anchor"), ("claim", "prior")}),
    EDGE_OVERLAPS: frozenset({("claim", "prior")}),
}

GATE_SCHEMA = "Schema"
GATE_SEARCH = "SearchBudget"
GATE_INTENT = "IntentBudget"
GATE_ANNOTATIONS = "AnnotationBudget"
GATE_VALIDITY = "AnnotationValidity"
GATE_TRACEABILITY = "Traceability"


@dataclass(frozen=True)
class StructuredReport:
    """Fixed five-section prose report."""

    summary: str
    strengths: str
    weaknesses: str
    prioritized_issues: str
    actionable_suggestions: str

    def sections(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in REPORT_SECTIONS}


def schema_check(report: StructuredReport) -> int:
    """1 when all five sections are present and non-empty, else 0.

    Depth of content is out of scope by design; this is a presence check.
    """
    return int(all(text.strip() for text in report.sections().values()))


@dataclass(frozen=True)
class GraphNode:
    kind: str
    key: str
    comparable: bool | None = None


@dataclass(frozen=True)
class GraphEdge:
    kind: str
    src: str
    dst: str


@dataclass(frozen=True)
class EvidenceGraph:
    """Typed claim-evidence graph, stored sorted for stable serialization."""

    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]

    @classmethod
    def build(cls, nodes: Sequence[GraphNode], edges: Sequence[GraphEdge]) -> "EvidenceGraph":
        return cls(
            nodes=tuple(sorted(set(nodes), key=lambda n: (n.kind, n.key))),
            edges=tuple(sorted(set(edges), key=lambda e: (e.kind, e.src, e.dst))),
        )

    def node_map(self) -> dict[str, GraphNode]:
        return {n.key: n for n in self.nodes}


def anchor_node_key(anchor: Anchor) -> str:
    return f"anchor:{anchor.page}:{anchor.k_start}-{anchor.k_end}"


def check_traceability(graph: EvidenceGraph) -> list[str]:
    """Violation list for the graph's typing and localization rules.

    Checks, in order: node kinds are known, edge kinds are known, edges do not
    dangle, endpoint kinds are legal for the edge kind, overlap edges land on
    gate-comparable priors only, and every annotation node is localized to at
    least one anchor. Empty list means traceable.
    """
    violations: list[str] = []
    nodes = graph.node_map()
    for node in graph.nodes:
        if node.kind not in NODE_KINDS:
            violations.append(f"unknown node kind {node.kind!r} on {node.key}")
    localized_from: set[str] = set()
    for edge in graph.edges:
        if edge.kind not in EDGE_KINDS:
            violations.append(f"unknown edge kind {edge.kind!r}")
            continue
        src = nodes.get(edge.src)
        dst = nodes.get(edge.dst)
        if src is None or dst is None:
            violations.append(f"{edge.kind} edge {edge.src} -> {edge.dst} has a dangling endpoint")
            continue
        if (src.kind, dst.kind) not in _EDGE_RULES[edge.kind]:
            violations.append(
                f"{edge.kind} edge not allowed from {src.kind} to {dst.kind} ({edge.src} -> {edge.dst})"
            )
            continue
        if edge.kind == EDGE_OVERLAPS and dst.comparable is not True:
            violations.append(f"overlaps-with edge to non-comparable prior {edge.dst}")
            continue
        if edge.kind == EDGE_LOCALIZED:
            localized_from.add(edge.src)
    for node in graph.nodes:
        if node.kind == "ann" and node.key not in localized_from:
            violations.append(f"annotation node {node.key} has no localized-to edge")
    return violations


@dataclass(frozen=True)
class ProcessCounters:
    """Immutable snapshot of the per-run effort counters."""

    n_search: int
    n_intent: int
    covered_questions: tuple[str, ...] = ()


class RunCounters:
    """Thread-safe accumulator; fan-out verification updates it concurrently."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._n_search = 0
        self._covered: set[str] = set()

    def record_search(self, question_id: str) -> None:
        with self._lock:
            self._n_search += 1
            self._covered.add(question_id)

    def mark_covered(self, question_id: str) -> None:
        with self._lock:
            self._covered.add(question_id)

    def snapshot(self) -> ProcessCounters:
        with self._lock:
            return ProcessCounters(
                n_search=self._n_search,
                n_intent=len(self._covered),
                covered_questions=tuple(sorted(self._covered)),
            )


@dataclass(frozen=True)
class Budgets:
    """Gate thresholds: searches, covered intents, annotations."""

    alpha: int = 3
    beta: int = 3
    gamma: int = 10


@dataclass(frozen=True)
class RepairItem:
    priority: int
    ann_ids: tuple[str, ...]
    action: str


@dataclass(frozen=True)
class ReviewPackage:
    report: StructuredReport
    annotations: tuple[Annotation, ...]
    repair_plan: tuple[RepairItem, ...]
    novelty: tuple[VerificationResult, ...]
    graph: EvidenceGraph
    counters: ProcessCounters
    # Page number to line count, captured at synthesis so a bundle can check
    # its own anchors without the manuscript.
    page_lines: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class GateResult:
    ready: bool
    reasons: tuple[str, ...]


def export_gate(
    pkg: ReviewPackage,
    budgets: Budgets = Budgets(),
    taxonomy: Sequence[str] = NAMED_CATEGORIES,
) -> GateResult:
    """Readiness as a pure conjunction; reasons name every failed conjunct.

    Conjuncts: report schema, search budget, intent budget, annotation budget,
    per-annotation validity, graph traceability. Adding a valid annotation, a
    search, or a covered intent can never flip a passing gate to failing.
    """
    reasons: list[str] = []
    if schema_check(pkg.report) != 1:
        reasons.append(GATE_SCHEMA)
    if pkg.counters.n_search < budgets.alpha:
        reasons.append(GATE_SEARCH)
    if pkg.counters.n_intent < budgets.beta:
        reasons.append(GATE_INTENT)
    if len(pkg.annotations) < budgets.gamma:
        reasons.append(GATE_ANNOTATIONS)
    for ann in pkg.annotations:
        codes = validate_annotation(ann, pkg.page_lines, taxonomy)
        for code in codes:
            reasons.append(f"{GATE_VALIDITY}:{ann.ann_id}:{code}")
    for violation in check_traceability(pkg.graph):
        reasons.append(f"{GATE_TRACEABILITY}:{violation}")
    return GateResult(ready=not reasons, reasons=tuple(reasons))


def build_evidence_graph(
    ledger: Sequence[LedgerEntry],
    agenda: Sequence[AgendaItem],
    verifications: Sequence[VerificationResult],
    annotations: Sequence[Annotation],
) -> EvidenceGraph:
    """Graph over claims, anchors, annotations, and retrieved priors.

    Supporting evidence becomes supported-by edges, contradiction evidence
    contradicted-by, annotation anchors localized-to. Verification results
    contribute prior nodes; overlap edges are added from the question's source
    claims to each comparable prior when the tag reports overlap. Background
    priors appear as non-comparable nodes with no overlap edges.
    """
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    claims_of: dict[str, tuple[str, ...]] = {
        item.question_id: item.source_claims for item in agenda
    }

    for entry in ledger:
        claim_key = f"claim:{entry.claim_id}"
        nodes.append(GraphNode("claim", claim_key))
        for anchor in entry.evidence:
            key = anchor_node_key(anchor)
            nodes.append(GraphNode("anchor", key))
            edges.append(GraphEdge(EDGE_SUPPORTED, claim_key, key))
            edges.append(GraphEdge(EDGE_LOCALIZED, claim_key, key))
        for anchor in entry.contradictions:
            key = anchor_node_key(anchor)
            nodes.append(GraphNode("anchor", key))
            edges.append(GraphEdge(EDGE_CONTRADICTED, claim_key, key))

    for ann in annotations:
        ann_key = f"ann:{ann.ann_id}"
        anchor_key = anchor_node_key(ann.anchor)
        nodes.append(GraphNode("ann", ann_key))
        nodes.append(GraphNode("anchor", anchor_key))
        edges.append(GraphEdge(EDGE_LOCALIZED, ann_key, anchor_key))

    for result in verifications:
        for source_id in result.comparable_ids:
            nodes.append(GraphNode("prior", f"prior:{source_id}", comparable=True))
        for source_id in result.background_ids:
            nodes.append(GraphNode("prior", f"prior:{source_id}", comparable=False))
        if result.tag in (TAG_PARTIAL, TAG_SUBSTANTIAL):
            for claim_id in claims_of.get(result.question_id, ()):
                for source_id in result.comparable_ids:
                    edges.append(
                        GraphEdge(EDGE_OVERLAPS, f"claim:{claim_id}", f"prior:{source_id}")
                    )
    return EvidenceGraph.build(nodes, edges)


def build_repair_plan(
    annotations: Sequence[Annotation], agenda: Sequence[AgendaItem]
) -> tuple[RepairItem, ...]:
    """Majors first, then by the agenda rank of the linked question, then id."""
    rank_of = {item.question_id: item.risk_rank for item in agenda}
    no_rank = len(agenda) + 1

    def sort_key(ann: Annotation) -> tuple[int, int, str]:
        severity_first = 0 if ann.severity == SEVERITY_MAJOR else 1
        rank = rank_of.get(ann.question_id, no_rank) if ann.question_id else no_rank
        return (severity_first, rank, ann.ann_id)

    ordered = sorted(annotations, key=sort_key)
    return tuple(
        RepairItem(priority=i, ann_ids=(ann.ann_id,), action=ann.repair_text)
        for i, ann in enumerate(ordered, start=1)
    )


def synthesize(
    doc: AnchoredDocument,
    ledger: Sequence[LedgerEntry],
    agenda: Sequence[AgendaItem],
    verifications: Sequence[VerificationResult],
    annotations: Sequence[Annotation],
    analyst,
    counters: ProcessCounters,
) -> ReviewPackage:
    """Assemble the exportable package.

    Annotation ids must be unique; the graph must come out traceable (a
    violation here is an assembly bug or corrupt provider output and aborts
    synthesis). Annotation validity is deliberately not enforced here, the
    gate reports it so a not-ready package is still inspectable.
    """
    seen: set[str] = set()
    for ann in annotations:
        if ann.ann_id in seen:
            raise DuplicateAnnotation(f"annotation id {ann.ann_id!r} appears twice")
        seen.add(ann.ann_id)

    sections = analyst.report_sections(ledger, verifications, annotations)
    report = StructuredReport(**{name: sections.get(name, "") for name in REPORT_SECTIONS})

    graph = build_evidence_graph(ledger, agenda, verifications, annotations)
    violations = check_traceability(graph)
    if violations:
        raise PackageIntegrityError(
            "evidence graph failed traceability at synthesis: " + "; ".join(violations)
        )

    return ReviewPackage(
        report=report,
        annotations=tuple(annotations),
        repair_plan=build_repair_plan(annotations, agenda),
        novelty=tuple(verifications),
        graph=graph,
        counters=counters,
        page_lines={page: doc.line_count(page) for page in doc.page_numbers()},
    )


# --- bundle serialization ----------------------------------------------------

_BUNDLE_FILES = (
    "report.json",
    "annotations.json",
    "repair_plan.json",
    "novelty.json",
    "graph.json",
    "counters.json",
)


def _dump(path: Path, obj) -> None:
    path.write_text(
        json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _load(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def package_to_parts(pkg: ReviewPackage) -> dict[str, object]:
    return {
        "report.json": pkg.report.sections(),
        "annotations.json": [annotation_to_dict(a) for a in pkg.annotations],
        "repair_plan.json": [
            {"priority": r.priority, "ann_ids": list(r.ann_ids), "action": r.action}
            for r in pkg.repair_plan
        ],
        "novelty.json": [result_to_dict(v) for v in pkg.novelty],
        "graph.json": {
            "nodes": [
                {"kind": n.kind, "key": n.key, "comparable": n.comparable} for n in pkg.graph.nodes
            ],
            "edges": [{"kind": e.kind, "src": e.src, "dst": e.dst} for e in pkg.graph.edges],
        },
        "counters.json": {
            "n_search": pkg.counters.n_search,
            "n_intent": pkg.counters.n_intent,
            "covered_questions": list(pkg.counters.covered_questions),
            "page_lines": {str(k): v for k, v in sorted(pkg.page_lines.items())},
        },
    }


def package_from_parts(parts: Mapping[str, object]) -> ReviewPackage:
    report = StructuredReport(**parts["report.json"])
    counters_obj = parts["counters.json"]
    graph_obj = parts["graph.json"]
    return ReviewPackage(
        report=report,
        annotations=tuple(annotation_from_dict(a) for a in parts["annotations.json"]),
        repair_plan=tuple(
            RepairItem(r["priority"], tuple(r["ann_ids"]), r["action"])
            for r in parts["repair_plan.json"]
        ),
        novelty=tuple(result_from_dict(v) for v in parts["novelty.json"]),
        graph=EvidenceGraph(
            nodes=tuple(
                GraphNode(n["kind"], n["key"], n["comparable"]) for n in graph_obj["nodes"]
            ),
            edges=tuple(GraphEdge(e["kind"], e["src"], e["dst"]) for e in graph_obj["edges"]),
        ),
        counters=ProcessCounters(
            n_search=counters_obj["n_search"],
            n_intent=counters_obj["n_intent"],
            covered_questions=tuple(counters_obj["covered_questions"]),
        ),
        page_lines={int(k): v for k, v in counters_obj["page_lines"].items()},
    )


def export_package(
    pkg: ReviewPackage,
    doc: AnchoredDocument,
    out_dir: str | Path,
    budgets: Budgets = Budgets(),
    taxonomy: Sequence[str] = NAMED_CATEGORIES,
    layout: LayoutConfig = LayoutConfig(),
    manifest_extra: Mapping[str, object] | None = None,
    audit_log: Sequence[Mapping[str, object]] = (),
    extra_files: Mapping[str, object] | None = None,
) -> Path:
    """Write the bundle directory, refusing when the gate fails.

    The bundle holds the package parts, the overlay plan rendered against the
    manuscript, the provider audit log, and a versioned manifest. Nothing is
    written on refusal.

    Raises:
        NotReady: the gate failed; reasons carried on the exception.
    """
    gate = export_gate(pkg, budgets, taxonomy)
    if not gate.ready:
        raise NotReady(list(gate.reasons))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    parts = package_to_parts(pkg)
    for name in _BUNDLE_FILES:
        _dump(out / name, parts[name])
    plan = render_overlay_plan(doc, pkg.annotations, layout)
    _dump(out / "overlay_plan.json", plan_to_dict(plan))
    _dump(out / "audit_log.json", list(audit_log))
    extra_names: list[str] = []
    for name, payload in (extra_files or {}).items():
        _dump(out / name, payload)
        extra_names.append(name)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "generator": "tracereview",
        "budgets": {"alpha": budgets.alpha, "beta": budgets.beta, "gamma": budgets.gamma},
        "taxonomy": list(taxonomy),
        "files": sorted(_BUNDLE_FILES + ("overlay_plan.json", "audit_log.json") + tuple(extra_names)),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    _dump(out / "manifest.json", manifest)
    return out


def load_bundle(
    bundle_dir: str | Path, budgets: Budgets | None = None
) -> tuple[ReviewPackage, dict]:
    """Re-import a bundle, re-running every integrity check.

    `budgets` overrides the manifest's recorded floors, letting a caller
    re-validate an old bundle against stricter requirements.

    Raises:
        PackageIntegrityError: missing files, unsupported schema version,
            annotation/graph mismatch, repair plan referencing unknown
            annotations, traceability violations, or a failing gate.
    """
    bundle = Path(bundle_dir)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.exists():
        raise PackageIntegrityError(f"no manifest in {bundle}")
    manifest = _load(manifest_path)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise PackageIntegrityError(
            f"unsupported schema version {manifest.get('schema_version')!r}"
        )
    parts = {}
    for name in _BUNDLE_FILES:
        path = bundle / name
        if not path.exists():
            raise PackageIntegrityError(f"bundle file {name} missing")
        parts[name] = _load(path)
    pkg = package_from_parts(parts)

    ann_ids = {a.ann_id for a in pkg.annotations}
    graph_ann_ids = {n.key.split(":", 1)[1] for n in pkg.graph.nodes if n.kind == "ann"}
    if ann_ids != graph_ann_ids:
        missing = sorted(graph_ann_ids - ann_ids)
        extra = sorted(ann_ids - graph_ann_ids)
        raise PackageIntegrityError(
            f"annotations and graph disagree (graph-only: {missing}, package-only: {extra})"
        )
    for item in pkg.repair_plan:
        for ann_id in item.ann_ids:
            if ann_id not in ann_ids:
                raise PackageIntegrityError(f"repair plan cites unknown annotation {ann_id!r}")
    violations = check_traceability(pkg.graph)
    if violations:
        raise PackageIntegrityError("traceability failed on import: " + "; ".join(violations))

    if budgets is None:
        budgets_obj = manifest.get("budgets", {})
        budgets = Budgets(
            alpha=budgets_obj.get("alpha", 3),
            beta=budgets_obj.get("beta", 3),
            gamma=budgets_obj.get("gamma", 10),
        )
    taxonomy = tuple(manifest.get("taxonomy", NAMED_CATEGORIES))
    gate = export_gate(pkg, budgets, taxonomy)
    if not gate.ready:
        raise PackageIntegrityError("imported bundle fails the gate: " + ", ".join(gate.reasons))
    return pkg, manifest
