"""Report schema, evidence graph, export gate, bundle round-trip."""

from __future__ import annotations

import pytest

from tracereview import (
    Anchor,
    Annotation,
    Budgets,
    EvidenceGraph,
    GraphEdge,
    GraphNode,
    PackageIntegrityError,
    ProcessCounters,
    RepairItem,
    ReviewPackage,
    StructuredReport,
    VerificationResult,
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
)
from tracereview.review_package import GATE_ANNOTATIONS, GATE_SCHEMA, GATE_SEARCH

FULL_REPORT = StructuredReport(
    summary="A summary.",
    strengths="Strong points.",
    weaknesses="Weak points.",
    prioritized_issues="Ordered issues.",
    actionable_suggestions="Concrete fixes.",
)


def annotation(ann_id, page=1, k=1, severity="minor", question_id=None):
    return Annotation(
        ann_id=ann_id,
        anchor=Anchor(page, k, k),
        category="Clarity",
        severity=severity,
        summary=f"summary {ann_id}",
        body="body",
        risk_text="risk",
        repair_text="do the fix",
        question_id=question_id,
    )


def package(n_anns=10, n_search=3, n_intent=3, report=FULL_REPORT, page_lines=None):
    anns = tuple(annotation(f"a-{i:02d}", k=1) for i in range(n_anns))
    graph = build_evidence_graph([], [], [], anns)
    counters = ProcessCounters(
        n_search=n_search,
        n_intent=n_intent,
        covered_questions=tuple(f"q-{i}" for i in range(n_intent)),
    )
    return ReviewPackage(
        report=report,
        annotations=anns,
        repair_plan=build_repair_plan(anns, []),
        novelty=(),
        graph=graph,
        counters=counters,
        page_lines=page_lines or {1: 5},
    )


def test_schema_check_is_presence_only():
    assert schema_check(FULL_REPORT) == 1
    import dataclasses

    hollow = dataclasses.replace(FULL_REPORT, weaknesses="   ")
    assert schema_check(hollow) == 0


def test_gate_passes_exactly_at_budgets():
    assert export_gate(package()).ready
    result = export_gate(package(), Budgets(alpha=4, beta=3, gamma=10))
    assert not result.ready and result.reasons == (GATE_SEARCH,)


def test_gate_reports_every_failed_conjunct():
    import dataclasses

    hollow = dataclasses.replace(FULL_REPORT, summary="")
    result = export_gate(package(n_anns=2, n_search=0, n_intent=0, report=hollow))
    names = {r.split(":")[0] for r in result.reasons}
    assert GATE_SCHEMA in names and GATE_SEARCH in names and GATE_ANNOTATIONS in names


def test_gate_validity_failures_name_annotation_and_code():
    pkg = package()
    # Anchor beyond the captured page extent.
    bad = annotation("a-off", page=1, k=9)
    pkg = ReviewPackage(
        report=pkg.report,
        annotations=pkg.annotations + (bad,),
        repair_plan=pkg.repair_plan,
        novelty=pkg.novelty,
        graph=build_evidence_graph([], [], [], pkg.annotations + (bad,)),
        counters=pkg.counters,
        page_lines=pkg.page_lines,
    )
    result = export_gate(pkg)
    assert not result.ready
    assert "AnnotationValidity:a-off:AnchorOutOfRange" in result.reasons


def test_traceability_catches_each_violation_kind():
    anchor = GraphNode("anchor", "anchor:1:1-1")
    claim = GraphNode("claim", "claim:c")
    ann = GraphNode("ann", "ann:a")
    prior_bg = GraphNode("prior", "prior:p", comparable=False)

    dangling = EvidenceGraph.build([claim], [GraphEdge("supported-by", "claim:c", "anchor:gone")])
    assert any("dangling" in v for v in check_traceability(dangling))

    wrong_type = EvidenceGraph.build(
        [anchor, ann], [GraphEdge("overlaps-with", "ann:a", "anchor:1:1-1")]
    )
    assert any("not allowed" in v for v in check_traceability(wrong_type))

    bg_overlap = EvidenceGraph.build(
        [claim, prior_bg], [GraphEdge("overlaps-with", "claim:c", "prior:p")]
    )
    assert any("non-comparable" in v for v in check_traceability(bg_overlap))

    unlocalized = EvidenceGraph.build([ann], [])
    assert any("no localized-to" in v for v in check_traceability(unlocalized))


def test_build_graph_edges_by_role(small_ledger):
    from tracereview import AgendaItem

    agenda = [AgendaItem("q-1", "?", ("c-gain",), 1)]
    verification = VerificationResult(
        question_id="q-1",
        tag="partially_overlapping",
        comparable_ids=("src-m",),
        background_ids=("src-b",),
        rationale="",
    )
    anns = [annotation("a-1", k=2, question_id="q-1")]
    graph = build_evidence_graph(small_ledger, agenda, [verification], anns)
    edge_set = {(e.kind, e.src, e.dst) for e in graph.edges}
    anchor_key = anchor_node_key(Anchor(1, 2, 2))
    assert ("supported-by", "claim:c-gain", anchor_key) in edge_set
    assert ("localized-to", "ann:a-1", anchor_key) in edge_set
    assert ("overlaps-with", "claim:c-gain", "prior:src-m") in edge_set
    assert not any(dst == "prior:src-b" for _, _, dst in edge_set)
    assert graph.node_map()["prior:src-b"].comparable is False
    assert check_traceability(graph) == []


def test_repair_plan_orders_majors_then_agenda_rank():
    from tracereview import AgendaItem

    agenda = [AgendaItem("q-hi", "?", ("c",), 1), AgendaItem("q-lo", "??", ("c",), 2)]
    anns = [
        annotation("a-minor-hi", severity="minor", question_id="q-hi"),
        annotation("a-major-lo", severity="major", question_id="q-lo"),
        annotation("a-major-hi", severity="major", question_id="q-hi"),
        annotation("a-minor-none", severity="minor"),
    ]
    plan = build_repair_plan(anns, agenda)
    assert [item.ann_ids[0] for item in plan] == [
        "a-major-hi",
        "a-major-lo",
        "a-minor-hi",
        "a-minor-none",
    ]
    assert [item.priority for item in plan] == [1, 2, 3, 4]
    assert all(item.action == "do the fix" for item in plan)


def test_parts_round_trip():
    pkg = package()
    assert package_from_parts(package_to_parts(pkg)) == pkg


def _five_line_doc():
    from tracereview import ingest_block_list
    from conftest import block

    return ingest_block_list([block(1, "text", f"line {i}") for i in range(5)])


def test_export_bundle_and_load(tmp_path):
    pkg = package()
    out = tmp_path / "bundle"
    export_package(pkg, _five_line_doc(), out, manifest_extra={"doc_id": "doc-x", "mode": "stub"})
    expected = {
        "report.json",
        "annotations.json",
        "repair_plan.json",
        "novelty.json",
        "graph.json",
        "counters.json",
        "overlay_plan.json",
        "audit_log.json",
        "manifest.json",
    }
    assert expected <= {p.name for p in out.iterdir()}
    loaded, manifest = load_bundle(out)
    assert loaded == pkg
    assert manifest["doc_id"] == "doc-x"
    assert manifest["mode"] == "stub"


def test_export_refuses_when_gate_fails(tmp_path):
    from tracereview import NotReady

    pkg = package(n_anns=2)
    out = tmp_path / "bundle"
    with pytest.raises(NotReady) as exc:
        export_package(pkg, _five_line_doc(), out)
    assert GATE_ANNOTATIONS in exc.value.reasons
    assert not out.exists()  # nothing written on refusal


def test_load_bundle_rejects_tampering(tmp_path):
    pkg = package()
    out = tmp_path / "bundle"
    export_package(pkg, _five_line_doc(), out)
    victim = out / "annotations.json"
    victim.write_text(victim.read_text().replace("do the fix", ""), encoding="utf-8")
    with pytest.raises(PackageIntegrityError):
        load_bundle(out)


def test_load_bundle_budget_override(tmp_path):
    pkg = package(n_anns=10)
    out = tmp_path / "bundle"
    export_package(pkg, _five_line_doc(), out)
    load_bundle(out)  # recorded budgets pass
    with pytest.raises(PackageIntegrityError):
        load_bundle(out, budgets=Budgets(gamma=11))
