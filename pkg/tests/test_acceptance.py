"""Acceptance gate: ten criteria, each at its stated tolerance.

Every test prints one PASS line on success (run with -s or read the captured
output); a failure reads as the criterion number plus pytest's usual detail.
Random cases are generated from fixed seeds so reruns check the same ground.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from tracereview import (
    Anchor,
    Annotation,
    Budgets,
    EvidenceGraph,
    GraphEdge,
    GraphNode,
    MICRO_LABEL,
    MISSING,
    ProcessCounters,
    RankingChain,
    ReviewPackage,
    RunConfig,
    StructuredReport,
    accumulate_wins,
    anchor_rects,
    bootstrap_elo,
    build_evidence_graph,
    build_repair_plan,
    category_coverage,
    check_traceability,
    coverage_rows,
    export_gate,
    fallback_rect,
    fit_bradley_terry,
    format_fraction_pct,
    head_to_head,
    ingest_block_list,
    load_bundle,
    load_chain_pool,
    load_issue_file,
    load_label_file,
    overall_coverage,
    parse_chain,
    render_overlay_plan,
    run_review,
    schema_check,
    severity_coverage,
    tier_ranks,
    to_elo,
    validate_annotation,
)
from tracereview.eval_ranking import chains_by_paper as group_by_paper
from tracereview.reports import write_coverage_outputs

import oracles
from conftest import FIXTURES, block


def report(number: int, text: str) -> None:
    print(f"PASS criterion {number:2d}: {text}")


# --- 1. ability fit vs brute-force oracle --------------------------------------

def test_criterion_01_ability_fit_matches_brute_force_oracle():
    rng = np.random.default_rng(20240817)
    start = time.perf_counter()
    worst = 0.0
    for case in range(50):
        n = 3 + (case % 2)
        counts = oracles.random_connected_matrix(rng, n, high=5)
        assert counts.max() <= 5 and counts.min() >= 0
        theta = fit_bradley_terry(counts.astype(float))
        oracle = oracles.brute_force_abilities(counts.astype(float))
        diff = float(np.abs(theta - oracle).max())
        worst = max(worst, diff)
        assert diff <= 1e-6, f"case {case}: fit vs oracle diff {diff:.3e} > 1e-6"
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"50-matrix suite took {elapsed:.1f}s (budget 60s)"
    report(1, f"50 random matrices, worst |theta diff| {worst:.2e}, {elapsed:.1f}s")


# --- 2. tie-tier ranks, exhaustive over rosters <= 5 -----------------------------

def test_criterion_02_tier_ranks_exhaustive_ordered_set_partitions():
    fubini = {1: 1, 2: 3, 3: 13, 4: 75, 5: 541}
    total_chains = 0
    for n in range(1, 6):
        roster = tuple(f"s{i}" for i in range(n))
        seen = 0
        for tiers in oracles.ordered_set_partitions(roster):
            seen += 1
            got = tier_ranks(tiers)
            assert got == oracles.ranks_by_position_average(tiers)
            assert sum(got.values()) == n * (n + 1) / 2
        assert seen == fubini[n]
        total_chains += seen
    report(2, f"all {total_chains} chains over rosters 1..5 match the rank oracle")


# --- 3. coverage fixture, exact rational arithmetic ------------------------------

def test_criterion_03_coverage_fixture_exact(tmp_path):
    issues = load_issue_file(FIXTURES / "eval" / "issues.jsonl")
    labels = load_label_file(FIXTURES / "eval" / "labels.jsonl", issues)
    assert len(issues) == 20
    assert len({i.paper_id for i in issues}) == 5
    assert len({lab.system_id for lab in labels}) == 3

    expected = {
        "sys-alpha": (Fraction(13, 20), Fraction(8, 10), Fraction(5, 10), Fraction(2, 10)),
        "sys-beta": (Fraction(9, 20), Fraction(6, 10), Fraction(3, 10), Fraction(4, 10)),
        "sys-gamma": (Fraction(5, 20), Fraction(3, 10), Fraction(2, 10), Fraction(7, 10)),
    }
    rows = coverage_rows(issues, labels)
    assert [r.system_id for r in rows] == ["sys-alpha", "sys-beta", "sys-gamma"]
    for row in rows:
        overall, major, minor, critical = expected[row.system_id]
        assert row.overall == overall  # Fraction equality: zero tolerance
        assert row.major == major
        assert row.minor == minor
        assert row.critical_miss == critical

    write_coverage_outputs(tmp_path, rows, categories={})
    header, *table = (tmp_path / "coverage_table.csv").read_text().strip().splitlines()
    assert header == "System,Overall (%),Major (%),Minor (%),Critical miss (%)"
    assert table[0] == "sys-alpha,65.00,80.00,50.00,20.00"
    assert table[1] == "sys-beta,45.00,60.00,30.00,40.00"
    assert table[2] == "sys-gamma,25.00,30.00,20.00,70.00"
    report(3, "20-issue fixture reproduces hand-computed fractions exactly")


# --- 4. export-gate truth table ---------------------------------------------------

def _gate_package(schema_ok, search_ok, intent_ok, anns_ok, budgets=Budgets(3, 3, 10)):
    report_obj = StructuredReport(
        summary="s", strengths="s", weaknesses="w",
        prioritized_issues="p", actionable_suggestions="a",
    )
    if not schema_ok:
        report_obj = dataclasses.replace(report_obj, summary="   ")
    n_anns = budgets.gamma if anns_ok else budgets.gamma - 1
    anns = tuple(
        Annotation(
            ann_id=f"a-{i:02d}", anchor=Anchor(1, 1, 1), category="Clarity",
            severity="minor", summary="s", body="b", risk_text="r",
            repair_text="fix", question_id=None,
        )
        for i in range(n_anns)
    )
    n_search = budgets.alpha if search_ok else budgets.alpha - 1
    n_intent = budgets.beta if intent_ok else budgets.beta - 1
    counters = ProcessCounters(
        n_search=n_search,
        n_intent=n_intent,
        covered_questions=tuple(f"q{i}" for i in range(n_intent)),
    )
    return ReviewPackage(
        report=report_obj,
        annotations=anns,
        repair_plan=build_repair_plan(anns, []),
        novelty=(),
        graph=build_evidence_graph([], [], [], anns),
        counters=counters,
        page_lines={1: 3},
    )


def test_criterion_04_export_gate_truth_table():
    for combo in itertools.product((False, True), repeat=4):
        schema_ok, search_ok, intent_ok, anns_ok = combo
        result = export_gate(_gate_package(*combo))
        assert result.ready == all(combo), f"combo {combo}: ready={result.ready}"
        if not all(combo):
            assert result.reasons

    # Validity failure a: one annotation with no repair action.
    pkg = _gate_package(True, True, True, True)
    broken = dataclasses.replace(pkg.annotations[0], repair_text="")
    anns = (broken,) + pkg.annotations[1:]
    pkg_a = dataclasses.replace(
        pkg, annotations=anns, graph=build_evidence_graph([], [], [], anns)
    )
    result_a = export_gate(pkg_a)
    assert not result_a.ready
    assert any("MissingRepairAction" in r for r in result_a.reasons)

    # Validity failure b: an annotation node the graph never localizes.
    untraceable = EvidenceGraph.build(
        list(pkg.graph.nodes) + [GraphNode("ann", "ann:phantom")], list(pkg.graph.edges)
    )
    pkg_b = dataclasses.replace(pkg, graph=untraceable)
    result_b = export_gate(pkg_b)
    assert not result_b.ready
    assert any("no localized-to" in r for r in result_b.reasons)
    report(4, "16-cell truth table plus 2 validity failures behave exactly")


# --- 5. anchor geometry over random documents -------------------------------------

def test_criterion_05_anchor_geometry_random_cases():
    rng = np.random.default_rng(5150)
    doc_cache: dict[tuple[int, bool], object] = {}

    def doc_for(total: int, boxed_mask: bool):
        key = (total, boxed_mask)
        if key not in doc_cache:
            mask_rng = np.random.default_rng(total * 2 + int(boxed_mask))
            blocks = []
            for i in range(total):
                has_box = bool(mask_rng.integers(0, 2)) if boxed_mask else True
                bbox = (10.0, 12.0 * i + 1.0, 500.0, 12.0 * i + 11.0) if has_box else None
                blocks.append(block(1, "text", f"line {i}", bbox))
            doc_cache[key] = ingest_block_list(blocks)
        return doc_cache[key]

    for _ in range(10_000):
        total = int(rng.integers(1, 61))
        masked = bool(rng.integers(0, 2))
        doc = doc_for(total, masked)
        k_start = int(rng.integers(1, total + 1))
        k_end = int(rng.integers(k_start, total + 1))
        anchor = Anchor(1, k_start, k_end)

        band = fallback_rect(doc, anchor)
        assert 0.0 <= band.y_min < band.y_max <= 100.0
        # Monotonicity: shifting the span down moves both edges strictly down.
        if k_end < total:
            shifted = fallback_rect(doc, Anchor(1, k_start + 1, k_end + 1))
            assert shifted.y_min > band.y_min and shifted.y_max > band.y_max

        rects = anchor_rects(doc, anchor)
        lines = doc.lines(1, k_start, k_end)
        if any(line.bbox is None for line in lines):
            assert len(rects) == 1 and rects[0].normalized  # missing-box rule
        else:
            assert len(rects) == len(lines)
            assert all(not r.normalized for r in rects)
    report(5, "10,000 random spans: bounds, monotonicity, and routing hold")


# --- 6. overlay conservation vs packing re-simulation ------------------------------

def test_criterion_06_overlay_conservation_vs_oracle():
    rng = np.random.default_rng(6001)
    for case in range(200):
        total = int(rng.integers(2, 41))
        doc = ingest_block_list([block(1, "text", f"line {i}") for i in range(total)])
        n_anns = int(rng.integers(1, 16))
        anns = []
        for i in range(n_anns):
            k = int(rng.integers(1, total + 1))
            body = "b" * int(rng.integers(1, 2500))
            anns.append(
                Annotation(
                    ann_id=f"a-{case}-{i:02d}", anchor=Anchor(1, k, k),
                    category="Clarity", severity="minor", summary=f"s{i}",
                    body=body, risk_text="r", repair_text="fix", question_id=None,
                )
            )
        plan = render_overlay_plan(doc, anns)
        overlay = plan.pages[0]

        inline = [p for p in overlay.placements if not p.continued]
        continued = [p for p in overlay.placements if p.continued]
        assert len(inline) + len(continued) == len(anns)

        rects = [p.rect for p in overlay.placements]
        for a, b in itertools.combinations(rects, 2):
            assert a.y_max <= b.y_min or b.y_max <= a.y_min, f"case {case}: overlap"

        # Re-simulate the greedy packing independently (defaults written out:
        # zone top 0, bottom 100, cap 30, gap 1, card 4, 40 chars at height 2).
        # Boxless page, so each highlight is the fallback band; the processing
        # order is band top then id, recomputed here rather than trusted.
        ordered = sorted(anns, key=lambda a: (100.0 * (a.anchor.k_start - 1) / total, a.ann_id))
        assert [a.ann_id for a in ordered] == [p.ann_id for p in overlay.placements]

        def height_of(ann):
            return math.ceil(len(ann.summary + " " + ann.body) / 40) * 2.0

        flags = oracles.resimulate_packing(ordered, 0.0, 100.0, 30.0, 1.0, 4.0, height_of)
        assert flags == [p.continued for p in overlay.placements], f"case {case}"
        sheet_ids = [e.ann_id for s in overlay.sheets for e in s.entries]
        assert sheet_ids == [p.ann_id for p in continued]
    report(6, "200 random layouts conserve annotations and match the packing oracle")


# --- 7. head-to-head normalization --------------------------------------------------

def _random_chains(rng, n_chains, roster=("A", "B", "C")):
    from tracereview import ASPECTS

    chains = []
    for i in range(n_chains):
        order = list(roster)
        rng.shuffle(order)
        cuts = sorted(rng.choice(range(1, len(order)), size=rng.integers(0, 2), replace=False))
        tiers, prev = [], 0
        for cut in list(cuts) + [len(order)]:
            tiers.append(tuple(order[prev:cut]))
            prev = cut
        chains.append(
            RankingChain(f"p{i // len(ASPECTS)}", ASPECTS[i % len(ASPECTS)], tuple(tiers))
        )
    return chains


def test_criterion_07_head_to_head_normalization():
    rng = np.random.default_rng(777)
    chains = _random_chains(rng, 60)
    rows = head_to_head(chains, "A", "B")
    assert rows, "fixture produced no decided meetings"
    for row in rows:
        assert abs(row.win_pct + row.tie_pct + row.lose_pct - 100.0) <= 1e-9

    micro = next(row for row in rows if row.label == MICRO_LABEL)
    wins, ties, losses = oracles.tally_head_to_head(chains, "A", "B")
    assert (micro.wins, micro.ties, micro.losses) == (wins, ties, losses)
    total = wins + ties + losses
    assert micro.win_pct == pytest.approx(100.0 * wins / total, abs=1e-9)

    # All-strict-wins fixture: A above B in every chain.
    sweep = [
        RankingChain(f"p{i}", "Technical Accuracy", (("A",), ("B",)))
        for i in range(10)
    ]
    for row in head_to_head(sweep, "A", "B"):
        assert (row.win_pct, row.tie_pct, row.lose_pct) == (100.0, 0.0, 0.0)
    report(7, "rows sum to 100 +/- 1e-9; sweep fixture is (100, 0, 0); micro matches tally")


# --- 8. bootstrap determinism and degeneracy ----------------------------------------

def test_criterion_08_bootstrap_determinism_and_degeneracy():
    pool = load_chain_pool(FIXTURES / "eval" / "chains.jsonl")
    grouped = group_by_paper(pool)
    roster = pool.roster

    # a) fixed seed: byte-identical serialized CI output across 3 runs.
    outputs = []
    for _ in range(3):
        result = bootstrap_elo(grouped, roster, n_resamples=300, seed=99)
        payload = {
            "point": result.point_elo,
            "intervals": {k: list(v) for k, v in result.intervals.items()},
            "usable": result.n_usable,
        }
        outputs.append(json.dumps(payload, sort_keys=True).encode())
    assert outputs[0] == outputs[1] == outputs[2]

    # b) single paper: zero-width interval at the point estimate.
    one_paper = {"e1": grouped["e1"]}
    solo = bootstrap_elo(one_paper, roster, n_resamples=64, seed=3)
    for name in roster:
        low, high = solo.intervals[name]
        assert low == high == solo.point_elo[name]

    # c) 5-paper exhaustive enumeration: 3,125 resamples, intervals match an
    #    independent enumeration with the nearest-rank oracle.
    exhaustive = bootstrap_elo(grouped, roster, exhaustive=True)
    assert exhaustive.n_resamples == 5 ** 5 == 3125
    papers = sorted(grouped)
    per_system = {name: [] for name in roster}
    for indices in itertools.product(range(5), repeat=5):
        chains = [c for j in indices for c in grouped[papers[j]]]
        theta = fit_bradley_terry(accumulate_wins(chains, roster))
        for name, value in zip(roster, to_elo(theta)):
            per_system[name].append(float(value))
    assert exhaustive.n_usable == 3125  # fixture keeps every resample connected
    for name in roster:
        values = per_system[name]
        low = oracles.percentile_nearest_rank(values, 2.5)
        high = oracles.percentile_nearest_rank(values, 97.5)
        assert exhaustive.intervals[name] == (low, high)
    report(8, "seeded runs byte-identical; solo paper zero-width; 3,125-case CI exact")


# --- 9. end-to-end stub pipeline ----------------------------------------------------

def test_criterion_09_end_to_end_stub_pipeline(tmp_path):
    demo = FIXTURES / "demo"
    config = RunConfig(
        mode="stub",
        analyst_fixture=str(demo / "analyst.json"),
        retriever_fixture=str(demo / "corpus.jsonl"),
    )
    start = time.perf_counter()
    outcome = run_review(demo / "demo-paper.jsonl", tmp_path / "bundle", config)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"pipeline took {elapsed:.1f}s (budget 10s)"

    assert outcome.ready
    pkg, manifest = load_bundle(outcome.bundle_dir)
    assert len(pkg.annotations) >= 10
    for ann in pkg.annotations:
        assert validate_annotation(ann, pkg.page_lines, manifest["taxonomy"]) == []
    assert pkg.counters.n_search >= 3
    assert pkg.counters.n_intent >= 3
    assert schema_check(pkg.report) == 1
    assert check_traceability(pkg.graph) == []

    # Round-trip stability: a second export of the loaded package is
    # byte-identical file by file.
    rerun = run_review(demo / "demo-paper.jsonl", tmp_path / "again", config)
    for path in sorted(outcome.bundle_dir.iterdir()):
        assert path.read_bytes() == (rerun.bundle_dir / path.name).read_bytes()
    report(9, f"demo bundle passes the gate in {elapsed:.2f}s and round-trips stably")


# --- 10. strict-policy monotonicity ---------------------------------------------------

def test_criterion_10_strict_policy_monotonicity():
    issues = load_issue_file(FIXTURES / "eval" / "issues.jsonl")
    rng = np.random.default_rng(1010)
    values = [0, 1, MISSING]

    def metrics(labels):
        from tracereview import CoverageLabel

        labs = [
            CoverageLabel("sys", issue.paper_id, issue.issue_id, value)
            for issue, value in zip(issues, labels)
        ]
        severity = severity_coverage(issues, labs, "sys")
        return {
            "overall": overall_coverage(issues, labs, "sys"),
            "major": severity["major"],
            "minor": severity["minor"],
            **category_coverage(issues, labs, "sys"),
        }, severity["critical_miss"]

    checked = 0
    for _ in range(1000):
        labels = [values[int(rng.integers(0, 3))] for _ in issues]
        base, base_miss = metrics(labels)
        position = int(rng.integers(0, len(issues)))
        if labels[position] == MISSING:
            flipped = list(labels)
            flipped[position] = 1
            upgraded, up_miss = metrics(flipped)
            for key, value in base.items():
                if value is not None:
                    assert upgraded[key] >= value, f"{key} decreased on MISSING->1"
            if base_miss is not None:
                assert up_miss <= base_miss
            checked += 1
        elif labels[position] == 1:
            flipped = list(labels)
            flipped[position] = MISSING
            downgraded, down_miss = metrics(flipped)
            for key, value in base.items():
                if value is not None:
                    assert downgraded[key] <= value, f"{key} increased on 1->MISSING"
            if base_miss is not None:
                assert down_miss >= base_miss
            checked += 1
    assert checked >= 600  # two of three draws produce a checkable flip
    report(10, f"{checked} perturbations: MISSING->1 never hurts, 1->MISSING never helps")
