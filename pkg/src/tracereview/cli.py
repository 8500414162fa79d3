"""Command-line front end.

Four subcommands: `review` runs the full pipeline and exports a bundle,
`validate-package` re-checks an exported bundle from disk, `eval-coverage`
scores rubric coverage, and `eval-rank` runs the anonymous ranking protocol
(optionally with a head-to-head slice). Eval commands write CSV plus rendered
figures into --out.

Exit codes: 0 success, 2 input or validation failure, 3 provider failure,
4 filesystem or I/O failure. Credentials are read from environment variables
only, never from flags or config files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .errors import (
    MalformedProviderOutput,
    NotReady,
    ProviderError,
    TraceReviewError,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROVIDER = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracereview",
        description="Anchored review-package pipeline and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    review = sub.add_parser("review", help="run the review pipeline on a manuscript")
    review.add_argument("manuscript", help="block-list JSONL file")
    review.add_argument("--out", required=True, help="bundle output directory")
    review.add_argument("--config", default=None, help="JSON config file")
    review.add_argument("--doc-id", default=None)
    mode = review.add_mutually_exclusive_group()
    mode.add_argument("--stub", action="store_true", help="fixture-backed providers (default)")
    mode.add_argument("--live", action="store_true", help="HTTP providers")
    review.add_argument("--alpha", type=int, default=None, help="search-budget floor")
    review.add_argument("--beta", type=int, default=None, help="intent-coverage floor")
    review.add_argument("--gamma", type=int, default=None, help="annotation floor")
    review.add_argument("--seed", type=int, default=None)
    review.add_argument("--workers", type=int, default=None)
    review.add_argument("--extra-category", default=None)
    review.add_argument("--analyst-fixture", default=None)
    review.add_argument("--retriever-fixture", default=None)
    review.add_argument("--judge-fixture", default=None)
    review.add_argument("--analyst-url", default=None)
    review.add_argument("--retriever-url", default=None)
    review.add_argument("--judge-url", default=None)
    review.add_argument("--timeout", type=float, default=None)

    validate = sub.add_parser("validate-package", help="re-check an exported bundle")
    validate.add_argument("bundle", help="bundle directory")
    validate.add_argument("--alpha", type=int, default=None)
    validate.add_argument("--beta", type=int, default=None)
    validate.add_argument("--gamma", type=int, default=None)

    coverage = sub.add_parser("eval-coverage", help="strict rubric coverage scoring")
    coverage.add_argument("--issues", required=True, help="canonical issue JSONL")
    coverage.add_argument(
        "--labels", default=None, help="precomputed coverage-label JSONL"
    )
    coverage.add_argument(
        "--reviews",
        default=None,
        help="review-text JSONL to label with the judge provider",
    )
    coverage.add_argument("--judge-fixture", default=None)
    coverage.add_argument("--judge-url", default=None)
    coverage.add_argument("--systems", default=None, help="comma-separated roster")
    coverage.add_argument("--out", required=True)

    rank = sub.add_parser("eval-rank", help="anonymous ranking protocol")
    rank.add_argument("--chains", required=True, help="ranking-chain JSONL")
    rank.add_argument("--roster", default=None, help="comma-separated system ids")
    rank.add_argument("--subject", default=None, help="head-to-head subject system")
    rank.add_argument("--opponent", default=None, help="head-to-head opponent system")
    rank.add_argument("--resamples", type=int, default=None)
    rank.add_argument("--seed", type=int, default=None)
    rank.add_argument("--no-bootstrap", action="store_true")
    rank.add_argument("--out", required=True)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    flags = {
        "alpha": args.alpha,
        "beta": args.beta,
        "gamma": args.gamma,
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "extra_category": getattr(args, "extra_category", None),
        "analyst_fixture": getattr(args, "analyst_fixture", None),
        "retriever_fixture": getattr(args, "retriever_fixture", None),
        "judge_fixture": getattr(args, "judge_fixture", None),
        "analyst_url": getattr(args, "analyst_url", None),
        "retriever_url": getattr(args, "retriever_url", None),
        "judge_url": getattr(args, "judge_url", None),
        "timeout": getattr(args, "timeout", None),
    }
    if getattr(args, "live", False):
        flags["mode"] = "live"
    elif getattr(args, "stub", False):
        flags["mode"] = "stub"
    else:
        flags["mode"] = None
    return RunConfig.resolve(flags, getattr(args, "config", None))


def _cmd_review(args: argparse.Namespace) -> int:
    from .pipeline import run_review

    config = _config_from_args(args)
    outcome = run_review(args.manuscript, args.out, config, doc_id=args.doc_id)
    if outcome.ready:
        print(f"ready: bundle written to {outcome.bundle_dir}")
        print(
            f"annotations={outcome.n_annotations} "
            f"searches={outcome.counters.n_search} intents={outcome.counters.n_intent}"
        )
        return EXIT_OK
    print("not ready:", file=sys.stderr)
    for reason in outcome.reasons:
        print(f"  - {reason}", file=sys.stderr)
    return EXIT_VALIDATION


def _cmd_validate_package(args: argparse.Namespace) -> int:
    from .review_package import Budgets, load_bundle

    if not Path(args.bundle).is_dir():
        raise FileNotFoundError(f"bundle directory {args.bundle} does not exist")
    overrides = {}
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.beta is not None:
        overrides["beta"] = args.beta
    if args.gamma is not None:
        overrides["gamma"] = args.gamma
    budgets = Budgets(**overrides) if overrides else None
    pkg, manifest = load_bundle(args.bundle, budgets=budgets)
    print(f"valid: {len(pkg.annotations)} annotations, doc_id={manifest.get('doc_id')}")
    return EXIT_OK


def _parse_roster(raw: str | None) -> tuple[str, ...] | None:
    if raw is None:
        return None
    names = tuple(part.strip() for part in raw.split(",") if part.strip())
    if not names:
        raise TraceReviewError("roster flag given but empty")
    return names


def _cmd_eval_coverage(args: argparse.Namespace) -> int:
    from .eval_coverage import (
        category_coverage,
        coverage_rows,
        judge_reviews,
        load_issue_file,
        load_label_file,
    )
    from .ports import StubJudge
    from .reports import write_coverage_outputs

    if (args.labels is None) == (args.reviews is None):
        raise TraceReviewError("exactly one of --labels or --reviews is required")

    issues = load_issue_file(args.issues)
    if args.labels is not None:
        labels = load_label_file(args.labels, issues)
    else:
        if args.judge_url is not None:
            from .ports import HttpPort, LiveJudge

            judge = LiveJudge(HttpPort(provider="judge", url=args.judge_url))
        elif args.judge_fixture is not None:
            judge = StubJudge.from_file(args.judge_fixture)
        else:
            judge = StubJudge()
        reviews = _load_reviews(args.reviews)
        labels = judge_reviews(issues, reviews, judge)

    systems = _parse_roster(args.systems)
    rows = coverage_rows(issues, labels, systems=systems)
    categories = {
        row.system_id: category_coverage(issues, labels, row.system_id) for row in rows
    }
    written = write_coverage_outputs(args.out, rows, categories)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _load_reviews(path: str) -> list[dict]:
    from .errors import MalformedRecord

    reviews: list[dict] = []
    text = Path(path).read_text(encoding="utf-8")
    for index, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"reviews record {index}: {exc}") from exc
        for field in ("system_id", "paper_id", "review_text"):
            if field not in record:
                raise MalformedRecord(f"reviews record {index}: missing {field!r}")
        reviews.append(record)
    return reviews


def _cmd_eval_rank(args: argparse.Namespace) -> int:
    from .eval_ranking import (
        accumulate_wins,
        bootstrap_elo,
        chains_by_paper,
        head_to_head,
        load_chain_pool,
    )
    from .reports import write_ranking_outputs

    roster = _parse_roster(args.roster)
    pool = load_chain_pool(args.chains, roster=roster)
    if not pool.chains:
        raise TraceReviewError("no usable ranking chains after filtering")
    matrix = accumulate_wins(pool.chains, pool.roster)

    bootstrap = None
    if not args.no_bootstrap:
        bootstrap = bootstrap_elo(
            chains_by_paper(pool),
            pool.roster,
            n_resamples=args.resamples if args.resamples is not None else 1000,
            seed=args.seed if args.seed is not None else 0,
        )

    head_rows = None
    if (args.subject is None) != (args.opponent is None):
        raise TraceReviewError("--subject and --opponent must be given together")
    if args.subject is not None:
        head_rows = head_to_head(pool.chains, args.subject, args.opponent)

    written = write_ranking_outputs(args.out, pool, matrix, bootstrap, head_rows)
    if pool.dropped:
        print(f"dropped {pool.dropped} unusable chain records", file=sys.stderr)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "review": _cmd_review,
    "validate-package": _cmd_validate_package,
    "eval-coverage": _cmd_eval_coverage,
    "eval-rank": _cmd_eval_rank,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except (ProviderError, MalformedProviderOutput) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except NotReady as exc:
        print(f"not ready: {'; '.join(exc.reasons)}", file=sys.stderr)
        return EXIT_VALIDATION
    except TraceReviewError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
