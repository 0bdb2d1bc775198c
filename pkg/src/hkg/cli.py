"""Command line front door: a thin client over the service API.

Every verb builds one request and posts it, by default against the app
mounted in-process (no daemon needed), or against ``--server URL``. Exit
codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

from .client import ServiceClient, ServiceError

_EXIT_CODES = {"usage": 1, "data": 2, "numeric": 3}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors must exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hkg", description=__doc__)
    parser.add_argument("--server", help="service URL; default runs the service in-process")
    parser.add_argument("--seed", type=int, default=None, help="seed forwarded to the verb")
    parser.add_argument("--config", default=None, help="key=value config file forwarded to the verb")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="assert the deterministic execution contract (always on; flag kept for scripts)",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="parse raw logs into the canonical events file")
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gap-minutes", type=float, default=30.0)

    p = sub.add_parser("build-graph", help="assemble the knowledge graph from events")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic course graph")
    p.add_argument("--preset", default="campus", choices=["campus", "online"])
    p.add_argument("--signal", default="planted", choices=["planted", "shuffled"])
    p.add_argument("--students", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--events-out", default=None, help="also emit the raw event log")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the link classifier, repeated runs")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--out-dim", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--partition", default="all", choices=["all", "train", "val", "test"])
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--ratios", default="0.8,0.1,0.1")

    p = sub.add_parser("report", help="aggregate run directories into report artifacts")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="compare labeled run sets (label=dir)")
    p.add_argument("--set", dest="sets", action="append", required=True, metavar="LABEL=DIR")
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-graph", help="dump a graph container as JSON")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _request(args: argparse.Namespace) -> tuple[str, dict]:
    if args.verb == "ingest":
        return "/ingest", {"logs": args.logs, "out": args.out, "gap_minutes": args.gap_minutes}
    if args.verb == "build-graph":
        return "/build-graph", {"events": args.events, "out": args.out, "catalog": args.catalog}
    if args.verb == "synth":
        return "/synth", {
            "out": args.out,
            "preset": args.preset,
            "signal": args.signal,
            "seed": args.seed if args.seed is not None else 0,
            "students": args.students,
            "noise": args.noise,
            "events_out": args.events_out,
        }
    if args.verb == "train":
        return "/train", {
            "graph": args.graph,
            "out_dir": args.out,
            "config": args.config,
            "seed": args.seed,
            "epochs": args.epochs,
            "runs": args.runs,
            "learning_rate": args.learning_rate,
            "batch_size": args.batch_size,
            "hidden_dim": args.hidden_dim,
            "out_dim": args.out_dim,
            "embed_dim": args.embed_dim,
        }
    if args.verb == "eval":
        ratios = tuple(float(r) for r in str(args.ratios).split(","))
        return "/eval", {
            "graph": args.graph,
            "checkpoint": args.checkpoint,
            "partition": args.partition,
            "split_seed": args.split_seed if args.split_seed is not None else args.seed,
            "ratios": ratios,
        }
    if args.verb == "report":
        return "/report", {"run_dirs": args.runs, "out_dir": args.out}
    if args.verb == "compare":
        run_sets = []
        for item in args.sets:
            label, sep, run_dir = item.partition("=")
            if not sep or not label or not run_dir:
                raise SystemExit(_usage_error(f"--set expects LABEL=DIR, got {item!r}"))
            run_sets.append({"label": label, "run_dir": run_dir})
        return "/compare", {"run_sets": run_sets, "out_dir": args.out}
    if args.verb == "export-graph":
        return "/export-graph", {"graph": args.graph, "out": args.out}
    raise SystemExit(_usage_error(f"unknown verb {args.verb}"))


def _usage_error(message: str) -> int:
    print(f"hkg: error: {message}", file=sys.stderr)
    return 1


async def _run(args: argparse.Namespace) -> dict:
    client = ServiceClient(args.server)
    try:
        path, payload = _request(args)
        return await client.post(path, payload)
    finally:
        await client.aclose()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    try:
        result = asyncio.run(_run(args))
    except ServiceError as exc:
        print(f"hkg: {exc.category} error: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 2)
    except SystemExit as exc:
        return int(exc.code or 0)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
