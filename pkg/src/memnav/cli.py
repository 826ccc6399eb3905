"""Command-line client for the navigation service.

All subcommands talk to the FastAPI app: in-process by default (no network),
or to a remote instance via --server. A config file, when given, overrides
flag values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from .config import ConfigError


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
    from .service.app import create_app

    transport = httpx.ASGITransport(app=create_app())
    return httpx.Client(transport=transport, base_url="http://memnav.local", timeout=600.0)


def _load_overrides(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    return payload


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        detail = response.json().get("detail", response.text) if response.content else ""
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(1)
    return response.json()


def _print_outcome(outcome: dict) -> None:
    status = "success" if outcome["success"] else "failure"
    print(
        "{}: {} | shortest {:.3f} m, traveled {:.3f} m, {} actions "
        "({} discrete), aori {:.4f}".format(
            outcome["scene"], status, outcome["shortest_path"], outcome["agent_path"],
            outcome["step_count"], outcome["discrete_steps"], outcome["aori"],
        )
    )
    if outcome.get("error"):
        print(f"  error: {outcome['error']}", file=sys.stderr)


def cmd_run(args, client: httpx.Client) -> int:
    payload = {
        "scene_path": args.scene,
        "seed": args.seed,
        "decider": args.decider,
        "external_url": args.external_url,
        "output_dir": args.out,
        "config": _load_overrides(args.config),
    }
    body = _post(client, "/episodes/run", payload)
    _print_outcome(body["outcome"])
    if body["log_path"]:
        print(f"log: {body['log_path']}")
    return 0 if body["executed"] else 1


def cmd_batch(args, client: httpx.Client) -> int:
    payload = {
        "scene_paths": args.scenes,
        "seed": args.seed,
        "decider": args.decider,
        "external_url": args.external_url,
        "output_dir": args.out,
        "workers": args.workers,
        "config": _load_overrides(args.config),
    }
    body = _post(client, "/batches/run", payload)
    for outcome in body["outcomes"]:
        _print_outcome(outcome)
    print(
        "aggregate: SR {:.4f} | SPL {:.4f} | mean AORI {:.6f}".format(
            body["sr"], body["spl"], body["mean_aori"]
        )
    )
    print(f"report: {body['report_path']}")
    return 0 if body["all_executed"] else 1


def cmd_gen_scenes(args, client: httpx.Client) -> int:
    payload = {"kind": args.kind, "count": args.count, "seed": args.seed, "out_dir": args.out}
    body = _post(client, "/scenes/generate", payload)
    for path in body["paths"]:
        print(path)
    return 0


def cmd_inspect_memory(args, client: httpx.Client) -> int:
    payload = {"scene_path": args.scene, "seed": args.seed, "steps": args.steps,
               "config": _load_overrides(args.config)}
    body = _post(client, "/memory/inspect", payload)
    if args.what in ("map", "both"):
        print(body["map_dump"], end="")
    if args.what in ("hierarchy", "both"):
        print(body["hierarchy_dump"], end="")
    return 0


def cmd_report(args, client: httpx.Client) -> int:
    body = _post(client, "/reports/compute", {"log_paths": args.logs})
    print(body["report_text"], end="")
    return 0


def cmd_serve(args, _client) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def cmd_fake_decider(args, _client) -> int:
    from .testing import run_fake_decider

    run_fake_decider(args.port, args.action)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memnav", description=__doc__)
    parser.add_argument("--server", default=None,
                        help="remote service URL; default runs the app in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode")
    run.add_argument("--scene", required=True)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--decider", default="scripted", choices=["scripted", "random", "external"])
    run.add_argument("--external-url", default="")
    run.add_argument("--out", default="runs")
    run.add_argument("--config", default=None, help="JSON config file; overrides flags")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="run a scene suite and aggregate metrics")
    batch.add_argument("--scenes", nargs="+", required=True)
    batch.add_argument("--seed", type=int, default=0)
    batch.add_argument("--decider", default="scripted", choices=["scripted", "random", "external"])
    batch.add_argument("--external-url", default="")
    batch.add_argument("--out", default="runs")
    batch.add_argument("--workers", type=int, default=1)
    batch.add_argument("--config", default=None)
    batch.set_defaults(func=cmd_batch)

    gen = sub.add_parser("gen-scenes", help="generate deterministic scene files")
    gen.add_argument("--kind", required=True, choices=["corridor", "rooms", "blobs"])
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_scenes)

    inspect = sub.add_parser("inspect-memory", help="dump the map and memory hierarchy")
    inspect.add_argument("--scene", required=True)
    inspect.add_argument("--seed", type=int, default=0)
    inspect.add_argument("--steps", type=int, default=12)
    inspect.add_argument("--what", default="both", choices=["map", "hierarchy", "both"])
    inspect.add_argument("--config", default=None)
    inspect.set_defaults(func=cmd_inspect_memory)

    report = sub.add_parser("report", help="aggregate metrics from episode logs")
    report.add_argument("--logs", nargs="+", required=True)
    report.set_defaults(func=cmd_report)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)
    serve.set_defaults(func=cmd_serve)

    fake = sub.add_parser("fake-decider", help="canned-response decider for integration tests")
    fake.add_argument("--port", type=int, default=8399)
    fake.add_argument("--action", type=int, default=0)
    fake.set_defaults(func=cmd_fake_decider)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("serve", "fake-decider"):
        return args.func(args, None)
    try:
        with _client(args.server) as client:
            return args.func(args, client)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
