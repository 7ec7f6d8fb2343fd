"""Command-line client for the analysis service.

Subcommands run the pipeline in-process by default; with ``--server URL`` the
same requests are POSTed to a running service instead.

Exit codes: 0 all checks pass, 1 numeric check failure, 2 configuration
error, 3 finite type not certified.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request

from .cones import CertificationError, ConeError
from .pipeline import ConfigError, load_config, write_files

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3


def _apply_overrides(cfg, args):
    if getattr(args, "series_n", None) is not None:
        cfg.series_n = args.series_n
        if cfg.series_n < 200:
            raise ConfigError("series-n must be >= 200")
        cfg.raw.setdefault("walk", {})["series_n"] = args.series_n
    if getattr(args, "tol", None) is not None:
        cfg.tol_classify = args.tol
        if cfg.tol_classify <= 0:
            raise ConfigError("tol must be positive")
        cfg.raw.setdefault("tolerances", {})["classify"] = args.tol
    if getattr(args, "out_dir", None) is not None:
        cfg.out_dir = args.out_dir
        cfg.raw.setdefault("output", {})["dir"] = args.out_dir
    return cfg


def _post(server: str, path: str, payload: dict) -> dict:
    body = json.dumps(payload).encode()
    req = urllib.request.Request(server.rstrip("/") + path, data=body,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return json.loads(resp.read().decode())
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode()
        try:
            doc = json.loads(detail)
        except json.JSONDecodeError:
            doc = {"error": detail, "kind": "http"}
        if doc.get("kind") == "config":
            raise ConfigError(doc.get("error", "config error"))
        if doc.get("kind") == "certification":
            raise CertificationError(doc.get("error", "certification failure"),
                                     doc.get("growth_trace", []))
        raise ConeError(doc.get("error", f"HTTP {exc.code}"))


def cmd_analyze(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if args.server:
        doc = _post(args.server, "/analyze", {"config": cfg.raw})
        passed, report = doc["passed"], doc["report"]
    else:
        from .service.app import handle_analyze
        resp = handle_analyze(cfg.raw)
        passed, report = resp.passed, resp.report
    text = json.dumps(report, indent=2, sort_keys=True, default=float)
    if args.out_dir or cfg.out_dir:
        paths = write_files({"report.json": text + "\n"},
                            args.out_dir or cfg.out_dir)
        print(f"report written to {paths[0]}")
    print(text)
    for check in report["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']}", file=sys.stderr)
    for warning in report.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_validate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if args.server:
        doc = _post(args.server, "/validate", {"config": cfg.raw})
        passed, checks = doc["passed"], doc["checks"]
    else:
        from .service.app import handle_validate
        resp = handle_validate(cfg.raw)
        passed = resp.passed
        checks = [c.model_dump() for c in resp.checks]
    for check in checks:
        status = "pass" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']} {json.dumps(check['details'], default=float)}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_export(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if args.server:
        doc = _post(args.server, "/export", {"config": cfg.raw, "what": args.what})
        files = doc["files"]
    else:
        from .service.app import handle_export
        files = handle_export(cfg.raw, args.what).files
    paths = write_files(files, args.out_dir or cfg.out_dir)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        import uvicorn
    except ModuleNotFoundError:
        print("the 'serve' command needs uvicorn (pip install conewalk[serve])",
              file=sys.stderr)
        return EXIT_CONFIG
    uvicorn.run("conewalk.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conewalk",
        description="Cone-type grammar and local limit analysis of random "
                    "walks on finitely described infinite labelled graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_what=False):
        p.add_argument("config", help="path to a TOML run configuration")
        if with_what:
            p.add_argument("--what", required=True,
                           choices=["ball-dot", "types-dot", "grammar",
                                    "series-csv", "depgraph-dot"])
        p.add_argument("--series-n", type=int, default=None,
                       help="override walk.series_n")
        p.add_argument("--tol", type=float, default=None,
                       help="override tolerances.classify")
        p.add_argument("--out-dir", default=None, help="override output.dir")
        p.add_argument("--server", default=None,
                       help="URL of a running conewalk service; default runs "
                            "in-process")

    common(sub.add_parser("analyze", help="run the full pipeline"))
    common(sub.add_parser("validate", help="run the oracle checks only"))
    common(sub.add_parser("export", help="write deterministic export files"),
           with_what=True)
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    os.environ.setdefault("CONEWALK_THREADS", "1")
    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "export":
            return cmd_export(args)
        if args.command == "serve":
            return cmd_serve(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificationError as exc:
        print(f"certification failure: {exc}", file=sys.stderr)
        print(f"growth trace: {exc.growth_trace}", file=sys.stderr)
        return EXIT_CERTIFICATION
    except ConeError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
