"""Command line: serve the HTTP API, or export sidecars offline."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .export import ExportError, export_sidecars
from .models import ModelLoadError, build_models


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorer-service", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", help="JSON config with model ids, device, max batch")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8300)

    export = sub.add_parser("export", help="write score and embedding sidecars for a corpus")
    export.add_argument("--config")
    export.add_argument("--corpus", required=True, help="normalized sample store (JSONL)")
    export.add_argument("--scores-out", required=True)
    export.add_argument("--embeddings-out", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        models = build_models(config.models)
        if args.command == "serve":
            import uvicorn

            from .app import create_app

            uvicorn.run(create_app(config), host=args.host, port=args.port)
            return 0
        count = export_sidecars(models, args.corpus, args.scores_out, args.embeddings_out)
        print(f"exported {count} samples to {args.scores_out} and {args.embeddings_out}")
        return 0
    except (ConfigError, ModelLoadError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ExportError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
