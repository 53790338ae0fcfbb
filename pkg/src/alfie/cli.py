"""Command line entry point: ``alfie serve``, ``alfie repl``, ``alfie config``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import Config, ConfigError, dump_config, load_config
from .embedding import BackendUnavailable, EmbeddingError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2

log = logging.getLogger("alfie")


def _load(path: str | None) -> Config:
    return load_config(path) if path else Config()


def _serve(cfg: Config) -> int:
    import uvicorn

    from .runtime import build_agent
    from .server import create_app

    app = create_app(build_agent(cfg))
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return EXIT_OK


def _repl(cfg: Config) -> int:
    from . import repl
    from .runtime import build_agent
    from .server import self_test

    agent = build_agent(cfg)
    self_test(agent)
    repl.run(agent)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="alfie", description="moral question answering with feedback")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("serve", "run the HTTP API"), ("repl", "interactive text console")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="TOML configuration file (defaults if omitted)")
    sub.add_parser("config", help="print the default configuration")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "config":
        sys.stdout.write(dump_config(Config()))
        return EXIT_OK

    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(f"alfie: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return _serve(cfg) if args.command == "serve" else _repl(cfg)
    except (BackendUnavailable, EmbeddingError) as exc:
        key = "embedding.endpoint" if cfg.embedding.backend == "remote" else "embedding.backend"
        print(f"alfie: embedding backend unavailable ({key}): {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"alfie: storage error (storage.dir={cfg.storage_dir!r}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"alfie: invalid question bank (bank.path={cfg.bank_path!r}): {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
