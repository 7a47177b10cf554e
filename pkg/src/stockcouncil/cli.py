"""``stockcouncil`` command line.

Exit codes: 0 success, 2 config error, 3 data error, 4 NO_CONSENSUS under
``--on-no-consensus=fail``, 5 provider or protocol error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import date
from pathlib import Path

from . import pipeline
from .config import NO_CONSENSUS_POLICIES, PROVIDERS, RunConfig, load_config
from .errors import (
    ConfigError,
    DataError,
    IterationLimitError,
    ProtocolError,
    ProviderError,
    StockCouncilError,
)

log = logging.getLogger("stockcouncil")


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _policy(text: str) -> str:
    if text not in NO_CONSENSUS_POLICIES:
        raise argparse.ArgumentTypeError(f"expected one of {', '.join(NO_CONSENSUS_POLICIES)}")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stockcouncil", description="Multi-agent stock screening and backtesting.")
    parser.add_argument("--config", type=Path, help="run configuration file (key = value)")
    parser.add_argument("--provider", choices=PROVIDERS, help="override the configured provider")
    parser.add_argument("--script", type=Path, help="script file or directory for the scripted provider")
    parser.add_argument("--risk-profile", choices=("risk-averse", "risk-neutral"))
    parser.add_argument("--on-no-consensus", type=_policy, metavar="include|fail|override:<BUY|SELL>")
    parser.add_argument("--run-id", help="output folder name under output_dir (default: a timestamp)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="collaborative report for one ticker")
    p.add_argument("ticker")
    p = sub.add_parser("debate", help="analyses plus a consensus debate for one ticker")
    p.add_argument("ticker")
    p = sub.add_parser("screen", help="debate every ticker in a universe and build portfolios")
    p.add_argument("universe", type=Path, nargs="?", help="ticker list (default: the configured universe)")
    p = sub.add_parser("backtest", help="compare portfolios against a benchmark")
    p.add_argument("portfolios", type=Path, nargs="+")
    p.add_argument("--benchmark", type=Path, required=True)
    p.add_argument("--start", type=_date)
    p.add_argument("--end", type=_date)
    p.add_argument("--prices", type=Path, help="corpus root holding prices/ (default: corpus_root)")
    p = sub.add_parser("make-demo", help="write the synthetic demo corpus")
    p.add_argument("dest", type=Path)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config)
    return config.override(
        provider=args.provider,
        script=args.script.resolve() if args.script else None,
        risk_profile=args.risk_profile,
        on_no_consensus=args.on_no_consensus,
    )


def run(args: argparse.Namespace) -> int:
    if args.command == "make-demo":
        from .synthetic import write_demo

        root = write_demo(args.dest)
        print(root)
        return pipeline.EXIT_OK
    config = _config(args)
    if args.command == "analyze":
        print(pipeline.cmd_analyze(args.ticker, config, args.run_id))
        return pipeline.EXIT_OK
    if args.command == "debate":
        outcome = pipeline.cmd_debate(args.ticker, config, args.run_id)
        print(f"{outcome.decision.ticker}: {outcome.decision.decision} after {outcome.decision.rounds} rounds"
              + (" (user override)" if outcome.decision.override_by_user else ""))
        return outcome.exit_code
    if args.command == "screen":
        universe = args.universe or config.universe
        if universe is None:
            raise ConfigError("no universe file given and none configured")
        outcome = pipeline.cmd_screen(universe, config, args.run_id)
        for ticker, decision in outcome.decisions.items():
            print(f"{ticker}\t{decision.decision}\t{decision.rounds}")
        for flag in outcome.flags:
            print(f"note: {flag}", file=sys.stderr)
        return outcome.exit_code
    if args.command == "backtest":
        outcome = pipeline.cmd_backtest(args.portfolios, args.benchmark, config, args.start, args.end,
                                        args.run_id, args.prices)
        sys.stdout.write(outcome.csv_path.read_text(encoding="utf-8"))
        return pipeline.EXIT_OK
    raise ConfigError(f"unknown command {args.command}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return pipeline.EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return pipeline.EXIT_DATA
    except (ProviderError, ProtocolError, IterationLimitError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return pipeline.EXIT_PROVIDER
    except StockCouncilError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
