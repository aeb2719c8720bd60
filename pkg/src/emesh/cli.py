"""Command-line entry point: specs, run, litmus, sweep, validate."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, EmeshError
from .harness import figures_for, run_experiment
from .ordering import pair_name
from .report import RunResult, render, write_atomic

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def bundled_configs() -> list[str]:
    root = resources.files("emesh") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def find_config(name: str) -> Path:
    """A path as given, or the name of a bundled config."""
    p = Path(name)
    if p.exists():
        return p
    stem = name[:-5] if name.endswith(".json") else name
    if stem in bundled_configs():
        return Path(str(resources.files("emesh") / "configs" / f"{stem}.json"))
    raise ConfigError(f"no config file {name!r} and no bundled config of that name "
                      f"(bundled: {', '.join(bundled_configs())})")


def parse_rates(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, c = (float(x) for x in text.split(":"))
            if c <= 0:
                raise ValueError
            n = int(round((b - a) / c))
            rates = [round(a + i * c, 10) for i in range(n + 1)]
        else:
            rates = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}; use start:stop:step or a,b,c")
    if not rates or any(not 0 < r <= 1 for r in rates):
        raise argparse.ArgumentTypeError("offered rates must lie in (0, 1]")
    return rates


def _load(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_config(find_config(args.config))


def _out_path(args, cfg: RunConfig, key: str, flag: str) -> Path | None:
    """The command-line path, else the config's ``output`` entry (relative to the config)."""
    given = getattr(args, flag, None)
    if given:
        return Path(given)
    return cfg.resolve(cfg.output.get(key))


def _write_outputs(res: RunResult, args, out: Path | None, *, trace: Path | None = None):
    """Everything is rendered in memory first, then written file by file."""
    files = []
    if out is not None:
        files.append((out, render(res, "csv" if out.suffix == ".csv" else "json")))
        files.append((out.with_suffix(".csv") if out.suffix != ".csv" else out.with_suffix(".json"),
                      render(res, "json" if out.suffix == ".csv" else "csv")))
        files.append((out.with_suffix(".txt"), render(res, "text")))
    if trace is not None:
        files.append((trace, "\n".join(res.trace) + ("\n" if res.trace else "")))
    for path, text in files:
        write_atomic(path, text)
    if out is not None and not getattr(args, "no_figures", True):
        figures_for(res, out.parent, out.stem)


def cmd_specs(args) -> int:
    cfg = _load(args)
    cfg.mode = "specs"
    res = run_experiment(cfg)
    print(render(res, args.format), end="")
    _write_outputs(res, args, _out_path(args, cfg, "report", "out"))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    trace = _out_path(args, cfg, "trace", "trace")
    res = run_experiment(cfg, trace=True if trace else None)
    _write_outputs(res, args, _out_path(args, cfg, "report", "out"), trace=trace)
    print(render(res, "text"), end="")
    return EXIT_OK if res.ok else EXIT_FAIL


def cmd_litmus(args) -> int:
    cfg = _load(args)
    cfg.mode = "litmus"

    def progress(pair, obs):
        if args.verbose:
            print(f"  {pair_name(pair)}: {obs}", file=sys.stderr)
    res = run_experiment(cfg, trials=args.trials, progress=progress)
    _write_outputs(res, args, _out_path(args, cfg, "report", "out"))
    print(render(res, "text"), end="")
    return EXIT_OK if res.ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfg = _load(args)
    cfg.mode = "sweep"
    res = run_experiment(cfg, rates=args.rates or cfg.sweep["rates"] or parse_rates("0.1:1.0:0.1"))
    _write_outputs(res, args, _out_path(args, cfg, "report", "out"))
    print(render(res, "csv" if args.format == "csv" else "text"), end="")
    return EXIT_OK if res.ok else EXIT_FAIL


def cmd_validate(args) -> int:
    cfg = load_config(find_config(args.config))
    print(f"{args.config}: ok (mode {cfg.mode}, seed {cfg.seed})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="emesh", description="Cycle-level three-plane mesh fabric simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True, out=True):
        p.add_argument("--config", "-c", required=config_required,
                       help="config file, or the name of a bundled config")
        if out:
            p.add_argument("--out", "-o", help="report path (.json or .csv); the other format "
                                                "and a .txt summary are written alongside")
        return p

    p = common(sub.add_parser("specs", help="analytic throughput figures"), config_required=False)
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.set_defaults(func=cmd_specs)

    p = common(sub.add_parser("run", help="run the experiment a config describes"))
    p.add_argument("--trace", metavar="PATH", help="write the packet trace here")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.set_defaults(func=cmd_run)

    p = common(sub.add_parser("litmus", help="transfer-pair ordering suite"), config_required=False)
    p.add_argument("--trials", type=int, help="randomized trials per ordered pair")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_litmus)

    p = common(sub.add_parser("sweep", help="latency and throughput against offered load"))
    p.add_argument("--rates", type=parse_rates, help="start:stop:step or a,b,c")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("validate", help="check a config without running it"), out=False)
    p.set_defaults(func=cmd_validate)

    sub.add_parser("configs", help="list bundled configs").set_defaults(
        func=lambda a: print("\n".join(bundled_configs())) or EXIT_OK)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        where = getattr(args, "config", None)
        print(f"emesh: config error: {where + ': ' if where else ''}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmeshError, ValueError) as exc:
        print(f"emesh: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"emesh: cannot write output: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
