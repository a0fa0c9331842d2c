"""Command-line entry point: ``python -m pnid2st <command> ...``.

Exit codes: 0 success, 1 a stage reported errors, 2 bad usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .diagnostics import DiagnosticError, has_errors, render_records, render_text
from .genpipe import (
    API_KEY_ENV, ClientConfig, LiveClient, MockClient, MockScript, Plan, PlanError, accepted_units, run_batch,
)
from .imageprep import ImageError, load_and_normalize, plan_tiles, write_tiles
from .projectio import Artifact, build_manifest, load_st_dir, write_project
from .runtime import SimulationAborted, UnknownPouError, instantiate, load_scenario, run
from .runtime.interp import OverrideError
from .sema import check_source

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    mode: str = "mock"  # mock | live
    endpoint: str = ""
    model: str = ""
    mock_script: str = ""
    tile_size: int = 1024
    overlap: int = 128
    stretch: bool = False
    cycle_ms: int = 100
    max_rounds: int = 3
    max_attempts: int = 3
    workers: int = 2
    timeout_s: float = 120.0
    temperature: Optional[float] = None
    out_dir: str = "run"

    def validate(self, need_client: bool = False) -> "Config":
        if self.mode not in ("mock", "live"):
            raise ConfigError(f"mode must be 'mock' or 'live', got {self.mode!r}")
        for name in ("tile_size", "cycle_ms", "max_rounds", "max_attempts", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 <= self.overlap < self.tile_size:
            raise ConfigError("overlap must satisfy 0 <= overlap < tile_size")
        if need_client:
            if self.mode == "mock" and not self.mock_script:
                raise ConfigError("mock mode requires a mock script (--mock FILE)")
            if self.mode == "live":
                if not self.endpoint or not self.model:
                    raise ConfigError("live mode requires --endpoint and --model")
                if not os.environ.get(API_KEY_ENV):
                    raise ConfigError(f"live mode requires the {API_KEY_ENV} environment variable")
        return self

    @classmethod
    def from_file(cls, path: str) -> "Config":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


_OVERRIDES = {  # argparse dest -> Config field
    "tile": "tile_size", "overlap": "overlap", "stretch": "stretch", "cycle_ms": "cycle_ms",
    "max_rounds": "max_rounds", "workers": "workers", "endpoint": "endpoint", "model": "model",
    "mock": "mock_script", "out": "out_dir",
}


def resolve_config(args: argparse.Namespace) -> Config:
    cfg = Config.from_file(args.config) if getattr(args, "config", None) else Config()
    changes = {}
    for dest, name in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None and value is not False:
            changes[name] = value
    if getattr(args, "mock", None):
        changes["mode"] = "mock"
    if getattr(args, "live", False):
        changes["mode"] = "live"
    return replace(cfg, **changes)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------

def cmd_preprocess(args, cfg: Config) -> int:
    cfg.validate()
    try:
        img = load_and_normalize(args.image, stretch=cfg.stretch)
    except ImageError as exc:
        _err(str(exc))
        return EXIT_FAIL
    out = Path(cfg.out_dir) / "tiles"
    plan = plan_tiles(img.width, img.height, cfg.tile_size, cfg.tile_size, cfg.overlap)
    paths = write_tiles(img, plan, out, Path(args.image).stem)
    _write_json(out / "tiles.json", {
        "source": str(args.image), "width": img.width, "height": img.height, "tile": [plan.tile_w, plan.tile_h],
        "overlap": plan.overlap,
        "tiles": [{"file": p.name, **asdict(r)} for p, r in zip(paths, plan.rects)],
    })
    print(f"{len(paths)} tiles written to {out}")
    return EXIT_OK


def _tiles_for(source: Path, cfg: Config) -> list[str]:
    if source.is_dir():
        tiles = sorted(str(p) for p in source.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".tif", ".tiff"))
        if not tiles:
            raise ImageError(f"no tile images in {source}")
        return tiles
    img = load_and_normalize(source, stretch=cfg.stretch)
    plan = plan_tiles(img.width, img.height, cfg.tile_size, cfg.tile_size, cfg.overlap)
    return [str(p) for p in write_tiles(img, plan, Path(cfg.out_dir) / "tiles", source.stem)]


def _client(cfg: Config):
    if cfg.mode == "mock":
        return MockClient(MockScript.load(cfg.mock_script))
    return LiveClient(ClientConfig(cfg.model, cfg.endpoint, cfg.timeout_s, cfg.max_attempts, cfg.temperature))


def cmd_generate(args, cfg: Config) -> int:
    cfg.validate(need_client=True)
    out = Path(cfg.out_dir)
    try:
        plan = Plan.load(args.plan)
        client = _client(cfg)
        tiles = _tiles_for(Path(args.source), cfg)
        report = run_batch(plan, client, out, tiles=tiles, workers=cfg.workers, max_rounds=cfg.max_rounds,
                           max_attempts=cfg.max_attempts)
    except (OSError, ValueError, ImageError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    files = [f for t in report.accepted() for f in t.files]
    units = accepted_units(report, out)
    project = None
    if units:
        try:
            arts = [Artifact(u) for u in units]
            project = write_project(out / "project.xml", build_manifest(plan.name, arts, cfg.cycle_ms), units)
        except DiagnosticError as exc:
            _err(str(exc))
            report_ok = False
        else:
            report_ok = report.ok
    else:
        report_ok = False
    if isinstance(client, MockClient) and client.remaining():
        _err(f"mock script has {client.remaining()} unused entries")
        report_ok = False
    code = EXIT_OK if report_ok else EXIT_FAIL
    cfg_record = asdict(cfg)
    _write_json(out / "run_manifest.json", {
        "tool": "pnid2st", "version": __version__, "command": "generate", "source": str(args.source),
        "plan": str(args.plan), "config": cfg_record, "tiles": [Path(t).name for t in tiles],
        "artifacts": files, "project": project.name if project else None,
        "report": "report.json", "exit_code": code,
    })
    sys.stdout.write(report.to_text())
    return code


def cmd_check(args, cfg: Config) -> int:
    try:
        source = Path(args.file).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    _, diags = check_source(source)
    if args.format == "records":
        sys.stdout.write(render_records(diags))
    elif diags:
        sys.stdout.write(render_text(diags, args.file))
    return EXIT_FAIL if has_errors(diags) else EXIT_OK


def cmd_simulate(args, cfg: Config) -> int:
    cfg.validate()
    try:
        source = Path(args.file).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    unit, diags = check_source(source)
    if unit is None or has_errors(diags):
        sys.stderr.write(render_text(diags, args.file))
        return EXIT_FAIL
    try:
        steps, watch = [], None
        if args.scenario:
            steps, watch = load_scenario(Path(args.scenario).read_text(encoding="utf-8"))
        if args.watch:
            watch = [w.strip() for w in args.watch.split(",") if w.strip()]
        rt = instantiate(unit, args.entry, cycle_ms=cfg.cycle_ms)
        scans = args.scans if args.scans is not None else None
        trace = run(rt, steps, watch, scans)
        aborted = None
    except SimulationAborted as exc:
        trace, aborted = exc.trace, exc
    except (UnknownPouError, OverrideError, KeyError, ValueError, OSError) as exc:
        _err(str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc))
        return EXIT_FAIL
    out = Path(args.trace) if args.trace else Path(cfg.out_dir) / f"{args.entry}.trace"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(trace.to_csv() if args.format == "csv" else trace.to_lines(), encoding="utf-8")
    if aborted is not None:
        _err(str(aborted))
        return EXIT_FAIL
    print(f"{len(trace.records)} scans written to {out}")
    return EXIT_OK


def cmd_export(args, cfg: Config) -> int:
    try:
        loaded = load_st_dir(args.dir)
        if not loaded:
            raise DiagnosticError(f"no .st files in {args.dir}")
        units = [u for _, u in loaded]
        arts = [Artifact(u, "manual", p.name) for p, u in loaded]
        name = args.name or Path(args.dir).resolve().name
        out = Path(args.project) if args.project else Path(args.dir) / "project.xml"
        write_project(out, build_manifest(name, arts, cfg.cycle_ms), units)
    except DiagnosticError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except OSError as exc:
        _err(str(exc))
        return EXIT_FAIL
    print(f"project written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file overriding the default configuration")
    common.add_argument("--out", help="run directory (default: run)")

    p = argparse.ArgumentParser(prog="pnid2st", description="P&ID to IEC 61131-3 ST generation toolkit")
    p.add_argument("--version", action="version", version=f"pnid2st {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", parents=[common], help="normalize an image and cut it into tiles")
    pre.add_argument("image")
    pre.add_argument("--tile", type=int, help="tile edge length in pixels")
    pre.add_argument("--overlap", type=int, help="minimum overlap between adjacent tiles")
    pre.add_argument("--stretch", action="store_true", help="apply percentile contrast stretch")
    pre.set_defaults(func=cmd_preprocess)

    gen = sub.add_parser("generate", parents=[common], help="run a generation plan against a P&ID")
    gen.add_argument("source", help="P&ID image or directory of tiles")
    gen.add_argument("--plan", required=True, help="plan file (JSON task list)")
    mode = gen.add_mutually_exclusive_group()
    mode.add_argument("--mock", help="replay a mock script")
    mode.add_argument("--live", action="store_true", help=f"call a live endpoint; key from ${API_KEY_ENV}")
    gen.add_argument("--endpoint")
    gen.add_argument("--model")
    gen.add_argument("--workers", type=int)
    gen.add_argument("--max-rounds", type=int, dest="max_rounds")
    gen.add_argument("--tile", type=int)
    gen.add_argument("--overlap", type=int)
    gen.add_argument("--cycle-ms", type=int, dest="cycle_ms")
    gen.set_defaults(func=cmd_generate)

    chk = sub.add_parser("check", parents=[common], help="parse, check and lint an ST file")
    chk.add_argument("file")
    chk.add_argument("--format", choices=("text", "records"), default="text")
    chk.set_defaults(func=cmd_check)

    sim = sub.add_parser("simulate", parents=[common], help="run an ST program for a number of scans")
    sim.add_argument("file")
    sim.add_argument("--entry", required=True, help="PROGRAM or FUNCTION_BLOCK to instantiate")
    sim.add_argument("--scans", type=int)
    sim.add_argument("--scenario", help="JSON scenario with input overrides")
    sim.add_argument("--watch", help="comma separated variables to record")
    sim.add_argument("--cycle-ms", type=int, dest="cycle_ms")
    sim.add_argument("--trace", help="trace output file (default: <out>/<entry>.trace)")
    sim.add_argument("--format", choices=("lines", "csv"), default="lines")
    sim.set_defaults(func=cmd_simulate)

    exp = sub.add_parser("export", parents=[common], help="export a directory of .st files as PLCopen XML")
    exp.add_argument("dir")
    exp.add_argument("--name", help="project name (default: directory name)")
    exp.add_argument("--project", help="output XML file (default: <dir>/project.xml)")
    exp.add_argument("--cycle-ms", type=int, dest="cycle_ms")
    exp.set_defaults(func=cmd_export)
    return p


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if getattr(args, "scans", None) is not None and args.scans < 0:
        _err("--scans must be >= 0")
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())
