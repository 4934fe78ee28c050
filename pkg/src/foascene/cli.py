"""Command-line entry point: ``foascene <subcommand> ...``.

Machine-readable results go to stdout or files; logs and diagnostics go to
stderr. Usage and configuration errors exit with 2, data errors with 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from foascene import __version__
from foascene.config import ConfigError, ToolConfig, load_config, override

log = logging.getLogger("foascene")


class UsageError(Exception):
    pass


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--workers", type=int, help="worker processes (default: available cores)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foascene", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic FOA dataset")
    _common(p)
    p.add_argument("--pool", required=True, help="source pool JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rooms", type=int, default=1)
    p.add_argument("--clips", type=int, default=10)
    p.add_argument("--max-sources", type=int)
    p.add_argument("--save-rirs", action="store_true", help="also write every room RIR")

    p = sub.add_parser("rir", help="sample a room and render FOA impulse responses")
    _common(p)
    p.add_argument("--room", help="RoomSpec JSON (default: sample one from --seed)")
    p.add_argument("--positions", type=int, nargs="*", help="candidate indices (default: all)")
    p.add_argument("--source", type=float, nargs=3, metavar=("X", "Y", "Z"), help="explicit source position")
    p.add_argument("--max-order", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("features", help="extract the seven-map feature stack")
    _common(p)
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True, help="feature container path")

    p = sub.add_parser("localize", help="run the intensity-vector localizer")
    _common(p)
    p.add_argument("--wav", required=True)
    p.add_argument("--json", help="output JSON (default: stdout)")

    p = sub.add_parser("render", help="scene JSON -> scene text")
    _common(p)
    p.add_argument("--manifest", help="scene or clip JSON (default: stdin)")
    p.add_argument("--order-by", default="loudness", choices=["loudness", "zone", "distance", "name", "onset"])

    p = sub.add_parser("parse", help="scene text -> scene JSON")
    _common(p)
    p.add_argument("--text", help="scene text file (default: stdin)")

    p = sub.add_parser("eval", help="score hypotheses against references")
    _common(p)
    p.add_argument("--ref", required=True, help="reference manifest.jsonl")
    p.add_argument("--hyp", required=True, help="hypothesis JSONL with clip_id and text")
    p.add_argument("--protocol", default="os", type=str.lower, choices=["os", "om"])
    p.add_argument("--report", help="report JSON path (default: stdout)")
    p.add_argument("--similarity", choices=["lexical", "embedding_service"])
    p.add_argument("--endpoint", help="embedding service URL")
    p.add_argument("--averaging", default="max", choices=["max", "ref"],
                   help="TupleScore denominator: max(|G|,|S|) or reference count")

    p = sub.add_parser("report", help="aggregate eval reports into a summary table")
    _common(p)
    p.add_argument("reports", nargs="+", help="report JSON files written by eval")
    p.add_argument("--group-by", choices=["n_src"])
    p.add_argument("--out", help="summary JSON path (default: stdout)")
    p.add_argument("--format", default="json", choices=["json", "table"])
    return parser


def resolve_config(args) -> ToolConfig:
    config = load_config(getattr(args, "config", None))
    config = override(config, None, seed=args.seed, workers=args.workers)
    if getattr(args, "max_sources", None) is not None:
        config = override(config, "synth", max_sources=args.max_sources)
    if config.workers is None:
        from foascene.dataset import default_workers

        config = override(config, None, workers=default_workers())
    if config.workers < 1:
        raise ConfigError("--workers must be positive")
    return config


def _write_output(payload: str, path: Optional[str]) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def cmd_synth(args, config: ToolConfig) -> int:
    from foascene.dataset import generate_dataset
    from foascene.synth import SourcePool

    pool = SourcePool.load(args.pool)
    if args.rooms < 1 or args.clips < 0:
        raise UsageError("--rooms must be >= 1 and --clips >= 0")
    generate_dataset(pool, args.out, args.rooms, args.clips, config.seed, config.synth,
                     workers=config.workers, save_rirs=args.save_rirs)
    return 0


def cmd_rir(args, config: ToolConfig) -> int:
    from foascene.audio_io import write_json, write_wav
    from foascene.rir import sample_room, simulate_rir
    from foascene.scene import RoomSpec

    synth = config.synth
    if args.room:
        with open(args.room, encoding="utf-8") as fh:
            room = RoomSpec.from_dict(json.load(fh))
    else:
        room = sample_room(config.seed, absorption_range=synth.absorption_range)
    out = Path(args.out)
    write_json(out / "room.json", room.to_dict())
    if args.source is not None:
        targets = [("source", args.source)]
    else:
        indices = args.positions if args.positions else range(len(room.candidate_source_positions))
        for i in indices:
            if not 0 <= i < len(room.candidate_source_positions):
                raise UsageError(f"position index {i} out of range")
        targets = [(f"pos_{i:02d}", room.candidate_source_positions[i]) for i in indices]
    for name, position in targets:
        rir = simulate_rir(room, position, max_order=args.max_order, sample_rate=synth.sample_rate,
                           max_duration=synth.max_rir_duration)
        write_wav(out / f"rir_{name}.wav", rir.data, rir.sample_rate_hz)
        write_json(out / f"rir_{name}.json", rir.sidecar())
    log.info("wrote %d RIRs to %s", len(targets), out)
    return 0


def _read_foa(path, sample_rate: int) -> np.ndarray:
    from foascene.audio_io import read_wav

    data, _ = read_wav(path, sample_rate)
    if data.shape[0] != 4:
        raise ValueError(f"{path}: expected 4 channels (W, X, Y, Z), found {data.shape[0]}")
    return data


def cmd_features(args, config: ToolConfig) -> int:
    from foascene.features import extract_features, write_features

    stack = extract_features(_read_foa(args.wav, config.features.sample_rate), config.features)
    write_features(args.out, stack)
    log.info("wrote %s maps of shape %s to %s", 7, stack.shape, args.out)
    return 0


def cmd_localize(args, config: ToolConfig) -> int:
    from foascene.localizer import localize

    results = localize(_read_foa(args.wav, config.localizer.sample_rate), config.localizer)
    _write_output(_dump({"wav": args.wav, "events": [r.to_dict() for r in results]}), args.json)
    return 0


def _read_input(path: Optional[str]) -> str:
    if path:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    return sys.stdin.read()


def cmd_render(args, config: ToolConfig) -> int:
    from foascene.scene import SceneMeta
    from foascene.scenetext import render

    data = json.loads(_read_input(args.manifest))
    scene = SceneMeta.from_dict(data.get("scene", data))
    sys.stdout.write(render(scene, args.order_by))
    return 0


def cmd_parse(args, config: ToolConfig) -> int:
    from foascene.scenetext import parse

    description = parse(_read_input(args.text))
    payload = {
        "scene": description.parsed.to_dict(),
        "warnings": [
            {"kind": type(w).__name__, "line": w.line, "column": w.column, "message": str(w), "fatal": w.fatal}
            for w in description.parse_warnings
        ],
    }
    sys.stdout.write(_dump(payload))
    return 0


def cmd_eval(args, config: ToolConfig) -> int:
    from foascene.dataset import read_manifest
    from foascene.evaluation import evaluate_corpus, summarize
    from foascene.scene import SceneMeta
    from foascene.similarity import make_provider

    sim = config.similarity
    if args.similarity:
        sim = override(config, "similarity", kind=args.similarity).similarity
    if args.endpoint:
        import dataclasses

        sim = dataclasses.replace(sim, embedding=dataclasses.replace(sim.embedding, endpoint=args.endpoint))
    provider = make_provider(sim.kind, sim.embedding, fallback=sim.fallback_to_lexical)

    refs = {cid: SceneMeta.from_dict(rec["scene"]) for cid, rec in read_manifest(args.ref).items()}
    hyp_records = read_manifest(args.hyp)
    hyps = {}
    for cid, rec in hyp_records.items():
        if "text" not in rec:
            raise ValueError(f"{args.hyp}: record {cid} lacks 'text'")
        hyps[cid] = rec["text"]
    missing = sorted(set(refs) - set(hyps))
    if missing:
        log.warning("%d reference clips have no hypothesis and score as all-miss", len(missing))
    extra = sorted(set(hyps) - set(refs))
    if extra:
        log.warning("ignoring %d hypotheses without a reference", len(extra))
    reports = evaluate_corpus(refs, hyps, args.protocol.upper(), provider, args.averaging, config.workers)
    fell_back = bool(getattr(provider, "fell_back", False))
    payload = {
        "protocol": args.protocol.upper(),
        "provider": provider.kind,
        "provider_fallback": fell_back,
        "averaging": args.averaging,
        "per_clip": {cid: r.to_dict() for cid, r in reports.items()},
        "summary": summarize(list(reports.values()), group_by="n_src",
                             groups=range(1, config.synth.max_sources + 1)),
    }
    _write_output(_dump(payload), args.report)
    return 0


def format_table(summary: dict) -> str:
    from foascene.evaluation import METRICS, TABLE_COLUMNS

    rows = [("all", summary["all"])] + [(f"n_src={k}", v) for k, v in summary.get("by_n_src", {}).items()]
    header = ["subset", "clips"] + [TABLE_COLUMNS[m] for m in METRICS]
    lines = ["\t".join(header)]
    for name, block in rows:
        cells = [name, str(block["clips"])]
        for metric in METRICS:
            mean = block[metric]["mean"]
            cells.append("n/a" if mean is None else f"{mean:.3f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def cmd_report(args, config: ToolConfig) -> int:
    from foascene.evaluation import ScoreReport, summarize

    reports, protocols, providers = [], set(), set()
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        protocols.add(data.get("protocol"))
        providers.add(data.get("provider"))
        reports.extend(ScoreReport.from_dict(r) for _, r in sorted(data["per_clip"].items()))
    if len(protocols) > 1 or len(providers) > 1:
        raise ValueError("refusing to pool reports with different protocols or similarity providers")
    groups = range(1, config.synth.max_sources + 1) if args.group_by else ()
    summary = summarize(reports, group_by=args.group_by, groups=groups)
    summary["protocol"] = protocols.pop()
    summary["provider"] = providers.pop()
    text = format_table(summary) if args.format == "table" else _dump(summary)
    _write_output(text, args.out)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "rir": cmd_rir,
    "features": cmd_features,
    "localize": cmd_localize,
    "render": cmd_render,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "report": cmd_report,
}


def _error(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = resolve_config(args)
        log.info("resolved config: %s", json.dumps(config.to_dict(), sort_keys=True))
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as exc:
        _error("usage", exc)
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        _error("data", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
