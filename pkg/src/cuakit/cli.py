"""Command-line entry point: ``cuakit <subcommand> ...``.

Exit codes: 0 success, 1 invalid data (validation findings, alignment
failures, inconsistent reports), 2 usage errors (bad flags, missing inputs).
Outputs are staged and renamed into place, so a failed run leaves nothing
behind. Each run writes a manifest with the tool version, the effective
configuration and its hash, and the hashes of every input file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Iterable, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .align import AlignerConfig, build_trajectory
from .bench.evaluate import EvalReport, evaluate_benchmark, load_bench, load_predictions
from .bench.matching import MatchConfig
from .bench.passn import RunMatrix
from .bench.report import parse_report, render_report
from .bench.stats import corpus_stats
from .cot.client import BackendConfig, RetryPolicy, make_client
from .cot.samples import LEVELS, SampleConfig, emit_training_samples, validate_sample
from .cot.synthesis import annotate_trajectory
from .errors import CuakitError, InputError
from .reduce import ReducerConfig, reduce
from .storage import (
    atomic_write_text,
    dumps,
    file_digest,
    find_demonstrations,
    load_demonstration,
    load_reduced,
    load_trajectory,
    reduced_to_dict,
    save_trajectory,
    validate_path,
    write_jsonl,
)
from .validation import has_errors

logger = logging.getLogger("cuakit")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
MANIFEST = "run_manifest.json"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# logging


class _KVFormatter(logging.Formatter):
    def format(self, record):
        msg = record.getMessage().replace('"', "'")
        return f'level={record.levelname.lower()} logger={record.name} msg="{msg}"'


def _setup_logging(level: str):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_KVFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level.upper(), logging.INFO))


# ---------------------------------------------------------------------------
# configuration


SECTIONS: dict[str, type] = {
    "reducer": ReducerConfig,
    "aligner": AlignerConfig,
    "samples": SampleConfig,
    "match": MatchConfig,
    "backend": BackendConfig,
}


def _defaults() -> dict:
    out = {}
    for name, cls in SECTIONS.items():
        d = asdict(cls())
        if name == "reducer":
            d["modifier_set"] = sorted(d["modifier_set"])
        if name == "aligner":
            d["downsample"] = list(d["downsample"])
        out[name] = d
    out["job"] = {"workers": 1, "seed": 0}
    return out


def load_config(path: Optional[str], overrides: dict) -> dict:
    """Defaults, then the TOML file, then explicit flags."""
    cfg = _defaults()
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from None
        for section, values in data.items():
            if section not in cfg or not isinstance(values, dict):
                raise UsageError(f"config {path}: unknown section [{section}]")
            unknown = set(values) - set(cfg[section])
            if unknown:
                raise UsageError(f"config {path}: unknown keys in [{section}]: {sorted(unknown)}")
            cfg[section].update(values)
    for (section, key), value in overrides.items():
        if value is not None:
            cfg[section][key] = value
    if cfg["job"]["workers"] < 1:
        raise UsageError("workers must be at least 1")
    return cfg


def build(cfg: dict, section: str):
    values = dict(cfg[section])
    if section == "reducer":
        values["modifier_set"] = frozenset(values["modifier_set"])
    if section == "aligner":
        values["downsample"] = tuple(values["downsample"])
    try:
        return SECTIONS[section](**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid [{section}] configuration: {exc}") from None


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# outputs


def _input_hashes(paths: Iterable[Path], base: Path) -> dict:
    out = {}
    for p in paths:
        p = Path(p)
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        for f in files:
            if f.name == MANIFEST or f.name.endswith(".manifest.json"):
                continue
            out[Path(os.path.relpath(f.resolve(), base.resolve())).as_posix()] = file_digest(f)
    return dict(sorted(out.items()))


def _manifest(command: str, cfg: dict, sections: list[str], inputs: list[Path], base: Path, **extra) -> dict:
    used = {s: cfg[s] for s in sections}
    used["job"] = {"seed": cfg["job"]["seed"]}  # worker count never changes results
    doc = {
        "tool": "cuakit",
        "version": __version__,
        "command": command,
        "config": used,
        "config_hash": _config_hash(used),
        "inputs": _input_hashes(inputs, base),
    }
    doc.update(extra)
    return doc


@contextmanager
def staged_dir(final: Path):
    """Yield a scratch directory that replaces ``final`` only if the block succeeds."""
    final = Path(final)
    final.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{final.name}.", dir=final.parent))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    trash = None
    if final.exists():
        trash = Path(tempfile.mkdtemp(prefix=f".{final.name}.old.", dir=final.parent))
        os.replace(final, trash / "old")
    os.replace(stage, final)
    if trash is not None:
        shutil.rmtree(trash, ignore_errors=True)


def _pmap(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _json_inputs(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if path.is_dir():
        return sorted(p for p in path.glob("*.json") if p.name != MANIFEST and not p.name.endswith(".manifest.json"))
    raise UsageError(f"input {path} does not exist")


def _require(path: Optional[str], flag: str) -> Path:
    if not path:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{flag} {path} does not exist")
    return p


def _write_outputs(out: Path, single: bool, docs: list[tuple[str, Callable[[Path], None]]], manifest: dict):
    """``docs`` are (name, writer) pairs; a single output goes to ``out`` itself."""
    if single:
        name, writer = docs[0]
        out.parent.mkdir(parents=True, exist_ok=True)
        writer(out)
        atomic_write_text(out.with_name(out.name + ".manifest.json"), dumps(manifest))
        return
    with staged_dir(out) as stage:
        for name, writer in docs:
            writer(stage / name)
        atomic_write_text(stage / MANIFEST, dumps(manifest))


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args, cfg) -> int:
    root = _require(args.input, "--in")
    bad = False
    for demo_dir in find_demonstrations(root) or [root]:
        findings = validate_path(demo_dir)
        for f in findings:
            print(f"{demo_dir.name}\t{f.severity}\t{f.code}\t{f.location}\t{f.message}")
        bad |= has_errors(findings)
        if not findings:
            print(f"{demo_dir.name}\tok")
    return EXIT_DATA if bad else EXIT_OK


def cmd_reduce(args, cfg) -> int:
    root = _require(args.input, "--in")
    out = Path(args.out)
    rcfg = build(cfg, "reducer")
    demos = find_demonstrations(root)
    if not demos:
        raise UsageError(f"no demonstrations under {root}")
    single = (root / "manifest.json").exists()
    out_dir = out.parent if single else out

    def one(d: Path):
        findings = validate_path(d)
        if has_errors(findings):
            raise CuakitError(f"{d.name}: " + "; ".join(f"{f.code} at {f.location}" for f in findings
                                                         if f.severity == "error"))
        demo = load_demonstration(d)
        return demo, reduce(demo, rcfg)

    results = _pmap(one, demos, cfg["job"]["workers"])
    docs = []
    for d, (demo, reduced) in zip(demos, results):
        name = f"{demo.demo_id}.json"
        # relative links are computed against the final location
        doc = reduced_to_dict(demo, reduced, d, out_dir)
        docs.append((name, lambda p, doc=doc: atomic_write_text(p, dumps(doc))))
        logger.info("reduced %s: %d events -> %d actions", demo.demo_id, len(demo.events), len(reduced))
    manifest = _manifest("reduce", cfg, ["reducer"], [root], out_dir)
    _write_outputs(out, single, docs, manifest)
    return EXIT_OK


def cmd_align(args, cfg) -> int:
    src = _require(args.input, "--in")
    out = Path(args.out)
    acfg = build(cfg, "aligner")
    files = _json_inputs(src)
    single = src.is_file()

    def one(p: Path):
        demo_dir, reduced = load_reduced(p)
        demo = load_demonstration(demo_dir)
        return build_trajectory(demo, reduced, acfg), demo_dir

    results = _pmap(one, files, cfg["job"]["workers"])
    docs = [(f"{t.traj_id}.json", lambda p, t=t: save_trajectory(t, p)) for t, _ in results]
    out_dir = out.parent if single else out
    manifest = _manifest("align", cfg, ["aligner"], files + sorted({d for _, d in results}), out_dir)
    _write_outputs(out, single, docs, manifest)
    return EXIT_OK


def _backend(cfg: dict, args) -> BackendConfig:
    b = build(cfg, "backend")
    if b.kind == "replay" and not b.cache_dir:
        raise UsageError("the replay backend needs --cache")
    if b.kind == "replay" and not Path(b.cache_dir).is_dir():
        raise UsageError(f"replay cache {b.cache_dir} does not exist")
    return b


def cmd_annotate(args, cfg) -> int:
    src = _require(args.input, "--in")
    out = Path(args.out)
    bcfg = _backend(cfg, args)
    files = _json_inputs(src)
    single = src.is_file()
    client = make_client(bcfg)
    policy = RetryPolicy(attempts=bcfg.retries, backoff=bcfg.backoff)
    workers = min(cfg["job"]["workers"], bcfg.max_in_flight) if bcfg.kind == "http" else cfg["job"]["workers"]

    def run(stage_root: Path):
        cue_dir = stage_root / "cues"

        def one(p: Path):
            return annotate_trajectory(client, load_trajectory(p), cue_dir, policy)

        return _pmap(one, files, workers)

    out_dir = out.parent if single else out
    manifest_sections = ["backend"]
    if single:
        trajs = run(out.parent / f"{out.stem}_cues")
        manifest = _manifest("annotate", cfg, manifest_sections, files, out_dir,
                             failed_steps={t.traj_id: list(t.failed_steps) for t in trajs})
        _write_outputs(out, True, [(out.name, lambda p: save_trajectory(trajs[0], p))], manifest)
    else:
        with staged_dir(out) as stage:
            trajs = run(stage)
            for t in trajs:
                save_trajectory(t, stage / f"{t.traj_id}.json")
            manifest = _manifest("annotate", cfg, manifest_sections, files, out_dir,
                                 failed_steps={t.traj_id: list(t.failed_steps) for t in trajs if t.failed_steps})
            atomic_write_text(stage / MANIFEST, dumps(manifest))
    for t in trajs:
        logger.info("annotated %s: %d steps, %d failed, privacy=%s", t.traj_id, len(t.steps),
                    len(t.failed_steps), t.privacy)
    return EXIT_OK


def _parse_mixture(text: Optional[str]) -> Optional[dict]:
    if not text:
        return None
    out = {}
    for part in text.split(","):
        name, _, w = part.partition("=")
        name = name.strip().upper()
        if name not in LEVELS:
            raise UsageError(f"unknown level {name!r} in --mixture")
        try:
            out[name] = float(w) if w else 1.0
        except ValueError:
            raise UsageError(f"bad weight {w!r} in --mixture") from None
    return out


def _relativize(sample: dict, base: Path) -> dict:
    for m in sample["messages"]:
        for p in m["content"]:
            if p["type"] == "image":
                p["image"] = Path(os.path.relpath(p["image"], base.resolve())).as_posix()
    return sample


def cmd_emit(args, cfg) -> int:
    src = _require(args.input, "--in")
    out = Path(args.out)
    scfg = build(cfg, "samples")
    mixture = _parse_mixture(args.mixture)
    files = _json_inputs(src)
    seed = cfg["job"]["seed"]

    def one(p: Path):
        t = load_trajectory(p)
        if t.privacy == "high":
            return t.traj_id, None
        return t.traj_id, emit_training_samples(t, scfg, mixture=mixture, seed=seed)

    rows, skipped = [], []
    for tid, samples in _pmap(one, files, cfg["job"]["workers"]):
        if samples is None:
            skipped.append(tid)
            logger.info("skipped %s: privacy level high", tid)
            continue
        for s in samples:
            validate_sample(s)
            rows.append(_relativize(s, out.parent))
    manifest = _manifest("emit", cfg, ["samples"], files, out.parent, mixture=mixture,
                         skipped_high_privacy=skipped, samples=len(rows))
    write_jsonl(out, rows)
    atomic_write_text(out.with_name(out.name + ".manifest.json"), dumps(manifest))
    logger.info("emitted %d samples from %d trajectories", len(rows), len(files) - len(skipped))
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    bench_path = _require(args.bench, "--bench")
    preds_path = _require(args.preds, "--preds")
    out = Path(args.out)
    tasks = load_bench(bench_path)
    preds = load_predictions(preds_path)
    report = evaluate_benchmark(tasks, preds, build(cfg, "match"), workers=cfg["job"]["workers"])
    manifest = _manifest("eval", cfg, ["match"], [bench_path, preds_path], out)
    with staged_dir(out) as stage:
        atomic_write_text(stage / "report.md", render_report(report, "md", args.label))
        atomic_write_text(stage / "report.json", render_report(report, "json", args.label))
        atomic_write_text(stage / MANIFEST, dumps(manifest))
    problems = report.check_consistency()
    for p in problems:
        logger.error("consistency: %s", p)
    logger.info("average step SR %.2f over %d tasks", report.average_sr, len(tasks))
    return EXIT_DATA if problems else EXIT_OK


def _emit_doc(text: str, out: Optional[str]):
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_passn(args, cfg) -> int:
    if args.matrix:
        path = _require(args.matrix, "--matrix")
        with open(path, encoding="utf-8") as fh:
            matrix = RunMatrix.from_dict(json.load(fh))
        if args.budget:
            matrix = RunMatrix(matrix.cells, args.budget, matrix.task_ids)
    elif args.reports:
        rows, ids = [], None
        for r in args.reports:
            rep = parse_report(_require(r, "--reports").read_text(encoding="utf-8"))
            if not isinstance(rep, EvalReport):
                raise UsageError(f"{r} is not an evaluation report")
            tids = tuple(sorted(rep.task_success))
            if ids is not None and tids != ids:
                raise UsageError(f"{r} covers different tasks than the first report")
            ids = tids
            rows.append(tuple(rep.task_success[t] for t in tids))
        matrix = RunMatrix(tuple(rows), args.budget or "", ids)
    else:
        raise UsageError("give --matrix or --reports")
    _emit_doc(render_report(matrix, args.format, args.label), args.out)
    return EXIT_OK


def cmd_stats(args, cfg) -> int:
    src = _require(args.input, "--in")
    if src.is_file() and src.suffix == ".json" and json.loads(src.read_text(encoding="utf-8")).get("format", "").startswith("cuakit.bench"):
        items = load_bench(src)
    else:
        items = [load_trajectory(p) for p in _json_inputs(src)]
    _emit_doc(json.dumps(corpus_stats(items), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    src = _require(args.input, "--in")
    report = parse_report(src.read_text(encoding="utf-8"))
    label = args.label or json.loads(src.read_text(encoding="utf-8")).get("label", "model")
    _emit_doc(render_report(report, args.format, label), args.out)
    if isinstance(report, EvalReport) and report.check_consistency():
        return EXIT_DATA
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    from .synth import bench_fixture, synth_corpus

    out = Path(args.out)
    seed = cfg["job"]["seed"]
    with staged_dir(out) as stage:
        demos = synth_corpus(stage / "demos", args.n, seed)
        bench, preds = bench_fixture(demos, seed)
        atomic_write_text(stage / "bench.json", dumps(bench))
        write_jsonl(stage / "preds.jsonl", preds)
        atomic_write_text(stage / MANIFEST, dumps({"tool": "cuakit", "version": __version__,
                                                   "command": "synth-fixture", "seed": seed, "demos": args.n}))
    logger.info("wrote %d synthetic demonstrations to %s", args.n, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cuakit", description="Computer-use trajectory toolkit.")
    p.add_argument("--version", action="version", version=f"cuakit {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with [reducer], [aligner], [samples], [match], [backend], [job]")
    common.add_argument("--workers", type=int, help="parallel items (default 1)")
    common.add_argument("--seed", type=int, help="seed for randomized steps")
    common.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("validate", parents=[common], help="check demonstration directories")
    s.add_argument("--in", dest="input", required=True, help="demo directory or corpus root")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("reduce", parents=[common], help="compress raw events into actions")
    s.add_argument("--in", dest="input", required=True, help="demo directory or corpus root")
    s.add_argument("--out", required=True, help="output file (one demo) or directory (corpus)")
    s.add_argument("--double-click-window", type=int)
    s.add_argument("--drag-min-distance", type=float)
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("align", parents=[common], help="attach keyframes and the terminal step")
    s.add_argument("--in", dest="input", required=True, help="reduced file or directory")
    s.add_argument("--out", required=True)
    s.add_argument("--idle-gap", type=int)
    s.add_argument("--diff-threshold", type=float)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("annotate", parents=[common], help="synthesize reflections and chain of thought")
    s.add_argument("--in", dest="input", required=True, help="trajectory file or directory")
    s.add_argument("--out", required=True)
    s.add_argument("--backend", choices=["mock", "http", "replay"])
    s.add_argument("--cache", help="response cache directory")
    s.add_argument("--endpoint")
    s.add_argument("--model")
    s.set_defaults(func=cmd_annotate)

    s = sub.add_parser("emit", parents=[common], help="write chat training samples")
    s.add_argument("--in", dest="input", required=True, help="annotated trajectory file or directory")
    s.add_argument("--out", required=True, help="samples .jsonl file")
    s.add_argument("--level", choices=LEVELS)
    s.add_argument("--mixture", help="per-step level weights, e.g. L1=1,L2=1,L3=1")
    s.add_argument("--window", type=int, help="screenshots per sample (default 3)")
    s.add_argument("--keep-flagged", action="store_true", help="also emit targets for flagged steps")
    s.set_defaults(func=cmd_emit)

    s = sub.add_parser("eval", parents=[common], help="score predictions against a benchmark")
    s.add_argument("--bench", required=True)
    s.add_argument("--preds", required=True)
    s.add_argument("--out", default="eval_out", help="directory for report.md and report.json")
    s.add_argument("--label", default="model")
    s.add_argument("--no-status-check", action="store_true", help="ignore terminate status when matching")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("passn", parents=[common], help="Pass@n and run averages")
    s.add_argument("--matrix", help="run matrix JSON")
    s.add_argument("--reports", nargs="+", help="report.json files, one per run")
    s.add_argument("--budget", help="step budget label")
    s.add_argument("--format", choices=["md", "json"], default="md")
    s.add_argument("--label", default="model")
    s.add_argument("--out")
    s.set_defaults(func=cmd_passn)

    s = sub.add_parser("stats", parents=[common], help="corpus statistics")
    s.add_argument("--in", dest="input", required=True, help="bench.json or trajectory file/directory")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("report", parents=[common], help="re-render a report.json")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=["md", "json"], default="md")
    s.add_argument("--label")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth-fixture", parents=[common], help="generate a synthetic corpus and benchmark")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=20, help="number of demonstrations")
    s.set_defaults(func=cmd_synth)
    return p


def _overrides(args) -> dict:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    ov = {
        ("job", "workers"): g("workers"),
        ("job", "seed"): g("seed"),
        ("reducer", "double_click_window"): g("double_click_window"),
        ("reducer", "drag_min_distance"): g("drag_min_distance"),
        ("aligner", "idle_gap"): g("idle_gap"),
        ("aligner", "diff_threshold"): g("diff_threshold"),
        ("samples", "level"): g("level"),
        ("samples", "history_images"): g("window"),
        ("backend", "kind"): g("backend"),
        ("backend", "cache_dir"): g("cache"),
        ("backend", "endpoint"): g("endpoint"),
        ("backend", "model"): g("model"),
    }
    if g("keep_flagged"):
        ov[("samples", "drop_flagged_steps")] = False
    if g("no_status_check"):
        ov[("match", "check_status")] = False
    return ov


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.log_level)
    try:
        cfg = load_config(args.config, _overrides(args))
        src, dst = getattr(args, "input", None), getattr(args, "out", None)
        if src and dst and Path(src).resolve() == Path(dst).resolve():
            raise UsageError("--in and --out must be different paths")
        return args.func(args, cfg)
    except UsageError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except CuakitError as exc:
        logger.error("%s: %s", exc.code, exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
