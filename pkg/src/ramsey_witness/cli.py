"""``rw`` command-line driver.

Exit codes: 0 success, 1 IO or usage error, 2 structured stage failure (or a
failed check such as a property suite or a replay mismatch).

Every command that writes files also writes a manifest next to them; the
``replay`` command reruns the recorded command and compares artifact hashes.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from .census import EXHAUSTIVE_LIMIT, exhaustive_psi, psi_scaling_experiment, sampled_psi, \
    sampled_psi_level
from .config import PipelineConfig
from .errors import CapacityError, InputError, StageFailure
from .graph import complete_graph, gnp_half, read_graph, write_graph
from .pipeline import FullReport, certify_witnesses, dumps, run_full, run_per_l
from .suites import hypergeom_suites, lemma_suites

log = logging.getLogger("ramsey_witness")

MANIFEST_SUFFIX = ".manifest.json"
PIPELINE_FILES = ("witnesses.json", "report.json", "levels.csv")


class UsageError(Exception):
    pass


# --- file helpers -----------------------------------------------------------


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _threads() -> int:
    raw = os.environ.get("RW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise UsageError(f"RW_THREADS must be an integer, got {raw!r}") from exc


def _load_graph(path: str):
    try:
        return read_graph(path)
    except FileNotFoundError as exc:
        raise UsageError(f"graph file not found: {path}") from exc


# --- manifests --------------------------------------------------------------


def _replayable_args(args: argparse.Namespace) -> dict:
    out = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    for key in ("graph", "config", "out"):
        if out.get(key):
            out[key] = str(Path(out[key]).resolve())
    return out


def _write_manifest(args: argparse.Namespace, manifest_path: Path, artifacts: list[Path],
                    started: str, graph=None, config: PipelineConfig | None = None,
                    extra: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "args": _replayable_args(args),
        "seed": getattr(args, "seed", None),
        "config": config.to_dict() if config is not None else None,
        "graph_hash": graph.content_hash() if graph is not None else None,
        "started": started,
        "finished": _now(),
        "artifacts": [{"path": str(p.resolve()), "sha256": _sha256(p)} for p in artifacts],
        **(extra or {}),
    }
    _write_text(manifest_path, dumps(manifest))


# --- commands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    started = _now()
    if args.n < 1:
        raise UsageError("--n must be positive")
    if not args.out:
        raise UsageError("generate needs --out")
    g = gnp_half(args.n, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph(g, out, args.format)
    _write_manifest(args, Path(str(out) + MANIFEST_SUFFIX), [out], started, g)
    print(f"wrote G({args.n}, 1/2) with {g.edge_count} edges to {out}")
    return 0


def cmd_census(args) -> int:
    started = _now()
    g = _load_graph(args.graph)
    levels = args.ell
    if args.mode == "exact":
        if g.n > EXHAUSTIVE_LIMIT:
            raise CapacityError(f"exact census needs n <= {EXHAUSTIVE_LIMIT}, got {g.n}")
        psi = exhaustive_psi(g)
        if levels:
            psi = type(psi)(frozenset(p for p in psi.pairs if p[0] in set(levels)), psi.mode)
        text = dumps(psi.to_dict())
    elif levels:
        rows = ["n,ell,samples,distinct_edge_counts"]
        for ell in levels:
            rows.append(f"{g.n},{ell},{args.samples},"
                        f"{sampled_psi_level(g, ell, args.samples, args.seed)}")
        text = "\n".join(rows) + "\n"
    else:
        text = dumps(sampled_psi(g, args.samples, args.seed).to_dict())
    if args.out:
        out = Path(args.out)
        _write_text(out, text)
        _write_manifest(args, Path(str(out) + MANIFEST_SUFFIX), [out], started, g)
    else:
        sys.stdout.write(text)
    return 0


def _pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    if args.seed is not None:
        overrides["seed"] = args.seed
    return PipelineConfig.from_dict({**cfg.to_dict(), **overrides})


def cmd_pipeline(args) -> int:
    started = _now()
    g = _load_graph(args.graph)
    cfg = _pipeline_config(args)
    if not args.out:
        raise UsageError("pipeline needs --out DIR")
    out = Path(args.out)
    if args.ell is not None:
        full = FullReport([run_per_l(g, args.ell, cfg)])
    else:
        full = run_full(g, cfg, threads=_threads())
    witness_sets = [r.witness_set for r in full.results if r.witness_set is not None]
    certified = [certify_witnesses(g, ws) for ws in witness_sets]
    report = full.to_dict()
    report["certified"] = [c.ok for c in certified]
    report["certification_problems"] = [p for c in certified for p in c.problems]
    report["n"] = g.n
    report["graph_hash"] = g.content_hash()
    witness_doc = [ws.to_dict() for ws in witness_sets]
    paths = [out / name for name in PIPELINE_FILES]
    _write_text(paths[0], dumps(witness_doc[0] if args.ell is not None and witness_doc
                                 else witness_doc))
    _write_text(paths[1], dumps(report))
    _write_text(paths[2], full.to_csv())
    # timings live only in the manifest so that replayed artifacts stay byte-identical
    _write_manifest(args, out / "manifest.json", paths, started, g, cfg,
                    {"timings": {str(r.ell): r.timings for r in full.results}})
    for f in full.failures:
        print(f"ell={f['ell']}: failed at {f['stage']}", file=sys.stderr)
    if not witness_sets:
        return 2
    if not all(certified):
        for p in report["certification_problems"]:
            print(p, file=sys.stderr)
        return 2
    total = full.total_pairs
    print(f"{len(witness_sets)} of {len(full.results)} levels succeeded; "
          f"{total} certified distinct (level, edge count) pairs")
    return 0


def cmd_scaling(args) -> int:
    started = _now()
    factory = gnp_half if args.family == "gnp" else (lambda n, _seed: complete_graph(n))
    res = psi_scaling_experiment(args.sizes, args.samples, args.seed, factory)
    text = res.to_csv()
    if args.out:
        out = Path(args.out)
        _write_text(out, text)
        _write_manifest(args, Path(str(out) + MANIFEST_SUFFIX), [out], started)
    else:
        sys.stdout.write(text)
    if res.slope is not None:
        print(f"slope={res.slope:.4f}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_lemma_test(args) -> int:
    started = _now()
    results = []
    if args.suite in ("lemma", "all"):
        results += lemma_suites(args.trials, args.seed)
    if args.suite in ("hypergeom", "all"):
        results += hypergeom_suites(args.trials, args.seed, args.samples, args.point_samples)
    for r in results:
        status = "ok" if r.passed else f"FAILED ({len(r.failures)})"
        print(f"{r.name:22s} trials={r.trials:<6d} {status}")
    if args.out:
        out = Path(args.out)
        _write_text(out, dumps([r.to_dict() for r in results]))
        _write_manifest(args, Path(str(out) + MANIFEST_SUFFIX), [out], started)
    return 0 if all(r.passed for r in results) else 2


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"manifest not found: {path}") from exc
    recorded = manifest["args"]
    if manifest.get("graph_hash") and recorded.get("graph"):
        current = _load_graph(recorded["graph"]).content_hash()
        if current != manifest["graph_hash"]:
            raise UsageError("input graph changed since the manifest was written")
    with tempfile.TemporaryDirectory() as tmp:
        ns = argparse.Namespace(**copy.deepcopy(recorded))
        original_out = Path(recorded["out"])
        is_dir = recorded["command"] == "pipeline"
        ns.out = tmp if is_dir else str(Path(tmp) / original_out.name)
        ns.func = COMMANDS[recorded["command"]]
        code = _silenced(ns)
        if code != 0 and recorded["command"] != "lemma-test":
            print(f"replayed command exited with {code}", file=sys.stderr)
        mismatches = []
        for art in manifest["artifacts"]:
            fresh = Path(tmp) / Path(art["path"]).name
            if not fresh.exists() or _sha256(fresh) != art["sha256"]:
                mismatches.append(art["path"])
    for m in mismatches:
        print(f"mismatch: {m}", file=sys.stderr)
    if mismatches:
        return 2
    print(f"replayed {len(manifest['artifacts'])} artifact(s): identical")
    return 0


def _silenced(ns) -> int:
    stdout = sys.stdout
    sys.stdout = open(os.devnull, "w")
    try:
        return ns.func(ns)
    finally:
        sys.stdout.close()
        sys.stdout = stdout


COMMANDS = {"generate": cmd_generate, "census": cmd_census, "pipeline": cmd_pipeline,
            "scaling": cmd_scaling, "lemma-test": cmd_lemma_test, "replay": cmd_replay}


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rw", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded G(n, 1/2)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("binary", "edgelist"), default="binary")
    p.add_argument("--out")

    p = sub.add_parser("census", help="exact or sampled (vertex count, edge count) census")
    p.add_argument("graph")
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--ell", type=int, action="append", help="level to report (repeatable)")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("pipeline", help="run the witness construction and certify it")
    p.add_argument("graph")
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one field")
    p.add_argument("--seed", type=int)
    p.add_argument("--ell", type=int, help="run a single level instead of the grid")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("scaling", help="distinct edge counts at level n/2 across sizes")
    p.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", choices=("gnp", "complete"), default="gnp")
    p.add_argument("--out")

    p = sub.add_parser("lemma-test", help="randomized property suites")
    p.add_argument("--suite", choices=("lemma", "hypergeom", "all"), default="all")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--samples", type=int, default=100_000, help="draws per tail instance")
    p.add_argument("--point-samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("replay", help="rerun a manifest and compare artifact hashes")
    p.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors; remap to 1
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func = COMMANDS[args.command]
    try:
        return args.func(args)
    except StageFailure as exc:
        print(json.dumps(exc.to_dict(), default=str), file=sys.stderr)
        return 2
    except (UsageError, InputError, CapacityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
