"""Command-line entry point.

One binary, four workflows plus a fixture generator:

- ``craft``    — hide a small target image inside a large source image.
- ``poison``   — assemble a poisoned detection dataset under a rate budget.
- ``scan``     — run the detection probes over a labeled corpus.
- ``defend``   — measure attack survival under a prevention policy.
- ``fixtures`` — generate synthetic demo inputs for the above.

Every run takes an optional config file (JSON or TOML; unknown keys are
rejected), with command-line flags winning over config values. Outputs land
in --out (or $SCALECLOAK_OUT/<subcommand>), always including the resolved
configuration and a JSON-lines run log; report paths get a rendered figure
next to the machine-readable file. Exit codes: 0 success, 1 usage/IO error,
2 domain failure (infeasible craft, annotation contract violation).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import figures
from .crafting import append_craft_log, craft, craft_no_replica, AttackJob, perceptibility, verify
from .detection import DetectionConfig, evaluate_corpus, report_to_csv, report_to_json
from .errors import (
    AnnotationContentMismatch,
    ConfigError,
    EmptyCorpus,
    Infeasible,
    ScaleCloakError,
)
from .metrics import max_abs_diff
from .poisoning import (
    AnnotatedSample,
    ObjectAnnotation,
    PoisonPlan,
    PoisonRecord,
    emit_dataset,
    parse_annotation,
    plan_multisize_budget,
    select_poison_set,
)
from .prevention import PreventionPolicy, attack_survival_rate
from .raster import load_image, save_png
from .replica import load_pair
from .scaleops import ALGORITHMS, build_operator, downscale
from .synth import make_benign_samples, make_candidate_pool, make_pair, make_scene

log = logging.getLogger("scalecloak")

_GLOBAL_KEYS = {"seed", "threads", "out", "log_level"}
_SECTION_KEYS = {
    "craft": {"source", "target", "epsilon", "algorithm", "no_replica"},
    "poison": {
        "benign_dir",
        "benign_count",
        "benign_size",
        "candidates",
        "mode",
        "target_class",
        "poison_rate",
        "training_set_size",
        "input_sizes",
        "epsilon",
        "algorithm",
        "scenes",
        "per_scene",
        "src_size",
    },
    "scan": {
        "corpus",
        "probe_size",
        "scaling_mse_threshold",
        "scaling_mse_alt_threshold",
        "scaling_ssim_threshold",
        "filtering_mse_threshold",
        "filtering_ssim_threshold",
        "csp_threshold",
        "filter_kind",
        "filter_window",
    },
    "defend": {
        "attack",
        "target",
        "mode",
        "final_size",
        "intermediate_range",
        "trials",
        "epsilon",
        "algorithm",
        "forbidden_multiples",
    },
    "fixtures": {"src_size", "dst_size", "channels", "count", "algorithm"},
}

_DEFAULTS = {
    "craft": {"epsilon": 1.0, "algorithm": "bilinear", "no_replica": False},
    "poison": {
        "mode": "cloaking",
        "poison_rate": 0.0014,
        "epsilon": 1.0,
        "algorithm": "bilinear",
        "scenes": 6,
        "per_scene": None,
        "src_size": None,
        "benign_size": [375, 500],
        "input_sizes": [[64, 64]],
        "target_class": None,
        "training_set_size": None,
        "benign_dir": None,
        "benign_count": None,
        "candidates": None,
    },
    "scan": {"corpus": None, "probe_size": [416, 416]},
    "defend": {
        "attack": None,
        "target": None,
        "mode": "random_intermediate",
        "final_size": None,
        "intermediate_range": [0.6, 0.9],
        "trials": 100,
        "epsilon": 1.0,
        "algorithm": "bilinear",
        "forbidden_multiples": True,
    },
    "fixtures": {
        "src_size": [192, 192],
        "dst_size": [64, 64],
        "channels": 3,
        "count": 1,
        "algorithm": "bilinear",
    },
}


def _load_config_file(path: str) -> dict:
    try:
        if path.endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        elif path.endswith(".toml"):
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            raise ConfigError(f"config {path!r} must end in .json or .toml")
    except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object")
    known = _GLOBAL_KEYS | set(_SECTION_KEYS)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, keys in _SECTION_KEYS.items():
        block = data.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"config section {section!r} must be a table/object")
        bad = set(block) - keys
        if bad:
            raise ConfigError(f"unknown keys in config section {section!r}: {sorted(bad)}")
    return data


def _resolve_section(command: str, file_cfg: dict, args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS[command])
    merged.update(file_cfg.get(command, {}))
    for key in _SECTION_KEYS[command]:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _resolve_out(command: str, file_cfg: dict, args: argparse.Namespace) -> str:
    if args.out:
        return args.out
    if file_cfg.get("out"):
        return os.path.join(file_cfg["out"], command)
    env_root = os.environ.get("SCALECLOAK_OUT")
    if env_root:
        return os.path.join(env_root, command)
    return os.path.join("scalecloak_out", command)


def _write_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _append_event(out_dir: str, event: dict) -> None:
    with open(os.path.join(out_dir, "run_log.jsonl"), "a", encoding="utf-8") as fh:
        fh.write(json.dumps(event, sort_keys=True) + "\n")


def _size(value) -> tuple[int, int]:
    h, w = value
    return int(h), int(w)


def _require(cfg: dict, key: str, command: str):
    if cfg.get(key) is None:
        raise ConfigError(f"{command}: required setting {key!r} missing (flag or config)")
    return cfg[key]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_craft(cfg: dict, out_dir: str, seed: int, threads: int) -> int:
    source = load_image(_require(cfg, "source", "craft"))
    target = load_image(_require(cfg, "target", "craft"))
    epsilon = float(cfg["epsilon"])
    operator = build_operator(
        cfg["algorithm"], (source.height, source.width), (target.height, target.width)
    )
    if cfg["no_replica"]:
        result = craft_no_replica(source, target, epsilon, operator)
    else:
        result = craft(AttackJob(source=source, target=target, epsilon=epsilon, operator=operator))

    attack_path = os.path.join(out_dir, "attack.png")
    save_png(result.attack_image, attack_path)
    reloaded = load_image(attack_path)
    file_residual = max_abs_diff(downscale(reloaded, operator), target)

    verification = verify(result.attack_image, target, operator, epsilon)
    percep = perceptibility(result.attack_image, source)
    report = {
        "replica": result.replica,
        "epsilon": epsilon,
        "scaling_ratio": result.scaling_ratio,
        "perturbation_energy": result.perturbation_energy,
        "residual_linf": result.residual_linf,
        "residual_linf_postquant": result.residual_linf_postquant,
        "residual_linf_from_file": file_residual,
        "solver_iterations": result.solver_iterations,
        "verification": verification,
        "perceptibility": percep,
        "attack_image": os.path.basename(attack_path),
    }
    _write_json(report, os.path.join(out_dir, "craft_report.json"))
    append_craft_log(os.path.join(out_dir, "craft_log.jsonl"), result)
    figures.craft_montage(
        source,
        result.attack_image,
        downscale(result.attack_image, operator),
        target,
        os.path.join(out_dir, "craft_montage.png"),
    )
    passed = verification["pass"] and file_residual <= epsilon + 1.0
    print(
        f"craft: ratio {result.scaling_ratio:.2f}, epsilon {epsilon:g}, "
        f"residual {result.residual_linf:.4g} (file {file_residual:.4g}), "
        f"energy {result.perturbation_energy:.4g}, "
        f"{'PASS' if passed else 'FAIL'}"
    )
    _append_event(out_dir, {"event": "craft_done", "report": report})
    return 0 if passed else 2


def _load_candidates(path: str) -> list:
    from .poisoning import PoisonCandidate

    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    pool = []
    for entry in entries:
        pair = load_pair(os.path.join(base, entry["pair"]))
        pool.append(
            PoisonCandidate(
                pair=pair,
                scene_id=entry["scene_id"],
                candidate_id=entry["candidate_id"],
                orientation=entry.get("orientation", "unknown"),
                quality=entry.get("quality", "weak_trigger"),
            )
        )
    return pool


def cmd_poison(cfg: dict, out_dir: str, seed: int, threads: int) -> int:
    if cfg["benign_dir"]:
        ann_dir = os.path.join(cfg["benign_dir"], "Annotations")
        if not os.path.isdir(ann_dir):
            raise ConfigError(f"poison: {ann_dir!r} is not a directory")
        benign = [
            parse_annotation(os.path.join(ann_dir, name))
            for name in sorted(os.listdir(ann_dir))
            if name.endswith(".xml")
        ]
        img_root = os.path.join(cfg["benign_dir"], "JPEGImages")
        benign = [
            dataclasses.replace(s, image_path=os.path.join(img_root, s.image_path))
            for s in benign
        ]
    elif cfg["benign_count"]:
        benign = make_benign_samples(
            int(cfg["benign_count"]), _size(cfg["benign_size"]), seed=seed
        )
    else:
        raise ConfigError("poison: provide benign_dir or benign_count")

    input_sizes = [_size(s) for s in cfg["input_sizes"]]
    training_set_size = int(cfg["training_set_size"] or len(benign))
    budget = plan_multisize_budget(float(cfg["poison_rate"]), input_sizes, training_set_size)
    per_size = round(float(cfg["poison_rate"]) * training_set_size)

    if cfg["candidates"]:
        pool = _load_candidates(cfg["candidates"])
    else:
        rng = np.random.default_rng(seed)
        src_size = _size(cfg["src_size"]) if cfg["src_size"] else tuple(
            3 * d for d in input_sizes[0]
        )
        needed = per_size * len(input_sizes)
        per_scene = int(cfg["per_scene"] or (needed // int(cfg["scenes"]) + 2))
        pool = make_candidate_pool(
            rng, scenes=int(cfg["scenes"]), per_scene=per_scene, src_size=src_size
        )

    mode = cfg["mode"]
    target_class = cfg["target_class"]
    plan = PoisonPlan(
        mode=mode,
        poison_rate=float(cfg["poison_rate"]),
        training_set_size=training_set_size,
        candidate_pool=tuple(pool),
        input_sizes=tuple(input_sizes),
        target_class=target_class,
    )

    remaining = list(plan.candidate_pool)
    subsets = []
    for size in input_sizes:
        sub_plan = dataclasses.replace(plan, candidate_pool=tuple(remaining))
        chosen = select_poison_set(sub_plan, seed=seed)
        subsets.append((size, chosen))
        chosen_ids = {c.candidate_id for c in chosen}
        remaining = [c for c in remaining if c.candidate_id not in chosen_ids]

    epsilon = float(cfg["epsilon"])
    algorithm = cfg["algorithm"]

    def craft_record(item):
        idx, size, cand = item
        pair = cand.pair
        op = build_operator(algorithm, (pair.target.height, pair.target.width), size)
        small_target = downscale(pair.target, op)
        result = craft(
            AttackJob(source=pair.replica, target=small_target, epsilon=epsilon, operator=op)
        )
        name = f"poison_{size[0]}x{size[1]}_{idx:04d}.png"
        if mode == "misclassification":
            x, y, w, h = pair.diff_region
            objects = (
                ObjectAnnotation(class_label=target_class, bbox=(x, y, x + w, y + h)),
            )
        else:
            objects = ()
        sample = AnnotatedSample(
            image_path=name,
            width=pair.replica.width,
            height=pair.replica.height,
            objects=objects,
        )
        return PoisonRecord(
            result=result,
            sample=sample,
            diff_region=pair.diff_region,
            mode=mode,
            target_class=target_class,
        )

    items = [
        (i, size, cand)
        for size, chosen in subsets
        for i, cand in enumerate(chosen)
    ]
    items = [(k, size, cand) for k, (_, size, cand) in enumerate(items)]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool_exec:
            records = list(pool_exec.map(craft_record, items))
    else:
        records = [craft_record(item) for item in items]

    dataset_dir = os.path.join(out_dir, "dataset")
    manifest = emit_dataset(benign, records, dataset_dir)

    scene_counts: dict[str, int] = {}
    for _, chosen in subsets:
        for cand in chosen:
            scene_counts[cand.scene_id] = scene_counts.get(cand.scene_id, 0) + 1
    summary = {
        "poison_count": manifest["poison_count"],
        "poison_rate": manifest["poison_rate"],
        "budget": budget,
        "scene_counts": scene_counts,
        "mode": mode,
        "dataset_dir": dataset_dir,
        "manifest_path": manifest["manifest_path"],
    }
    _write_json(summary, os.path.join(out_dir, "poison_summary.json"))
    figures.poison_distribution_figure(
        scene_counts, manifest["poison_rate"], os.path.join(out_dir, "poison_distribution.png")
    )
    print(
        f"poison: {manifest['poison_count']} poisons over {len(benign)} benign "
        f"(rate {manifest['poison_rate']:.6f}, budget total {budget['total_rate']:.4%})"
    )
    print(f"scene distribution: {json.dumps(scene_counts, sort_keys=True)}")
    _append_event(out_dir, {"event": "poison_done", "summary": summary})
    return 0


def cmd_scan(cfg: dict, out_dir: str, seed: int, threads: int) -> int:
    corpus_path = _require(cfg, "corpus", "scan")
    with open(corpus_path, encoding="utf-8") as fh:
        corpus = json.load(fh)
    if not isinstance(corpus, dict) or "benign" not in corpus or "attack" not in corpus:
        raise ConfigError("scan: corpus manifest needs 'benign' and 'attack' path lists")
    base = os.path.dirname(os.path.abspath(corpus_path))

    def resolve_paths(entries):
        return [p if os.path.isabs(p) else os.path.join(base, p) for p in entries]

    benign_paths = resolve_paths(corpus["benign"])
    attack_paths = resolve_paths(corpus["attack"])
    if not benign_paths or not attack_paths:
        raise EmptyCorpus("scan: corpus lists must be non-empty")

    overrides = {
        key: cfg[key]
        for key in (
            "scaling_mse_threshold",
            "scaling_mse_alt_threshold",
            "scaling_ssim_threshold",
            "filtering_mse_threshold",
            "filtering_ssim_threshold",
            "csp_threshold",
            "filter_kind",
            "filter_window",
        )
        if cfg.get(key) is not None
    }
    det_cfg = DetectionConfig(probe_downscale_size=_size(cfg["probe_size"]), **overrides)

    benign_imgs = [load_image(p) for p in benign_paths]
    attack_imgs = [load_image(p) for p in attack_paths]
    report = evaluate_corpus(benign_imgs, attack_imgs, det_cfg)
    report_to_csv(report, os.path.join(out_dir, "report.csv"))
    report_to_json(report, os.path.join(out_dir, "report.json"))
    figures.scan_report_figure(report, os.path.join(out_dir, "report.png"))
    print(f"scan: {report['attack_count']} attacks / {report['benign_count']} benign")
    for row in report["rows"]:
        print(
            f"  {row['method']:<13} {row['metric']:<5} thr {row['threshold']:>9.6g}  "
            f"FAR {row['far']:6.1%}  FRR {row['frr']:6.1%}"
        )
    _append_event(out_dir, {"event": "scan_done", "rows": report["rows"]})
    return 0


def cmd_defend(cfg: dict, out_dir: str, seed: int, threads: int) -> int:
    attack = load_image(_require(cfg, "attack", "defend"))
    target = load_image(_require(cfg, "target", "defend"))
    final_size = _size(cfg["final_size"]) if cfg["final_size"] else (target.height, target.width)
    policy = PreventionPolicy(
        mode=cfg["mode"],
        final_size=final_size,
        intermediate_range=tuple(float(v) for v in cfg["intermediate_range"]),
        seed=seed,
        forbidden_multiples=bool(cfg["forbidden_multiples"]),
    )
    trials = int(cfg["trials"])
    survival = attack_survival_rate(
        attack,
        target,
        policy,
        trials,
        operator_algorithm=cfg["algorithm"],
        epsilon=float(cfg["epsilon"]),
        log_path=os.path.join(out_dir, "survival.jsonl"),
    )
    summary = {
        "survival": survival,
        "trials": trials,
        "mode": policy.mode,
        "final_size": list(policy.final_size),
        "intermediate_range": list(policy.intermediate_range),
        "forbidden_multiples": policy.forbidden_multiples,
        "epsilon": float(cfg["epsilon"]),
        "seed": seed,
    }
    _write_json(summary, os.path.join(out_dir, "survival_summary.json"))
    figures.survival_figure(
        [{"label": policy.mode, "survival": survival}],
        os.path.join(out_dir, "survival.png"),
    )
    print(f"defend: {policy.mode} survival {survival:.1%} over {trials} trials")
    _append_event(out_dir, {"event": "defend_done", "summary": summary})
    return 0


def cmd_fixtures(cfg: dict, out_dir: str, seed: int, threads: int) -> int:
    rng = np.random.default_rng(seed)
    src_size = _size(cfg["src_size"])
    dst_size = _size(cfg["dst_size"])
    channels = int(cfg["channels"])
    count = int(cfg["count"])
    paths = []
    for i in range(count):
        pair = make_pair(rng, src_size, channels=channels)
        op = build_operator(cfg["algorithm"], src_size, dst_size)
        small_target = downscale(pair.target, op)
        stem = f"fixture_{i:03d}"
        source_path = os.path.join(out_dir, f"{stem}_source.png")
        target_path = os.path.join(out_dir, f"{stem}_target.png")
        benign_path = os.path.join(out_dir, f"{stem}_benign.png")
        save_png(pair.replica, source_path)
        save_png(small_target, target_path)
        save_png(make_scene(rng, src_size, channels), benign_path)
        paths.append({"source": source_path, "target": target_path, "benign": benign_path})
    _write_json({"fixtures": paths, "seed": seed}, os.path.join(out_dir, "fixtures.json"))
    print(f"fixtures: wrote {count} (source, target, benign) triples to {out_dir}")
    return 0


_HANDLERS = {
    "craft": cmd_craft,
    "poison": cmd_poison,
    "scan": cmd_scan,
    "defend": cmd_defend,
    "fixtures": cmd_fixtures,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalecloak",
        description="Craft, audit, and defend against image-scaling camouflage attacks.",
    )
    parser.add_argument("--config", help="JSON or TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="global random seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--log-level", dest="log_level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("craft", help="craft an attack image from source + target")
    p.add_argument("--source", help="large source image (the clean replica)")
    p.add_argument("--target", help="small target image")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    p.add_argument("--no-replica", dest="no_replica", action="store_const", const=True, default=None)

    p = sub.add_parser("poison", help="assemble a poisoned dataset")
    p.add_argument("--benign-dir", dest="benign_dir")
    p.add_argument("--benign-count", dest="benign_count", type=int)
    p.add_argument("--candidates")
    p.add_argument("--mode", choices=("cloaking", "misclassification"), default=None)
    p.add_argument("--target-class", dest="target_class")
    p.add_argument("--poison-rate", dest="poison_rate", type=float)
    p.add_argument("--training-set-size", dest="training_set_size", type=int)
    p.add_argument("--input-sizes", dest="input_sizes", type=_parse_sizes)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--per-scene", dest="per_scene", type=int, default=None)
    p.add_argument("--src-size", dest="src_size", type=int, nargs=2, default=None)

    p = sub.add_parser("scan", help="run detection probes over a labeled corpus")
    p.add_argument("--corpus", help="JSON manifest with 'benign' and 'attack' lists")
    p.add_argument("--probe-size", dest="probe_size", type=int, nargs=2, default=None)
    p.add_argument("--scaling-mse-threshold", dest="scaling_mse_threshold", type=float)
    p.add_argument("--scaling-ssim-threshold", dest="scaling_ssim_threshold", type=float)
    p.add_argument("--filtering-mse-threshold", dest="filtering_mse_threshold", type=float)
    p.add_argument("--filtering-ssim-threshold", dest="filtering_ssim_threshold", type=float)
    p.add_argument("--csp-threshold", dest="csp_threshold", type=int)

    p = sub.add_parser("defend", help="measure attack survival under a prevention policy")
    p.add_argument("--attack", help="attack image path")
    p.add_argument("--target", help="intended target image at final size")
    p.add_argument("--mode", choices=("random_intermediate", "nondefault_size"), default=None)
    p.add_argument("--final-size", dest="final_size", type=int, nargs=2, default=None)
    p.add_argument(
        "--intermediate-range", dest="intermediate_range", type=float, nargs=2, default=None
    )
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    p.add_argument(
        "--allow-multiples",
        dest="forbidden_multiples",
        action="store_const",
        const=False,
        default=None,
    )

    p = sub.add_parser("fixtures", help="generate synthetic demo inputs")
    p.add_argument("--src-size", dest="src_size", type=int, nargs=2, default=None)
    p.add_argument("--dst-size", dest="dst_size", type=int, nargs=2, default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=None)

    return parser


def _parse_sizes(text: str):
    sizes = []
    for chunk in text.split(","):
        h, _, w = chunk.strip().partition("x")
        sizes.append([int(h), int(w)])
    return sizes


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0

    try:
        file_cfg = _load_config_file(args.config) if args.config else {}
        seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
        threads = args.threads if args.threads is not None else int(file_cfg.get("threads", 1))
        level = args.log_level or file_cfg.get("log_level", "INFO")
        logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO))

        cfg = _resolve_section(args.command, file_cfg, args)
        out_dir = _resolve_out(args.command, file_cfg, args)
        os.makedirs(out_dir, exist_ok=True)
        resolved = {
            "command": args.command,
            "seed": seed,
            "threads": threads,
            "out": out_dir,
            "log_level": str(level),
            args.command: cfg,
        }
        _write_json(resolved, os.path.join(out_dir, "resolved_config.json"))
        _append_event(out_dir, {"event": "start", "resolved": resolved})
        return _HANDLERS[args.command](cfg, out_dir, seed, threads)
    except (Infeasible, AnnotationContentMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ScaleCloakError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
