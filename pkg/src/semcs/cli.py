"""Command-line interface: ``semcs run`` and ``semcs eval``.

Every run flag can also live in a JSON or YAML config file; explicit flags
override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import SemCSError
from .evaluation import batch_evaluate, read_manifest
from .image_io import load_image, save_image, save_mask
from .losses import LossWeights
from .pipeline import StyleTextCondition, TransferConfig, run_transfer

_RUN_KEYS = {
    "content": str, "text": str, "out": str, "mask_out": str, "log": str,
    "iters": int, "lr": float, "lambda_bg": float, "lambda_content": float,
    "lambda_tv": float, "seed": int, "resolution": int, "force_global": bool,
    "dense_id": str, "joint_id": str, "content_id": str,
}


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise SemCSError(f"config file '{path}' must hold a key-value mapping")
    unknown = set(data) - set(_RUN_KEYS)
    if unknown:
        raise SemCSError(f"config file '{path}' has unknown keys: {sorted(unknown)}")
    return {k: _RUN_KEYS[k](v) for k, v in data.items()}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcs",
                                     description="Text-conditioned semantic style transfer")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="stylize one content image")
    run.add_argument("--content", help="content image path")
    run.add_argument("--text", help='style text; "FG || BG" for double conditions')
    run.add_argument("--out", help="output image path (default: <content>_styled.png)")
    run.add_argument("--mask-out", dest="mask_out", help="write the saliency mask here")
    run.add_argument("--iters", type=int, help="optimization iterations (default 200)")
    run.add_argument("--lr", type=float, help="learning rate (default 5e-4)")
    run.add_argument("--lambda-bg", dest="lambda_bg", type=float)
    run.add_argument("--lambda-content", dest="lambda_content", type=float)
    run.add_argument("--lambda-tv", dest="lambda_tv", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--resolution", type=int, help="square training resolution (default 512)")
    run.add_argument("--force-global", dest="force_global", action="store_true", default=None,
                     help="style the whole image with the fg text if the mask is degenerate")
    run.add_argument("--log", help="per-step loss log (one JSON record per line)")
    run.add_argument("--config", help="JSON/YAML file with any of the run keys")
    run.add_argument("--dense-id", dest="dense_id")
    run.add_argument("--joint-id", dest="joint_id")
    run.add_argument("--content-id", dest="content_id")

    ev = sub.add_parser("eval", help="score content/output pairs")
    ev.add_argument("--pairs", required=True, help="manifest: content<TAB>output per line")
    ev.add_argument("--report", required=True, help="where to write the JSON report")
    ev.add_argument("--top", type=int, default=None,
                    help="average only the top-N outputs by rating score")
    return parser


def _run_command(args: argparse.Namespace) -> int:
    settings: dict = {}
    if args.config:
        settings.update(_load_config_file(args.config))
    for key in _RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if "content" not in settings or "text" not in settings:
        print("error: --content and --text are required (flag or config file)",
              file=sys.stderr)
        return 2

    defaults = TransferConfig()
    weights = LossWeights(
        lambda_bg=settings.get("lambda_bg", defaults.weights.lambda_bg),
        lambda_content=settings.get("lambda_content", defaults.weights.lambda_content),
        lambda_tv=settings.get("lambda_tv", defaults.weights.lambda_tv),
    )
    config = TransferConfig(
        iterations=settings.get("iters", defaults.iterations),
        learning_rate=settings.get("lr", defaults.learning_rate),
        weights=weights,
        seed=settings.get("seed", defaults.seed),
        resolution=settings.get("resolution", defaults.resolution),
        dense_id=settings.get("dense_id", defaults.dense_id),
        joint_id=settings.get("joint_id", defaults.joint_id),
        content_id=settings.get("content_id", defaults.content_id),
        force_global=settings.get("force_global", False),
        out_path=settings.get("out"),
        mask_out_path=settings.get("mask_out"),
        log_path=settings.get("log"),
    )
    image = load_image(settings["content"], size=config.resolution)
    condition = StyleTextCondition.parse(settings["text"])
    result = run_transfer(image, condition, config)

    out_path = config.out_path or str(
        Path(settings["content"]).with_suffix("")) + "_styled.png"
    save_image(result.output, out_path)
    print(f"wrote {out_path} ({result.wall_time:.1f}s, "
          f"{len(result.loss_history)} steps)")
    if config.mask_out_path:
        save_mask(result.mask.values, config.mask_out_path)
        print(f"wrote mask {config.mask_out_path} "
              f"(coverage {result.mask.coverage:.3f})")
    if result.loss_history:
        first, last = result.loss_history[0], result.loss_history[-1]
        print(f"total loss {first.total:.4f} -> {last.total:.4f}")
    return 0


def _eval_command(args: argparse.Namespace) -> int:
    pairs = read_manifest(args.pairs)
    report = batch_evaluate(pairs, top=args.top)
    report.save(args.report)
    print(f"wrote {args.report}: {report.count} scored, "
          f"{len(report.errors)} errors, mean_dists={report.mean_dists:.4f}, "
          f"mean_nima={report.mean_nima:.4f}")
    return 0 if report.count else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _run_command(args)
        return _eval_command(args)
    except SemCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
