"""Command-line interface.

Subcommands::

    maskflow evaluate  --preds DIR --gt DIR --out CSV [--include 1,2,3] [--plot PNG]
    maskflow split     (--ids FILE | --n N) --fraction F --seed S [--out FILE]
    maskflow synth     --scene FILE --out DIR
    maskflow train-ref --data DIR --out CKPT [--config JSON] [--log CSV] [--max-steps N]
    maskflow serve     [--config JSON] [--port P] [--dataset-root DIR] [--backend NAME]
    maskflow export    --session FILE --out DIR [--merged]

Exit status 0 on success, 1 on runtime failures (message on stderr),
2 on usage errors.
"""

import argparse
import json
import sys
from pathlib import Path

from ..dataset.split import split_videos
from ..dataset.synthetic import generate_synthetic_video, parse_scene_spec
from ..dataset.video import FRAME_NAME, load_video_dataset, write_video_dataset
from ..errors import MaskflowError, ValidationError
from ..metrics import evaluate_video, export_report, plot_report
from ..pngmask import load_mask_png
from ..session import load_session
from ..training import PointPromptNet, TrainingConfig, train_reference
from .config import load_config


def _parse_include(raw: str | None) -> set[int] | None:
    if raw is None:
        return None
    return {int(item) for item in raw.split(",") if item.strip()}


def _cmd_evaluate(args) -> int:
    gt_root = Path(args.gt)
    preds_root = Path(args.preds)
    include = _parse_include(args.include)
    video_dirs = sorted(d for d in gt_root.iterdir() if (d / "manifest").exists())
    if not video_dirs:
        raise ValidationError(f"no annotated videos under {gt_root}")
    records = []
    for video_dir in video_dirs:
        dataset = load_video_dataset(video_dir)
        pred_dir = preds_root / dataset.video_id
        preds = {}
        for frame_index in dataset.annotated_frames():
            pred_path = pred_dir / FRAME_NAME.format(frame_index)
            if pred_path.exists():
                preds[frame_index] = load_mask_png(pred_path)
        if not preds:
            raise ValidationError(f"no prediction PNGs for video {dataset.video_id} in {pred_dir}")
        records.append(evaluate_video(dataset.video_id, preds, dataset.ground_truth, include))
    export_report(records, args.out)
    if args.plot:
        plot_report(records, args.plot)
    for rec in records:
        print(
            f"{rec.video_id}: iou {rec.iou_mean:.4f}±{rec.iou_std:.4f} "
            f"pac {rec.pac_mean:.4f}±{rec.pac_std:.4f} ({len(rec.per_frame)} frames)"
        )
    print(f"wrote {args.out}")
    return 0


def _cmd_split(args) -> int:
    if args.ids:
        ids = [
            line.strip()
            for line in Path(args.ids).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    else:
        ids = [f"video{i:02d}" for i in range(1, args.n + 1)]
    result = split_videos(ids, args.fraction, args.seed)
    doc = {
        "seed": result.seed,
        "train_fraction": args.fraction,
        "train_ids": list(result.train_order),
        "test_ids": list(result.test_order),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    else:
        json.dump(doc, sys.stdout, indent=2)
        print()
    print(f"train={len(result.train_ids)} test={len(result.test_ids)} seed={result.seed}")
    return 0


def _cmd_synth(args) -> int:
    scene = parse_scene_spec(args.scene)
    dataset = generate_synthetic_video(scene)
    video_dir = write_video_dataset(dataset, args.out)
    print(f"wrote {dataset.frame_count} frames to {video_dir}")
    return 0


def _cmd_train_ref(args) -> int:
    overrides = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = TrainingConfig(**overrides)
    data_root = Path(args.data)
    video_dirs = sorted(d for d in data_root.iterdir() if (d / "manifest").exists())
    if not video_dirs:
        raise ValidationError(f"no annotated videos under {data_root}")
    datasets = [load_video_dataset(d) for d in video_dirs]
    model = PointPromptNet(seed=cfg.seed)
    state = train_reference(
        model, datasets, cfg, checkpoint_path=args.out, log_path=args.log
    )
    final_loss = state.loss_history[-1] if state.loss_history else float("nan")
    print(
        f"trained {state.optimizer_step} optimizer steps "
        f"({state.micro_step} micro), final loss {final_loss:.4f}, wrote {args.out}"
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .app import create_app

    config = load_config(args.config)
    if args.port is not None:
        config = type(config)(**{**config.__dict__, "port": args.port})
    if args.dataset_root is not None:
        config = type(config)(**{**config.__dict__, "dataset_root": args.dataset_root})
    if args.backend is not None:
        config = type(config)(**{**config.__dict__, "backend": args.backend})
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


def _cmd_export(args) -> int:
    # export reads stored masks only, so any backend stands in (the saved
    # session may reference an external one that is not reachable here)
    from ..backend import ReferenceBackend

    session = load_session(args.session, backend=ReferenceBackend())
    entries = session.export_masks(args.out, merged=args.merged)
    print(f"exported {len(entries)} files to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score prediction PNGs against ground truth")
    p.add_argument("--preds", required=True, help="predictions root: <preds>/<video_id>/<NNNNN>.png")
    p.add_argument("--gt", required=True, help="dataset root with labels and manifests")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--include", help="comma-separated class ids to keep as foreground")
    p.add_argument("--plot", help="optional bar-chart PNG path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("split", help="deterministic train/test split of video ids")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ids", help="file with one video id per line")
    group.add_argument("--n", type=int, help="generate videoNN ids 1..N")
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", help="output JSON path (stdout when omitted)")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("synth", help="render a synthetic scene into a dataset directory")
    p.add_argument("--scene", required=True, help="scene spec file")
    p.add_argument("--out", required=True, help="dataset root to write into")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train-ref", help="run the reference training loop on synthetic data")
    p.add_argument("--data", required=True, help="dataset root of annotated videos")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", help="JSON file with training config fields")
    p.add_argument("--log", help="training log CSV path")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train_ref)

    p = sub.add_parser("serve", help="start the annotation HTTP service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--port", type=int)
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--backend")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("export", help="export masks from a saved session file")
    p.add_argument("--session", required=True, help="session JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--merged", action="store_true", help="also write merged foreground PNGs")
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MaskflowError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
