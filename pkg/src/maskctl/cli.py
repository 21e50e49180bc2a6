"""Command-line pipeline driver: maskctl <fuse|mask|candidates|loss|eval>.

Every command walks a dataset manifest in order, processes images on a
worker pool (capped by MASKCTL_THREADS), and prints one summary line per
image on stdout. Re-running a command with identical inputs rewrites
byte-identical outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical-check
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .crf import PairwiseConfig, map_labels, mean_field_infer, unary_from_heatmap
from .diverse import DiversityConfig, generate_candidates, save_candidates
from .fusion import fused_heatmap
from .losses import LOSS_VARIANTS, LossConfig, TagSet
from .metrics import ConfusionAccumulator, iou_report
from .tensor_store import (
    DatasetManifest,
    ManifestEntry,
    TensorStoreError,
    load_manifest,
    read_binary_mask,
    read_label_mask,
    read_tensor,
    write_binary_mask,
    write_tensor,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Gradient spot check: central differences at this many coordinates.
_GRAD_CHECK_COORDS = 8
_GRAD_CHECK_STEP = 1e-4
_GRAD_CHECK_RTOL = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2 by default; this CLI uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class PipelineConfig:
    """Bundle of the per-stage configs, loadable from one JSON file."""

    crf: PairwiseConfig = field(default_factory=PairwiseConfig)
    diversity: DiversityConfig = field(default_factory=DiversityConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    epsilon: float = 1e-6
    method: str = "filter"
    filter_tol: float = 1e-6

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {"crf", "diversity", "loss", "epsilon", "method", "filter_tol"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        div = dict(doc.get("diversity", {}))
        if set(div) - {"lambda", "num_candidates"}:
            raise ValueError(f"unknown diversity keys: {sorted(set(div) - {'lambda', 'num_candidates'})}")
        loss = dict(doc.get("loss", {}))
        if set(loss) - {"r"}:
            raise ValueError(f"unknown loss keys: {sorted(set(loss) - {'r'})}")
        return cls(
            crf=PairwiseConfig.from_dict(doc["crf"]) if "crf" in doc else PairwiseConfig(),
            diversity=DiversityConfig(
                lambda_=div.get("lambda"), num_candidates=div.get("num_candidates", 30)
            ),
            loss=LossConfig(r=float(loss.get("r", 5.0))),
            epsilon=float(doc.get("epsilon", 1e-6)),
            method=str(doc.get("method", "filter")),
            filter_tol=float(doc.get("filter_tol", 1e-6)),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "iterations", None) is not None:
        cfg.crf = PairwiseConfig(**{**cfg.crf.to_dict(), "iterations": args.iterations})
    if getattr(args, "lambda_", None) is not None:
        cfg.diversity = DiversityConfig(args.lambda_, cfg.diversity.num_candidates)
    if getattr(args, "num_candidates", None) is not None:
        cfg.diversity = DiversityConfig(cfg.diversity.lambda_, args.num_candidates)
    if getattr(args, "r", None) is not None:
        cfg.loss = LossConfig(r=args.r)
    return cfg


def _pool_size() -> int:
    raw = os.environ.get("MASKCTL_THREADS", "").strip()
    if not raw:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise SystemExit(EXIT_USAGE) from None
    return n


def _for_each_entry(manifest: DatasetManifest, fn):
    """Run fn over entries on the pool; yield (entry, result, error) in manifest order."""

    def safe(entry):
        try:
            return entry, fn(entry), None
        except Exception as exc:  # per-image isolation: one bad file must not kill the run
            return entry, None, exc

    if not manifest.entries:
        return []
    with ThreadPoolExecutor(max_workers=_pool_size()) as pool:
        return list(pool.map(safe, manifest.entries))


def _load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise TensorStoreError(f"cannot read image {path}: {exc}") from exc


def _entry_heatmap(manifest: DatasetManifest, entry: ManifestEntry, image: np.ndarray) -> np.ndarray:
    if len(entry.activation_paths) != 2:
        raise TensorStoreError(
            f"{entry.image_id}: expected 2 activation stacks, got {sorted(entry.activation_paths)}"
        )
    stacks = [
        read_tensor(manifest.resolve(entry.activation_paths[name]))
        for name in sorted(entry.activation_paths)
    ]
    h, w = image.shape[:2]
    return fused_heatmap(stacks, w, h)


def _emit(results) -> int:
    """Print per-image lines in manifest order; return the exit code."""
    failed = False
    for entry, line, exc in results:
        if exc is not None:
            failed = True
            print(f"{entry.image_id}: {exc}", file=sys.stderr)
        else:
            print(line)
    return EXIT_DATA if failed else EXIT_OK


def cmd_fuse(args) -> int:
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(entry: ManifestEntry) -> str:
        image = _load_image(manifest.resolve(entry.image_path))
        heat = _entry_heatmap(manifest, entry, image)
        dest = out / f"{entry.image_id}.fgbg"
        write_tensor(dest, heat)
        return f"{entry.image_id}\theatmap={dest}\trange=[{heat.min():.6f},{heat.max():.6f}]"

    return _emit(_for_each_entry(manifest, run))


def cmd_mask(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(entry: ManifestEntry) -> str:
        image = _load_image(manifest.resolve(entry.image_path))
        heat = _entry_heatmap(manifest, entry, image)
        unary = unary_from_heatmap(heat, cfg.epsilon)
        beliefs = mean_field_infer(
            unary, image, cfg.crf, method=cfg.method, filter_tol=cfg.filter_tol
        )
        mask = map_labels(beliefs)
        dest = out / f"{entry.image_id}.png"
        write_binary_mask(dest, mask)
        return f"{entry.image_id}\tmask={dest}\tforeground={int(mask.sum())}px"

    return _emit(_for_each_entry(manifest, run))


def cmd_candidates(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(entry: ManifestEntry) -> str:
        image = _load_image(manifest.resolve(entry.image_path))
        heat = _entry_heatmap(manifest, entry, image)
        unary = unary_from_heatmap(heat, cfg.epsilon)
        cs = generate_candidates(
            unary,
            image,
            cfg.crf,
            cfg.diversity,
            image_id=entry.image_id,
            method=cfg.method,
            filter_tol=cfg.filter_tol,
        )
        dest = out / entry.image_id
        save_candidates(cs, dest)
        # Stage the source image next to its candidates so the review
        # service can serve the directory as-is.
        shutil.copyfile(manifest.resolve(entry.image_path), dest / "image.png")
        return f"{entry.image_id}\tcandidates={len(cs)}\tenergy0={cs.energies[0]:.6f}"

    results = _for_each_entry(manifest, run)
    code = _emit(results)
    order = [e.image_id for e, _, exc in results if exc is None]
    (out / "order.json").write_text(json.dumps(order, indent=2) + "\n")
    return code


def _spot_check_gradient(fn, scores: np.ndarray, grad: np.ndarray, seed: int) -> bool:
    """Central-difference check of `grad` at a few deterministic coordinates."""
    rng = np.random.default_rng(seed)
    count = min(_GRAD_CHECK_COORDS, scores.size)
    coords = rng.choice(scores.size, size=count, replace=False)
    flat = scores.reshape(-1)
    for c in coords:
        bumped = flat.copy()
        bumped[c] += _GRAD_CHECK_STEP
        hi = fn(bumped.reshape(scores.shape))
        bumped[c] -= 2.0 * _GRAD_CHECK_STEP
        lo = fn(bumped.reshape(scores.shape))
        fd = (hi - lo) / (2.0 * _GRAD_CHECK_STEP)
        g = grad.reshape(-1)[c]
        if abs(g - fd) / (max(abs(g), abs(fd)) + 1e-8) > _GRAD_CHECK_RTOL:
            return False
    return True


def cmd_loss(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _config_from_args(args)
    loss_fn = LOSS_VARIANTS[args.variant]
    needs_mask = args.variant in ("mask", "mask_alt")
    if needs_mask and not args.out:
        print(f"variant {args.variant!r} needs --out pointing at a mask layout", file=sys.stderr)
        return EXIT_USAGE

    def run(entry: ManifestEntry):
        if not entry.score_path:
            raise TensorStoreError(f"{entry.image_id}: manifest entry has no score_path")
        scores = read_tensor(manifest.resolve(entry.score_path)).astype(np.float64)
        tags = TagSet(present=frozenset(entry.tags_present), absent=frozenset(entry.tags_absent))
        if tags.num_classes != scores.shape[0]:
            raise TensorStoreError(
                f"{entry.image_id}: tags cover {tags.num_classes} classes, "
                f"scores have {scores.shape[0]}"
            )
        extra = ()
        if needs_mask:
            mask_path = Path(args.out) / entry.image_id / "mask.png"
            if not mask_path.exists():
                raise TensorStoreError(f"{entry.image_id}: missing mask {mask_path}")
            extra = (read_binary_mask(mask_path).astype(np.int64),)

        report = loss_fn(scores, tags, *extra, cfg.loss)
        fn = lambda s: loss_fn(s, tags, *extra, cfg.loss, with_grad=False).value
        ok = _spot_check_gradient(fn, scores, report.grad, zlib.crc32(entry.image_id.encode()))
        return report.value, ok

    results = _for_each_entry(manifest, run)
    failed_data = False
    failed_check = False
    for entry, payload, exc in results:
        if exc is not None:
            failed_data = True
            print(f"{entry.image_id}: {exc}", file=sys.stderr)
            continue
        value, ok = payload
        failed_check |= not ok
        print(f"{entry.image_id}\t{args.variant}\tloss={value:.10f}\tgrad_check={'ok' if ok else 'FAIL'}")
    if failed_data:
        return EXIT_DATA
    return EXIT_NUMERIC if failed_check else EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        missing = pred_dir if not pred_dir.is_dir() else gt_dir
        print(f"not a directory: {missing}", file=sys.stderr)
        return EXIT_DATA
    acc = ConfusionAccumulator(args.num_classes)
    failed = False
    for pred_path in sorted(pred_dir.glob("*.png")):
        gt_path = gt_dir / pred_path.name
        try:
            if not gt_path.exists():
                raise TensorStoreError(f"missing ground truth {gt_path}")
            pred = read_label_mask(pred_path, args.num_classes)
            gt = read_label_mask(gt_path, args.num_classes)
            acc.update(pred, gt)
        except (TensorStoreError, ValueError) as exc:
            failed = True
            print(f"{pred_path.name}: {exc}", file=sys.stderr)
    try:
        print(iou_report(acc).to_text_table())
    except Exception as exc:
        print(f"no evaluable pixels: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_DATA if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskctl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--manifest", required=True, help="dataset manifest JSON")
        p.add_argument("--config", help="pipeline config JSON")
        if out_required is not None:
            p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("fuse", help="fuse activation stacks into heat-map tensors")
    common(p)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("mask", help="write one smoothed binary mask per image")
    common(p)
    p.add_argument("--iterations", type=int, help="override mean-field sweep count")
    p.set_defaults(fn=cmd_mask)

    p = sub.add_parser("candidates", help="write diverse candidate-mask directories")
    common(p)
    p.add_argument("--iterations", type=int, help="override mean-field sweep count")
    p.add_argument("--lambda", dest="lambda_", type=float, help="diversity reward")
    p.add_argument("--num-candidates", type=int, help="candidates per image")
    p.set_defaults(fn=cmd_candidates)

    p = sub.add_parser("loss", help="evaluate a weak-supervision loss with gradient checks")
    common(p, out_required=False)
    p.add_argument("--variant", required=True, choices=sorted(LOSS_VARIANTS))
    p.add_argument("--r", type=float, help="log-sum-exp sharpness")
    p.set_defaults(fn=cmd_loss)

    p = sub.add_parser("eval", help="mean-IOU report over prediction/ground-truth PNGs")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--num-classes", type=int, default=21)
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TensorStoreError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
