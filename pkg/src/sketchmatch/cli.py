"""Command-line entry point.

Exit codes: 0 success, 1 usage/configuration error, 2 data/validation
error, 3 numeric failure. Errors print one line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import __doc__ as package_doc
from .augment import augment_pair
from .config import RunConfig, load_config
from .datamodel import (PairedSet, load_manifest, load_paired_set, load_photo_samples,
                        read_image, SketchSample, write_image)
from .evaluation import GalleryIndex, build_gallery, identify, write_cmc_csv
from .exceptions import ConfigurationError, DataError, NumericError, SketchMatchError
from .network import load_checkpoint, read_checkpoint
from .protocol import ProtocolConfig, dumps_report, mean_cmc, run_protocol
from .sketch import sketchify_dataset
from .synth import synth_dataset
from .training import desk_augment, train

logger = logging.getLogger("sketchmatch")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.with_seed(getattr(args, "seed", None))


def cmd_synth(args) -> int:
    size = tuple(args.size)
    m = synth_dataset(args.n, args.seed if args.seed is not None else 0, args.out, size=size,
                      xdog_params=_config(args).xdog)
    print(f"wrote {len(m.entries)} pairs for {m.n_identities} identities to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    m = load_manifest(args.manifest, require_pairs=not args.photos_only)
    print(f"{args.manifest}: {len(m.entries)} rows, {m.n_identities} identities, "
          f"{len(m.photo_entries())} photos, {len(m.sketch_entries())} sketches, "
          f"T={len(m.vocabulary)}")
    return 0


def cmd_sketchify(args) -> int:
    cfg = _config(args)
    m = load_manifest(args.manifest, require_pairs=False)
    new = sketchify_dataset(m, cfg.xdog, args.out)
    print(f"wrote {len(new.entries)} sketches to {args.out}")
    return 0


def cmd_augment_preview(args) -> int:
    cfg = _config(args)
    m = load_manifest(args.manifest)
    size = cfg.train.input_size
    data = load_paired_set(m, size)
    aug = cfg.train.augment or desk_augment(*size)
    rows = []
    rng = np.random.default_rng(cfg.seed)
    for i in range(min(args.count, len(data))):
        photo, sketch = data.photo_sample(i), data.sketch_sample(i)
        p, s = augment_pair(photo, sketch, aug, rng.integers(2**63 - 1))
        gray = lambda im: np.repeat(im, 3, axis=2)
        rows.append(np.concatenate([photo.image, p.image, gray(sketch.image), gray(s.image)], 1))
    grid = np.concatenate(rows, 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / "augment_preview.png", grid)
    print(f"wrote {out / 'augment_preview.png'} (columns: photo, augmented, sketch, augmented)")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    m = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    ckpt, metrics = train(m, cfg.train, out, init_from=args.init_from, resume=args.resume,
                          config_hash=cfg.hash())
    print(f"checkpoint {ckpt}\nmetrics {metrics}")
    return 0


def _checkpoint_hash(path) -> str:
    return read_checkpoint(path)["extra"].get("config_hash", "")


def cmd_build_gallery(args) -> int:
    cfg = _config(args)
    model = load_checkpoint(args.checkpoint)
    m = load_manifest(args.manifest, require_pairs=False)
    photos = load_photo_samples(m, cfg.train.input_size)
    index = build_gallery(photos, model)
    index.config_hash = _checkpoint_hash(args.checkpoint)
    index.save(args.out)
    print(f"gallery of {len(index)} entries written to {args.out} (fingerprint {index.fingerprint})")
    return 0


def cmd_identify(args) -> int:
    cfg = _config(args)
    model = load_checkpoint(args.checkpoint)
    index = GalleryIndex.load(args.gallery)
    from .network import model_fingerprint
    if model_fingerprint(model) != index.fingerprint:
        raise DataError("checkpoint does not match the gallery fingerprint")
    vocab_len = model.sketch_config.attribute_count
    bits = args.attributes or "0" * vocab_len
    if len(bits) != vocab_len or set(bits) - {"0", "1"}:
        raise DataError(f"--attributes must be {vocab_len} characters of 0/1")
    att = np.array([int(b) for b in bits], dtype=np.uint8)
    image = read_image(args.probe, 1, cfg.train.input_size)
    probe = SketchSample(image, 0, att, att)
    result = identify(probe, index, model, use_attributes=cfg.train.use_attributes)
    for rank, (ident, dist) in enumerate(result.ranked[: args.top], start=1):
        print(f"{rank}\t{ident}\t{dist:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    size = cfg.train.input_size
    name = args.protocol
    folds = args.folds if args.folds is not None else cfg.protocol.folds
    distractors = []
    if args.distractors:
        distractors = load_photo_samples(load_manifest(args.distractors, require_pairs=False), size)
    kwargs = {}
    if name == "S3":
        if not args.train_manifest or not args.probe_manifest:
            raise ConfigurationError("S3 needs --train-manifest and --probe-manifest")
        kwargs["train_set"] = _concat([load_paired_set(load_manifest(p), size)
                                       for p in args.train_manifest])
        kwargs["probe_set"] = load_paired_set(load_manifest(args.probe_manifest), size)
    else:
        if not args.manifest:
            raise ConfigurationError(f"{name} needs --manifest")
        kwargs["dataset"] = load_paired_set(load_manifest(args.manifest), size)
    pcfg = ProtocolConfig(name, folds, cfg.seed, cfg.protocol.train_fraction,
                          tuple(cfg.protocol.ranks), distractors=distractors, **kwargs)
    init_model = load_checkpoint(args.init_from) if args.init_from else None
    report = run_protocol(pcfg, cfg.train, cfg.hash(), init_model=init_model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps_report(report), encoding="utf-8")
    write_cmc_csv(mean_cmc(report), out / "cmc.csv")
    for k, row in report["summary"].items():
        print(f"rank-{k}\t{row['formatted']}")
    return 0


def _concat(sets: list[PairedSet]) -> PairedSet:
    return PairedSet(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                       ("photos", "sketches", "identities", "attributes", "witness_attributes")),
                     sets[0].vocabulary)


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    if args.config:
        expected = load_config(args.config).hash()
        if report.get("config_hash") != expected:
            raise DataError(f"report config hash {report.get('config_hash')} "
                            f"does not match {args.config} ({expected})")
    write_cmc_csv(mean_cmc(report), args.out)
    for k, row in report["summary"].items():
        print(f"rank-{k}\t{row['formatted']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--threads", type=int, default=1,
                        help="torch intra-op threads (1 = reproducible mode)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="sketchmatch", description=package_doc)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic face dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, nargs=2, default=[64, 64], metavar=("H", "W"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="validate a manifest")
    p.add_argument("manifest")
    p.add_argument("--photos-only", action="store_true", help="allow photo-only identities")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sketchify", parents=[common], help="xDoG sketches from a manifest's photos")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sketchify)

    p = sub.add_parser("augment-preview", parents=[common], help="before/after augmentation grid")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("train", parents=[common], help="train the coupled networks")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--init-from", metavar="CKPT")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-gallery", parents=[common], help="embed gallery photos")
    p.add_argument("manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_gallery)

    p = sub.add_parser("identify", parents=[common], help="rank a gallery for one sketch probe")
    p.add_argument("--probe", required=True, help="sketch PNG")
    p.add_argument("--attributes", help="witness attribute bits, e.g. 010001000000")
    p.add_argument("--gallery", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", parents=[common], help="run an S1/S2/S3 protocol")
    p.add_argument("--protocol", choices=["S1", "S2", "S3"], default="S1")
    p.add_argument("--manifest")
    p.add_argument("--distractors")
    p.add_argument("--train-manifest", action="append")
    p.add_argument("--probe-manifest")
    p.add_argument("--folds", type=int)
    p.add_argument("--init-from", metavar="CKPT", help="pretrained checkpoint for every fold")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="CMC CSV from a report JSON")
    p.add_argument("report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (SketchMatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
