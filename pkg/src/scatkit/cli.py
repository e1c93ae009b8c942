"""Command-line entry point wiring the toolkit into reproducible experiments.

One binary with subcommands; configuration comes from an optional JSON file
plus flag overrides (flags win).  Every output file embeds the resolved
configuration, and a rerun with the same config and seed produces
byte-identical files.

Exit codes: 0 success, 2 config/precondition error, 3 data-format error,
4 I/O error.
"""

import argparse
import copy
import json
import sys

import numpy as np

from . import analysis, data, encoder, pipeline
from .errors import FormatError, InvalidArgumentError, UnsupportedConfigError
from .filterbank import FilterBankConfig, build_filter_bank, littlewood_paley, save_filter_bank
from .scattering import enumerate_paths, scattering_batch
from .container import read_container, write_container

DEFAULT_CONFIG = {
    "seed": 0,
    "jobs": 1,
    "scattering": {
        "J": 2,
        "L": 8,
        "N": 32,
        "morlet_sigma": 0.8,
        "morlet_xi": 3 * np.pi / 4,
        "morlet_slant": 1.0,
    },
    "model": {"local_widths": [128, 128, 128], "fc_widths": [256]},
    "train": {
        "epochs": 60,
        "batch_size": 128,
        "lr_initial": 0.1,
        "lr_drop_factor": 0.1,
        "lr_drop_epochs": [40, 52],
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "seed": 0,
        "crop_padding": 4,
        "horizontal_flip": True,
    },
    "data": {"dir": None, "per_class": 0},
}


def load_config(path=None, overrides=None):
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            loaded = json.load(fh)
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = config
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node[part]
        node[leaf] = value
    config["train"]["seed"] = config["seed"]
    return config


def _bank_from(config):
    return build_filter_bank(FilterBankConfig.from_dict(config["scattering"]))


def _config_comment(config):
    return "# config " + json.dumps(config, sort_keys=True, separators=(",", ":"))


def _write_csv(path, config, header_row, rows):
    lines = [_config_comment(config), ",".join(header_row)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _add_common_flags(parser):
    parser.add_argument("--config", "-c", help="JSON config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--J", type=int)
    parser.add_argument("--L", type=int)
    parser.add_argument("--N", type=int)


def _resolve(args, extra=None):
    overrides = {
        "seed": args.seed,
        "jobs": args.jobs,
        "scattering.J": args.J,
        "scattering.L": args.L,
        "scattering.N": args.N,
    }
    overrides.update(extra or {})
    return load_config(args.config, overrides)


def _load_split(config, directory, split):
    train, test = data.load_cifar10(directory)
    dataset = train if split == "train" else test
    per_class = config["data"].get("per_class") or 0
    if split == "train" and per_class > 0:
        dataset = data.sample_subset(dataset, per_class, config["seed"])
    return dataset


def _center_fit(image, side):
    # deterministic eval path: center crop anything larger than the bank side
    c, h, w = image.shape
    if h > side:
        top = (h - side) // 2
        image = image[:, top : top + side, :]
    if w > side:
        left = (w - side) // 2
        image = image[:, :, left : left + side]
    return image


def cmd_filters(args):
    config = _resolve(args)
    bank = _bank_from(config)
    _, lp_min, lp_max = littlewood_paley(bank)
    save_filter_bank(args.out, bank)
    print(f"wrote {args.out}: lp_min={lp_min:.6f} lp_max={lp_max:.6f}")
    return 0


def cmd_lp_check(args):
    config = _resolve(args)
    bank = _bank_from(config)
    curve, lp_min, lp_max = littlewood_paley(bank)
    if args.out:
        n = curve.shape[0]
        rows = [
            (k1, k2, float(curve[k1, k2]))
            for k1 in range(n)
            for k2 in range(n)
        ]
        _write_csv(args.out, config, ("k1", "k2", "value"), rows)
    print(f"lp_min={lp_min:.6f} lp_max={lp_max:.6f}")
    return 0


def cmd_transform(args):
    extra = {"data.per_class": args.per_class}
    config = _resolve(args, extra)
    bank = _bank_from(config)
    if args.ppm:
        images = [_center_fit(data.load_ppm(p), bank.config.N) for p in args.ppm]
        images = np.stack(images)
        labels = [-1] * len(images)
    else:
        if not args.data:
            raise InvalidArgumentError("need --data or --ppm inputs")
        dataset = _load_split(config, args.data, args.split)
        images = dataset.images
        labels = [int(v) for v in dataset.labels]
    tensors = scattering_batch(images, bank, jobs=config["jobs"])
    paths = enumerate_paths(bank.config.J, bank.config.L)
    header = {
        "kind": "scattering_tensors",
        "config": config,
        "paths": [p.to_list() for p in paths],
        "labels": labels,
        "colors": int(images.shape[1]),
    }
    write_container(args.out, header, [("data", tensors)])
    print(f"wrote {args.out}: {tensors.shape[0]} records of shape {tensors.shape[1:]}")
    return 0


def _make_pipeline(config, features):
    train_cfg = config["train"]
    if features == "scattering":
        return pipeline.ScatteringFeatures(
            _bank_from(config),
            crop_padding=train_cfg["crop_padding"],
            horizontal_flip=train_cfg["horizontal_flip"],
            jobs=config["jobs"],
        )
    return pipeline.RawPixelFeatures(
        crop_padding=train_cfg["crop_padding"],
        horizontal_flip=train_cfg["horizontal_flip"],
    )


def cmd_train(args):
    extra = {
        "data.per_class": args.per_class,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
    }
    config = _resolve(args, extra)
    dataset = _load_split(config, args.data, "train")
    pipe = _make_pipeline(config, args.features)
    spec = encoder.ModelSpec(
        local_widths=tuple(config["model"]["local_widths"]),
        fc_widths=tuple(config["model"]["fc_widths"]),
        class_count=dataset.class_count,
    )
    train_cfg = encoder.TrainConfig.from_dict(config["train"])
    model, metrics = encoder.train(
        dataset.images, dataset.labels, pipe, spec, train_cfg
    )
    encoder.save_model(args.out, model, extra_header={"config": config})
    if args.metrics:
        rows = [
            (m["epoch"], m["lr"], m["loss"], m["train_top1"]) for m in metrics
        ]
        _write_csv(args.metrics, config, ("epoch", "lr", "loss", "train_top1"), rows)
    final = metrics[-1] if metrics else {"loss": float("nan"), "train_top1": 0.0}
    print(
        f"wrote {args.out}: {len(metrics)} epochs, "
        f"final loss {final['loss']:.4f}, train top1 {final['train_top1']:.4f}"
    )
    return 0


def _model_features(config, model_header, images):
    features = model_header.get("config", {}).get("features", "scattering")
    provenance = model_header.get("provenance", {}).get("pipeline", {})
    if provenance.get("features") == "raw_pixels":
        features = "raw"
    pipe = _make_pipeline(config, "raw" if features == "raw" else "scattering")
    return pipe.extract(images)


def cmd_eval(args):
    config = _resolve(args)
    model, header = encoder.load_model(args.model)
    config = header.get("config", config)
    dataset = _load_split(config, args.data, args.split)
    feats = _model_features(config, header, dataset.images)
    result = encoder.evaluate(model, feats, dataset.labels)
    if args.out:
        rows = [("top1", result.top1)]
        if result.top5 is not None:
            rows.append(("top5", result.top5))
        _write_csv(args.out, config, ("metric", "value"), rows)
    line = f"top1={result.top1:.4f}"
    if result.top5 is not None:
        line += f" top5={result.top5:.4f}"
    print(line)
    return 0


def cmd_analyze(args):
    config = _resolve(args)
    model, header = encoder.load_model(args.model)
    stored = header.get("config")
    if stored:
        config = stored
    scat = config["scattering"]
    layout = analysis.ScatteringLayout(
        J=scat["J"], L=scat["L"], colors=header.get("colors", 3)
    )
    view = analysis.normalize_view(analysis.split_first_layer(model, layout))
    hat = analysis.angular_dft(view)
    report = analysis.omega_spectra(hat)

    prefix = args.out_prefix
    _write_csv(
        f"{prefix}.omega1.csv",
        config,
        ("omega1", "value"),
        [(w, float(v)) for w, v in enumerate(report.omega1)],
    )
    _write_csv(
        f"{prefix}.omega2.csv",
        config,
        ("omega1", "omega2", "value"),
        [
            (w1, w2, float(report.omega2[w1, w2]))
            for w1 in range(layout.L)
            for w2 in range(layout.L)
        ],
    )
    hist_rows = []
    for order, (edges, counts) in sorted(report.histograms.items()):
        for i, count in enumerate(counts):
            hist_rows.append((order, float(edges[i]), float(edges[i + 1]), int(count)))
    _write_csv(
        f"{prefix}.hist.csv", config, ("order", "bin_lo", "bin_hi", "count"), hist_rows
    )

    share = analysis.low_frequency_share(report)
    print(f"low_frequency_share={share:.4f}")
    if args.sparsify_quantile is not None or args.epsilon is not None:
        eps = (
            args.epsilon
            if args.epsilon is not None
            else analysis.percentile_epsilon(model, layout, args.sparsify_quantile)
        )
        sparse_model, fraction = analysis.threshold_sparsify(model, layout, eps)
        out = args.sparsified_out or f"{prefix}.sparsified.scat"
        encoder.save_model(out, sparse_model, extra_header={"config": config})
        print(f"sparsified: epsilon={eps!r} zero_fraction={fraction:.4f} wrote {out}")
    return 0


def cmd_covariance(args):
    config = _resolve(args)
    bank = _bank_from(config)
    if args.ppm:
        images = [
            _center_fit(data.load_ppm(p), bank.config.N).mean(axis=0)
            for p in args.ppm
        ]
        names = list(args.ppm)
    else:
        rng = np.random.default_rng(config["seed"])
        images = [_synthetic_texture(rng, bank.config.N) for _ in range(args.images)]
        names = [f"synthetic-{i}" for i in range(len(images))]
    rows = []
    for name, img in zip(names, images):
        rep = analysis.covariance_check(img, bank, args.quarter_turns)
        rows.append(
            (
                name,
                rep.quarter_turns,
                rep.s0_error,
                rep.s1_error,
                rep.s2_error,
                rep.s2_error_first_only,
            )
        )
    if args.out:
        _write_csv(
            args.out,
            config,
            ("image", "quarter_turns", "s0_error", "s1_error", "s2_error",
             "s2_error_first_only"),
            rows,
        )
    worst = max((r[4] for r in rows), default=0.0)
    print(f"images={len(rows)} worst_s2_error={worst!r}")
    return 0


def _synthetic_texture(rng, side):
    # 1/f-amplitude random field, a stand-in for natural image statistics
    freqs = np.fft.fftfreq(side)
    radius = np.hypot(freqs[:, None], freqs[None, :])
    amplitude = np.where(radius == 0, 0.0, 1.0 / (radius + 1.0 / side))
    phase = rng.uniform(0, 2 * np.pi, size=(side, side))
    spectrum = amplitude * np.exp(1j * phase)
    img = np.fft.ifft2(spectrum).real
    img -= img.min()
    peak = img.max()
    return img / peak if peak > 0 else img


def build_parser():
    parser = argparse.ArgumentParser(prog="scatkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filters", help="build and serialize a filter bank")
    _add_common_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filters)

    p = sub.add_parser("lp-check", help="Littlewood-Paley frame diagnostic")
    _add_common_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lp_check)

    p = sub.add_parser("transform", help="scattering transform of a dataset or images")
    _add_common_flags(p)
    p.add_argument("--data", help="CIFAR-10 binary directory")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--per-class", type=int, dest="per_class")
    p.add_argument("--ppm", nargs="*", help="P6 PPM image files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="train a shared local encoder")
    _add_common_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--features", choices=("scattering", "raw"), default="scattering")
    p.add_argument("--per-class", type=int, dest="per_class")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model checkpoint")
    _add_common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="angular spectra of the first layer")
    _add_common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.add_argument("--sparsify-quantile", type=float, dest="sparsify_quantile")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sparsified-out", dest="sparsified_out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("covariance", help="rotation-covariance check")
    _add_common_flags(p)
    p.add_argument("--quarter-turns", type=int, default=1, dest="quarter_turns")
    p.add_argument("--ppm", nargs="*")
    p.add_argument("--images", type=int, default=4, help="synthetic image count")
    p.add_argument("--out")
    p.set_defaults(func=cmd_covariance)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, UnsupportedConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
