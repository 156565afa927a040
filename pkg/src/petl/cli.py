"""Command-line interface: ``petl <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import __version__
from .config import ConfigError, dump_config, load_config, make_train_config, split_config
from .errors import PetlError

log = logging.getLogger("petl")

_LIST_OPTIONS = {"checkpoints"}

KIND_NAMES = {"baseline": "baseline", "full": "full_transfer", "part-ensemble": "part"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- shared helpers --------------------------------------------------------

def _setup_logging(level):
    logging.basicConfig(level=getattr(logging, level.upper()), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def _resolve(args, parser_dests):
    """Merge config file values under command-line values; returns (train config, options)."""
    raw = load_config(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip().replace("-", "_")] = v.strip()
    train_raw, opts = split_config(raw, parser_dests)
    for k, v in opts.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v.split(",") if k in _LIST_OPTIONS else v)
    if args.seed is not None:
        train_raw["seed"] = str(args.seed)
    if getattr(args, "input_size", None) is not None:
        train_raw["input_size"] = str(args.input_size)
    base = None
    if getattr(args, "profile", None):
        from .training import TrainConfig
        base = TrainConfig.for_profile(args.profile)
    return make_train_config(train_raw, base), args


_INTERNAL = {"command", "config", "set", "func", "log_level", "required", "needs_out"}


def _effective(args, config):
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in _INTERNAL and v is not None}
    return {**opts, **config.to_dict()}


def _log_effective(args, config):
    """Log the full effective config and, when there is a run directory, save it there."""
    text = dump_config(_effective(args, config), header=f"effective config for '{args.command}'")
    log.info("effective config:\n%s", text.rstrip())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.txt").write_text(text)


def _load_nets(paths):
    from .checkpoint import load_checkpoint
    if not paths:
        raise PetlError("no checkpoints given")
    return [load_checkpoint(p) for p in paths]


def _net_setup(nets):
    sizes = {n.spec.input_size for n in nets}
    if len(sizes) != 1:
        raise PetlError(f"checkpoints disagree on input size: {sorted(sizes)}")
    enhance = {n.meta.get("config", {}).get("enhance", "clahe") for n in nets}
    return sizes.pop(), sorted(enhance)[0]


def _source_classes(net):
    from .io import CLASS_NAMES, SEVEN_CLASSES
    if "classes" in net.meta:
        return tuple(net.meta["classes"])
    return CLASS_NAMES if net.spec.num_classes == 8 else SEVEN_CLASSES


def _prepare(manifest, size, method):
    from .io import load_manifest
    from .training import prepare_data
    return prepare_data(load_manifest(manifest), size, method)


# --- subcommands -----------------------------------------------------------

def cmd_synth(args, config):
    from .io import CLASS_NAMES, SEVEN_CLASSES
    from .synthetic import generate_synthetic
    classes = CLASS_NAMES if args.classes == "eight" else SEVEN_CLASSES
    ds, _, _ = generate_synthetic(int(args.subjects), int(args.per_subject), int(args.seed or 0),
                                  args.out, classes, int(args.size))
    print(f"wrote {len(ds)} samples to {Path(args.out) / 'manifest.txt'}")
    return 0


def cmd_train(args, config):
    from .checkpoint import save_checkpoint
    from .io import load_manifest
    from .training import prepare_data, train_full_pipeline
    out = Path(args.out)
    ds = load_manifest(args.manifest)
    data = prepare_data(ds, config.input_size, config.enhance)
    kind = KIND_NAMES[args.kind]
    nets = train_full_pipeline(data, kind, config, int(args.models) if args.models else None, out / "metrics")
    for i, net in enumerate(nets):
        name = net.spec.feature if kind == "part" else f"{net.spec.label}_{i}"
        path = save_checkpoint(net, out / f"{name}.petl", {"manifest": str(args.manifest)})
        print(path)
    return 0


def cmd_eval(args, config):
    from .evaluation import evaluate
    nets = _load_nets(args.checkpoints)
    size, method = _net_setup(nets)
    data = _prepare(args.manifest, size, method)
    cm = evaluate(nets, data)
    print(cm.to_text())
    print(f"accuracy {cm.accuracy:.4f} ({cm.correct}/{cm.total})")
    if args.out:
        out = Path(args.out)
        (out / "confusion.csv").write_text(cm.to_csv())
    return 0


def cmd_crossval(args, config):
    from .evaluation import make_kfold_by_subject, make_loso, run_crossval
    out = Path(args.out)
    data = _prepare(args.manifest, config.input_size, config.enhance)
    if args.protocol == "loso":
        plan = make_loso(data.subjects)
    else:
        plan = make_kfold_by_subject(data.subjects, int(args.folds), int(args.group_size))
    kinds = [KIND_NAMES[k.strip()] for k in str(args.kinds).split(",")]
    report = run_crossval(data, plan, config, kinds, int(args.models) if args.models else None,
                          out / "metrics", title=f"{plan.method}, {len(data)} samples")
    report.write(out)
    print(report.to_text())
    return 0


def cmd_cross_dataset(args, config):
    from .evaluation import cross_dataset_eval
    nets = _load_nets(args.checkpoints)
    size, method = _net_setup(nets)
    data = _prepare(args.manifest, size, method)
    res = cross_dataset_eval(nets, _source_classes(nets[0]), data)
    print(res.matrix.to_text())
    print(f"accuracy {res.accuracy:.4f}; dropped {res.dropped} samples of {list(res.dropped_classes) or 'no'} classes")
    if args.out:
        out = Path(args.out)
        (out / "confusion.csv").write_text(res.matrix.to_csv())
    return 0


def _read_crop(path):
    from .io import read_pgm, read_ppm
    p = Path(path)
    if p.suffix.lower() == ".ppm":
        return read_ppm(p).mean(axis=2)
    return read_pgm(p)


def cmd_predict(args, config):
    from .inference import prediction_record
    from .preprocess import prepare_input
    nets = _load_nets(args.checkpoints)
    size, method = _net_setup(nets)
    x = prepare_input(_read_crop(args.image), size, method)
    rec = prediction_record(nets, x, _source_classes(nets[0]))
    print(rec.to_json())
    if args.out:
        out = Path(args.out)
        (out / "prediction.json").write_text(rec.to_json() + "\n")
    return 0


def cmd_gradcam(args, config):
    from .gradcam import ensemble_gradcam, heatmap_image, overlay
    from .io import write_pgm, write_ppm
    from .preprocess import as_gray, enhance, prepare_input, resize_to
    nets = _load_nets(args.checkpoints)
    size, method = _net_setup(nets)
    classes = _source_classes(nets[0])
    if args.class_name not in classes:
        raise PetlError(f"class {args.class_name!r} not among {list(classes)}")
    c = classes.index(args.class_name)
    raw = as_gray(_read_crop(args.image))
    x = prepare_input(raw, size, method)
    crop = resize_to(enhance(raw, method), size)
    maps, union = ensemble_gradcam(nets, x, c)
    out = Path(args.out)
    for net, m in zip(nets, maps):
        write_ppm(out / f"overlay_{net.spec.label}.ppm", overlay(m, crop))
        write_pgm(out / f"heatmap_{net.spec.label}.pgm", heatmap_image(m, size, size))
    write_ppm(out / "overlay_union.ppm", overlay(union, crop))
    write_pgm(out / "heatmap_union.pgm", heatmap_image(union, size, size))
    (out / "gradcam.json").write_text(json.dumps({
        "class": args.class_name, "normalization": "per-map max, union = element-wise max",
        "models": [n.spec.label for n in nets]}, indent=2) + "\n")
    print(f"wrote {len(maps) + 1} overlays to {out}")
    return 0


def cmd_profile(args, config):
    from .inference import format_profile, profile_inference
    from .network import count_flops, count_params
    nets = _load_nets(args.checkpoints)
    rows = []
    for p, n in zip(args.checkpoints, nets):
        c = count_params(n)
        rows.append((Path(p).name, n.spec.label, c["inference"], c["total"]))
    width = max(12, max(len(r[0]) for r in rows) + 2)
    print(f"{'checkpoint':<{width}}{'network':<14}{'inference':>12}{'stored':>12}")
    for name, label, inf, tot in rows:
        print(f"{name:<{width}}{label:<14}{inf:>12,}{tot:>12,}")
    print(f"{'ensemble total':<{width + 14}}{sum(r[2] for r in rows):>12,}{sum(r[3] for r in rows):>12,}")
    spec = nets[0].spec
    print(f"FLOPs per crop: full network {count_flops(spec, 'full'):,}; "
          f"classification heads of {len(nets)} models {count_flops(spec, 'heads', len(nets)):,}")
    if int(args.trials) > 0:
        print(format_profile(profile_inference(nets, int(args.trials), paths=args.checkpoints)))
    return 0


# --- parser ----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="petl", description="Part-based landmark transfer learning for expression recognition.")
    p.add_argument("--version", action="version", version=f"petl {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="key = value file supplying defaults")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config entry")
        sp.add_argument("--seed", type=int, help="master random seed")
        sp.add_argument("--out", required=False, help="run/output directory" + (" (required)" if out_required else ""))
        sp.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
        return sp

    s = common(sub.add_parser("synth", help="render a synthetic face dataset"))
    s.add_argument("--subjects", type=int, default=12)
    s.add_argument("--per-subject", type=int, default=21)
    s.add_argument("--size", type=int, default=160)
    s.add_argument("--classes", choices=["seven", "eight"], default="seven")
    s.set_defaults(func=cmd_synth, needs_out=True)

    s = common(sub.add_parser("train", help="train baseline / full-transfer / part-ensemble networks"))
    s.add_argument("--manifest")
    s.add_argument("--kind", choices=sorted(KIND_NAMES))
    s.add_argument("--models", type=int, help="ensemble size for baseline/full (default 1)")
    s.add_argument("--profile", choices=["ckplus", "jaffe", "sfew"], help="epoch profile")
    s.add_argument("--input-size", type=int)
    s.set_defaults(func=cmd_train, needs_out=True, required=("manifest", "kind"))

    s = common(sub.add_parser("eval", help="confusion matrix of checkpoints on a manifest"))
    s.add_argument("--manifest")
    s.add_argument("--checkpoints", nargs="+")
    s.set_defaults(func=cmd_eval, required=("manifest", "checkpoints"))

    s = common(sub.add_parser("crossval", help="subject-independent cross-validation"))
    s.add_argument("--manifest")
    s.add_argument("--protocol", choices=["kfold", "loso"], default="kfold")
    s.add_argument("--folds", type=int, default=10)
    s.add_argument("--group-size", type=int, default=12)
    s.add_argument("--kinds", default="part-ensemble", help="comma list of baseline,full,part-ensemble")
    s.add_argument("--models", type=int)
    s.add_argument("--profile", choices=["ckplus", "jaffe", "sfew"])
    s.add_argument("--input-size", type=int)
    s.set_defaults(func=cmd_crossval, needs_out=True, required=("manifest",))

    s = common(sub.add_parser("cross-dataset", help="evaluate on a dataset with a different label set"))
    s.add_argument("--manifest")
    s.add_argument("--checkpoints", nargs="+")
    s.set_defaults(func=cmd_cross_dataset, required=("manifest", "checkpoints"))

    s = common(sub.add_parser("predict", help="ensemble prediction for one face crop"))
    s.add_argument("--image")
    s.add_argument("--checkpoints", nargs="+")
    s.set_defaults(func=cmd_predict, required=("image", "checkpoints"))

    s = common(sub.add_parser("gradcam", help="per-network and union Grad-CAM overlays"))
    s.add_argument("--image")
    s.add_argument("--class", dest="class_name")
    s.add_argument("--checkpoints", nargs="+")
    s.set_defaults(func=cmd_gradcam, needs_out=True, required=("image", "class_name", "checkpoints"))

    s = common(sub.add_parser("profile", help="parameter counts and inference latency"))
    s.add_argument("--checkpoints", nargs="+")
    s.add_argument("--trials", type=int, default=0)
    s.set_defaults(func=cmd_profile, required=("checkpoints",))
    return p


def _dests(parser, command):
    sp = parser._subparsers._group_actions[0].choices[command]
    return {a.dest for a in sp._actions if a.dest not in ("help", "config", "set")}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("petl: error: a subcommand is required")
        _setup_logging(args.log_level)
        config, args = _resolve(args, _dests(parser, args.command))
        missing = [d for d in getattr(args, "required", ()) if getattr(args, d, None) in (None, [])]
        if getattr(args, "needs_out", False) and not args.out:
            missing.append("out")
        if missing:
            raise UsageError(f"petl {args.command}: missing required option(s): "
                             + ", ".join("--" + m.replace("_", "-") for m in missing))
        _log_effective(args, config)
        return args.func(args, config)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:            # --help / --version
        return int(e.code or 0)
    except ConfigError as e:
        print(f"petl: config error: {e}", file=sys.stderr)
        return 1
    except (PetlError, OSError, ValueError, IndexError) as e:
        print(f"petl: error: {e}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
