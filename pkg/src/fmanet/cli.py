"""Command-line entry point: ``fmanet <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (bad data, failed check,
violated threshold) and 2 on a usage error. Diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FmanetErrorTypes
from .flow import DEFAULT_ITERATIONS, DEFAULT_SMOOTHNESS, FlowField, read_flo, write_flo

log = logging.getLogger("fmanet")

FLO_SUFFIX = ".flo"


class UsageError(Exception):
    """Bad combination of arguments that argparse cannot catch by itself."""


def _add_flow_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("flow estimation")
    g.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS,
                   help=f"Horn-Schunck iterations (default {DEFAULT_ITERATIONS})")
    g.add_argument("--smoothness", type=float, default=DEFAULT_SMOOTHNESS,
                   help=f"Horn-Schunck smoothness weight (default {DEFAULT_SMOOTHNESS})")
    g.add_argument("--presmooth", type=float, default=1.0,
                   help="Gaussian sigma applied to frames before estimation; 0 disables (default 1)")
    g.add_argument("--size", type=int, default=None, help="resize frames to SIZE x SIZE first")


def _add_modulation_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    d = (lambda v: v) if defaults else (lambda v: None)
    g = p.add_argument_group("magnitude modulation")
    g.add_argument("--mode", choices=("manual", "adaptive"), default=d("adaptive"),
                   help="threshold mode (default adaptive)")
    g.add_argument("--alpha", type=float, default=d(0.5), help="lower threshold, manual mode (default 0.5)")
    g.add_argument("--beta", type=float, default=d(1.8), help="upper threshold, manual mode (default 1.8)")
    g.add_argument("--k-upper", type=float, default=d(2.0), help="adaptive upper = mean + k_upper*std (default 2)")
    g.add_argument("--k-lower", type=float, default=d(1.0), help="adaptive lower = mean - k_lower*std (default 1)")
    g.add_argument("--w1", type=float, default=d(2.0), help="gain above the upper threshold (default 2)")
    g.add_argument("--w2", type=float, default=d(0.5), help="gain below the lower threshold (default 0.5)")
    g.add_argument("--theta1", type=float, default=d(1.0), help="onset-apex phase weight (default 1)")
    g.add_argument("--theta2", type=float, default=d(1.0), help="apex-offset phase weight (default 1)")


def _flow_settings(args):
    from .data.features import FlowSettings
    return FlowSettings(args.iterations, args.smoothness, args.presmooth, args.size)


def _load_frames(paths):
    from .flow import load_frame
    return [load_frame(p) for p in paths]


def _phase_flows_from_inputs(inputs, args) -> tuple[FlowField, FlowField]:
    from .data.features import phase_flows
    paths = [Path(p) for p in inputs]
    if all(p.suffix.lower() == FLO_SUFFIX for p in paths):
        if len(paths) != 2:
            raise UsageError("give exactly two .flo files (onset-apex, apex-offset)")
        return read_flo(paths[0]), read_flo(paths[1])
    if any(p.suffix.lower() == FLO_SUFFIX for p in paths):
        raise UsageError("do not mix .flo files and frames")
    frames = _load_frames(paths)
    settings = _flow_settings(args)
    if len(frames) == 3:
        return phase_flows(frames, settings)
    if len(frames) == 4:
        # onset, apex, apex (second copy, e.g. aligned to offset), offset
        on, _ = phase_flows([frames[0], frames[1], frames[1]], settings)
        _, off = phase_flows([frames[2], frames[2], frames[3]], settings)
        return on, off
    raise UsageError("give two .flo files, or three (onset apex offset) or four frames")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_flow(args) -> int:
    from .data.features import resize_frame
    from .flow import estimate_flow, flow_magnitude
    from scipy import ndimage
    a, b = _load_frames([args.frame_a, args.frame_b])
    if args.size:
        a, b = resize_frame(a, args.size), resize_frame(b, args.size)
    if args.presmooth > 0:
        a = ndimage.gaussian_filter(a, args.presmooth, mode="nearest")
        b = ndimage.gaussian_filter(b, args.presmooth, mode="nearest")
    field = estimate_flow(a, b, args.iterations, args.smoothness)
    write_flo(field, args.output)
    if args.png:
        from .viz import save_heatmap
        save_heatmap(flow_magnitude(field), args.png, args.colormap)
    m = flow_magnitude(field)
    print(f"wrote {args.output}: {field.width}x{field.height}, mean |flow| {m.mean():.4f}, max {m.max():.4f}")
    return 0


def _modulation(args):
    from .mmcof import ModulationConfig
    return ModulationConfig(args.mode, args.alpha, args.beta, args.k_upper, args.k_lower, args.w1, args.w2)


def cmd_mmcof(args) -> int:
    from .mmcof import build_mmcof
    from .tensor import save_tensors
    config = _modulation(args)
    on, off = _phase_flows_from_inputs(args.inputs, args)
    image = build_mmcof(on, off, config, args.theta1, args.theta2)
    save_tensors(args.output, {args.entry: image})
    if args.png:
        from .viz import save_heatmap
        save_heatmap(image[2], args.png, args.colormap)
    print(f"wrote {args.output}: entry {args.entry!r} shape {list(image.shape)}, "
          f"M_mod range [{image[2].min():.4f}, {image[2].max():.4f}]")
    return 0


def cmd_synth(args) -> int:
    from .data.synth import SynthConfig, synth_generate, write_dataset
    config = SynthConfig(classes=args.classes, samples_per_class=args.per_class, image_size=args.size,
                         noise_level=args.noise, asymmetry_level=args.asymmetry, seed=args.seed,
                         subjects=args.subjects, amplitude=args.amplitude, contrast=args.contrast)
    dataset = synth_generate(config)
    annotations = write_dataset(dataset, args.output)
    print(f"wrote {len(dataset.index)} samples from {len(dataset.index.subjects())} subjects; "
          f"annotations: {annotations}")
    return 0


def cmd_convert(args) -> int:
    from .data.convert import convert_annotations
    n = convert_annotations(args.source, args.output, args.layout)
    print(f"wrote {n} rows to {args.output}")
    return 0


def _run_config(args):
    from .config import RunConfig, load_config
    file_values = load_config(args.config) if args.config else {}
    cli_values = {k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k, None) is not None}
    return RunConfig.layered(file_values, cli_values)


def cmd_train(args) -> int:
    from .data.index import load_index, map_labels
    from .eval.metrics import write_metrics_csv, write_summary
    from .experiment import run_loso, write_predictions
    run = _run_config(args)
    run.validate()
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(run.to_text())
    index = map_labels(load_index(run.root, run.annotations), run.protocol)
    if index.excluded:
        log.warning("excluded by protocol %d: %s", run.protocol, index.excluded)
    report, results = run_loso(index, config=run.experiment(), out_dir=out)
    write_predictions(results, out / "predictions.csv", index.class_names)
    write_metrics_csv(report, out / "metrics.csv")
    write_summary(report, out / "summary.json", index.class_names)
    p = report.pooled
    print(f"acc={p.accuracy:.4f} uf1={p.uf1:.4f} uar={p.uar:.4f} folds={len(report.folds)} n={p.n}")
    return 0


def cmd_predict(args) -> int:
    from .data.features import stack_inputs
    from .data.index import load_index, map_labels
    from .experiment import ExperimentConfig, compute_features, disk_frames
    from .model import load_checkpoint, predict
    model, header = load_checkpoint(args.checkpoint)
    if "experiment" not in header:
        raise UsageError(f"{args.checkpoint}: header lacks the feature settings written by 'train'")
    config = ExperimentConfig.from_dict(header["experiment"])
    index = load_index(args.root, args.annotations)
    protocol = args.protocol or header.get("protocol")
    if protocol:
        index = map_labels(index, int(protocol))
    features = compute_features(index.samples, disk_frames, config)
    inputs = stack_inputs([features[(s.sample_id, "orig")] for s in index.samples])
    preds, probs = predict(model, inputs)
    lines = ["sample_id,label,pred," + ",".join(f"p{c}" for c in range(probs.shape[1]))]
    for s, p, pr in zip(index.samples, preds, probs):
        label = "" if s.label is None else str(s.label)
        lines.append(f"{s.sample_id},{label},{int(p)}," + ",".join(f"{v:.6f}" for v in pr))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_thresholds(spec: str) -> dict[str, float]:
    out = {}
    for part in spec.split(","):
        if not part.strip():
            continue
        key, _, value = part.partition("=")
        key = key.strip().lower()
        if key not in ("acc", "uf1", "uar") or not value:
            raise UsageError(f"--assert expects acc=,uf1=,uar= thresholds, got {part!r}")
        out[key] = float(value)
    return out


def cmd_evaluate(args) -> int:
    from .eval.metrics import aggregate_loso, write_metrics_csv, write_summary
    from .experiment import read_predictions
    thresholds = _parse_thresholds(args.assert_thresholds) if args.assert_thresholds else {}
    results = read_predictions(args.predictions)
    classes_path = Path(str(args.predictions) + ".classes.json")
    class_names = json.loads(classes_path.read_text()) if classes_path.exists() else None
    num_classes = args.num_classes or (len(class_names) if class_names else
                                       int(max(max(r.labels.max(initial=0), r.preds.max(initial=0))
                                               for r in results)) + 1)
    report = aggregate_loso(results, num_classes)
    if args.output:
        write_metrics_csv(report, args.output)
    if args.summary:
        write_summary(report, args.summary, class_names)
    p = report.pooled
    print(f"acc={p.accuracy:.4f} uf1={p.uf1:.4f} uar={p.uar:.4f}")
    print(f"macro acc={report.macro['accuracy']:.4f} uf1={report.macro['uf1']:.4f} "
          f"uar={report.macro['uar']:.4f}")
    if p.flagged:
        log.warning("classes with a zero denominator (scored 0): %s", p.flagged)
    failed = [f"{k}={getattr(p, {'acc': 'accuracy'}.get(k, k)):.4f} < {v}" for k, v in thresholds.items()
              if getattr(p, {"acc": "accuracy"}.get(k, k)) < v]
    if failed:
        print("threshold violated: " + "; ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_visualize(args) -> int:
    from .flow import flow_magnitude
    from .viz import save_heatmap
    paths = [Path(p) for p in args.inputs]
    if args.kind == "magnitude":
        if len(paths) != 1:
            raise UsageError("magnitude needs one .flo or .mmcf input")
        values = _map_from_file(paths[0], args.entry, args.channel)
    else:
        if len(paths) != 2 or not all(p.suffix.lower() == FLO_SUFFIX for p in paths):
            raise UsageError(f"{args.kind} needs two .flo files (onset-apex, apex-offset)")
        on, off = read_flo(paths[0]), read_flo(paths[1])
        m_on, m_off = flow_magnitude(on), flow_magnitude(off)
        if args.kind == "consensus":
            from .model import ffb_consensus
            values = ffb_consensus(m_on, m_off)
        else:
            values = _attention_map(on, off, args.checkpoint)
    save_heatmap(values, args.output, args.colormap)
    print(f"wrote {args.output} ({values.shape[1]}x{values.shape[0]}, {args.colormap})")
    return 0


def _map_from_file(path: Path, entry: str | None, channel: int) -> np.ndarray:
    from .flow import flow_magnitude
    from .tensor import load_tensors
    if path.suffix.lower() == FLO_SUFFIX:
        return flow_magnitude(read_flo(path))
    arrays = load_tensors(path)
    name = entry or next(iter(arrays), None)
    if name not in arrays:
        raise UsageError(f"{path}: no entry {name!r}; available: {sorted(arrays)}")
    arr = arrays[name]
    if arr.ndim == 3:
        arr = arr[channel]
    return arr


def _attention_map(on: FlowField, off: FlowField, checkpoint) -> np.ndarray:
    from .data.features import fmanet_input
    from .model import FMANet, load_checkpoint
    if checkpoint:
        model, _ = load_checkpoint(checkpoint)
        if not isinstance(model, FMANet):
            raise UsageError("attention maps need an FMANet checkpoint")
    else:
        model = FMANet(input_size=on.height, hidden=8)
        log.warning("no --checkpoint given: attention gate of an untrained network")
    if on.shape != (model.input_size, model.input_size):
        raise UsageError(f"flows are {on.shape}, model expects {model.input_size}x{model.input_size}")
    sample = fmanet_input(on, off)
    trace: dict = {}
    model.forward({k: v[None] for k, v in sample.items()}, train=False, trace=trace)
    return trace["g_attn"][0, 0]


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_layer_checks, run_network_check
    reports = {}
    if args.target in ("layers", "all"):
        reports.update(run_layer_checks(args.seed, args.tolerance))
    if args.target in ("fmanet", "all"):
        reports["fmanet"] = run_network_check(args.size, args.seed, args.tolerance)
    ok = True
    for name, rep in reports.items():
        status = "PASS" if rep.passed else "FAIL"
        ok &= rep.passed
        print(f"{status} {name}: max rel err {rep.max_error:.3e} (tolerance {rep.tolerance:g})")
        if args.details:
            for line in rep.lines():
                print("    " + line)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    """Flags of the flat run configuration; unset flags fall back to --config then defaults."""
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--root", help="dataset root directory")
    p.add_argument("--annotations", help="annotation CSV (subject,clip,onset,apex,offset,label)")
    p.add_argument("--protocol", type=int, choices=(3, 5, 6, 7), help="label protocol (default 5)")
    p.add_argument("--out", "-o", help="output directory (default ./run)")
    p.add_argument("--representation", choices=("fmanet", "mmcof", "single"),
                   help="model input: fmanet (dual-phase FMANet), mmcof or single (SCNN); default fmanet")
    p.add_argument("--image-size", type=int, help="network input size, divisible by 8 (default 224)")
    p.add_argument("--augment", help="training augmentation: none, full, or a list of flip,rot5,rot10")
    p.add_argument("--flow-iterations", type=int, help="Horn-Schunck iterations (default 200)")
    p.add_argument("--flow-smoothness", type=float, help="Horn-Schunck smoothness (default 0.1)")
    p.add_argument("--presmooth", type=float, help="frame Gaussian sigma before flow (default 1)")
    _add_modulation_flags(p, defaults=False)
    g = p.add_argument_group("FMANet")
    g.add_argument("--theta", type=float, help="consensus exponent (default 1)")
    g.add_argument("--tau", type=float, help="coherence temperature (default 0.1)")
    g.add_argument("--c-mid", type=int, help="fusion channels (default 16)")
    g.add_argument("--epsilon", type=float, help="numerical floor (default 1e-6)")
    g.add_argument("--hidden", type=int, help="fully connected width (default 1024)")
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, help="epochs per fold (default 50)")
    g.add_argument("--batch-size", type=int, help="minibatch size (default 16)")
    g.add_argument("--lr", type=float, help="learning rate (default 1e-4)")
    g.add_argument("--optimizer", choices=("adam", "sgd"), help="optimizer (default adam)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--jobs", type=int, help="folds trained in parallel (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmanet", description="Micro-expression recognition from dual-phase optical flow.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("flow", help="estimate optical flow between two frames")
    p.add_argument("frame_a", help="first frame (PNG/PGM/...)")
    p.add_argument("frame_b", help="second frame")
    p.add_argument("-o", "--output", required=True, help="output .flo file")
    p.add_argument("--png", help="also write a magnitude heatmap PNG")
    p.add_argument("--colormap", choices=("gray", "turbo"), default="gray", help="heatmap colormap")
    _add_flow_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("mmcof", help="build an MM-COF image from two phase flows or a frame triplet")
    p.add_argument("inputs", nargs="+",
                   help="two .flo files (onset-apex, apex-offset), or onset apex offset frames "
                        "(four frames: onset apex apex' offset)")
    p.add_argument("-o", "--output", required=True, help="output tensor container (.mmcf)")
    p.add_argument("--entry", default="mmcof", help="entry name in the container (default mmcof)")
    p.add_argument("--png", help="also write a heatmap of the modulated magnitude")
    p.add_argument("--colormap", choices=("gray", "turbo"), default="gray", help="heatmap colormap")
    _add_modulation_flags(p)
    _add_flow_flags(p)
    p.set_defaults(func=cmd_mmcof)

    p = sub.add_parser("synth", help="write a synthetic micro-motion dataset")
    p.add_argument("-o", "--output", default="synth", help="output directory (default ./synth)")
    p.add_argument("--classes", type=int, default=5, help="number of classes (default 5)")
    p.add_argument("--per-class", type=int, default=20, help="samples per class (default 20)")
    p.add_argument("--subjects", type=int, default=8, help="number of subjects (default 8)")
    p.add_argument("--size", type=int, default=32, help="frame size in pixels (default 32)")
    p.add_argument("--noise", type=float, default=0.0, help="additive Gaussian noise std (default 0)")
    p.add_argument("--asymmetry", type=float, default=0.0,
                   help="share of apex motion that does not return at offset, in [0, 1) (default 0)")
    p.add_argument("--amplitude", type=float, default=1.0, help="peak displacement in pixels (default 1)")
    p.add_argument("--contrast", type=float, default=0.25, help="texture intensity std (default 0.25)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert a CSV export of a public annotation spreadsheet")
    p.add_argument("source", help="CSV export of the dataset spreadsheet")
    p.add_argument("--layout", required=True, choices=("casme2", "samm"), help="source column layout")
    p.add_argument("-o", "--output", default="annotations.csv", help="annotation CSV to write")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="leave-one-subject-out training and evaluation")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a saved checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint (.mmcf with .json header)")
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--protocol", type=int, choices=(3, 5, 6, 7), help="label protocol for the label column")
    p.add_argument("-o", "--output", help="CSV output (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics from a predictions CSV")
    p.add_argument("predictions", help="predictions CSV (fold_subject,sample_id,label,pred)")
    p.add_argument("-o", "--output", help="write the per-fold metrics CSV here")
    p.add_argument("--summary", help="write a JSON summary here")
    p.add_argument("--num-classes", type=int, help="class count (default: from the class list or data)")
    p.add_argument("--assert", dest="assert_thresholds", metavar="THRESHOLDS",
                   help="e.g. acc=0.8,uf1=0.75: exit 1 if a pooled metric is below its threshold")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("visualize", help="render a map as an 8-bit PNG heatmap")
    p.add_argument("inputs", nargs="+", help="one .flo / .mmcf file, or two .flo files for consensus/attention")
    p.add_argument("-o", "--output", required=True, help="output PNG")
    p.add_argument("--kind", choices=("magnitude", "consensus", "attention"), default="magnitude",
                   help="map to render (default magnitude)")
    p.add_argument("--entry", help="container entry to render (default: first)")
    p.add_argument("--channel", type=int, default=2, help="channel of a 3-D entry (default 2, M_mod)")
    p.add_argument("--checkpoint", help="FMANet checkpoint for --kind attention")
    p.add_argument("--colormap", choices=("gray", "turbo"), default="gray", help="colormap (default gray)")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("target", nargs="?", choices=("layers", "fmanet", "all"), default="all",
                   help="what to check (default all)")
    p.add_argument("--size", type=int, default=16, help="toy resolution of the network check (default 16)")
    p.add_argument("--tolerance", type=float, default=1e-3, help="relative error bound (default 1e-3)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--details", action="store_true", help="print one line per checked tensor")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fmanet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FmanetErrorTypes as exc:
        print(f"fmanet {args.command}: error: {getattr(exc, 'summary', exc)}", file=sys.stderr)
        for line in getattr(exc, "problems", ()):
            print(f"  {line}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
