"""Command-line entry point: ``zepeye <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 a face without candidates.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import Config, Illumination
from .dataset import (DEFAULT_TRAIN_FACES, DEFAULT_VAL_FACES, FRONTAL_RANGES, LATERAL_RANGES,
                      AnnotationError, VariationRanges, build_corpus, extract_patches,
                      load_annotations, random_face, save_annotations, synth_faces,
                      to_training_set)
from .encoder import assemble_zep, extract_epochs, normalize_projection
from .evaluation import (FAILED, STANDARD_THRESHOLDS, accuracy_curve, evaluate,
                         format_accuracy_table, noise_sweep, tp_score, write_curve_csv,
                         write_errors_csv)
from .imgcore import PgmError, Rect, load_pgm, resize_bilinear, save_pgm
from .localizer import NoCandidates, StageTimer, localize
from .mlp import (Head, ModelError, TrainingSet, accuracy, dumps_model, load_model, mlp_new,
                  train)
from .projections import (Axis, build_oriented_integrals, fast_projection, naive_scan_projections,
                          scan_window_sums, sobel_energy)
from .training import PIPELINE_FAR_NEGATIVES, PIPELINE_TRAIN_FACES, branch_ranges

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NO_CANDIDATES = 0, 1, 2, 3
RANGES = {"default": VariationRanges(), "frontal": FRONTAL_RANGES, "lateral": LATERAL_RANGES}
BENCH_STAGES = ("context", "prefilter", "projections", "encoding", "mlp", "postprocess")
REFERENCE_CPU_SCORE = 1747.0


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _rect(text: str) -> Rect:
    try:
        r0, r1, c0, c1 = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected r0,r1,c0,c1") from None
    return Rect(r0, r1, c0, c1)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _map(fn, items, threads: int):
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_faces(annotations: str, images: str):
    """Annotated faces with their images ``<images>/<id>.pgm``; lists every missing image."""
    anns = load_annotations(annotations)
    missing = [a.image_id for a in anns if not os.path.exists(os.path.join(images, a.image_id + ".pgm"))]
    if missing:
        raise DataError("no image for annotation id(s): " + ", ".join(missing))
    return [(load_pgm(os.path.join(images, a.image_id + ".pgm")), a) for a in anns]


def _load_models(args):
    return load_model(args.frontal_model), load_model(args.lateral_model)


def _out(path):
    return open(path, "w", newline="") if path and path != "-" else sys.stdout


def cmd_synth(args, config: Config) -> int:
    os.makedirs(args.out, exist_ok=True)
    faces = synth_faces(args.faces, RANGES[args.ranges], seed=args.seed, prefix=args.prefix,
                        config=config)
    for img, ann in faces:
        save_pgm(img, os.path.join(args.out, ann.image_id + ".pgm"))
    save_annotations([a for _, a in faces], os.path.join(args.out, "annotations.csv"))
    print(f"wrote {len(faces)} faces to {args.out}")
    return EXIT_OK


def _train_set_from_files(args, head: Head, config: Config) -> tuple[TrainingSet, TrainingSet]:
    faces = _load_faces(args.annotations, args.images)
    cfg = config.replace(far_negatives_per_eye=args.far_negatives)
    n_val = max(1, len(faces) // 10) if len(faces) > 1 else 0
    parts = []
    for chunk, stream in ((faces[n_val:], 0), (faces[:n_val], 1)):
        samples = []
        for i, (img, ann) in enumerate(chunk):
            samples.extend(extract_patches(img, ann, head, args.seed * 1000 + stream * 100 + i, cfg))
        parts.append(to_training_set(samples, head))
    return parts[0], parts[1]


def cmd_train(args, config: Config) -> int:
    if args.branch == "any":
        mode = None
        head = Head(args.head or "binary")
        ranges = VariationRanges()
        faces = args.faces or DEFAULT_TRAIN_FACES
        val_faces = DEFAULT_VAL_FACES if args.val_faces is None else args.val_faces
        far = 0 if args.far_negatives is None else args.far_negatives
    else:
        mode = Illumination(args.branch)
        head = Head(args.head) if args.head else config.mode(mode).training_scheme
        ranges = branch_ranges(mode)
        faces = args.faces or PIPELINE_TRAIN_FACES[mode]
        val_faces = 20 if args.val_faces is None else args.val_faces
        far = PIPELINE_FAR_NEGATIVES if args.far_negatives is None else args.far_negatives
    args.far_negatives = far
    epochs = config.train_epochs if args.epochs is None else args.epochs
    lr = config.learning_rate if args.lr is None else args.lr
    try:
        sink = open(args.out, "w")
    except OSError as exc:
        raise DataError(f"cannot write model: {exc}") from None
    with sink:
        if args.annotations:
            train_set, val_set = _train_set_from_files(args, head, config)
        else:
            cfg = config.replace(far_negatives_per_eye=far)
            corpus = build_corpus(faces, ranges, seed=args.seed, head=head, n_val_faces=val_faces,
                                  illumination=mode, config=cfg)
            train_set, val_set = corpus.train, corpus.val
        init = mlp_new(config.feature_length, config.hidden_units or None, head=head, seed=args.seed)
        model, trace = train(init, train_set, epochs, lr, args.seed)
        sink.write(dumps_model(model))
    print(f"samples,{len(train_set)}")
    print(f"final_loss,{trace[-1]:.6f}" if trace else "final_loss,")
    if len(val_set):
        if head is Head.REGRESSION:
            mse = float(np.mean((model.forward_batch(val_set.features) - val_set.targets) ** 2))
            print(f"validation_mse,{mse:.6f}")
        print(f"validation_accuracy,{accuracy(model, val_set):.4f}")
    return EXIT_OK


def _localize_rows(faces, models, config, threads):
    frontal, lateral = models

    def one(face):
        img, ann = face
        try:
            return ann, localize(img, ann.face_rect, frontal, lateral, config), None
        except NoCandidates as exc:
            return ann, None, exc

    return _map(one, faces, threads)


def cmd_localize(args, config: Config) -> int:
    models = _load_models(args)
    faces = _load_faces(args.annotations, args.images)
    failed = 0
    sink = _out(args.out)
    try:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["id", "left_row", "left_col", "right_row", "right_col", "illumination",
                    "left_confidence", "right_confidence"])
        for ann, pair, exc in _localize_rows(faces, models, config, args.threads):
            if pair is not None:
                w.writerow([ann.image_id, f"{pair.left.row:.2f}", f"{pair.left.col:.2f}",
                            f"{pair.right.row:.2f}", f"{pair.right.col:.2f}",
                            pair.illumination.value, f"{pair.left_confidence:.4f}",
                            f"{pair.right_confidence:.4f}"])
                continue
            failed += 1
            row = [ann.image_id]
            for side in ("left", "right"):
                r = exc.partial.get(side)
                row += [f"{r.center.row:.2f}", f"{r.center.col:.2f}"] if r else ["", ""]
            conf = [f"{exc.partial[s].confidence:.4f}" if s in exc.partial else ""
                    for s in ("left", "right")]
            w.writerow(row + [exc.partial["illumination"].value] + conf)
            print(f"{ann.image_id}: no candidates for {' and '.join(exc.eyes)} eye", file=sys.stderr)
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_NO_CANDIDATES if failed else EXIT_OK


def cmd_eval(args, config: Config) -> int:
    frontal, lateral = _load_models(args)
    faces = _load_faces(args.annotations, args.images)

    def fn(img, ann):
        return localize(img, ann.face_rect, frontal, lateral, config)

    results = [r for chunk in _map(lambda f: evaluate([f], fn), faces, args.threads) for r in chunk]
    curve = accuracy_curve([e if e is not None else FAILED for _, e in results], args.thresholds)
    if args.errors:
        write_errors_csv(results, args.errors)
    if args.curve:
        write_curve_csv(curve, args.curve)
    n_fail = sum(e is None for _, e in results)
    print(f"faces: {len(results)}  without candidates: {n_fail}")
    print(format_accuracy_table(curve))
    if args.noise:
        print("sigma,accuracy")
        for sigma, acc in noise_sweep(faces, fn, args.noise, seed=args.noise_seed):
            print(f"{sigma:g},{acc:.4f}")
    return EXIT_OK


def _projection_of(args):
    img = load_pgm(args.image)
    rect = args.rect or Rect(0, img.height - 1, 0, img.width - 1)
    rect.check_inside(img.height, img.width)
    raster = img if args.kind == "gray" else sobel_energy(img).values
    tables = build_oriented_integrals(raster)
    return img, rect, fast_projection(tables, rect, Axis(args.axis))


def cmd_project(args, config: Config) -> int:
    _, _, proj = _projection_of(args)
    print("index,value")
    for i, v in enumerate(proj.values):
        print(f"{i},{v:.6f}")
    return EXIT_OK


def cmd_encode(args, config: Config) -> int:
    if args.zep:
        if args.signal is not None:
            raise UsageError("--zep needs --image")
        img = load_pgm(args.image)
        rect = args.rect or Rect(0, img.height - 1, 0, img.width - 1)
        rect.check_inside(img.height, img.width)
        energy = sobel_energy(img).values
        g, e = build_oriented_integrals(img), build_oriented_integrals(energy)
        H, V = Axis.HORIZONTAL, Axis.VERTICAL
        feat = assemble_zep(fast_projection(g, rect, H), fast_projection(g, rect, V),
                            fast_projection(e, rect, H), fast_projection(e, rect, V),
                            config.max_epochs, config.shape_cap, config.epoch_third_param)
        print("index,value")
        for i, v in enumerate(feat):
            print(f"{i},{v:.6f}")
        return EXIT_OK
    if args.signal is not None:
        values = np.asarray(args.signal, dtype=np.float64)
        if values.size == 0:
            raise UsageError("empty signal")
        signal = values if args.normalized else normalize_projection(values).values
    else:
        if args.image is None:
            raise UsageError("give --signal or --image")
        _, _, proj = _projection_of(args)
        signal = normalize_projection(proj).values
    print("index,duration,amplitude,shape")
    for i, ep in enumerate(extract_epochs(signal)):
        print(f"{i},{ep.duration},{ep.amplitude:.6f},{ep.shape}")
    return EXIT_OK


def _stats(samples_s) -> tuple[float, float]:
    ms = np.asarray(samples_s) * 1000.0
    return float(ms.mean()), float(np.percentile(ms, 95))


def cmd_bench(args, config: Config) -> int:
    img, ann = random_face(args.seed, VariationRanges(), "bench")
    if args.face_size != img.width:
        img = resize_bilinear(img, args.face_size, args.face_size)
    face_rect = Rect(0, img.height - 1, 0, img.width - 1)
    if args.frontal_model and args.lateral_model:
        frontal, lateral = _load_models(args)
    else:
        frontal = mlp_new(config.feature_length, config.hidden_units or None,
                          head=config.mode(Illumination.FRONTAL).training_scheme, seed=args.seed)
        lateral = mlp_new(config.feature_length, config.hidden_units or None,
                          head=config.mode(Illumination.LATERAL).training_scheme, seed=args.seed)

    def run_once():
        timer = StageTimer()
        t0 = time.perf_counter()
        try:
            localize(img, face_rect, frontal, lateral, config, timer)
        except NoCandidates:
            pass
        timer.seconds["total"] = time.perf_counter() - t0
        return timer.seconds

    run_once()
    runs = [run_once() for _ in range(args.iterations)]
    print("stage,mean_ms,p95_ms")
    for stage in BENCH_STAGES + ("total",):
        mean, p95 = _stats([r.get(stage, 0.0) for r in runs])
        print(f"{stage},{mean:.3f},{p95:.3f}")

    k, stride = config.patch_size, config.scan_stride
    roi = Rect(0, img.height - 1, 0, img.width - 1)
    scans = {}
    for name, fn, n in (("scan_fast", scan_window_sums, args.iterations),
                        ("scan_naive", naive_scan_projections, args.naive_iterations or args.iterations)):
        fn(img, roi, k, k, stride)
        times = []
        for _ in range(n):
            t0 = time.perf_counter()
            fn(img, roi, k, k, stride)
            times.append(time.perf_counter() - t0)
        scans[name] = _stats(times)
        print(f"{name},{scans[name][0]:.3f},{scans[name][1]:.3f}")
    print(f"speedup,{scans['scan_naive'][0] / scans['scan_fast'][0]:.2f}")
    fps = 1000.0 / _stats([r["total"] for r in runs])[0]
    print(f"tp_score,{tp_score(fps, img.width, img.height, args.cpu_score):.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zepeye", description="Eye center localization with encoded image projections.")
    p.add_argument("--config", help="key = value parameter file (default: $ZEPEYE_CONFIG)")
    p.add_argument("--print-config", action="store_true", help="print the effective parameters and exit")
    p.add_argument("--threads", type=_positive_int, default=1, help="faces processed concurrently")
    sub = p.add_subparsers(dest="command", metavar="command")

    s = sub.add_parser("synth", help="render a synthetic annotated face corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--faces", type=_positive_int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ranges", choices=sorted(RANGES), default="default")
    s.add_argument("--prefix", default="f")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one branch model")
    s.add_argument("--out", required=True, help="model file to write")
    s.add_argument("--branch", choices=("frontal", "lateral", "any"), default="any",
                   help="train on faces detected as this illumination (any: no filter)")
    s.add_argument("--head", choices=[h.value for h in Head])
    s.add_argument("--faces", type=_positive_int, help="synthetic training faces")
    s.add_argument("--val-faces", type=int, help="synthetic validation faces")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--far-negatives", type=int, help="extra negatives per eye outside the overlap band")
    s.add_argument("--annotations", help="train on annotated images instead of synthetic faces")
    s.add_argument("--images", help="directory holding <id>.pgm for --annotations")
    s.set_defaults(func=cmd_train)

    for name, func, help_text in (("localize", cmd_localize, "locate both eyes in annotated faces"),
                                  ("eval", cmd_eval, "accuracy of localization against annotations")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--annotations", required=True)
        s.add_argument("--images", required=True, help="directory holding <id>.pgm")
        s.add_argument("--frontal-model", required=True)
        s.add_argument("--lateral-model", required=True)
        s.set_defaults(func=func)
    sub.choices["localize"].add_argument("--out", help="CSV output (default stdout)")
    ev = sub.choices["eval"]
    ev.add_argument("--errors", help="per-image error CSV")
    ev.add_argument("--curve", help="accuracy curve CSV")
    ev.add_argument("--thresholds", type=_floats, default=list(STANDARD_THRESHOLDS))
    ev.add_argument("--noise", type=_floats, help="noise sigmas to sweep, e.g. 0,5,15,30")
    ev.add_argument("--noise-seed", type=int, default=0)

    for name, func, help_text in (("project", cmd_project, "print one projection of an image window"),
                                  ("encode", cmd_encode, "print the epochs of a projection or signal")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--image")
        s.add_argument("--rect", type=_rect, help="r0,r1,c0,c1 inclusive (default: whole image)")
        s.add_argument("--axis", choices=("H", "V"), default="H")
        s.add_argument("--kind", choices=("gray", "edge"), default="gray")
        s.set_defaults(func=func)
    sub.choices["project"].set_defaults(image_required=True)
    enc = sub.choices["encode"]
    enc.add_argument("--signal", type=_floats, help="comma-separated samples instead of an image")
    enc.add_argument("--normalized", action="store_true", help="--signal is already centred and scaled")
    enc.add_argument("--zep", action="store_true", help="print the full feature vector of --rect")

    s = sub.add_parser("bench", help="time the localization stages and the projection scan")
    s.add_argument("--iterations", type=_positive_int, default=100)
    s.add_argument("--naive-iterations", type=_positive_int)
    s.add_argument("--face-size", type=_positive_int, default=300)
    s.add_argument("--frontal-model")
    s.add_argument("--lateral-model")
    s.add_argument("--cpu-score", type=float, default=REFERENCE_CPU_SCORE)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = Config.load(args.config)
    except (OSError, ValueError) as exc:
        print(f"zepeye: error: bad config: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.print_config:
        sys.stdout.write(config.dumps())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        print("zepeye: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "image_required", False) and not args.image:
        parser.error("project needs --image")
    if args.command == "train" and bool(args.annotations) != bool(args.images):
        parser.error("--annotations and --images go together")
    try:
        return args.func(args, config)
    except UsageError as exc:
        print(f"zepeye: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, AnnotationError, PgmError, ModelError, OSError, ValueError) as exc:
        print(f"zepeye: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
