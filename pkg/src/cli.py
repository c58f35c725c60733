import argparse
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

import settings
from errors import AntipodalInputs, ConfigError, DimensionMismatch, OutOfRange, SphereMixError, ZeroVector
from geometry.metrics import (
    SHIFT_SWEEP,
    SHIFT_SWEEP_WIDE,
    ece,
    embedding_shift,
    embedding_shift_sweep,
    metric_report,
    recall_at_k,
    retrieval_confidences,
    simat_transform,
)
from geometry.reports import Direction
from geometry.sphere import batch_geodesic_mix, batch_linear_mix, pairwise_similarity
from geometry.types import PairedEmbeddings
from objective.config import TAU_PRESETS
from service.emb_file import PairingManifest, load_pair, read_emb, write_emb
from service.synth import SynthConfig, synth_bipartite
from service.tables import emit
from theory.vmf import theorem1_check, theorem1_grid
from training.model import save_model
from training.trainer import TrainConfig, history_frame, train, write_history

logger = logging.getLogger(__name__)

GRID_KAPPAS = (20.0, 50.0, 100.0, 200.0)
GRID_DELTAS = (math.pi / 6, math.pi / 3, math.pi / 2, 2 * math.pi / 3)


class ArithResult(BaseModel):
    source: int
    target: int
    strength: float
    top_index: int
    hit_target: bool
    x_norm: float


class SynthSummary(BaseModel):
    manifest: str
    image_emb: str
    text_emb: str
    n_pairs: int
    dim: int


def _fmt(args: argparse.Namespace) -> str:
    return "json" if args.json else "csv" if args.csv else "table"


def _pairs(args: argparse.Namespace) -> PairedEmbeddings:
    if args.manifest:
        return PairingManifest.load(args.manifest).pairs()
    if not (args.image and args.text):
        raise ConfigError("either --manifest or both --image and --text are required")
    return load_pair(args.image, args.text)


def cmd_analyze(args: argparse.Namespace) -> int:
    P = _pairs(args)
    if args.shift_sweep:
        frame = embedding_shift_sweep(P, SHIFT_SWEEP_WIDE if args.wide else SHIFT_SWEEP, threads=args.threads)
        emit(frame, _fmt(args), title="embedding shift sweep")
        return 0
    report = metric_report(embedding_shift(P, args.shift), shift_lambda=args.shift, threads=args.threads)
    emit(report, _fmt(args), title="embedding metrics")
    return 0


def cmd_mix(args: argparse.Namespace) -> int:
    P = _pairs(args)
    if args.linear:
        try:
            mixed = batch_linear_mix(args.lam, P.image, P.text)
        except ZeroVector as e:
            raise AntipodalInputs("linear mix of antipodal inputs cancels to zero", row=e.row) from e
    else:
        mixed = batch_geodesic_mix(args.lam, P.image, P.text)
    write_emb(args.out, mixed)
    logger.info(f"Wrote {P.size} {'linear' if args.linear else 'geodesic'} mixes (lambda={args.lam}) to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    if args.config:
        cfg = TrainConfig.from_json(Path(args.config).read_text(), source=args.config)
    else:
        cfg = TrainConfig()
    P = _pairs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(cfg.model_dump_json(indent=2) + "\n")

    model, history = train(PairedEmbeddings.raw(P.image, P.text), cfg, threads=args.threads, progress=not args.no_progress)
    write_history(out, history)
    save_model(out / "model.bin", model)
    emit(history_frame(history), _fmt(args), title="training history")
    return 0


def cmd_theorem(args: argparse.Namespace) -> int:
    if args.grid:
        emit(theorem1_grid(GRID_KAPPAS, GRID_DELTAS, n=args.n, seed=args.seed), _fmt(args), title="mixing inequality")
        return 0
    if args.kappa is None:
        raise ConfigError("--kappa is required unless --grid is given")
    emit(theorem1_check(args.kappa, args.mu1, args.mu2, n=args.n, seed=args.seed), _fmt(args), title="mixing inequality")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    P = _pairs(args)
    S = pairwise_similarity(P.image, P.text, threads=args.threads)
    reports = [recall_at_k(S, k, direction) for direction in Direction for k in args.k]
    emit(pd.concat([r.to_frame() for r in reports], ignore_index=True), _fmt(args), title="retrieval recall")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    P = _pairs(args)
    S = pairwise_similarity(P.image, P.text, threads=args.threads)
    direction = Direction(args.direction)
    if args.tau_sweep:
        reports = [ece(*retrieval_confidences(S, tau, direction), args.bins, tau=tau) for tau in args.tau_sweep]
        emit(pd.concat([r.to_frame() for r in reports], ignore_index=True), _fmt(args), title="ECE by temperature")
        return 0
    report = ece(*retrieval_confidences(S, args.tau, direction), args.bins, tau=args.tau)
    if args.bins_csv:
        report.bins_frame().to_csv(args.bins_csv, index=False)
        logger.info(f"Wrote reliability bins to {args.bins_csv}")
    emit(report, _fmt(args), title="calibration")
    return 0


def cmd_arith(args: argparse.Namespace) -> int:
    P = _pairs(args)
    for name in ("source", "target"):
        row = getattr(args, name)
        if not 0 <= row < P.size:
            raise OutOfRange(f"--{name} {row} is not a row of the {P.size}-pair set")
    gallery = read_emb(args.gallery) if args.gallery else P.image
    if gallery.shape[1] != P.dim:
        raise DimensionMismatch(f"gallery has d={gallery.shape[1]}, pairs have d={P.dim}")
    x, top = simat_transform(P.image[args.source], P.text[args.source], P.text[args.target], args.strength, gallery)
    result = ArithResult(
        source=args.source,
        target=args.target,
        strength=args.strength,
        top_index=top,
        hit_target=top == args.target,
        x_norm=float(np.linalg.norm(x)),
    )
    emit(result, _fmt(args), title="embedding arithmetic")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        cfg = SynthConfig(
            M=args.m,
            d=args.d,
            gap_angle=args.gap,
            kappa_modality=args.kappa,
            kappa_shared=args.kappa_shared,
            pair_coupling=args.coupling,
            seed=args.seed,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid generator settings: {e}") from e
    P = synth_bipartite(cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_emb(out / "image.emb", P.image)
    write_emb(out / "text.emb", P.text)
    PairingManifest(image_emb=Path("image.emb"), text_emb=Path("text.emb")).save(out / "manifest.json")
    summary = SynthSummary(
        manifest=str(out / "manifest.json"),
        image_emb=str(out / "image.emb"),
        text_emb=str(out / "text.emb"),
        n_pairs=P.size,
        dim=P.dim,
    )
    emit(summary, _fmt(args), title="synthetic pairs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    output = common.add_mutually_exclusive_group()
    output.add_argument("--json", action="store_true", help="print a JSON document")
    output.add_argument("--csv", action="store_true", help="print CSV")
    common.add_argument("--threads", type=int, default=None, help=f"metric threads (default ${settings.THREADS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    pairs = argparse.ArgumentParser(add_help=False)
    pairs.add_argument("--image", help="image embeddings (EMB1)")
    pairs.add_argument("--text", help="text embeddings (EMB1)")
    pairs.add_argument("--manifest", help="pairing manifest JSON")

    parser = argparse.ArgumentParser(prog="spheremix", description="Geodesic mixup tools for paired hypersphere embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common, pairs], help="alignment, uniformity and modality gap")
    p.add_argument("--shift", type=float, default=0.0, help="embedding-shift strength")
    p.add_argument("--shift-sweep", action="store_true", help="evaluate the shift grid")
    p.add_argument("--wide", action="store_true", help="use the wide shift grid")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("mix", parents=[common, pairs], help="row-wise mixes of paired embeddings")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--linear", action="store_true", help="normalized linear mix instead of geodesic")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_mix)

    p = sub.add_parser("train", parents=[common, pairs], help="fit projection heads")
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("theorem", parents=[common], help="KL check of the mixing inequality")
    p.add_argument("--kappa", type=float)
    p.add_argument("--mu1", type=float, default=0.0)
    p.add_argument("--mu2", type=float, default=math.pi / 3)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", action="store_true", help="run the kappa x delta grid")
    p.set_defaults(handler=cmd_theorem)

    p = sub.add_parser("retrieve", parents=[common, pairs], help="recall@k in both directions")
    p.add_argument("--k", type=int, nargs="+", default=[1, 5])
    p.set_defaults(handler=cmd_retrieve)

    p = sub.add_parser("calibrate", parents=[common, pairs], help="expected calibration error")
    p.add_argument("--tau", type=float, default=TAU_PRESETS[0])
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--direction", choices=[d.value for d in Direction], default=Direction.IMAGE_TO_TEXT.value)
    p.add_argument("--bins-csv", help="write the reliability bins here")
    p.add_argument("--tau-sweep", type=float, nargs="+", help="ECE for each temperature")
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("arith", parents=[common, pairs], help="text-driven embedding arithmetic")
    p.add_argument("--source", type=int, required=True, help="row of the source pair")
    p.add_argument("--target", type=int, required=True, help="row whose caption is the edit target")
    p.add_argument("--strength", type=float, default=1.0)
    p.add_argument("--gallery", help="gallery embeddings (default: the image file)")
    p.set_defaults(handler=cmd_arith)

    p = sub.add_parser("synth", parents=[common], help="generate a two-cluster paired set")
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--gap", type=float, default=math.pi / 3)
    p.add_argument("--kappa", type=float, default=50.0)
    p.add_argument("--kappa-shared", type=float, default=5.0)
    p.add_argument("--coupling", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else settings.log_level()
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(message)s")
    logging.getLogger().setLevel(level)
    if args.threads is None:
        args.threads = settings.default_threads()

    try:
        return args.handler(args)
    except SphereMixError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid settings: {e}")
        return ConfigError.exit_code
    except OSError as e:
        logger.error(f"Cannot access {e.filename or ''}: {e.strerror or e}")
        return 2
