"""Main entry point for the trimine command-line pipeline."""

import argparse
import logging
import os
import sys
import time

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from . import config
from .core import BatchSpec, ExtremePolicy, Metric, MetricKind, Rng
from .dataio import (
    PART_NAMES,
    SplitSpec,
    format_float,
    load_dataset,
    load_triplets,
    save_dataset,
    save_history,
    save_matrix,
    save_negative_frequency,
    save_skip_report,
    save_triplets,
    split,
    write_csv,
)
from .distance import OutlierMask, outlier_mask, pairwise
from .errors import NumericError, PrerequisiteError, TrimineError, UsageError
from .evaluation import RetrievalHit, evaluate_model, parse_ranks, recall_at_k, retrieve_topk, save_eval_reports
from .gradcheck import gradcheck_all
from .loss_manager import get_loss_manager
from .losses.common import LossKind, LossSpec
from .manifest import RunManifest, require_producer, save_manifest
from .miner import mine_offline, negative_frequency
from .model import embed, init_params, load_checkpoint, save_checkpoint
from .optim import OPTIMIZERS, create_optimizer
from .report import eval_table, gradcheck_table, policy_table, retrieval_table
from .synth import default_synth_spec, gen_synthetic
from .trainer import TrainConfig, train_classifier, train_offline, train_online

console = Console()

# Artifact file names inside a run directory
DATASET_FILE = "dataset.tmds"
CLASSIFIER_FILE = "classifier.tmmp"
FEATURES_FILE = "features.tmds"
TRIPLETS_FILE = "triplets.tmts"
TRIPLETS_CSV_FILE = "triplets.csv"
SKIPPED_FILE = "skipped.csv"
DISTANCES_FILE = "distances.tmmx"
MODEL_FILE = "model.tmmp"
HISTORY_FILE = "history.csv"
EVAL_FILE = "eval.csv"
RETRIEVAL_FILE = "retrieval.csv"
NEGATIVE_FREQUENCY_FILE = "negative_frequency.csv"
GRADCHECK_FILE = "gradcheck.csv"


def setup_logging(verbose: bool = False):
    """Set up file-based logging, mirrored to the terminal with ``--verbose``."""
    os.makedirs(config.LOG_DIR, exist_ok=True)
    log_file = os.path.join(config.LOG_DIR, config.LOG_FILE_NAME)
    file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
    file_handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(name)s - %(message)s"))
    handlers = [file_handler]
    if verbose:
        handlers.append(RichHandler(console=Console(stderr=True), show_path=False))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, handlers=handlers, force=True)
    logging.info("trimine starting")


def require_file(path, hint: str):
    if not os.path.isfile(path):
        raise PrerequisiteError(f"Missing {path}. {hint}", artifact=str(path))


def parse_widths(text: str) -> tuple[int, ...]:
    """Comma-separated hidden layer widths; an empty string means no hidden layer."""
    try:
        widths = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"Hidden widths must be comma-separated integers, got '{text}'") from None
    if any(w < 1 for w in widths):
        raise UsageError(f"Hidden widths must be positive, got '{text}'")
    return widths


def parse_fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"Fractions must be comma-separated numbers, got '{text}'") from None


def metric_from_args(args) -> Metric:
    return Metric.parse(args.metric, args.normalize)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_synth(args, manifest: RunManifest):
    spec = default_synth_spec(
        class_count=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        separation=args.separation,
        sigma=args.sigma,
        wide_classes=args.wide_classes,
        wide_factor=args.wide_factor,
        seed=args.seed,
    )
    path = os.path.join(args.out, DATASET_FILE)
    save_dataset(gen_synthetic(spec), path)
    manifest.add_output("dataset", path)
    console.print(f"[green]Wrote {spec.class_count} x {args.per_class} points to {path}[/green]")


def cmd_split(args, manifest: RunManifest):
    require_file(args.dataset, "Run 'trimine gen-synth' or point to an existing dataset.")
    manifest.inputs["dataset"] = os.path.abspath(args.dataset)
    spec = SplitSpec(parse_fractions(args.fractions), args.seed, not args.no_stratify)
    result = split(load_dataset(args.dataset), spec)
    for name, part in zip(PART_NAMES, result.parts):
        path = os.path.join(args.out, f"{name}.tmds")
        save_dataset(part, path)
        manifest.add_output(name, path)
        console.print(f"[green]{name}: {len(part)} instances -> {path}[/green]")


def _new_or_loaded_model(args, input_dim: int, class_count: int = 0):
    if getattr(args, "init_from", None):
        require_file(args.init_from, "Run 'trimine pretrain' first or drop --init-from.")
        params = load_checkpoint(args.init_from)
        if params.input_dim != input_dim:
            raise UsageError(f"Checkpoint expects d_in={params.input_dim}, dataset has d={input_dim}")
        return params
    return init_params(input_dim, Rng(args.seed).child(0), parse_widths(args.hidden), args.embedding_dim, class_count)


def cmd_pretrain(args, manifest: RunManifest):
    require_file(args.dataset, "Run 'trimine split' first; pretraining uses the X1 part.")
    manifest.inputs["dataset"] = os.path.abspath(args.dataset)
    E = load_dataset(args.dataset)
    params = _new_or_loaded_model(args, E.dim, E.class_count)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, classifier_batch_size=args.batch_size)
    result = train_classifier(E, params, create_optimizer(args.optimizer, args.lr), cfg)
    _save_training(args, manifest, result, CLASSIFIER_FILE)
    console.print(f"[green]Classifier training accuracy {100 * result.epoch_accuracy[-1]:.2f}%[/green]")


def cmd_embed(args, manifest: RunManifest):
    require_file(args.checkpoint, "Run 'trimine pretrain' or 'trimine train' first.")
    require_file(args.dataset, "Run 'trimine split' first.")
    manifest.inputs.update(checkpoint=os.path.abspath(args.checkpoint), dataset=os.path.abspath(args.dataset))
    params = load_checkpoint(args.checkpoint)
    E = load_dataset(args.dataset)
    path = os.path.join(args.out, args.name)
    save_dataset(E.with_vectors(embed(params, E.vectors)), path)
    manifest.add_output("features", path)
    console.print(f"[green]Embedded {len(E)} instances into {params.embedding_dim} dimensions -> {path}[/green]")


def cmd_mine(args, manifest: RunManifest):
    require_file(args.features, "Run 'trimine pretrain' and then 'trimine embed' on the X2 part.")
    if not args.allow_raw:
        require_producer(args.features, "embed",
                         "Mining needs the feature space: run 'trimine pretrain' and 'trimine embed', or pass --allow-raw.")
    manifest.inputs["features"] = os.path.abspath(args.features)
    E = load_dataset(args.features)
    D = pairwise(E, metric_from_args(args))
    mask = OutlierMask.empty(len(E)) if args.no_outlier_test else outlier_mask(D, args.z_threshold)
    weights = parse_fractions(args.assorted_weights) if args.assorted_weights else None
    policy = ExtremePolicy.parse(args.policy)
    T = mine_offline(E, D, mask, policy, Rng(args.seed), weights)

    outputs = {
        "triplets": os.path.join(args.out, TRIPLETS_FILE),
        "triplets_csv": os.path.join(args.out, TRIPLETS_CSV_FILE),
        "skipped": os.path.join(args.out, SKIPPED_FILE),
    }
    save_triplets(T, outputs["triplets"])
    save_triplets(T, outputs["triplets_csv"])
    save_skip_report(T.skipped, outputs["skipped"])
    if args.dump_distances:
        outputs["distances"] = os.path.join(args.out, DISTANCES_FILE)
        save_matrix(D.values, outputs["distances"])
    for name, path in outputs.items():
        manifest.add_output(name, path)
    console.print(policy_table(T.policy_counts(), len(T.skipped)))


def _save_training(args, manifest: RunManifest, result, model_file: str):
    model_path = os.path.join(args.out, model_file)
    history_path = os.path.join(args.out, HISTORY_FILE)
    save_checkpoint(result.params, model_path)
    save_history(result.history, history_path)
    manifest.add_output("model", model_path)
    manifest.add_output("history", history_path)
    means = result.epoch_means()
    console.print(f"[green]Mean loss: first epoch {means[0]:.6g}, last epoch {means[-1]:.6g}[/green]")


def cmd_train(args, manifest: RunManifest):
    require_file(args.dataset, "Run 'trimine split' first.")
    manifest.inputs["dataset"] = os.path.abspath(args.dataset)
    E = load_dataset(args.dataset)
    loss_spec = LossSpec(
        kind=LossKind.parse(args.loss),
        margin=args.margin,
        dws_lambda=args.dws_lambda,
        dws_dmin=args.dws_dmin,
        proxy_momentum=args.proxy_momentum,
        metric=metric_from_args(args),
        epd_literal_sign=args.epd_literal_sign,
    )
    params = _new_or_loaded_model(args, E.dim)
    opt = create_optimizer(args.optimizer, args.lr)

    if args.mode == "offline":
        if not args.triplets:
            raise PrerequisiteError("Offline training needs --triplets from 'trimine mine'.", artifact="triplets")
        require_file(args.triplets, "Run 'trimine mine' on the embedded X2 part first.")
        manifest.inputs["triplets"] = os.path.abspath(args.triplets)
        cfg = TrainConfig(epochs=args.epochs, batch=BatchSpec.offline(args.triplets_per_batch),
                          loss=loss_spec, seed=args.seed)
        result = train_offline(load_triplets(args.triplets, E), E, params, opt, cfg)
    else:
        cfg = TrainConfig(epochs=args.epochs, batch=BatchSpec.online(args.batch_size, E.class_count),
                          loss=loss_spec, seed=args.seed)
        result = train_online(E, params, opt, cfg)
    _save_training(args, manifest, result, MODEL_FILE)


def cmd_eval(args, manifest: RunManifest):
    require_file(args.dataset, "Run 'trimine split' first.")
    manifest.inputs["dataset"] = os.path.abspath(args.dataset)
    splits = {"test": load_dataset(args.dataset)}
    if args.train:
        require_file(args.train, "Point --train to the split the model was trained on.")
        manifest.inputs["train"] = os.path.abspath(args.train)
        splits = {"train": load_dataset(args.train), **splits}
    gallery = None
    if args.gallery:
        require_file(args.gallery, "Point --gallery to an existing dataset.")
        manifest.inputs["gallery"] = os.path.abspath(args.gallery)
        gallery = load_dataset(args.gallery)
    ks = parse_ranks(args.recall)
    metric = metric_from_args(args)
    params = None
    if args.model:
        require_file(args.model, "Run 'trimine train' first or drop --model.")
        manifest.inputs["model"] = os.path.abspath(args.model)
        params = load_checkpoint(args.model)

    reports = {}
    for split, E in splits.items():
        # the external gallery only serves the test queries
        split_gallery = gallery if split == "test" else None
        if params is not None:
            reports[split] = evaluate_model(params, E, ks, metric, split_gallery)
        else:
            reports[split] = recall_at_k(E, ks, metric, split_gallery)
    path = os.path.join(args.out, EVAL_FILE)
    save_eval_reports(reports, path)
    manifest.add_output("eval", path)
    console.print(eval_table({args.name or os.path.basename(args.dataset): reports}))


def cmd_retrieve(args, manifest: RunManifest):
    require_file(args.dataset, "Run 'trimine split' first.")
    manifest.inputs["dataset"] = os.path.abspath(args.dataset)
    E = load_dataset(args.dataset)
    if not 0 <= args.query_index < len(E):
        raise UsageError(f"Query index {args.query_index} out of range for {len(E)} instances")
    if args.model:
        require_file(args.model, "Run 'trimine train' first or drop --model.")
        manifest.inputs["model"] = os.path.abspath(args.model)
        E = E.with_vectors(embed(load_checkpoint(args.model), E.vectors))
    others = np.flatnonzero(np.arange(len(E)) != args.query_index)
    gallery = E.subset(others)
    hits = retrieve_topk(gallery, E.vectors[args.query_index], args.top, metric_from_args(args))
    hits = [RetrievalHit(int(others[hit.index]), hit.label, hit.distance) for hit in hits]

    path = os.path.join(args.out, RETRIEVAL_FILE)
    write_csv(path, ["rank", "index", "label", "distance"],
              ([rank, hit.index, hit.label, format_float(hit.distance)] for rank, hit in enumerate(hits, start=1)))
    manifest.add_output("retrieval", path)
    console.print(retrieval_table(args.query_index, int(E.labels[args.query_index]), hits))


def cmd_chord(args, manifest: RunManifest):
    require_file(args.triplets, "Run 'trimine mine' first.")
    require_file(args.dataset, "Point to the dataset the triplets were mined from.")
    manifest.inputs.update(triplets=os.path.abspath(args.triplets), dataset=os.path.abspath(args.dataset))
    E = load_dataset(args.dataset)
    F = negative_frequency(load_triplets(args.triplets, E), E)
    path = os.path.join(args.out, NEGATIVE_FREQUENCY_FILE)
    save_negative_frequency(F, path)
    manifest.add_output("negative_frequency", path)
    console.print(f"[green]Counted {F.total} anchor/negative class pairs over {F.class_count} classes -> {path}[/green]")


def cmd_gradcheck(args, manifest: RunManifest):
    rows = gradcheck_all(args.seed, args.step, args.tolerance, metric_from_args(args), args.full_chain)
    path = os.path.join(args.out, GRADCHECK_FILE)
    write_csv(path, ["loss", "target", "max_relative_error"],
              ([row.loss, row.target, format_float(row.max_relative_error)] for row in rows))
    manifest.add_output("gradcheck", path)
    console.print(gradcheck_table(rows))
    failed = [f"{row.loss} ({row.target})" for row in rows if not row.passed]
    if failed:
        raise NumericError(f"Gradient check failed for: {', '.join(failed)}")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_metric_args(parser, default_normalize: bool = config.DEFAULT_NORMALIZE_INPUTS):
    parser.add_argument("--metric", choices=[k.value for k in MetricKind], default=config.DEFAULT_METRIC,
                        help="Distance function")
    parser.add_argument("--normalize", action="store_true", default=default_normalize,
                        help="Project vectors onto the unit sphere before measuring distances")


def _add_model_args(parser):
    parser.add_argument("--hidden", default=",".join(str(w) for w in config.HIDDEN_WIDTHS),
                        help="Comma-separated hidden layer widths")
    parser.add_argument("--embedding-dim", type=int, default=config.EMBEDDING_DIM, help="Embedding width")
    parser.add_argument("--epochs", type=int, default=config.EPOCHS, help="Training epochs")
    parser.add_argument("--lr", type=float, default=config.LEARNING_RATE, help="Learning rate")
    parser.add_argument("--optimizer", choices=sorted(OPTIMIZERS), default=config.OPTIMIZER, help="Optimizer")
    parser.add_argument("--init-from", help="Start from this checkpoint instead of a fresh model")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Mirror log records to the terminal")
    common.add_argument("--seed", type=int, default=config.DEFAULT_SEED,
                        help=f"Random seed (default from ${config.SEED_ENV_VAR})")
    common.add_argument("-o", "--out", help="Run directory for outputs and manifest.<command>.json "
                                             f"(default: {config.RUNS_DIR}/<command>)")

    parser = argparse.ArgumentParser(
        prog="trimine",
        description="Offline and online triplet mining with extreme distances",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    formatter = argparse.ArgumentDefaultsHelpFormatter

    def add(name, func, help_text):
        sub = subparsers.add_parser(name, parents=[common], help=help_text, description=help_text,
                                    formatter_class=formatter)
        sub.set_defaults(func=func)
        return sub

    p = add("gen-synth", cmd_gen_synth, "Generate a synthetic Gaussian-cluster dataset")
    p.add_argument("--classes", type=int, default=config.SYNTH_CLASSES, help="Number of classes")
    p.add_argument("--per-class", type=int, default=config.SYNTH_PER_CLASS, help="Instances per class")
    p.add_argument("--dim", type=int, default=config.SYNTH_DIM, help="Input dimension")
    p.add_argument("--separation", type=float, default=config.SYNTH_SEPARATION, help="Norm of each class mean")
    p.add_argument("--sigma", type=float, default=config.SYNTH_SIGMA, help="Cluster standard deviation")
    p.add_argument("--wide-classes", type=int, default=config.SYNTH_WIDE_CLASSES,
                   help="Number of classes with inflated spread")
    p.add_argument("--wide-factor", type=float, default=config.SYNTH_WIDE_FACTOR, help="Spread multiplier")

    p = add("split", cmd_split, "Split a dataset into X1 (feature space), X2 (mining) and test parts")
    p.add_argument("dataset", help="Dataset file")
    p.add_argument("--fractions", default=",".join(str(f) for f in config.SPLIT_FRACTIONS),
                   help="X1,X2,test fractions")
    p.add_argument("--no-stratify", action="store_true", help="Split without per-class stratification")

    p = add("pretrain", cmd_pretrain, "Train the supervised classifier that defines the feature space")
    p.add_argument("dataset", help="X1 dataset file")
    _add_model_args(p)
    p.add_argument("--batch-size", type=int, default=config.CLASSIFIER_BATCH_SIZE, help="Mini-batch size")

    p = add("embed", cmd_embed, "Map a dataset through a checkpoint's embedding (one-to-last) layer")
    p.add_argument("checkpoint", help="Model checkpoint")
    p.add_argument("dataset", help="Dataset file")
    p.add_argument("--name", default=FEATURES_FILE, help="Output file name (.csv for text)")

    p = add("mine", cmd_mine, "Mine one extreme-distance triplet per anchor from embedded X2")
    p.add_argument("features", help="Embedded dataset written by 'embed'")
    p.add_argument("--policy", choices=[policy.value for policy in ExtremePolicy], default=config.DEFAULT_MINE_POLICY,
                   help="Extreme-distance policy")
    _add_metric_args(p)
    p.add_argument("--z-threshold", type=float, default=config.Z_THRESHOLD, help="Outlier z-score threshold")
    p.add_argument("--no-outlier-test", action="store_true", help="Keep every candidate")
    p.add_argument("--assorted-weights", help="EPEN,EPHN,HPEN,HPHN probabilities for the assorted policy")
    p.add_argument("--allow-raw", action="store_true", help="Accept features not produced by 'embed'")
    p.add_argument("--dump-distances", action="store_true", help="Also write the distance matrix")

    p = add("train", cmd_train, "Train the embedding network offline (mined triplets) or online")
    p.add_argument("dataset", help="Raw dataset file (X2 for offline training)")
    p.add_argument("--mode", choices=["offline", "online"], default="offline", help="Training mode")
    p.add_argument("--loss", choices=get_loss_manager().get_available_loss_names(), default=config.DEFAULT_LOSS,
                   help="Online loss")
    p.add_argument("--triplets", help="Triplet file written by 'mine' (offline mode)")
    _add_model_args(p)
    _add_metric_args(p)
    p.add_argument("--margin", type=float, default=config.MARGIN, help="Hinge margin")
    p.add_argument("--dws-lambda", type=float, default=config.DWS_LAMBDA, help="DWS weight cap")
    p.add_argument("--dws-dmin", type=float, default=config.DWS_DMIN, help="DWS distance clamp")
    p.add_argument("--proxy-momentum", type=float, default=config.PROXY_MOMENTUM, help="Proxy-NCA momentum")
    p.add_argument("--epd-literal-sign", action="store_true", default=config.EPD_LITERAL_SIGN,
                   help="Use exp(+D) on the EP-D negatives")
    p.add_argument("--batch-size", type=int, default=config.ONLINE_BATCH_SIZE, help="Online batch size")
    p.add_argument("--triplets-per-batch", type=int, default=config.OFFLINE_TRIPLETS_PER_BATCH,
                   help="Offline triplets per batch")

    p = add("eval", cmd_eval, "Report Recall@k and nearest-neighbor accuracy")
    p.add_argument("dataset", help="Test dataset (queries)")
    p.add_argument("--train", help="Also evaluate this training split, shown beside the test columns")
    p.add_argument("--model", help="Embed through this checkpoint first")
    p.add_argument("--gallery", help="External gallery dataset (no self-exclusion)")
    p.add_argument("--recall", default=",".join(str(k) for k in config.RECALL_RANKS), help="Ranks")
    p.add_argument("--name", help="Row label in the table")
    _add_metric_args(p)

    p = add("retrieve", cmd_retrieve, "List the nearest neighbors of one query")
    p.add_argument("dataset", help="Dataset holding the query and the gallery")
    p.add_argument("--query-index", type=int, required=True, help="Row of the query")
    p.add_argument("--top", type=int, default=config.RETRIEVAL_TOP, help="Neighbors to list")
    p.add_argument("--model", help="Embed through this checkpoint first")
    _add_metric_args(p)

    p = add("chord", cmd_chord, "Count which classes supply negatives for which anchor classes")
    p.add_argument("triplets", help="Triplet file written by 'mine'")
    p.add_argument("dataset", help="Dataset the triplets index into")

    p = add("gradcheck", cmd_gradcheck, "Compare analytic and finite-difference gradients of every loss")
    p.add_argument("--step", type=float, default=config.GRADCHECK_STEP, help="Finite-difference step")
    p.add_argument("--tolerance", type=float, default=config.GRADCHECK_TOLERANCE, help="Maximum relative error")
    p.add_argument("--full-chain", action="store_true", help="Also check loss and model w.r.t. every parameter")
    _add_metric_args(p)

    return parser


def _settings(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "command", "verbose", "out")}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    args.out = args.out or os.path.join(config.RUNS_DIR, args.command)
    manifest = RunManifest(command=args.command, seed=args.seed, settings=_settings(args))
    start = time.perf_counter()
    try:
        args.func(args, manifest)
    except TrimineError as e:
        logging.error(f"{args.command} failed: {e}", exc_info=True)
        console.print(f"[bold red]Error:[/bold red] {e}")
        return e.exit_code
    except Exception as e:
        logging.critical(f"Unexpected failure in {args.command}: {e}", exc_info=True)
        console.print(f"[bold red]Unexpected error:[/bold red] {e}")
        return 1
    manifest.duration_seconds = time.perf_counter() - start
    path = save_manifest(manifest, args.out)
    logging.info(f"{args.command} finished in {manifest.duration_seconds:.2f}s, manifest {path}")
    return 0


def cli():
    """Synchronous entry point for the command-line interface."""
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(130)


if __name__ == "__main__":
    cli()
