#!/usr/bin/env python3
"""
FU-net toolkit - Main CLI Entry Point

Synthetic data generation, U-net / BRU-net / FU-net training, dice
evaluation and paired comparison of segmentation runs.
"""

import argparse
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import ConfigManager
from config.manager import METHOD_PRESETS
from data import Dataset, generate, load_dataset, split, write_dataset
from exporter import CSVWriter
from loss import feedback_weight
from metrics import RunReport, compare_reports, write_comparisons
from network import Network, load, save
from progress import ProgressManager, RunSummary, TrainLog
from training import evaluate, train
from utils.errors import FUNetError, UsageError
from utils.formatters import format_duration, format_float, format_p_value, format_score, parse_float_list
from utils.logger import get_logger, run_log, setup_logger

logger = get_logger()

MODEL_FILE = 'model.funet'
METRICS_FILE = 'metrics.csv'
PREDICTIONS_DIR = 'predictions'
SPLIT_HEADER = ['id', 'split']
WEIGHT_CURVE_HEADER = ['beta', 'p', 'w']
BETA_SWEEP_HEADER = ['beta', 'mean_val_dice', 'small_class_test_dice']
EXPERIMENT_PAIRS = [('unet', 'bru-net'), ('bru-net', 'fu-net')]


class CLIArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors become UsageError (exit code 1)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    """Build the command-line parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Path to key=value run configuration')
    common.add_argument('--out', help='Output directory (overrides out_dir)')
    common.add_argument('--seed', type=int, help='Random seed (overrides seed)')
    common.add_argument('--verbose', action='store_true', help='Enable verbose (debug) logging')
    common.add_argument('--no-progress-bar', action='store_true', help='Disable progress bars')

    parser = CLIArgumentParser(
        description='Train and evaluate U-net, BRU-net and FU-net segmentation models',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate the synthetic dataset
  python main.py gen-data --config run.cfg --out data/ --seed 1

  # Train FU-net (BRU-net layers, feedback-weighted loss)
  python main.py train --config run.cfg --manifest data/manifest.csv --variant bru --loss feedback --beta 3 --out runs/fu

  # Evaluate on the test split recomputed from the run's resolved config
  python main.py eval --model runs/fu/model.funet --manifest data/manifest.csv

  # Paired t-test between two runs
  python main.py compare runs/bru/metrics.csv runs/fu/metrics.csv --out runs/

  # Weight mapping curves for several beta values
  python main.py weight-curve --betas 1,2,3,4 --out curves/

For more information, see README.md
        """
    )
    sub = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=CLIArgumentParser)
    sub.required = True

    sub.add_parser('gen-data', parents=[common], help='Generate a synthetic dataset and manifest')

    train_p = sub.add_parser('train', parents=[common], help='Train one network')
    _add_training_flags(train_p)

    eval_p = sub.add_parser('eval', parents=[common], help='Evaluate a saved model')
    eval_p.add_argument('--model', required=True, help='Model file written by train')
    eval_p.add_argument('--manifest', help='Dataset manifest (overrides manifest)')
    eval_p.add_argument('--all', action='store_true', help='Evaluate every image instead of the test split')
    eval_p.add_argument('--workers', type=int, help='Evaluation threads (overrides eval_workers)')
    eval_p.add_argument('--save-predictions', action='store_true',
                        help='Write predicted label maps to <out>/predictions (sets save_predictions)')

    cmp_p = sub.add_parser('compare', parents=[common], help='Paired t-test between two metrics CSVs')
    cmp_p.add_argument('metrics_a', help='Metrics CSV of the first method')
    cmp_p.add_argument('metrics_b', help='Metrics CSV of the second method')
    cmp_p.add_argument('--names', nargs=2, metavar=('A', 'B'), help='Method labels for the output')

    curve_p = sub.add_parser('weight-curve', parents=[common], help='Tabulate the feedback weight mapping')
    curve_p.add_argument('--betas', default='1,2,3,4', help='Comma-separated beta values (default: 1,2,3,4)')
    curve_p.add_argument('--points', type=int, default=101, help='Samples of p in [0, 1] (default: 101)')

    exp_p = sub.add_parser('experiment', parents=[common], help='Train and compare U-net, BRU-net and FU-net')
    exp_p.add_argument('--manifest', help='Dataset manifest (overrides manifest)')
    exp_p.add_argument('--epochs', type=int, help='Training epochs for every method')
    exp_p.add_argument('--train-sizes',
                       help='Comma-separated training set sizes, one experiment each (overrides train_sizes)')
    exp_p.add_argument('--save-predictions', action='store_true',
                       help="Write each method's predicted label maps (sets save_predictions)")

    sweep_p = sub.add_parser('beta-sweep', parents=[common], help='Train FU-net for several beta values')
    sweep_p.add_argument('--manifest', help='Dataset manifest (overrides manifest)')
    sweep_p.add_argument('--betas', help='Comma-separated beta values (overrides sweep_betas)')
    sweep_p.add_argument('--epochs', type=int, help='Training epochs for every beta')

    return parser


def _add_training_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--manifest', help='Dataset manifest (overrides manifest)')
    parser.add_argument('--method', choices=sorted(METHOD_PRESETS), help='Preset for variant and loss')
    parser.add_argument('--variant', choices=['plain', 'bru'], help='Layer variant')
    parser.add_argument('--loss', dest='loss_mode', choices=['uniform', 'feedback'], help='Pixel weighting')
    parser.add_argument('--beta', type=float, help='Feedback weight exponent')
    parser.add_argument('--epochs', type=int, help='Training epochs')


def load_config(args: argparse.Namespace, config_path: Optional[str] = None) -> ConfigManager:
    """Resolve the run configuration for a parsed command line."""
    overrides = {
        'out_dir': args.out,
        'seed': args.seed,
        'progress_bar': False if args.no_progress_bar else None,
    }
    for key in ('manifest', 'method', 'variant', 'loss_mode', 'beta', 'epochs'):
        overrides[key] = getattr(args, key, None)
    overrides['eval_workers'] = getattr(args, 'workers', None)
    overrides['sweep_betas'] = getattr(args, 'betas', None) if args.command == 'beta-sweep' else None
    overrides['train_sizes'] = getattr(args, 'train_sizes', None)
    overrides['save_predictions'] = True if getattr(args, 'save_predictions', False) else None
    return ConfigManager(config_path or args.config, overrides)


def write_split(directory: str, train_set: Dataset, val_set: Dataset, test_set: Dataset) -> str:
    rows = [(sample_id, name)
            for name, part in (('train', train_set), ('val', val_set), ('test', test_set))
            for sample_id in part.ids]
    return CSVWriter(directory).write_table('split.csv', SPLIT_HEADER, rows)


def split_dataset(cfg: ConfigManager, dataset: Dataset) -> Tuple[Dataset, Dataset, Dataset]:
    seed = cfg.require_seed('split')
    train_set, val_set, test_set = split(dataset, cfg['n_train'], cfg['n_val'], seed)
    logger.info(f"Split {len(dataset)} images: {len(train_set)} train / {len(val_set)} val / {len(test_set)} test")
    return train_set, val_set, test_set


def run_training(cfg: ConfigManager, dataset: Dataset) -> Tuple[Network, TrainLog, Dataset]:
    """
    Train one configuration and write its artifacts to cfg.output_directory.

    Args:
        cfg: Resolved configuration
        dataset: Full dataset, split with the configured seed

    Returns:
        Tuple of (best-validation network, training log, test split)
    """
    seed = cfg.require_seed('train')
    out_dir = cfg.output_directory
    with run_log(out_dir):
        cfg.echo(out_dir)
        cfg.describe()

        train_set, val_set, test_set = split_dataset(cfg, dataset)
        write_split(out_dir, train_set, val_set, test_set)

        start = time.time()
        start_time = ProgressManager.now()
        net = Network.build(cfg.network_spec(), np.random.default_rng(seed))
        logger.info(f"Parameters: {net.parameter_count():,}")
        net, log = train(net, train_set, val_set, cfg.hyperparams())
        duration = time.time() - start

        model_path = os.path.join(out_dir, MODEL_FILE)
        save(net, model_path)
        logger.info(f"Model saved: {model_path}")

        progress = ProgressManager(out_dir)
        progress.write_log(log)
        progress.save_summary(RunSummary(
            config_hash=cfg.config_hash(),
            method=cfg.method_name,
            parameter_count=net.parameter_count(),
            iterations=len(log.iterations),
            best_epoch=log.best_epoch,
            best_val_dice=log.best_val_dice,
            final_val_dice=log.validation[-1].mean_val_dice if log.validation else None,
            start_time=start_time,
            duration_seconds=duration,
        ))
        logger.info(f"Training finished in {format_duration(duration)}")
        return net, log, test_set


def predictions_dir(cfg: ConfigManager) -> Optional[str]:
    return os.path.join(cfg.output_directory, PREDICTIONS_DIR) if cfg['save_predictions'] else None


def print_summary(report: RunReport, prefix: str = ''):
    """Print one `class=k dice_mean=... dice_std=... degenerate=n` line per class."""
    for class_id, summary in report.summaries().items():
        print(f"{prefix}class={class_id} dice_mean={summary.mean:.4f} dice_std={summary.std:.4f} "
              f"degenerate={summary.degenerate}")


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.require_seed('gen-data')
    out_dir = cfg.output_directory
    cfg.echo(out_dir)
    dataset = generate(cfg.synth_config())
    manifest = write_dataset(dataset, out_dir)
    print(manifest)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.require_seed('train')
    dataset = load_dataset(cfg.manifest_path, cfg['num_classes'])
    run_training(cfg, dataset)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config_path = args.config
    if not config_path:
        candidate = os.path.join(os.path.dirname(args.model) or '.', 'resolved_config.cfg')
        if os.path.exists(candidate):
            config_path = candidate
            logger.info(f"Using run config next to the model: {candidate}")
    cfg = load_config(args, config_path)

    net = load(args.model)
    logger.info(f"Loaded {net.spec.variant} model with {net.parameter_count():,} parameters")
    progress = ProgressManager(os.path.dirname(args.model) or '.')
    summary = progress.load_summary()
    if summary is not None:
        logger.info(f"Trained as {summary.method}: best epoch {summary.best_epoch}, "
                    f"val dice {summary.best_val_dice}, config {summary.config_hash}")
    train_log = progress.read_log()
    if train_log is not None and train_log.iterations:
        last = train_log.iterations[-1]
        logger.info(f"Training log: {len(train_log.iterations)} iterations, final loss {last.loss:.4f}, "
                    f"{len(train_log.validation)} validated epochs")
    dataset = load_dataset(cfg.manifest_path, net.spec.num_classes)
    if args.all:
        subset = dataset
    else:
        _, _, subset = split_dataset(cfg, dataset)
    if not len(subset):
        raise UsageError("Nothing to evaluate: the test split is empty (use --all or smaller n_train/n_val)")

    report = evaluate(net, subset, cfg['include_background'], cfg['eval_workers'], predictions_dir(cfg))
    path = report.write_csv(os.path.join(cfg.output_directory, METRICS_FILE))
    logger.info(f"Metrics written: {path} ({len(report.rows)} rows)")
    print_summary(report)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    names = args.names or [_run_label(args.metrics_a), _run_label(args.metrics_b)]
    report_a = RunReport.read_csv(args.metrics_a)
    report_b = RunReport.read_csv(args.metrics_b)
    comparisons = compare_reports(report_a, report_b, names[0], names[1])
    path = write_comparisons(os.path.join(cfg.output_directory, 'comparison.csv'), comparisons)
    logger.info(f"Comparison written: {path}")
    for c in comparisons:
        flag = ' degenerate' if c.result.degenerate else ''
        print(f"class={c.class_id} t={c.result.t:.4f} df={c.result.df} p={format_p_value(c.result.p)}{flag}")
    return 0


def _run_label(metrics_path: str) -> str:
    parent = os.path.basename(os.path.dirname(os.path.abspath(metrics_path)))
    return parent or os.path.splitext(os.path.basename(metrics_path))[0]


def weight_curve_rows(betas: Sequence[float], points: int) -> List[List[str]]:
    """(beta, p, w) rows with p evenly spaced over [0, 1], both ends included."""
    if points < 2:
        raise UsageError(f"--points must be >= 2, got {points}")
    p = np.linspace(0.0, 1.0, points)
    rows = []
    for beta in betas:
        w = feedback_weight(p, beta)
        rows.extend([format_float(beta), format_float(pi), format_float(wi)] for pi, wi in zip(p, w))
    return rows


def cmd_weight_curve(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    try:
        betas = parse_float_list(args.betas)
    except ValueError:
        raise UsageError(f"--betas must be comma-separated numbers, got {args.betas!r}")
    if not betas:
        raise UsageError("--betas is empty")
    rows = weight_curve_rows(betas, args.points)
    path = CSVWriter(cfg.output_directory).write_table('weight_curve.csv', WEIGHT_CURVE_HEADER, rows)
    logger.info(f"Weight curves for beta={betas} written: {path}")
    print(path)
    return 0


def run_methods(cfg: ConfigManager, dataset: Dataset, root: str) -> Dict[str, RunReport]:
    """Train and evaluate every method preset under <root>/<method>; write the paired comparisons."""
    reports = {}
    for method in METHOD_PRESETS:
        logger.info("=" * 80)
        logger.info(f"Method: {method}, n_train={cfg['n_train']}")
        logger.info("=" * 80)
        run_cfg = cfg.with_overrides(method=method, out_dir=os.path.join(root, method))
        net, _, test_set = run_training(run_cfg, dataset)
        report = evaluate(net, test_set, run_cfg['include_background'], run_cfg['eval_workers'],
                          predictions_dir(run_cfg))
        report.write_csv(os.path.join(run_cfg.output_directory, METRICS_FILE))
        reports[method] = report

    for name_a, name_b in EXPERIMENT_PAIRS:
        comparisons = compare_reports(reports[name_a], reports[name_b], name_a, name_b)
        path = write_comparisons(os.path.join(root, f"comparison_{name_a}_vs_{name_b}.csv"), comparisons)
        logger.info(f"Comparison written: {path}")
        for c in comparisons:
            print(f"{name_a} vs {name_b} class={c.class_id} t={c.result.t:.4f} df={c.result.df} "
                  f"p={format_p_value(c.result.p)}{' degenerate' if c.result.degenerate else ''}")
    return reports


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.require_seed('experiment')
    root = cfg.output_directory
    cfg.echo(root)
    dataset = load_dataset(cfg.manifest_path, cfg['num_classes'])

    # a single size keeps the flat <out>/<method> layout
    sizes = cfg.train_sizes()
    results = {}
    for n_train in sizes:
        size_root = root if len(sizes) == 1 else os.path.join(root, f"n_train_{n_train}")
        results[n_train] = run_methods(cfg.with_overrides(n_train=n_train), dataset, size_root)

    print("Mean of DC ± Std")
    for n_train, reports in results.items():
        for method, report in reports.items():
            cells = ' '.join(f"class={k}:{format_score(s.mean, s.std)}" for k, s in report.summaries().items())
            label = method if len(sizes) == 1 else f"n={n_train} {method}"
            print(f"{label:<8} {cells}")
    return 0


def cmd_beta_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.require_seed('beta-sweep')
    root = cfg.output_directory
    cfg.echo(root)
    dataset = load_dataset(cfg.manifest_path, cfg['num_classes'])
    small_class = cfg['num_classes'] - 1

    rows = []
    best: Optional[Tuple[float, float]] = None
    for beta in cfg.betas():
        logger.info("=" * 80)
        logger.info(f"beta = {beta}")
        logger.info("=" * 80)
        run_cfg = cfg.with_overrides(method='fu-net', beta=beta, out_dir=os.path.join(root, f"beta_{beta:g}"))
        net, log, test_set = run_training(run_cfg, dataset)
        val_dice = log.best_val_dice if log.best_val_dice is not None else float('nan')
        test_dice = evaluate(net, test_set, False, run_cfg['eval_workers']).mean_dice([small_class]) \
            if len(test_set) else float('nan')
        rows.append([format_float(beta), format_float(val_dice), format_float(test_dice)])
        if best is None or val_dice > best[1]:
            best = (beta, val_dice)

    path = CSVWriter(root).write_table('beta_sweep.csv', BETA_SWEEP_HEADER, rows)
    logger.info(f"Beta sweep written: {path}")
    if best is not None:
        print(f"best_beta={best[0]:g} mean_val_dice={best[1]:.4f}")
    return 0


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train': cmd_train,
    'eval': cmd_eval,
    'compare': cmd_compare,
    'weight-curve': cmd_weight_curve,
    'experiment': cmd_experiment,
    'beta-sweep': cmd_beta_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    verbose = '--verbose' in (argv if argv is not None else sys.argv[1:])
    logger = setup_logger(verbose=verbose)

    try:
        args = build_parser().parse_args(argv)
        logger.info("=" * 80)
        logger.info(f"FU-net toolkit: {args.command}")
        logger.info("=" * 80)
        return COMMANDS[args.command](args)

    except KeyboardInterrupt:
        logger.warning("Interrupted by user!")
        return 130  # Standard exit code for Ctrl+C

    except FUNetError as e:
        logger.error(f"{type(e).__name__}: {e}")
        if verbose:
            import traceback
            traceback.print_exc()
        return e.exit_code

    except Exception as e:
        logger.error(f"Fatal error: {e}")
        if verbose:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == '__main__':
    sys.exit(main())
