#!/usr/bin/env python3
"""
Check a run configuration and report what a run with it would build.

Nothing is generated or trained; exit codes match main.py.
"""

import argparse
import os
import sys
from typing import List

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from config.manager import DEFAULTS, ConfigManager, format_value
from network import count_parameters
from utils.errors import FUNetError, UsageError
from utils.logger import setup_logger

RANDOMIZED_COMMANDS = ('gen-data', 'train', 'experiment', 'beta-sweep')


def parse_assignments(items: List[str]) -> dict:
    """Turn KEY=VALUE strings from --set into an overrides mapping."""
    overrides = {}
    for item in items:
        if '=' not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split('=', 1)
        overrides[key.strip()] = value.strip()
    return overrides


def describe(cfg: ConfigManager) -> List[str]:
    """Summary lines: method, network size, loss, data shape and split."""
    spec = cfg.network_spec()
    lines = [
        f"Method: {cfg.method_name}",
        f"Network: {spec.variant}, depth {spec.depth}, base {spec.base_channels} channels, "
        f"{count_parameters(spec):,} parameters",
        f"Loss: {cfg['loss_mode']}" + (f" (beta={cfg['beta']})" if cfg['loss_mode'] == 'feedback' else ''),
        f"Data: {cfg['count']} images of {cfg['height']}×{cfg['width']}, "
        f"split {cfg['n_train']}/{cfg['n_val']}/{cfg['count'] - cfg['n_train'] - cfg['n_val']}",
        f"Training: {cfg['epochs']} epochs × {cfg.hyperparams().iterations(cfg['n_train'])} iterations",
        f"Experiment training sizes: {', '.join(str(n) for n in cfg.train_sizes())}",
        f"Seed: {format_value(cfg['seed'])}",
        f"Output: {cfg.output_directory}",
        f"Hash: {cfg.config_hash()}",
    ]
    return lines


def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description='Validate a run configuration')
    parser.add_argument('--config', help='Path to key=value run config (default: built-in defaults only)')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one key, as a command-line flag would')
    parser.add_argument('--show-defaults', action='store_true', help='List every key with its default')
    parser.add_argument('--resolved', action='store_true', help='Print the resolved key=value lines')
    parser.add_argument('--verbose', action='store_true', help='Verbose output')
    args = parser.parse_args(argv)

    logger = setup_logger(verbose=args.verbose)

    if args.show_defaults:
        for key, decl in DEFAULTS.items():
            print(f"{key}={format_value(decl.default)}  # {decl.description}")

    try:
        cfg = ConfigManager(config_path=args.config, overrides=parse_assignments(args.set))
        logger.info("✓ Configuration is valid")
        logger.info("=" * 60)
        for line in describe(cfg):
            logger.info(line)
        logger.info("=" * 60)
        if cfg['count'] < cfg['n_train'] + cfg['n_val']:
            logger.warning(f"count={cfg['count']} leaves no test images for generated data")
        if cfg['seed'] is None:
            logger.warning(f"seed is unset: {', '.join(RANDOMIZED_COMMANDS)} will refuse to run")
        if args.resolved:
            print(cfg.render(), end='')
        return 0

    except FUNetError as e:
        logger.error(f"✗ Validation failed: {e}")
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
