"""Configuration manager for flat key=value run configurations."""

import os
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional

from data import SynthConfig
from loss import LossConfig
from network import NetworkSpec
from training import Hyperparams
from utils.errors import ConfigError
from utils.formatters import parse_float_list, stable_hash
from utils.logger import get_logger
from utils.validators import validate_config

logger = get_logger(__name__)

RESOLVED_CONFIG_FILE = 'resolved_config.cfg'
UNSET = 'none'


@dataclass(frozen=True)
class ConfigKey:
    """Declared type, default value and description of one configuration key."""
    type: type
    default: Any
    description: str
    nullable: bool = False


DEFAULTS: 'OrderedDict[str, ConfigKey]' = OrderedDict([
    ('seed', ConfigKey(int, None, "Seed for generation, split, initialization and shuffling (required)", True)),
    ('out_dir', ConfigKey(str, 'out', "Output directory")),
    ('method', ConfigKey(str, '', "Preset: unet, bru-net or fu-net (empty: use variant/loss_mode)")),
    ('progress_bar', ConfigKey(bool, True, "Show a tqdm progress bar while training")),
    ('eval_workers', ConfigKey(int, 1, "Threads used to evaluate images")),

    ('variant', ConfigKey(str, 'plain', "Layer type: plain (U-net) or bru (batch norm + residual)")),
    ('depth', ConfigKey(int, 4, "Number of 2×2 pooling steps")),
    ('base_channels', ConfigKey(int, 16, "Feature channels at full resolution")),
    ('num_classes', ConfigKey(int, 3, "Segmentation classes including background")),
    ('dropout_rate', ConfigKey(float, 0.25, "Dropout after each encoder layer and the bottleneck")),
    ('input_channels', ConfigKey(int, 1, "Image channels")),

    ('loss_mode', ConfigKey(str, 'uniform', "Pixel weights: uniform or feedback")),
    ('beta', ConfigKey(float, 3.0, "Feedback weight exponent")),

    ('batch_size', ConfigKey(int, 5, "Images per iteration")),
    ('learning_rate', ConfigKey(float, 0.001, "Adam step size")),
    ('epochs', ConfigKey(int, 400, "Training epochs")),
    ('iterations_per_epoch', ConfigKey(int, 0, "Iterations per epoch (0: ceil(n_train / batch_size))")),
    ('adam_beta1', ConfigKey(float, 0.9, "Adam first moment decay")),
    ('adam_beta2', ConfigKey(float, 0.999, "Adam second moment decay")),
    ('adam_epsilon', ConfigKey(float, 1e-8, "Adam denominator epsilon")),

    ('manifest', ConfigKey(str, '', "Dataset manifest (empty: <out_dir>/manifest.csv)")),
    ('height', ConfigKey(int, 64, "Synthetic image height")),
    ('width', ConfigKey(int, 64, "Synthetic image width")),
    ('count', ConfigKey(int, 310, "Synthetic images to generate")),
    ('small_fraction', ConfigKey(float, 0.02, "Target pixel fraction of the small structure")),
    ('large_fraction', ConfigKey(float, 0.15, "Target pixel fraction of the large structure")),
    ('noise_std', ConfigKey(float, 0.08, "Gaussian noise standard deviation")),
    ('background_intensity', ConfigKey(float, 0.2, "Mean background intensity")),
    ('large_intensity', ConfigKey(float, 0.55, "Mean intensity of the large structure")),
    ('contrast', ConfigKey(float, 0.15, "Small structure intensity minus large structure intensity")),
    ('max_retries', ConfigKey(int, 100, "Geometry draws per image before giving up")),

    ('n_train', ConfigKey(int, 200, "Training set size")),
    ('n_val', ConfigKey(int, 10, "Validation set size; the rest is the test set")),

    ('include_background', ConfigKey(bool, True, "Report background dice rows")),
    ('sweep_betas', ConfigKey(str, '1,2,3,4', "Comma-separated β values for beta-sweep")),
    ('train_sizes', ConfigKey(str, '', "Comma-separated training set sizes for experiment (empty: n_train)")),
    ('save_predictions', ConfigKey(bool, False, "Write predicted label maps as <id>_pred.pgm when evaluating")),
])

METHOD_PRESETS: Dict[str, Dict[str, str]] = {
    'unet': {'variant': 'plain', 'loss_mode': 'uniform'},
    'bru-net': {'variant': 'bru', 'loss_mode': 'uniform'},
    'fu-net': {'variant': 'bru', 'loss_mode': 'feedback'},
}

_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}


def parse_value(key: str, value: Any) -> Any:
    """
    Cast a raw value to the declared type of `key`.

    Args:
        key: Configuration key
        value: String from a file or command line, or an already typed value

    Returns:
        Typed value
    """
    if key not in DEFAULTS:
        raise ConfigError(f"Unknown configuration key: '{key}'", key=key)
    decl = DEFAULTS[key]
    if value is None or (decl.nullable and isinstance(value, str) and value.strip().lower() in (UNSET, '')):
        if not decl.nullable:
            raise ConfigError(f"Configuration key '{key}' cannot be unset", key=key)
        return None
    if not isinstance(value, str):
        if decl.type is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, decl.type) and not (decl.type is int and isinstance(value, bool)):
            return value
        value = str(value)

    text = value.strip()
    try:
        if decl.type is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        return decl.type(text)
    except ValueError:
        raise ConfigError(
            f"Invalid value for '{key}': {text!r} is not a valid {decl.type.__name__}", key=key
        )


def format_value(value: Any) -> str:
    """Render a typed value the way parse_value() reads it back."""
    if value is None:
        return UNSET
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path: str) -> 'OrderedDict[str, str]':
    """
    Read a flat key=value file; '#' starts a comment, blank lines are skipped.

    Args:
        path: Configuration file

    Returns:
        Raw string values in file order
    """
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")

    values: 'OrderedDict[str, str]' = OrderedDict()
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split('=', 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{line_no}: unknown configuration key '{key}'", key=key)
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate configuration key '{key}'", key=key)
            values[key] = value
    return values


class ConfigManager:
    """Resolve defaults → config file → command-line overrides and validate."""

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None):
        """
        Initialize configuration manager.

        Args:
            config_path: Optional key=value file
            overrides: Command-line values; None entries are ignored
        """
        self.config_path = config_path
        explicit: Dict[str, Any] = {}
        if config_path:
            logger.info(f"Loading run config from: {config_path}")
            for key, value in read_config_file(config_path).items():
                explicit[key] = parse_value(key, value)
        for key, value in (overrides or {}).items():
            if value is not None:
                explicit[key] = parse_value(key, value)

        self.values = self._resolve(explicit)
        self.validate()

    @staticmethod
    def _resolve(explicit: Mapping[str, Any]) -> 'OrderedDict[str, Any]':
        resolved = OrderedDict((key, decl.default) for key, decl in DEFAULTS.items())
        method = explicit.get('method', resolved['method'])
        if method:
            if method not in METHOD_PRESETS:
                raise ConfigError(
                    f"Invalid value for 'method': {method!r} is not one of {sorted(METHOD_PRESETS)}", key='method'
                )
            resolved.update(METHOD_PRESETS[method])
        resolved.update(explicit)
        return resolved

    def validate(self):
        """Validate the resolved configuration."""
        is_valid, error, key = validate_config(dict(self.values))
        if not is_valid:
            raise ConfigError(error, key=key)
        try:
            self.betas()
        except ValueError:
            raise ConfigError(f"Invalid value for 'sweep_betas': {self.values['sweep_betas']!r}", key='sweep_betas')
        sizes = self.train_sizes()
        if min(sizes) < self.values['batch_size']:
            raise ConfigError(f"Invalid value for 'train_sizes': every size must be at least batch_size, got {sizes}",
                              key='train_sizes')
        logger.debug("Configuration validation passed")

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def require_seed(self, command: str) -> int:
        """Return the seed, or raise ConfigError for randomized commands run without one."""
        if self.values['seed'] is None:
            raise ConfigError(f"'{command}' needs an explicit seed (set seed=N or pass --seed N)", key='seed')
        return self.values['seed']

    def with_overrides(self, **overrides: Any) -> 'ConfigManager':
        """Copy with some keys replaced (used to run method and β variants)."""
        clone = ConfigManager.__new__(ConfigManager)
        clone.config_path = self.config_path
        explicit = OrderedDict(self.values)
        method = overrides.get('method')
        if method:
            explicit.update(METHOD_PRESETS.get(method, {}))
        for key, value in overrides.items():
            explicit[key] = parse_value(key, value)
        clone.values = explicit
        clone.validate()
        return clone

    @property
    def output_directory(self) -> str:
        return self.values['out_dir']

    @property
    def manifest_path(self) -> str:
        return self.values['manifest'] or os.path.join(self.output_directory, 'manifest.csv')

    @property
    def method_name(self) -> str:
        """Preset name, or the variant/loss pair when no preset is set."""
        return self.values['method'] or f"{self.values['variant']}+{self.values['loss_mode']}"

    def betas(self):
        return parse_float_list(self.values['sweep_betas'])

    def train_sizes(self) -> List[int]:
        """Training set sizes for experiment; the configured n_train when none are listed."""
        sizes = [int(part) for part in self.values['train_sizes'].split(',') if part.strip()]
        return sizes or [self.values['n_train']]

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec.from_dict({key: self.values[key] for key in (
            'variant', 'depth', 'base_channels', 'num_classes', 'dropout_rate', 'input_channels')})

    def loss_config(self) -> LossConfig:
        return LossConfig(mode=self.values['loss_mode'], beta=self.values['beta'])

    def hyperparams(self) -> Hyperparams:
        keys = ('batch_size', 'learning_rate', 'epochs', 'iterations_per_epoch', 'seed',
                'adam_beta1', 'adam_beta2', 'adam_epsilon', 'progress_bar', 'eval_workers')
        return Hyperparams(loss=self.loss_config(), **{key: self.values[key] for key in keys})

    def synth_config(self) -> SynthConfig:
        keys = ('height', 'width', 'count', 'small_fraction', 'large_fraction', 'noise_std',
                'background_intensity', 'large_intensity', 'contrast', 'seed', 'max_retries')
        return SynthConfig(**{key: self.values[key] for key in keys})

    def config_hash(self) -> str:
        return stable_hash(dict(self.values))

    def render(self) -> str:
        """Resolved configuration as sorted key=value lines."""
        return ''.join(f"{key}={format_value(self.values[key])}\n" for key in sorted(self.values))

    def echo(self, directory: Optional[str] = None) -> str:
        """
        Write the resolved configuration to <directory>/resolved_config.cfg.

        Args:
            directory: Destination, defaults to out_dir

        Returns:
            Path written
        """
        directory = directory or self.output_directory
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, RESOLVED_CONFIG_FILE)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.render())
        logger.info(f"Resolved config written to {path} ({self.config_hash()})")
        return path

    def describe(self):
        """Log the settings that shape a run."""
        logger.info(f"Method: {self.method_name} (variant={self['variant']}, loss={self['loss_mode']}, "
                    f"beta={self['beta']})")
        logger.info(f"Network: depth={self['depth']}, base_channels={self['base_channels']}, "
                    f"classes={self['num_classes']}, dropout={self['dropout_rate']}")
        logger.info(f"Training: epochs={self['epochs']}, batch_size={self['batch_size']}, "
                    f"lr={self['learning_rate']}, split={self['n_train']}/{self['n_val']}")
