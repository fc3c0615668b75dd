"""Configuration validation utilities."""

from typing import Any, Dict, Optional, Tuple

from jsonschema import Draft7Validator


# Value constraints for resolved run configurations. Types are enforced when
# the flat file is parsed; this schema carries ranges and enumerations.
RUN_CONFIG_SCHEMA: Dict[str, Any] = {
    'type': 'object',
    'properties': {
        'seed': {'type': ['integer', 'null'], 'minimum': 0},
        'out_dir': {'type': 'string', 'minLength': 1},
        'method': {'enum': ['', 'unet', 'bru-net', 'fu-net']},
        'progress_bar': {'type': 'boolean'},
        'eval_workers': {'type': 'integer', 'minimum': 1},

        'variant': {'enum': ['plain', 'bru']},
        'depth': {'type': 'integer', 'minimum': 1, 'maximum': 8},
        'base_channels': {'type': 'integer', 'minimum': 1},
        'num_classes': {'type': 'integer', 'minimum': 2, 'maximum': 255},
        'dropout_rate': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
        'input_channels': {'type': 'integer', 'minimum': 1},

        'loss_mode': {'enum': ['uniform', 'feedback']},
        'beta': {'type': 'number', 'exclusiveMinimum': 0},

        'batch_size': {'type': 'integer', 'minimum': 1},
        'learning_rate': {'type': 'number', 'exclusiveMinimum': 0},
        'epochs': {'type': 'integer', 'minimum': 1},
        'iterations_per_epoch': {'type': 'integer', 'minimum': 0},
        'adam_beta1': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
        'adam_beta2': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
        'adam_epsilon': {'type': 'number', 'exclusiveMinimum': 0},

        'manifest': {'type': 'string'},
        'height': {'type': 'integer', 'minimum': 2},
        'width': {'type': 'integer', 'minimum': 2},
        'count': {'type': 'integer', 'minimum': 1},
        'small_fraction': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
        'large_fraction': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
        'noise_std': {'type': 'number', 'minimum': 0},
        'background_intensity': {'type': 'number', 'minimum': 0, 'maximum': 1},
        'large_intensity': {'type': 'number', 'minimum': 0, 'maximum': 1},
        'contrast': {'type': 'number', 'minimum': -1, 'maximum': 1},
        'max_retries': {'type': 'integer', 'minimum': 1},

        'n_train': {'type': 'integer', 'minimum': 1},
        'n_val': {'type': 'integer', 'minimum': 0},

        'include_background': {'type': 'boolean'},
        'sweep_betas': {'type': 'string', 'pattern': r'^\s*[0-9.eE+-]+(\s*,\s*[0-9.eE+-]+)*\s*$'},
        'train_sizes': {'type': 'string', 'pattern': r'^\s*([0-9]+(\s*,\s*[0-9]+)*)?\s*$'},
        'save_predictions': {'type': 'boolean'},
    },
    'additionalProperties': False,
}


def validate_config(config: Dict[str, Any]) -> Tuple[bool, Optional[str], Optional[str]]:
    """
    Validate a resolved run configuration.

    Args:
        config: Flat configuration dictionary with typed values

    Returns:
        Tuple of (is_valid, error_message, offending_key)
    """
    validator = Draft7Validator(RUN_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.path))
    if errors:
        error = errors[0]
        key = error.path[0] if error.path else None
        if key is None and error.validator == 'additionalProperties':
            return False, f"Unknown configuration key: {error.message}", None
        return False, f"Invalid value for '{key}': {error.message}", key

    # Cross-field rules the schema cannot express
    if config['small_fraction'] >= config['large_fraction']:
        return False, "Invalid value for 'small_fraction': must be smaller than large_fraction", 'small_fraction'

    divisor = 2 ** config['depth']
    for key in ('height', 'width'):
        if config[key] % divisor != 0:
            return False, f"Invalid value for '{key}': must be divisible by 2^depth = {divisor}", key

    if config['batch_size'] > config['n_train']:
        return False, "Invalid value for 'batch_size': must not exceed n_train", 'batch_size'

    return True, None, None
