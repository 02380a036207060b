"""
Numeric policy and run configuration
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


COMMANDS = ('analyze', 'legendre', 'integrate', 'statics', 'verify')
GAUGES = ('auto', 'unit', 'proper-time', 'multiplier-cone')
CONFIG_KEYS = (
    'system', 'command', 'params', 'tol', 'samples', 'seed', 'dt', 'steps',
    'gauge', 'project_every', 'out', 'inject_sign_flip',
)


class ConfigError(ValueError):
    """Raised for an invalid run configuration"""


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances, sample counts and integration settings for one run"""

    tol: float = 1e-8
    samples: int = 64
    seed: int = 0
    rank_rtol: float = 1e-8
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    dt: float = 1e-3
    steps: int = 1000
    gauge: str = 'auto'
    project_every: int = 1

    @classmethod
    def from_env(cls, **overrides):
        """
        Build a policy from defaults, environment variables and overrides

        MECHANICS_TOL, MECHANICS_SAMPLES and MECHANICS_SEED replace the
        defaults; invalid values are logged and ignored.

        Args:
            **overrides: Field values taking precedence over the environment

        Returns:
            NumericPolicy: Validated policy
        """
        values = {}
        defaults = cls()

        try:
            values['tol'] = float(os.environ.get('MECHANICS_TOL', defaults.tol))
        except (ValueError, TypeError):
            logger.warning(f"Invalid MECHANICS_TOL value, using default: {defaults.tol}")
            values['tol'] = defaults.tol

        try:
            values['samples'] = int(os.environ.get('MECHANICS_SAMPLES', defaults.samples))
        except (ValueError, TypeError):
            logger.warning(f"Invalid MECHANICS_SAMPLES value, using default: {defaults.samples}")
            values['samples'] = defaults.samples

        try:
            values['seed'] = int(os.environ.get('MECHANICS_SEED', defaults.seed))
        except (ValueError, TypeError):
            logger.warning(f"Invalid MECHANICS_SEED value, using default: {defaults.seed}")
            values['seed'] = defaults.seed

        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validated()

    def validated(self):
        """
        Check the policy and return it

        Returns:
            NumericPolicy: self

        Raises:
            ConfigError: Non-positive tolerance, step or count
        """
        for name in ('tol', 'rank_rtol', 'newton_tol', 'dt'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not value > 0:
                error_msg = f"Tolerance '{name}' must be positive, got {value!r}"
                logger.error(error_msg)
                raise ConfigError(error_msg)
        for name in ('samples', 'newton_max_iter', 'steps', 'project_every'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                error_msg = f"'{name}' must be a positive integer, got {value!r}"
                logger.error(error_msg)
                raise ConfigError(error_msg)
        if self.gauge not in GAUGES:
            error_msg = f"Unknown gauge '{self.gauge}'. Expected one of: {', '.join(GAUGES)}"
            logger.error(error_msg)
            raise ConfigError(error_msg)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            error_msg = f"'seed' must be a non-negative integer, got {self.seed!r}"
            logger.error(error_msg)
            raise ConfigError(error_msg)
        return self

    def with_values(self, **values):
        """Copy with some fields replaced (None values are ignored)"""
        return replace(self, **{k: v for k, v in values.items() if v is not None}).validated()

    def report_block(self):
        """
        Policy fields embedded in every report

        Returns:
            dict: tol, samples, seed and rank_rtol
        """
        data = asdict(self)
        return {key: data[key] for key in ('tol', 'samples', 'seed', 'rank_rtol')}


@dataclass
class RunConfig:
    """A system id, a command and the policy for one batch run"""

    system: str
    command: str = 'analyze'
    params: dict = None
    policy: NumericPolicy = None
    out: str = None
    inject_sign_flip: bool = False

    def __post_init__(self):
        if self.params is None:
            self.params = {}
        if self.policy is None:
            self.policy = NumericPolicy.from_env()
        if self.command not in COMMANDS:
            error_msg = f"Unknown command '{self.command}'. Expected one of: {', '.join(COMMANDS)}"
            logger.error(error_msg)
            raise ConfigError(error_msg)


def load_config_file(path):
    """
    Read a JSON configuration document

    Args:
        path (str): Path to the document

    Returns:
        dict: Parsed configuration

    Raises:
        ConfigError: Unreadable file, invalid JSON or unknown keys
    """
    if not os.path.exists(path):
        error_msg = f"Config file not found: {path}"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        error_msg = f"Error reading config file {path}: {str(e)}"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    if not isinstance(data, dict):
        error_msg = f"Config file {path} must hold a JSON object"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        error_msg = f"Unknown config keys: {', '.join(unknown)}"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    return data


def build_run_config(flags, file_values=None):
    """
    Merge defaults, environment, command-line flags and a config document

    Later sources win: defaults < environment < flags < config document.

    Args:
        flags (dict): Values from the command line (None means unset)
        file_values (dict, optional): Values from the config document

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: Missing system id or invalid values
    """
    merged = {k: v for k, v in flags.items() if v is not None}
    merged.update(file_values or {})

    policy_names = {f.name for f in fields(NumericPolicy)}
    policy_values = {k: merged[k] for k in policy_names if k in merged}
    try:
        policy = NumericPolicy.from_env(**policy_values)
    except TypeError as e:
        raise ConfigError(f"Invalid policy value: {str(e)}")

    system = merged.get('system')
    if not system:
        error_msg = "A system id is required (--system or 'system' in the config file)"
        logger.error(error_msg)
        raise ConfigError(error_msg)

    params = merged.get('params') or {}
    if not isinstance(params, dict):
        raise ConfigError(f"'params' must be an object, got {type(params).__name__}")

    return RunConfig(
        system=system,
        command=merged.get('command', 'analyze'),
        params=dict(params),
        policy=policy,
        out=merged.get('out'),
        inject_sign_flip=bool(merged.get('inject_sign_flip', False)),
    )
