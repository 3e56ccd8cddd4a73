'''
Meta-game toolkit common utility functions.
'''
import logging
import os
from configparser import ConfigParser
from functools import lru_cache
from pathlib import Path
from typing import List, Optional


BASE_DIR = Path(os.path.realpath(__file__)).parent.parent
CONFIG_PATH = BASE_DIR / 'params' / 'MetaGameProperties.cfg'

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


@lru_cache(maxsize=None)
def get_config() -> ConfigParser:
    """
    Load the project properties file once per process.
    :return: The parsed MetaGameProperties.cfg.
    :rtype: ConfigParser
    """
    config = ConfigParser()
    # Keep key case (ConfigParser lowercases by default).
    config.optionxform = str
    read_ok = config.read(CONFIG_PATH)
    if not read_ok:
        raise FileNotFoundError(f'Unable to read config file: {CONFIG_PATH}')
    return config


def get_float(section: str, key: str) -> float:
    return float(get_config().get(section, key))


def get_int(section: str, key: str) -> int:
    return int(float(get_config().get(section, key)))


def configure_logging(verbosity: int = 0) -> None:
    """
    Configure the root logger for command line use.
    :param verbosity: -1 for warnings only, 0 for INFO, 1 or more for DEBUG.
    :type verbosity: int
    """
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def resolve_workers(requested: Optional[int] = None) -> int:
    """
    Worker pool size: explicit flag, else the threads environment variable,
    else the available parallelism.
    """
    if requested is not None:
        if requested < 1:
            raise ValueError(f'Worker count must be positive, got {requested}.')
        return requested
    env_name = get_config().get('CLI', 'threadsEnv')
    env_value = os.environ.get(env_name)
    if env_value:
        try:
            workers = int(env_value)
        except ValueError:
            raise ValueError(f'{env_name} must be an integer, got {env_value!r}.')
        if workers < 1:
            raise ValueError(f'{env_name} must be positive, got {workers}.')
        return workers
    return os.cpu_count() or 1


def parse_seeds(text: str) -> List[int]:
    """
    Parse a seeds flag. Accepts a range "a..b" (inclusive), a comma list
    "1,4,9", or a single integer.
    :rtype: List[int]
    """
    text = text.strip()
    if '..' in text:
        lo_str, hi_str = text.split('..', 1)
        lo, hi = int(lo_str), int(hi_str)
        if hi < lo:
            raise ValueError(f'Empty seed range: {text}')
        return list(range(lo, hi + 1))
    seeds = [int(s) for s in text.split(',') if s.strip()]
    if not seeds:
        raise ValueError('Seed list must not be empty.')
    return seeds


def resolve_scenario_path(path: Path) -> Path:
    """
    A scenario path as given, or a bundled scenario looked up by name
    (with or without .json) in the configured scenario dir.
    """
    path = Path(path)
    if path.exists():
        return path
    bundled = BASE_DIR / get_config().get('GENERAL', 'scenarioDir') / path.name
    for candidate in (bundled, bundled.with_suffix('.json')):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f'Scenario not found: {path}')


def default_output_dir() -> Path:
    return BASE_DIR / get_config().get('GENERAL', 'outputDir')
