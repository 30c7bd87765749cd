import logging
from os import environ
from json import dump
from hashlib import sha1
from os.path import (exists,
                     isfile,
                     basename)
from re import compile as recompile

import numpy as np
from typing import (Any,
                    Dict,
                    Union,
                    Optional,
                    Sequence)

formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

# Type aliases
Vector = np.ndarray
Matrix = np.ndarray
Numeric = Union[int, float]
LabelValue = Optional[Union[str, float]]
Seed = Optional[Union[int, np.random.RandomState]]
Assignments = Dict[str, Optional[str]]

# Seed for random state
SEED = 123456789
SEED_ENV_VAR = 'SPEAKERFLOW_SEED'

# Versions of the on-disk documents
FORMAT_VERSION = 1

# Symbol used on the command line for an unobserved label
EMPTY_LABEL = '_'

# Regular expressions
ASSIGNMENT = recompile(r'^\s*([A-Za-z_][A-Za-z0-9_\-]*)\s*=\s*(.*?)\s*$')
assignment_match = ASSIGNMENT.match


def get_random_state(seed: Seed = None) -> np.random.RandomState:
    """
    Get a `RandomState` object from a seed (or pass an existing one
    through unchanged).

    :param seed: integer seed, an existing `RandomState`, or None for
                 `SEED`
    :type seed: int, np.random.RandomState or None

    :returns: random state
    :rtype: np.random.RandomState
    """

    if isinstance(seed, np.random.RandomState):
        return seed
    return np.random.RandomState(SEED if seed is None else seed)


def get_default_seed() -> int:
    """
    Get the default seed, which can be overridden with the
    `SPEAKERFLOW_SEED` environment variable.

    :returns: seed
    :rtype: int

    :raises ValueError: if the environment variable is not an integer
    """

    value = environ.get(SEED_ENV_VAR)
    if value is None or not value.strip():
        return SEED
    try:
        return int(value)
    except ValueError:
        raise ValueError('{0} must be an integer, got "{1}".'
                         .format(SEED_ENV_VAR, value))


def parse_assignments_string(assignments_string: str) -> Assignments:
    """
    Parse a comma-separated list of `name=value` assignments, e.g.,
    "gender=F,age=_,snr=40". The value "_" stands for an unobserved
    (empty) value and is mapped to None.

    :param assignments_string: comma-separated assignments
    :type assignments_string: str

    :returns: ordered dictionary of names mapped to values (or None)
    :rtype: dict

    :raises ValueError: if the string is empty, an assignment is
                        malformed or a name is repeated
    """

    if not assignments_string or not assignments_string.strip():
        raise ValueError('Assignments string is empty.')
    assignments = {}
    for part in assignments_string.split(','):
        match = assignment_match(part)
        if not match or not match.group(2):
            raise ValueError('Malformed assignment "{0}" in "{1}". Expected '
                             'NAME=VALUE (use NAME={2} for an empty value).'
                             .format(part, assignments_string, EMPTY_LABEL))
        name, value = match.group(1), match.group(2)
        if name in assignments:
            raise ValueError('Name "{0}" assigned more than once in "{1}".'
                             .format(name, assignments_string))
        assignments[name] = None if value == EMPTY_LABEL else value
    return assignments


def parse_fractions_string(fractions_string: str) -> Dict[str, float]:
    """
    Parse a comma-separated list of `name=fraction` assignments, e.g.,
    "gender=0.3,age=0.3".

    :param fractions_string: comma-separated assignments
    :type fractions_string: str

    :returns: dictionary of names mapped to fractions in [0, 1]
    :rtype: dict

    :raises ValueError: if a value is not a number in [0, 1]
    """

    fractions = {}
    for name, value in parse_assignments_string(fractions_string).items():
        try:
            fraction = float(value)
        except (TypeError, ValueError):
            raise ValueError('Expected a number for "{0}", got "{1}".'
                             .format(name, value))
        if not 0.0 <= fraction <= 1.0:
            raise ValueError('Fraction for "{0}" must be in [0, 1], got {1}.'
                             .format(name, fraction))
        fractions[name] = fraction
    return fractions


def content_hash(path: str) -> str:
    """
    Compute a git-style content hash (SHA-1 over "blob <size>\\0"
    followed by the file bytes) for a file.

    :param path: path to file
    :type path: str

    :returns: hexadecimal digest
    :rtype: str

    :raises FileNotFoundError: if the path does not exist
    """

    if not isfile(path):
        raise FileNotFoundError('{0} does not exist.'.format(path))
    with open(path, 'rb') as f:
        contents = f.read()
    digest = sha1('blob {0}\0'.format(len(contents)).encode('ascii'))
    digest.update(contents)
    return digest.hexdigest()


def write_manifest(out_path: str,
                   command: str,
                   config: Dict[str, Any],
                   seed: int,
                   inputs: Sequence[str] = ()) -> str:
    """
    Write a manifest JSON file describing a run: the command, its
    configuration, the seed and content hashes of the input files.

    Nothing time- or host-dependent is written so that reruns with
    identical inputs produce identical manifests.

    :param out_path: path of the manifest file
    :type out_path: str
    :param command: subcommand name
    :type command: str
    :param config: JSON-serializable configuration
    :type config: dict
    :param seed: seed used for the run
    :type seed: int
    :param inputs: paths to input files
    :type inputs: list

    :returns: path of the manifest
    :rtype: str
    """

    manifest = {'version': FORMAT_VERSION,
                'command': command,
                'config': config,
                'seed': seed,
                'inputs': [{'name': basename(path),
                            'hash': content_hash(path)}
                           for path in sorted(set(inputs)) if exists(path)]}
    with open(out_path, 'w') as f:
        dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return out_path
