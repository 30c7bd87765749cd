"""
Defines the data package, which contains the default label schema and
the difficulty presets of the synthetic corpus generator.
"""
from os.path import (join,
                     dirname,
                     realpath)

DEFAULT_SCHEMA_PATH = join(dirname(realpath(__file__)), 'default_schema.json')

# Separation between categorical class centers, in noise standard
# deviations
PRESETS = dict(easy=dict(separation=8.0),
               hard=dict(separation=1.5))
