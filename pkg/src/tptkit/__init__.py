"""tptkit: station-temperature forecasting toolkit.

Kept import-light so the CLI can configure thread environment variables
before numpy loads; import submodules directly (tptkit.kriging,
tptkit.climatology, ...).
"""

__version__ = "0.1.0"
