"""TOML reader shim (stdlib ``tomllib`` when available)."""
try:
    import tomllib as _toml
except ImportError:  # Python < 3.11
    import tomli as _toml

loads = _toml.loads
load = _toml.load
TOMLDecodeError = _toml.TOMLDecodeError
