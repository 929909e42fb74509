from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("randomized-gmsfem")
except PackageNotFoundError:
    __version__ = "unknown"
del PackageNotFoundError, version
