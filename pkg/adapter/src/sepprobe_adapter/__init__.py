"""Command-line bridge between TorchScript separation checkpoints and
the est1..estC WAV protocol used by batch harnesses.

The package is deliberately free of any dependency on the probing
toolkit itself; the subprocess boundary is the whole interface.
"""

__version__ = "0.1.0"

from sepprobe_adapter.cli import AdapterConfig, AdapterError, adapt

__all__ = ["AdapterConfig", "AdapterError", "adapt", "__version__"]
