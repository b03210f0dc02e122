"""Image-conditioned emotional music generation: MIDI I/O, metrics, tokenizer, pairing."""

from ._core import *  # noqa: F401,F403
from ._core import EmomusicError, run_cli

__all__ = [name for name in dir() if not name.startswith("_")]


def main(argv=None):
    """Entry point mirroring the emomusic executable."""
    import sys

    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
